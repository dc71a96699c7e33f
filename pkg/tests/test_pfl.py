import numpy as np
import pytest

import oracles
from pendulearn.dynamics import PerturbationSpec, RobotParams, forward_dynamics, perturb, rk4_step
from pendulearn.pfl import pfl_terms, pfl_torque, residual_active, residual_passive


def oracle_pfl(p, q, qd, u):
    M, n = oracles.inertia(p, q), oracles.bias(p, q, qd)
    B = M[0, 0] - M[0, 1] ** 2 / M[1, 1]
    eta = n[0] - M[0, 1] * n[1] / M[1, 1]
    return B * u + eta


@pytest.fixture
def nominal(true_params):
    return perturb(true_params, PerturbationSpec.percent(0.3, -0.3, friction=(0.0, 0.0)))


def test_unit_chain_schur_complement(unit_params):
    assert pfl_terms(unit_params, [0, 0], [0, 0]).B_hat[0, 0] == pytest.approx(0.25, abs=1e-12)


def test_decoupled_chain_reduces_to_active_terms():
    # a point-mass second link sitting on the joint axis: no coupling inertia
    p = RobotParams(mass=(1, 1), length=(1, 1), com=(0.5, 0.0), inertia=(0.1, 0.2))
    q, qd = np.array([0.4, 0.3]), np.array([1.0, -2.0])
    terms = pfl_terms(p, q, qd)
    M, n = oracles.inertia(p, q), oracles.bias(p, q, qd)
    assert abs(M[0, 1] - p.inertia[1]) < 1e-9  # only the rotor inertia couples
    B_expected = M[0, 0] - M[0, 1] ** 2 / M[1, 1]
    assert terms.B_hat[0, 0] == pytest.approx(B_expected, rel=1e-6)
    assert terms.eta_hat[0] == pytest.approx(n[0] - M[0, 1] * n[1] / M[1, 1], rel=1e-6, abs=1e-9)


def test_schur_complement_positive(true_params, rng):
    for q, qd in zip(rng.uniform(-7, 7, (1000, 2)), rng.normal(0, 5, (1000, 2))):
        assert pfl_terms(true_params, q, qd).B_hat[0, 0] > 0


def test_torque_matches_oracle(nominal, rng):
    for _ in range(20):
        q, qd, u = rng.normal(size=2), rng.normal(size=2), rng.normal()
        assert pfl_torque(nominal, q, qd, [u])[0] == pytest.approx(oracle_pfl(nominal, q, qd, u), rel=1e-5)


def test_bias_only_at_equilibrium(true_params):
    tau = pfl_torque(true_params, [np.pi, 0], [0, 0], [0.0])
    assert tau == pytest.approx(pfl_terms(true_params, [np.pi, 0], [0, 0]).eta_hat)
    np.testing.assert_allclose(tau, 0, atol=1e-12)   # upright: no gravity torque


def test_torque_is_affine(nominal, rng):
    q, qd = rng.normal(size=2), rng.normal(size=2)
    B = pfl_terms(nominal, q, qd).B_hat
    diff = pfl_torque(nominal, q, qd, [1.7]) - pfl_torque(nominal, q, qd, [-0.4])
    np.testing.assert_allclose(diff, B @ [2.1], rtol=1e-12)


def test_exact_linearization_on_matching_plant(frictionless):
    q, qd = np.array([0.2, -0.4]), np.array([0.5, 1.0])
    for k in range(500):
        u = 3.0 * np.sin(0.02 * k)
        tau = pfl_torque(frictionless, q, qd, [u])
        qdd = forward_dynamics(frictionless, q, qd, tau)
        assert abs(qdd[0] - u) <= 1e-6
        q, qd = rk4_step(frictionless, q, qd, tau, 1e-2)


def test_residual_definitions():
    assert residual_active([1.0], [1.0]) == pytest.approx([0.0])
    assert residual_active([1.0], [1.2]) == pytest.approx([0.2])


def test_residuals_match_two_model_oracle(true_params, nominal, rng):
    for _ in range(50):
        q, qd, u = rng.uniform(-3, 3, 2), rng.uniform(-4, 4, 2), rng.uniform(-20, 20)
        tau = pfl_torque(nominal, q, qd, [u])
        qdd = forward_dynamics(true_params, q, qd, tau)
        qdd_oracle = oracles.accel(true_params, q, qd, oracle_pfl(nominal, q, qd, u))
        delta_a = qdd_oracle[0] - u
        Mh, nh = oracles.inertia(nominal, q), oracles.bias(nominal, q, qd)
        delta_p = qdd_oracle[1] + (nh[1] + Mh[1, 0] * qdd_oracle[0]) / Mh[1, 1]
        Y_a = residual_active([u], qdd[:1])[0]
        Y_p = residual_passive(nominal, q, qd, qdd[:1], qdd[1:])[0]
        # the finite-difference oracle is good to about 1e-5 relative
        assert Y_a == pytest.approx(delta_a, rel=1e-4, abs=1e-4)
        assert Y_p == pytest.approx(delta_p, rel=1e-4, abs=1e-4)


def test_residuals_exact_identity(true_params, nominal, rng):
    """Closed-form two-model identity, exact to round-off."""
    from pendulearn.dynamics import evaluate
    for _ in range(200):
        q, qd, u = rng.uniform(-3, 3, 2), rng.uniform(-4, 4, 2), rng.uniform(-20, 20)
        qdd = forward_dynamics(true_params, q, qd, pfl_torque(nominal, q, qd, [u]))
        d_true, d_nom = evaluate(true_params, q, qd), evaluate(nominal, q, qd)
        true_passive = -np.linalg.solve(d_true.M_pp, d_true.n_p + d_true.M_pa @ qdd[:1])
        nom_passive = -np.linalg.solve(d_nom.M_pp, d_nom.n_p + d_nom.M_pa @ qdd[:1])
        Y_p = residual_passive(nominal, q, qd, qdd[:1], qdd[1:])
        np.testing.assert_allclose(Y_p, true_passive - nom_passive, atol=1e-9)


def test_zero_perturbation_residuals(frictionless, rng):
    for _ in range(100):
        q, qd, u = rng.normal(size=2), rng.normal(size=2), rng.normal()
        qdd = forward_dynamics(frictionless, q, qd, pfl_torque(frictionless, q, qd, [u]))
        assert abs(residual_active([u], qdd[:1])[0]) <= 1e-9
        assert abs(residual_passive(frictionless, q, qd, qdd[:1], qdd[1:])[0]) <= 1e-9


def test_gravity_only_reduction(true_params, nominal):
    q = np.array([0.7, -0.2])
    from pendulearn.dynamics import evaluate
    d = evaluate(nominal, q, [0, 0])
    Y = residual_passive(nominal, q, [0, 0], [0.0], [1.5])
    assert Y[0] == pytest.approx(1.5 + d.n_p[0] / d.M_pp[0, 0], rel=1e-12)
