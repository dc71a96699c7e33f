import numpy as np
import pytest

from pendulearn.dynamics import PerturbationSpec, State, evaluate, perturb
from pendulearn.gp import GPStack, Hyperparams
from pendulearn.planner import (SCHEMES, OCPSpec, PredictionModel, TerminalBox, _Objective,
                                check_terminal_box, predict_step, rollout, solve_ocp)

TS = 0.01
GOAL = State.of([np.pi, 0.0])
START = State.of([0.0, 0.0])


def swingup_spec(**kw):
    return OCPSpec(N=160, Ts=TS, x_start=START, x_goal=GOAL, **kw)


def transfer_spec(**kw):
    return OCPSpec(N=70, Ts=TS, x_start=State.of([np.pi / 4, 3 * np.pi / 4]),
                   x_goal=State.of([5 * np.pi / 4, -np.pi / 4]), **kw)


@pytest.fixture(scope="module")
def nominal():
    from pendulearn.dynamics import pendubot_default
    return perturb(pendubot_default(), PerturbationSpec.percent(0.3, -0.3, friction=(0.0, 0.0)))


@pytest.fixture(scope="module")
def eps_p():
    rng = np.random.default_rng(5)
    X = np.c_[rng.uniform(-1, 4, (40, 2)), rng.uniform(-5, 5, (40, 2)), rng.uniform(-20, 20, 40)]
    Y = 2.0 * np.sin(X[:, :1]) + 0.1 * X[:, 4:5]
    return GPStack.fit(X, Y, [Hyperparams(2.0, 1.5, 1e-2)])


@pytest.fixture(scope="module")
def swingup(nominal):
    return solve_ocp(swingup_spec(Q=np.diag([10.0, 10.0, 1.0, 1.0])), nominal)


def reroll(spec, nominal, eps, ref):
    return rollout(spec, PredictionModel(nominal, eps), ref.u).states


# -- terminal box ---------------------------------------------------------

def test_terminal_box_edges():
    box = TerminalBox()
    assert check_terminal_box(GOAL, GOAL, box)
    assert check_terminal_box(State.of([0.2, 0.0]), State.of([0.0, 0.0]), box)
    assert not check_terminal_box(State.of([np.pi, 0.0], [0.0, 0.51]), GOAL, box)
    with pytest.raises(ValueError):
        check_terminal_box(State.of([0.0]), GOAL, box)


def test_spec_validation():
    with pytest.raises(ValueError):
        OCPSpec(N=1, Ts=TS, x_start=START, x_goal=GOAL)
    with pytest.raises(ValueError):
        swingup_spec(Q=np.diag([1.0, 1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        TerminalBox(0.0, 1.0)
    assert swingup_spec().T == pytest.approx(1.6)


# -- prediction model ----------------------------------------------------------

def test_equilibrium_is_fixed_point(frictionless):
    x = predict_step(frictionless, None, State.of([np.pi, 0.0]), [0.0], TS)
    np.testing.assert_allclose(x.vector(), [np.pi, 0, 0, 0], atol=1e-12)


@pytest.mark.parametrize("scheme", sorted(SCHEMES))
def test_step_matches_nominal_oracle(nominal, scheme, rng):
    w = SCHEMES[scheme]
    for _ in range(20):
        q, qd, u = rng.normal(size=2), rng.normal(size=2), rng.normal()
        d = evaluate(nominal, q, qd)
        acc = np.array([u, (-(d.n_p + d.M_pa[:, 0] * u) / d.M_pp[0, 0])[0]])
        x = predict_step(nominal, None, State(q, qd), [u], TS, scheme=scheme)
        np.testing.assert_allclose(x.qd, qd + TS * acc, atol=1e-12)
        np.testing.assert_allclose(x.q, q + TS * qd + w * TS * TS * acc, atol=1e-12)


def test_learned_correction_enters_passive_row(nominal, eps_p, rng):
    q, qd, u = rng.normal(size=2), rng.normal(size=2), rng.normal()
    plain = predict_step(nominal, None, State(q, qd), [u], TS)
    learned = predict_step(nominal, eps_p, State(q, qd), [u], TS)
    delta = eps_p.mean(np.r_[q, qd, u])[0]
    assert learned.qd[0] == pytest.approx(plain.qd[0], abs=1e-12)
    assert learned.qd[1] - plain.qd[1] == pytest.approx(TS * delta, rel=1e-9)


def test_unknown_scheme_rejected(nominal):
    with pytest.raises(ValueError):
        PredictionModel(nominal, None, "midpoint")


@pytest.mark.parametrize("scheme", sorted(SCHEMES))
def test_adjoint_gradient_matches_finite_differences(nominal, eps_p, scheme):
    spec = OCPSpec(N=40, Ts=TS, x_start=START, x_goal=GOAL)
    obj = _Objective(spec, PredictionModel(nominal, eps_p, scheme))
    rng = np.random.default_rng(2)
    obj.lam = rng.uniform(0, 1, 2 * 2 * spec.N + 8)
    obj.rho = 3.0
    U = rng.normal(0, 5, spec.N)
    _, grad = obj(U)
    h = 1e-6
    fd = np.array([(obj(U + h * e)[0] - obj(U - h * e)[0]) / (2 * h) for e in np.eye(spec.N)])
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5 * np.abs(fd).max())


# -- rollout -------------------------------------------------------------------

def test_null_rollout_costs_nothing(true_params):
    spec = OCPSpec(N=20, Ts=TS, x_start=START, x_goal=START)
    r = rollout(spec, PredictionModel(true_params), np.zeros(20))
    assert r.cost == 0.0 and r.max_violation == 0.0


def test_input_cost_is_quadratic(nominal):
    U = np.linspace(-3, 3, 160)
    r1 = rollout(swingup_spec(), PredictionModel(nominal), U)
    r2 = rollout(swingup_spec(R=0.02 * np.eye(1)), PredictionModel(nominal), U)
    assert r2.input_cost == pytest.approx(2 * r1.input_cost, rel=1e-14)
    assert r2.stage_state_cost == r1.stage_state_cost


def test_divergent_rollout_is_flagged(nominal):
    r = rollout(swingup_spec(), PredictionModel(nominal), np.full(160, 1e200))
    assert r.diverged and r.cost == np.inf


# -- solver --------------------------------------------------------------------

def test_null_transfer(nominal):
    spec = OCPSpec(N=30, Ts=TS, x_start=START, x_goal=START)
    ref = solve_ocp(spec, nominal)
    assert ref.converged
    assert np.abs(ref.u).max() < 1e-3


def test_swingup_is_feasible_and_consistent(nominal, swingup):
    ref = swingup
    assert ref.converged
    X = reroll(swingup_spec(), nominal, None, ref)
    np.testing.assert_allclose(X[:, :2], ref.q, atol=1e-10)
    np.testing.assert_allclose(X[:, 2:], ref.qd, atol=1e-10)
    assert np.all(np.abs(ref.qd) <= np.array([8.0, 15.0]) + 1e-3)
    assert np.all(np.abs(ref.u) <= 40.0)
    end = State(ref.q[-1], ref.qd[-1])
    assert check_terminal_box(end, GOAL, TerminalBox(0.2 + 1e-3, 0.5 + 1e-3))


def test_merit_never_increases(swingup):
    h = swingup.merit_history
    assert all(b <= a for a, b in zip(h, h[1:]))


def test_learned_model_solution_is_consistent(nominal, eps_p):
    spec = transfer_spec(Q=np.diag([10.0, 10.0, 1.0, 1.0]), input_bounds=[150.0])
    ref = solve_ocp(spec, nominal, eps_p)
    X = reroll(spec, nominal, eps_p, ref)
    np.testing.assert_allclose(X, np.c_[ref.q, ref.qd], atol=1e-10)


def test_warm_start_from_optimum(nominal, swingup):
    spec = swingup_spec(Q=np.diag([10.0, 10.0, 1.0, 1.0]))
    again = solve_ocp(spec, nominal, warm_start=swingup)
    assert again.outer_iterations <= 2
    assert abs(again.cost - swingup.cost) <= 1e-6 * max(1.0, swingup.cost)


def test_warm_start_saves_work(nominal, swingup, eps_p):
    spec = swingup_spec(Q=np.diag([10.0, 10.0, 1.0, 1.0]))
    small = GPStack.fit(eps_p.X, 0.1 * eps_p.Y, eps_p.hypers)
    warm = solve_ocp(spec, nominal, small, warm_start=swingup)
    cold = solve_ocp(spec, nominal, small)
    assert warm.inner_iterations < cold.inner_iterations


def test_terminal_margin_shrinks_box(nominal):
    spec = swingup_spec(Q=np.diag([10.0, 10.0, 1.0, 1.0]))
    ref = solve_ocp(spec, nominal, terminal_margin=0.5)
    assert check_terminal_box(State(ref.q[-1], ref.qd[-1]), GOAL, TerminalBox(0.1 + 1e-3, 0.25 + 1e-3))
    with pytest.raises(ValueError):
        solve_ocp(spec, nominal, terminal_margin=1.5)
