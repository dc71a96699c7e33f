"""Equilibrium-to-equilibrium trajectory planning by direct single shooting.

The prediction model assumes exact linearization of the active joints
(``qdd_a = u``) and uses the nominal passive dynamics corrected by a learned
passive-acceleration regressor.  It is discretized with explicit Euler at the
control period.

The optimal control problem is transcribed over the piecewise-constant
inputs ``u_0 .. u_{N-1}``.  State constraints (joint-velocity bounds on every
sample and a terminal box around the goal) are handled by a
Powell-Hestenes-Rockafellar augmented Lagrangian; input bounds are simple
box bounds on the decision variables.  Each inner subproblem is solved with
L-BFGS-B using gradients obtained by a reverse (adjoint) sweep through the
rollout.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dynamics import RobotParams, State
from .gp import GPStack

log = logging.getLogger(__name__)

DIVERGED_COST = 1e30
# weight of the Ts^2 * acceleration term in the position update
SCHEMES = {"explicit": 0.0, "semi-implicit": 1.0, "taylor": 0.5}


@dataclass(frozen=True)
class TerminalBox:
    position: float = 0.2
    velocity: float = 0.5

    def __post_init__(self):
        if self.position <= 0 or self.velocity <= 0:
            raise ValueError("terminal box tolerances must be positive")


def check_terminal_box(x: State, x_goal: State, box: TerminalBox) -> bool:
    """True iff every joint is within the box (bounds inclusive)."""
    q, qd = np.asarray(x.q), np.asarray(x.qd)
    if q.shape != np.shape(x_goal.q) or qd.shape != np.shape(x_goal.qd):
        raise ValueError("state and goal dimensions differ")
    return bool(np.all(np.abs(q - x_goal.q) <= box.position)
                and np.all(np.abs(qd) <= box.velocity))


@dataclass(frozen=True)
class OCPSpec:
    N: int
    Ts: float
    x_start: State
    x_goal: State
    Q: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 0.1, 0.1]))
    Q_N: np.ndarray = field(default_factory=lambda: 100.0 * np.eye(4))
    R: np.ndarray = field(default_factory=lambda: 0.01 * np.eye(1))
    velocity_bounds: np.ndarray = field(default_factory=lambda: np.array([8.0, 15.0]))
    input_bounds: np.ndarray = field(default_factory=lambda: np.array([40.0]))
    box: TerminalBox = TerminalBox()

    def __post_init__(self):
        if self.N < 2 or self.Ts <= 0:
            raise ValueError("need N >= 2 and Ts > 0")
        for name in ("Q", "Q_N", "R", "velocity_bounds", "input_bounds"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "R", np.atleast_2d(self.R))
        for name in ("Q", "Q_N", "R"):
            W = getattr(self, name)
            if not np.allclose(W, W.T) or np.linalg.eigvalsh(W).min() <= 0:
                raise ValueError(f"{name} must be symmetric positive definite")

    @property
    def T(self) -> float:
        return self.N * self.Ts

    def replace(self, **changes) -> "OCPSpec":
        return dataclasses.replace(self, **changes)


class PredictionModel:
    """Euler-discretized planning model ``qdd_a = u``, ``qdd_p = phi + eps_p``.

    Written with scalar arithmetic for the single-actuator 2R chain; the
    planner calls it a few hundred thousand times per solve.
    """

    def __init__(self, nominal: RobotParams, eps_p: GPStack | None = None,
                 scheme: str = "taylor"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown integration scheme {scheme!r}; expected one of {SCHEMES}")
        self.scheme = scheme
        self._w = SCHEMES[scheme]
        self.params = nominal
        self.eps_p = eps_p if (eps_p is not None and eps_p.size > 0) else None
        self.active = nominal.actuated[0]
        self.passive = nominal.passive[0]
        m1, m2 = nominal.mass
        l1 = nominal.length[0]
        a1, a2 = nominal.com
        I1, I2 = nominal.inertia
        self._h = m2 * l1 * a2
        self._m22 = I2 + m2 * a2 * a2
        self._m11 = I1 + m1 * a1 * a1 + m2 * l1 * l1 + self._m22
        self._g1 = nominal.g * (m1 * a1 + m2 * l1)
        self._g2 = nominal.g * m2 * a2
        self._b = nominal.friction

    def _phi(self, q1, q2, v1, v2, u, grad=False):
        h, g1, g2 = self._h, self._g1, self._g2
        s2, c2 = math.sin(q2), math.cos(q2)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        m12 = self._m22 + h * c2
        if self.active == 0:
            mpp = self._m22
            n_p = h * s2 * v1 * v1 + g2 * s12 + self._b[1] * v2
        else:
            mpp = self._m11 + 2.0 * h * c2
            n_p = (-h * s2 * (2.0 * v1 * v2 + v2 * v2) + g1 * math.sin(q1) + g2 * s12
                   + self._b[0] * v1)
        phi = -(n_p + m12 * u) / mpp
        if not grad:
            return phi
        # Mpp phi = -(n_p + Mpa u)  =>  dphi = -(dn_p + dMpa u + dMpp phi) / Mpp
        dmpa_q2 = -h * s2
        if self.active == 0:
            dn_q = (g2 * c12, h * c2 * v1 * v1 + g2 * c12)
            dn_v = (2.0 * h * s2 * v1, self._b[1])
            dmpp_q2 = 0.0
        else:
            dn_q = (g1 * math.cos(q1) + g2 * c12, -h * c2 * (2.0 * v1 * v2 + v2 * v2) + g2 * c12)
            dn_v = (-2.0 * h * s2 * v2 + self._b[0], -2.0 * h * s2 * (v1 + v2))
            dmpp_q2 = -2.0 * h * s2
        dq1 = -dn_q[0] / mpp
        dq2 = -(dn_q[1] + dmpa_q2 * u + dmpp_q2 * phi) / mpp
        dv1 = -dn_v[0] / mpp
        dv2 = -dn_v[1] / mpp
        du = -m12 / mpp
        return phi, (dq1, dq2, dv1, dv2, du)

    def accel(self, q, qd, u) -> np.ndarray:
        """Full joint-acceleration vector predicted by the model."""
        u = float(np.asarray(u).reshape(-1)[0])
        phi = self._phi(q[0], q[1], qd[0], qd[1], u)
        if self.eps_p is not None:
            phi += float(self.eps_p.mean(np.array([q[0], q[1], qd[0], qd[1], u]))[0])
        acc = np.empty(2)
        acc[self.active] = u
        acc[self.passive] = phi
        return acc

    def step(self, x: np.ndarray, u, Ts: float) -> np.ndarray:
        q, qd = x[:2], x[2:]
        qd_next = qd + Ts * self.accel(q, qd, u)
        return np.concatenate([q + Ts * ((1.0 - self._w) * qd + self._w * qd_next), qd_next])

    def step_jac(self, x: np.ndarray, u, Ts: float):
        """Euler step plus its Jacobians with respect to state and input."""
        q1, q2, v1, v2 = (float(v) for v in x)
        u = float(np.asarray(u).reshape(-1)[0])
        phi, d = self._phi(q1, q2, v1, v2, u, grad=True)
        d = np.array(d)
        if self.eps_p is not None:
            e, J = self.eps_p.mean_and_jacobian(np.array([q1, q2, v1, v2, u]))
            phi += float(e[0])
            d += J[0]
        acc = np.empty(2)
        acc[self.active] = u
        acc[self.passive] = phi
        v_next = np.array([v1, v2]) + Ts * acc
        A = np.eye(4)
        A[0, 2] = A[1, 3] = Ts
        A[2 + self.passive, :] += Ts * d[:4]
        B = np.zeros((4, 1))
        B[2 + self.active, 0] = Ts
        B[2 + self.passive, 0] = Ts * d[4]
        # q_next = q + Ts v + w Ts^2 acc
        c = self._w * Ts
        A[:2] += c * A[2:]
        A[0, 2] -= c
        A[1, 3] -= c
        B[:2] = c * B[2:]
        q_next = np.array([q1 + Ts * v1, q2 + Ts * v2]) + c * Ts * acc
        return np.concatenate([q_next, v_next]), A, B

    def sweep(self, x0: np.ndarray, U: np.ndarray, Ts: float):
        """Forward rollout storing the passive-row sensitivities of each step.

        Returns ``(X, D)`` with ``D[i] = dphi/d(q1, q2, v1, v2, u)`` at step i.
        """
        N = U.shape[0]
        X = np.empty((N + 1, 4))
        D = np.empty((N, 5))
        X[0] = x0
        q1, q2, v1, v2 = (float(v) for v in x0)
        act, eps = self.active, self.eps_p
        c = self._w * Ts
        z = np.empty(5)
        for i in range(N):
            u = float(U[i, 0])
            phi, d = self._phi(q1, q2, v1, v2, u, grad=True)
            if eps is not None:
                z[0], z[1], z[2], z[3], z[4] = q1, q2, v1, v2, u
                e, J = eps.mean_and_jacobian(z)
                phi += e[0]
                D[i] = J[0]
                D[i] += d
            else:
                D[i] = d
            a1, a2 = (u, phi) if act == 0 else (phi, u)
            q1, q2 = q1 + Ts * (v1 + c * a1), q2 + Ts * (v2 + c * a2)
            v1, v2 = v1 + Ts * a1, v2 + Ts * a2
            X[i + 1, 0], X[i + 1, 1], X[i + 1, 2], X[i + 1, 3] = q1, q2, v1, v2
            if not (abs(v1) < 1e6 and abs(v2) < 1e6):
                X[i + 1:] = np.nan
                break
        return X, D


def predict_step(nominal: RobotParams, eps_p: GPStack | None, x: State, u, Ts: float,
                 scheme: str = "taylor") -> State:
    model = PredictionModel(nominal, eps_p, scheme)
    return State.from_vector(model.step(x.vector(), np.atleast_1d(np.asarray(u, dtype=float)), Ts))


@dataclass
class Rollout:
    states: np.ndarray          # (N+1, 2n), states[0] = x_start
    cost: float
    stage_state_cost: float
    input_cost: float
    terminal_cost: float
    velocity_violation: float   # max over samples 1..N
    terminal_violation: float
    constraints: np.ndarray     # flattened c(x) <= 0 values

    @property
    def max_violation(self) -> float:
        return max(self.velocity_violation, self.terminal_violation)

    @property
    def diverged(self) -> bool:
        return not np.all(np.isfinite(self.states))


def _constraints(spec: OCPSpec, states: np.ndarray) -> np.ndarray:
    n = len(spec.x_goal.q)
    qd = states[1:, n:]
    vb = spec.velocity_bounds
    vel = np.concatenate([(qd - vb).ravel(), (-qd - vb).ravel()])
    eq = states[-1, :n] - spec.x_goal.q
    eqd = states[-1, n:]
    term = np.concatenate([eq - spec.box.position, -eq - spec.box.position,
                           eqd - spec.box.velocity, -eqd - spec.box.velocity])
    return np.concatenate([vel, term])


def rollout(spec: OCPSpec, model: PredictionModel, u_seq) -> Rollout:
    """Simulate the prediction model from ``x_start`` and evaluate the cost."""
    U = np.asarray(u_seq, dtype=float).reshape(spec.N, -1)
    n = len(spec.x_start.q)
    X = np.empty((spec.N + 1, 2 * n))
    X[0] = spec.x_start.vector()
    with np.errstate(all="ignore"):
        for i in range(spec.N):
            try:
                X[i + 1] = model.step(X[i], U[i], spec.Ts)
            except (ValueError, OverflowError):     # math.sin of inf and friends
                X[i + 1:] = np.nan
                break
            if not np.all(np.abs(X[i + 1, n:]) < 1e6):
                X[i + 1:] = np.nan
                break
    xg = spec.x_goal.vector()
    if not np.all(np.isfinite(X)):
        return Rollout(X, math.inf, math.inf, math.inf, math.inf, math.inf, math.inf,
                       np.full(2 * n * spec.N + 4 * n, math.inf))
    E = xg - X
    state_cost = float(np.einsum("ij,jk,ik->", E[:-1], spec.Q, E[:-1]))
    input_cost = float(np.einsum("ij,jk,ik->", U, spec.R, U))
    terminal = float(E[-1] @ spec.Q_N @ E[-1])
    c = _constraints(spec, X)
    nvel = 2 * n * spec.N
    return Rollout(X, state_cost + input_cost + terminal, state_cost, input_cost, terminal,
                   float(max(c[:nvel].max(), 0.0)), float(max(c[nvel:].max(), 0.0)), c)


@dataclass
class ReferenceTrajectory:
    """Planned states at ``t_k = k Ts`` (k = 0..N) and inputs u_0..u_{N-1}."""

    q: np.ndarray               # (N+1, n); q[0] is the start configuration
    qd: np.ndarray              # (N+1, n)
    u: np.ndarray               # (N, m)
    Ts: float
    goal: State
    converged: bool
    cost: float
    max_violation: float = 0.0
    outer_iterations: int = 0
    inner_iterations: int = 0
    multipliers: np.ndarray | None = None
    penalty: float | None = None
    merit_history: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.Ts


class _Objective:
    """Augmented Lagrangian value and adjoint gradient, cached by input."""

    def __init__(self, spec: OCPSpec, model: PredictionModel):
        self.spec = spec
        self.model = model
        self.lam = None
        self.rho = 1.0
        self.evaluations = 0

    def __call__(self, flat_u: np.ndarray):
        spec, model = self.spec, self.model
        N, Ts = spec.N, spec.Ts
        U = flat_u.reshape(N, -1)
        n = len(spec.x_start.q)
        X, D = model.sweep(spec.x_start.vector(), U, Ts)
        self.evaluations += 1
        if not np.all(np.isfinite(X)):
            return DIVERGED_COST, np.zeros_like(flat_u)
        xg = spec.x_goal.vector()
        E = xg - X
        value = (float(np.einsum("ij,jk,ik->", E[:-1], spec.Q, E[:-1]))
                 + float(np.einsum("ij,jk,ik->", U, spec.R, U))
                 + float(E[-1] @ spec.Q_N @ E[-1]))
        c = _constraints(spec, X)
        shifted = np.maximum(self.lam + self.rho * c, 0.0)
        value += float((shifted ** 2 - self.lam ** 2).sum()) / (2.0 * self.rho)

        # gradient of cost and penalty with respect to every state
        gx = np.zeros_like(X)
        nvel = n * N
        gx[1:, n:] += shifted[:nvel].reshape(N, n) - shifted[nvel:2 * nvel].reshape(N, n)
        t = shifted[2 * nvel:].reshape(4, n)
        gx[-1, :n] += t[0] - t[1]
        gx[-1, n:] += t[2] - t[3]
        gx[:-1] += -2.0 * E[:-1] @ spec.Q
        gx[-1] += -2.0 * spec.Q_N @ E[-1]

        # reverse sweep: lam_i = gx_i + A_i^T lam_{i+1}, grad_i = dJ/du_i + B_i^T lam_{i+1}
        gu = 2.0 * (U @ spec.R.T)[:, 0]
        grad = np.empty(N)
        act = model.active
        gq1, gq2, gv1, gv2 = (gx[:, k].tolist() for k in range(4))
        Dl = D.tolist()
        # the position update also carries w Ts^2 acc, so the acceleration
        # sensitivities see mu = lam_v + w Ts lam_q
        c = model._w * Ts
        l1, l2, l3, l4 = gq1[N], gq2[N], gv1[N], gv2[N]
        for i in range(N - 1, -1, -1):
            dq1, dq2, dv1, dv2, du = Dl[i]
            m1, m2 = l3 + c * l1, l4 + c * l2
            lp = m2 if act == 0 else m1
            la = m1 if act == 0 else m2
            grad[i] = gu[i] + Ts * (la + lp * du)
            l1, l2, l3, l4 = (gq1[i] + l1 + Ts * lp * dq1,
                              gq2[i] + l2 + Ts * lp * dq2,
                              gv1[i] + l3 + Ts * (l1 + lp * dv1),
                              gv2[i] + l4 + Ts * (l2 + lp * dv2))
        return value, grad


def _cold_start(spec: OCPSpec, m: int, amplitude: float) -> np.ndarray:
    k = np.arange(spec.N)
    wave = amplitude * np.sin(2.0 * np.pi * k / spec.N)
    return np.tile(wave[:, None], (1, m))


def solve_ocp(spec: OCPSpec, nominal: RobotParams, eps_p: GPStack | None = None,
              warm_start=None, *, feas_tol: float = 1e-3, rtol: float = 1e-8,
              max_outer: int = 25, max_inner: int = 400, rho0: float = 10.0,
              rho_max: float = 1e6, merit_weight: float = 1e3,
              excitation: float = 1.0, scheme: str = "taylor",
              terminal_margin: float = 1.0) -> ReferenceTrajectory:
    """Solve the transfer problem on the learned-corrected prediction model.

    ``warm_start`` may be an input sequence of shape (N, m) or a previous
    :class:`ReferenceTrajectory` (whose multipliers are reused too).
    Non-convergence is reported through ``converged=False``; the best iterate
    found is returned either way.  ``terminal_margin`` < 1 plans to a box
    shrunk by that factor, leaving room for execution errors.
    """
    if not 0 < terminal_margin <= 1:
        raise ValueError("terminal_margin must lie in (0, 1]")
    if terminal_margin != 1:
        spec = spec.replace(box=TerminalBox(spec.box.position * terminal_margin,
                                            spec.box.velocity * terminal_margin))
    model = PredictionModel(nominal, eps_p, scheme)
    m = nominal.m
    obj = _Objective(spec, model)
    ncons = 2 * nominal.n * spec.N + 4 * nominal.n
    lam = np.zeros(ncons)
    rho = rho0
    if isinstance(warm_start, ReferenceTrajectory):
        U = warm_start.u.copy()
        if warm_start.multipliers is not None and warm_start.multipliers.shape == (ncons,):
            lam = warm_start.multipliers.copy()
            rho = warm_start.penalty or rho0
    elif warm_start is not None:
        U = np.asarray(warm_start, dtype=float).reshape(spec.N, m).copy()
    else:
        U = _cold_start(spec, m, excitation)
    ub = np.broadcast_to(spec.input_bounds, (m,))
    U = np.clip(U, -ub, ub)
    bounds = [(-b, b) for _ in range(spec.N) for b in ub]

    def merit(r: Rollout) -> float:
        if r.diverged:
            return math.inf
        return r.cost + merit_weight * float(np.maximum(r.constraints, 0.0).sum())

    current = rollout(spec, model, U)
    prev_cost = current.cost
    best_U, best_r, best_merit = U.copy(), current, merit(current)
    history = [best_merit]
    prev_viol = current.max_violation
    inner_total = 0
    outer = 0
    for outer in range(1, max_outer + 1):
        obj.lam, obj.rho = lam, rho
        res = minimize(obj, U.ravel(), jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_inner, "maxcor": 20, "ftol": 1e-12, "gtol": 1e-6})
        inner_total += int(res.nit)
        U = res.x.reshape(spec.N, m)
        r = rollout(spec, model, U)
        if r.diverged:
            log.warning("planner rollout diverged at outer iteration %d", outer)
            rho = min(rho * 10.0, rho_max)
            U = best_U.copy()
            continue
        lam = np.maximum(lam + rho * r.constraints, 0.0)
        mr = merit(r)
        if mr <= best_merit:
            best_U, best_r, best_merit = U.copy(), r, mr
            history.append(mr)
        log.debug("outer %d: cost %.6g viol %.3g rho %.3g nit %d", outer, r.cost,
                  r.max_violation, rho, res.nit)
        feasible = r.max_violation <= feas_tol
        if feasible and abs(r.cost - prev_cost) <= rtol * max(1.0, abs(r.cost)):
            break
        if r.max_violation > 0.25 * prev_viol:
            rho = min(rho * 10.0, rho_max)
        prev_viol = r.max_violation
        prev_cost = r.cost

    X = best_r.states
    n = nominal.n
    return ReferenceTrajectory(
        q=X[:, :n].copy(), qd=X[:, n:].copy(), u=best_U.copy(), Ts=spec.Ts,
        goal=spec.x_goal, converged=best_r.max_violation <= feas_tol,
        cost=best_r.cost, max_violation=best_r.max_violation,
        outer_iterations=outer, inner_iterations=inner_total,
        multipliers=lam, penalty=rho, merit_history=history)
