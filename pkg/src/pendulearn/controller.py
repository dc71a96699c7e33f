"""Tracking controller with learned acceleration correction, and LQR balancing.

During the transfer the commanded active acceleration is

    u_k = u_ref_k + K_P (q_ref_a - q_a) + K_D (qd_ref_a - qd_a) - eps_a

and is converted to a torque by the nominal PFL law.  Once the state enters
the terminal box around the goal, a discrete LQR designed on the nominal
linearization takes over for good.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import RobotParams, State, evaluate, forward_dynamics
from .gp import GPStack
from .pfl import pfl_terms
from .planner import ReferenceTrajectory, TerminalBox, check_terminal_box


class ControlDesignError(RuntimeError):
    pass


class Mode(str, enum.Enum):
    TRACKING = "tracking"
    BALANCING = "balancing"


@dataclass(frozen=True)
class TrackingGains:
    K_P: np.ndarray
    K_D: np.ndarray
    Ts: float

    def __post_init__(self):
        for name in ("K_P", "K_D"):
            K = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if np.linalg.eigvalsh(0.5 * (K + K.T)).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, K)

    @classmethod
    def scalar(cls, kp: float = 50.0, kd: float = 20.0, Ts: float = 0.01) -> "TrackingGains":
        return cls(np.array([[kp]]), np.array([[kd]]), Ts)


def tracking_accel(u_ref, q_ref_a, qd_ref_a, q_a, qd_a, eps_a, gains: TrackingGains) -> np.ndarray:
    """PD tracking of the active joints with feedforward and learned correction."""
    return (np.atleast_1d(u_ref) + gains.K_P @ (np.atleast_1d(q_ref_a) - q_a)
            + gains.K_D @ (np.atleast_1d(qd_ref_a) - qd_a) - np.atleast_1d(eps_a))


def dare(A, B, Q, R, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Solve the discrete algebraic Riccati equation by fixed-point iteration.

    Iterates ``P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA`` from ``P = Q`` until
    the residual, relative to ``max(1, |P|)``, drops below ``tol``.
    Returns ``(P, residual)``.
    """
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Q, R = np.atleast_2d(Q).astype(float), np.atleast_2d(R).astype(float)

    def update(P):
        BtPA = B.T @ P @ A
        return Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)

    P = Q.copy()
    for _ in range(max_iter):
        P_next = update(P)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)) or np.abs(P_next).max() > 1e14:
            raise ControlDesignError("Riccati iteration diverged; linearization not stabilizable")
        scale = max(1.0, np.abs(P_next).max())
        if np.abs(P_next - P).max() <= tol * scale:
            P = P_next
            residual = np.abs(update(P) - P).max() / scale
            if residual <= tol:
                return P, residual
        P = P_next
    raise ControlDesignError(f"Riccati iteration did not converge in {max_iter} steps")


def dlqr_gain(A, B, P, R) -> np.ndarray:
    return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


@dataclass(frozen=True)
class BalanceController:
    K: np.ndarray           # (m, 2n)
    x_goal: State
    u_eq: np.ndarray        # equilibrium torque
    box: TerminalBox
    A: np.ndarray           # discrete nominal linearization
    B: np.ndarray
    P: np.ndarray

    def torque(self, q, qd) -> np.ndarray:
        dx = np.concatenate([np.asarray(q) - self.x_goal.q, np.asarray(qd) - self.x_goal.qd])
        return self.u_eq - self.K @ dx

    @property
    def closed_loop(self) -> np.ndarray:
        return self.A - self.B @ self.K


def equilibrium_torque(params: RobotParams, q_goal) -> np.ndarray:
    d = evaluate(params, q_goal, np.zeros_like(np.asarray(q_goal, dtype=float)))
    return d.n_a.copy()


def linearize(params: RobotParams, q0, tau0, h: float = 1e-6):
    """Continuous-time Jacobians of ``(q, qd) -> (qd, qdd)`` by central differences."""
    n = params.n
    x0 = np.concatenate([np.asarray(q0, dtype=float), np.zeros(n)])
    tau0 = np.atleast_1d(tau0).astype(float)

    def f(x, tau):
        return np.concatenate([x[n:], forward_dynamics(params, x[:n], x[n:], tau)])

    Ac = np.empty((2 * n, 2 * n))
    for j in range(2 * n):
        e = np.zeros(2 * n)
        e[j] = h
        Ac[:, j] = (f(x0 + e, tau0) - f(x0 - e, tau0)) / (2 * h)
    Bc = np.empty((2 * n, params.m))
    for j in range(params.m):
        e = np.zeros(params.m)
        e[j] = h
        Bc[:, j] = (f(x0, tau0 + e) - f(x0, tau0 - e)) / (2 * h)
    return Ac, Bc


def lqr_design(nominal: RobotParams, x_goal: State, Q_b, R_b, Ts: float,
               box: TerminalBox = TerminalBox()) -> BalanceController:
    """Discrete LQR around a (possibly forced) equilibrium of the nominal model."""
    if np.any(np.asarray(x_goal.qd) != 0):
        raise ValueError("goal must be an equilibrium (zero velocity)")
    u_eq = equilibrium_torque(nominal, x_goal.q)
    Ac, Bc = linearize(nominal, x_goal.q, u_eq)
    A = np.eye(Ac.shape[0]) + Ts * Ac
    B = Ts * Bc
    Q_b, R_b = np.atleast_2d(Q_b), np.atleast_2d(R_b)
    P, _ = dare(A, B, Q_b, R_b)
    K = dlqr_gain(A, B, P, R_b)
    return BalanceController(K=K, x_goal=x_goal, u_eq=u_eq, box=box, A=A, B=B, P=P)


@dataclass
class StepOutput:
    mode: Mode
    tau: np.ndarray
    u: np.ndarray | None        # commanded active acceleration (tracking only)
    eps_a: np.ndarray | None


def reference_sample(ref: ReferenceTrajectory, k: int):
    """(q_ref_k, qd_ref_k, u_ref_k); past the horizon the last sample is held."""
    if k < ref.N:
        return ref.q[k], ref.qd[k], ref.u[k]
    return ref.q[-1], ref.qd[-1], np.zeros(ref.u.shape[1])


def supervisor_step(mode: Mode, k: int, q, qd, ref: ReferenceTrajectory,
                    eps_a: GPStack | None, u_prev, pfl_params: RobotParams,
                    gains: TrackingGains, balance: BalanceController) -> StepOutput:
    """One control period: mode latch, then tracking or balancing torque.

    The learned correction is evaluated at ``(q, qd, u_prev)``, i.e. with
    the previous commanded acceleration, which removes the algebraic loop
    between ``u_k`` and ``eps_a(q, qd, u_k)``.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if mode is Mode.TRACKING and check_terminal_box(State(q, qd), balance.x_goal, balance.box):
        mode = Mode.BALANCING
    if mode is Mode.BALANCING:
        return StepOutput(mode, balance.torque(q, qd), None, None)
    act = list(pfl_params.actuated)
    q_ref, qd_ref, u_ref = reference_sample(ref, k)
    if eps_a is not None and eps_a.size > 0:
        correction = eps_a.mean(np.concatenate([q, qd, np.atleast_1d(u_prev)]))
    else:
        correction = np.zeros(len(act))
    u = tracking_accel(u_ref, q_ref[act], qd_ref[act], q[act], qd[act], correction, gains)
    terms = pfl_terms(pfl_params, q, qd)
    return StepOutput(mode, terms.B_hat @ u + terms.eta_hat, u, correction)
