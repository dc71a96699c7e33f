"""Iterative plan / execute / learn loop.

Each iteration plans a reference on the nominal model corrected by the
passive regressor (frozen for the whole iteration), executes it on the true
plant under the PFL tracking controller, feeds the active regressor on-line
with a budgeted training set, and at the end of the run refits the passive
regressor on every sample collected so far.  Hyperparameters of both
regressors are re-optimized only between iterations.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .controller import (BalanceController, Mode, TrackingGains, lqr_design,
                         supervisor_step)
from .dynamics import RobotParams, State, rk4_step
from .estimation import (SignalWindow, causal_derivative, interval_acceleration,
                         smooth_offline)
from .gp import GPStack, Hyperparams
from .pfl import residual_active, residual_passive
from .planner import OCPSpec, ReferenceTrajectory, check_terminal_box, solve_ocp

log = logging.getLogger(__name__)

ABLATIONS = ("none", "frozen", "nominal-plan-true-control", "true-plan-nominal-control")


@dataclass(frozen=True)
class LearningConfig:
    budget: int = 180
    hyper_a: Hyperparams = Hyperparams(1.0, 1.5, 1e-3)
    hyper_p: Hyperparams = Hyperparams(1.0, 1.5, 1e-3)
    optimize_noise: bool = False
    max_accel: float = 500.0


@dataclass(frozen=True)
class SimulationConfig:
    substeps: int = 10
    sensor_noise: float = 0.0
    divergence_velocity: float = 100.0
    hold_time: float = 1.0
    seed: int = 0
    causal_window: int = 9
    causal_degree: int = 4
    offline_window: int = 21
    offline_order: int = 3


@dataclass
class IterationLog:
    """Per-control-step records of one execution (sample k at t = k Ts)."""

    t: np.ndarray
    q: np.ndarray            # true joint positions at t_k
    qd: np.ndarray
    qdd: np.ndarray          # reconstructed mean acceleration over [t_k, t_k+1)
    u: np.ndarray            # commanded active acceleration (nan while balancing)
    tau: np.ndarray
    mode: list
    eps_a: np.ndarray        # correction applied (nan while balancing)
    q_meas: np.ndarray = None
    qd_meas: np.ndarray = None
    X_a: np.ndarray = None
    Y_a: np.ndarray = None
    X_p: np.ndarray = None
    Y_p: np.ndarray = None

    @property
    def steps(self) -> int:
        return len(self.t) - 1


@dataclass
class IterationResult:
    index: int
    label: str
    reference: ReferenceTrajectory
    log: IterationLog
    rmse: np.ndarray
    converged: bool
    entered_box: bool
    switch_time: float | None
    truncated: bool
    final_state: np.ndarray
    eps_a_size: int
    eps_p_size: int
    added_a: int
    added_p: int

    def summary(self) -> dict:
        return {
            "iteration": self.index,
            "label": self.label,
            "rmse": [float(v) for v in self.rmse],
            "converged": bool(self.converged),
            "entered_box": bool(self.entered_box),
            "switch_time": self.switch_time,
            "truncated": bool(self.truncated),
            "final_state": [float(v) for v in self.final_state],
            "planner_converged": bool(self.reference.converged),
            "planner_cost": float(self.reference.cost),
            "planner_iterations": [self.reference.outer_iterations, self.reference.inner_iterations],
            "eps_a_size": self.eps_a_size,
            "eps_p_size": self.eps_p_size,
            "added_a": self.added_a,
            "added_p": self.added_p,
        }


@dataclass
class Session:
    true_params: RobotParams
    nominal: RobotParams
    spec: OCPSpec
    gains: TrackingGains = field(default_factory=TrackingGains.scalar)
    lqr_Q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 10.0, 1.0, 1.0]))
    lqr_R: np.ndarray = field(default_factory=lambda: np.eye(1))
    learning: LearningConfig = LearningConfig()
    sim: SimulationConfig = SimulationConfig()
    ablation: str = "none"
    planner_options: dict = field(default_factory=dict)
    eps_a: GPStack = None
    eps_p: GPStack = None
    iteration: int = 0
    warm_start: ReferenceTrajectory | None = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")
        n, m = self.nominal.n, self.nominal.m
        if self.eps_a is None:
            self.eps_a = GPStack.empty(2 * n + m, [self.learning.hyper_a] * m)
        if self.eps_p is None:
            self.eps_p = GPStack.empty(2 * n + m, [self.learning.hyper_p] * (n - m))
        self._rng = np.random.default_rng(self.sim.seed)
        self._balance: dict[int, BalanceController] = {}

    @property
    def learning_enabled(self) -> bool:
        return self.ablation == "none"

    @property
    def plan_params(self) -> RobotParams:
        return self.true_params if self.ablation == "true-plan-nominal-control" else self.nominal

    @property
    def control_params(self) -> RobotParams:
        return self.true_params if self.ablation == "nominal-plan-true-control" else self.nominal

    def balance_controller(self) -> BalanceController:
        params = self.control_params
        key = id(params)
        if key not in self._balance:
            self._balance[key] = lqr_design(params, self.spec.x_goal, self.lqr_Q, self.lqr_R,
                                            self.spec.Ts, self.spec.box)
        return self._balance[key]

    def baseline(self) -> "Session":
        """Copy of this session with both regressors frozen at empty."""
        other = copy.copy(self)
        other.ablation = "frozen"
        other.eps_a = GPStack.empty(self.eps_a.X.shape[1], [self.learning.hyper_a] * self.nominal.m)
        other.eps_p = GPStack.empty(self.eps_p.X.shape[1], [self.learning.hyper_p] * len(self.nominal.passive))
        other.warm_start = None
        other.history = []
        other.iteration = 0
        other._rng = np.random.default_rng(self.sim.seed)
        return other


def tracking_rmse(q_ref, q_exec) -> np.ndarray:
    """Per-joint root-mean-square tracking error over aligned samples."""
    q_ref = np.asarray(q_ref, dtype=float)
    q_exec = np.asarray(q_exec, dtype=float)
    k = min(len(q_ref), len(q_exec))
    if k == 0:
        raise ValueError("no overlapping samples")
    e = q_exec[:k] - q_ref[:k]
    return np.sqrt(np.mean(e * e, axis=0))


def _in_box(q, qd, goal: State, pos: float, vel: float) -> bool:
    return bool(np.all(np.abs(q - goal.q) <= pos) and np.all(np.abs(qd) <= vel))


def execute(session: Session, ref: ReferenceTrajectory, eps_a: GPStack | None):
    """Run the control loop on the true plant; returns ``(log, eps_a, info)``.

    The controller only sees measured positions and reconstructed
    velocities.  With ideal sensing those are the exact sampled values and
    the acceleration over each control interval is ``(qd_k+1 - qd_k) / Ts``;
    with sensor noise both come from causal Savitzky-Golay fits.
    """
    spec, sim, learn = session.spec, session.sim, session.learning
    Ts = spec.Ts
    N = ref.N
    n, m = session.nominal.n, session.nominal.m
    act = list(session.nominal.actuated)
    hold_steps = int(round(sim.hold_time / Ts))
    balance = session.balance_controller()
    pfl_params = session.control_params
    h = Ts / sim.substeps
    noisy = sim.sensor_noise > 0
    rng = session._rng
    window = SignalWindow(sim.causal_window, Ts)

    q = spec.x_start.q.astype(float).copy()
    qd = spec.x_start.qd.astype(float).copy()
    mode = Mode.TRACKING
    u_prev = ref.u[0].copy()
    k_switch = None
    truncated = False
    qd_prev_meas = None

    rec = {name: [] for name in ("q", "qd", "q_meas", "qd_meas", "qdd", "u", "tau", "eps")}
    modes = []
    XA, YA = [], []
    added_a = 0
    k = 0
    while True:
        if noisy:
            q_meas = q + rng.normal(0.0, sim.sensor_noise, size=n)
            window.append(k * Ts, q_meas)
            est = causal_derivative(window, 1, sim.causal_window, sim.causal_degree)
            qd_meas = est if est is not None else spec.x_start.qd.astype(float)
        else:
            q_meas, qd_meas = q.copy(), qd.copy()
        if k >= 1:
            if noisy:
                acc = interval_acceleration(window, sim.causal_window, sim.causal_degree)
                if acc is None:
                    acc = np.full(n, np.nan)
            else:
                acc = (qd_meas - qd_prev_meas) / Ts
            rec["qdd"].append(acc)
            u_last = rec["u"][-1]
            if (eps_a is not None and modes[-1] is Mode.TRACKING and np.all(np.isfinite(acc))
                    and np.all(np.abs(acc) <= learn.max_accel)):
                x_a = np.concatenate([rec["q_meas"][-1], rec["qd_meas"][-1], u_last])
                y_a = residual_active(u_last, acc[act])
                XA.append(x_a)
                YA.append(y_a)
                before = eps_a
                eps_a = eps_a.reduced_insert(x_a, y_a, learn.budget)
                added_a += eps_a is not before
        rec["q"].append(q.copy())
        rec["qd"].append(qd.copy())
        rec["q_meas"].append(q_meas)
        rec["qd_meas"].append(qd_meas)

        stop = truncated
        if mode is Mode.TRACKING and k >= N:
            # reference exhausted: last chance to enter the basin
            if check_terminal_box(State(q_meas, qd_meas), balance.x_goal, balance.box):
                mode = Mode.BALANCING
                k_switch = k
            else:
                stop = True
        if k_switch is not None and k >= max(N, k_switch + hold_steps):
            stop = True
        if stop:
            break

        out = supervisor_step(mode, k, q_meas, qd_meas, ref, eps_a, u_prev, pfl_params,
                              session.gains, balance)
        if out.mode is Mode.BALANCING and mode is Mode.TRACKING:
            k_switch = k
        mode = out.mode
        modes.append(mode)
        rec["tau"].append(out.tau.copy())
        if out.u is not None:
            rec["u"].append(out.u.copy())
            rec["eps"].append(out.eps_a.copy())
            u_prev = out.u
        else:
            rec["u"].append(np.full(m, np.nan))
            rec["eps"].append(np.full(m, np.nan))
        qd_prev_meas = qd_meas
        for _ in range(sim.substeps):
            q, qd = rk4_step(session.true_params, q, qd, out.tau, h)
        k += 1
        if not (np.all(np.isfinite(qd)) and np.abs(qd).max() <= sim.divergence_velocity):
            truncated = True

    def arr(name, width):
        return np.array(rec[name], dtype=float).reshape(-1, width)

    log_ = IterationLog(
        t=Ts * np.arange(len(rec["q"])), q=arr("q", n), qd=arr("qd", n),
        qdd=arr("qdd", n), u=arr("u", m), tau=arr("tau", m), mode=modes, eps_a=arr("eps", m),
        q_meas=arr("q_meas", n), qd_meas=arr("qd_meas", n),
        X_a=np.array(XA).reshape(-1, 2 * n + m), Y_a=np.array(YA).reshape(-1, m))
    info = {"k_switch": k_switch, "truncated": truncated, "added_a": added_a}
    return log_, eps_a, info


def _passive_signals(session: Session, log_: IterationLog):
    """Positions, velocities and interval accelerations used for the passive dataset."""
    sim = session.sim
    if sim.sensor_noise <= 0:
        return log_.q, log_.qd, log_.qdd
    Ts = session.spec.Ts
    if len(log_.q_meas) < sim.offline_window:
        return log_.q_meas, log_.qd_meas, np.full((len(log_.q_meas) - 1, log_.q.shape[1]), np.nan)
    q = smooth_offline(log_.q_meas, Ts, sim.offline_window, sim.offline_order)
    qd = smooth_offline(log_.q_meas, Ts, sim.offline_window, sim.offline_order, deriv=1)
    return q, qd, np.diff(qd, axis=0) / Ts


def _passive_dataset(session: Session, log_: IterationLog, N: int):
    nominal = session.nominal
    act, pas = list(nominal.actuated), list(nominal.passive)
    q_all, qd_all, qdd_all = _passive_signals(session, log_)
    X, Y = [], []
    for k in range(min(N, len(qdd_all))):
        acc = qdd_all[k]
        if not np.all(np.isfinite(acc)) or np.any(np.abs(acc) > session.learning.max_accel):
            continue
        q, qd = q_all[k], qd_all[k]
        X.append(np.concatenate([q, qd, acc[act]]))
        Y.append(residual_passive(nominal, q, qd, acc[act], acc[pas]))
    width = 2 * nominal.n + nominal.m
    return np.array(X).reshape(-1, width), np.array(Y).reshape(-1, len(pas))


def run_iteration(session: Session, label: str | None = None) -> IterationResult:
    """Plan, execute and learn once; mutates the session's regressors."""
    spec = session.spec
    learning = session.learning_enabled
    eps_p = session.eps_p if learning else None
    ref = solve_ocp(spec, session.plan_params, eps_p, warm_start=session.warm_start,
                    **session.planner_options)
    log.info("iteration %d: planner converged=%s cost=%.4g (outer %d, inner %d)",
             session.iteration + 1, ref.converged, ref.cost, ref.outer_iterations,
             ref.inner_iterations)
    log_, eps_a, info = execute(session, ref, session.eps_a if learning else None)

    k_switch = info["k_switch"]
    end_tracking = k_switch if k_switch is not None else min(log_.steps, ref.N) + 1
    end_tracking = max(1, min(end_tracking, len(log_.q), ref.N + 1))
    rmse = tracking_rmse(ref.q[:end_tracking], log_.q[:end_tracking])

    converged = False
    if k_switch is not None and not info["truncated"]:
        hold = int(round(session.sim.hold_time / spec.Ts))
        seg = slice(k_switch, k_switch + hold + 1)
        qs, qds = log_.q[seg], log_.qd[seg]
        converged = len(qs) >= hold + 1 and all(
            _in_box(q, qd, spec.x_goal, 2 * spec.box.position, 2 * spec.box.velocity)
            for q, qd in zip(qs, qds))

    added_p = 0
    if learning:
        session.eps_a = eps_a
        X_new, Y_new = _passive_dataset(session, log_, ref.N)
        log_.X_p, log_.Y_p = X_new, Y_new
        added_p = len(X_new)
        X_all = np.vstack([session.eps_p.X, X_new])
        Y_all = np.vstack([session.eps_p.Y, Y_new])
        session.eps_p = session.eps_p.refit(X_all, Y_all).optimized(
            optimize_noise=session.learning.optimize_noise)
        session.eps_a = session.eps_a.optimized(optimize_noise=session.learning.optimize_noise)
        session.warm_start = ref
    session.iteration += 1

    last = log_.q[-1], log_.qd[-1]
    result = IterationResult(
        index=session.iteration, label=label or f"iteration {session.iteration}",
        reference=ref, log=log_, rmse=rmse, converged=converged,
        entered_box=k_switch is not None,
        switch_time=None if k_switch is None else k_switch * spec.Ts,
        truncated=info["truncated"], final_state=np.concatenate(last),
        eps_a_size=session.eps_a.size, eps_p_size=session.eps_p.size,
        added_a=info["added_a"], added_p=added_p)
    session.history.append(result)
    log.info("iteration %d: converged=%s switch=%s rmse=%s", session.iteration, converged,
             result.switch_time, np.round(rmse, 4))
    return result


@dataclass
class Report:
    scenario: str
    converged: bool
    iterations_used: int
    baseline: IterationResult | None
    iterations: list

    def rmse_table(self) -> list[tuple[str, list[float]]]:
        rows = []
        if self.baseline is not None:
            rows.append(("without learning", [float(v) for v in self.baseline.rmse]))
        rows.extend((r.label, [float(v) for v in r.rmse]) for r in self.iterations)
        return rows

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "scenario": self.scenario,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "baseline": None if self.baseline is None else self.baseline.summary(),
            "iterations": [r.summary() for r in self.iterations],
            "rmse_table": [{"row": label, "rmse": vals} for label, vals in self.rmse_table()],
        }


def run_until_converged(session: Session, max_iters: int, *, baseline: bool = True,
                        scenario: str = "") -> Report:
    """Iterate until the goal basin is reached and held, or the budget runs out."""
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    base = None
    if baseline and session.ablation == "none":
        base = run_iteration(session.baseline(), label="without learning")
    results = []
    for _ in range(max_iters):
        result = run_iteration(session)
        results.append(result)
        if result.converged:
            break
    return Report(scenario=scenario, converged=bool(results and results[-1].converged),
                  iterations_used=len(results), baseline=base, iterations=results)
