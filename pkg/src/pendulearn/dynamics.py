"""Rigid-body model of a planar 2R chain with one actuated joint.

The equations of motion are written as ``M(q) qdd + n(q, qd) = [tau; 0]`` and
partitioned into active and passive rows.  Angles are measured with
``q = (0, 0)`` corresponding to both links hanging down, the second angle
being relative to the first link.  Viscous friction is folded into ``n``.

The same functions evaluate the "true" plant and the "nominal" model used
for control design; the two only differ by the :class:`RobotParams` passed in.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

GRAVITY = 9.81


class DynamicsError(ValueError):
    """Raised for inconsistent dimensions or corrupt parameter sets."""


@dataclass(frozen=True)
class RobotParams:
    """Physical parameters of a planar two-link chain.

    ``mass``, ``length``, ``com`` (distance of the centre of mass from the
    joint), ``inertia`` (barycentral) and ``friction`` are per-link pairs.
    ``actuated`` lists the indices of the driven joints; ``(0,)`` is the
    Pendubot, ``(1,)`` the Acrobot.
    """

    mass: tuple[float, float]
    length: tuple[float, float]
    com: tuple[float, float]
    inertia: tuple[float, float]
    friction: tuple[float, float] = (0.0, 0.0)
    g: float = GRAVITY
    actuated: tuple[int, ...] = (0,)

    def __post_init__(self):
        for name in ("mass", "length", "com", "inertia", "friction"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2:
                raise DynamicsError(f"{name} must have one entry per link, got {value}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "actuated", tuple(int(i) for i in self.actuated))
        if min(self.mass) <= 0 or min(self.length) <= 0:
            raise DynamicsError("masses and lengths must be positive")
        if min(self.com) < 0 or any(a > l for a, l in zip(self.com, self.length)):
            raise DynamicsError("COM distances must lie in [0, link length]")
        if min(self.inertia) < 0 or min(self.friction) < 0:
            raise DynamicsError("inertias and friction coefficients must be non-negative")
        if not 0 < len(self.actuated) < self.n or len(set(self.actuated)) != len(self.actuated):
            raise DynamicsError(f"invalid actuated index set {self.actuated}")
        if any(i < 0 or i >= self.n for i in self.actuated):
            raise DynamicsError(f"actuated index out of range: {self.actuated}")

    @property
    def n(self) -> int:
        return 2

    @property
    def m(self) -> int:
        return len(self.actuated)

    @property
    def passive(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in self.actuated)

    @property
    def order(self) -> np.ndarray:
        """Permutation putting active coordinates first."""
        return np.array(self.actuated + self.passive)

    def replace(self, **changes) -> "RobotParams":
        return dataclasses.replace(self, **changes)


def pendubot_default() -> RobotParams:
    """Default "true" Pendubot parameters shipped with the package."""
    return RobotParams(
        mass=(0.8, 0.3),
        length=(0.3, 0.45),
        com=(0.15, 0.18),
        inertia=(0.006, 0.005),
        friction=(0.02, 0.002),
    )


class State(NamedTuple):
    q: np.ndarray
    qd: np.ndarray

    @classmethod
    def of(cls, q, qd=None) -> "State":
        q = np.asarray(q, dtype=float)
        qd = np.zeros_like(q) if qd is None else np.asarray(qd, dtype=float)
        return cls(q, qd)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qd])

    @classmethod
    def from_vector(cls, x) -> "State":
        x = np.asarray(x, dtype=float)
        h = x.size // 2
        return cls(x[:h].copy(), x[h:].copy())


@dataclass(frozen=True)
class PartitionedDynamics:
    M_aa: np.ndarray
    M_ap: np.ndarray
    M_pa: np.ndarray
    M_pp: np.ndarray
    n_a: np.ndarray
    n_p: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return np.block([[self.M_aa, self.M_ap], [self.M_pa, self.M_pp]])

    @property
    def nvec(self) -> np.ndarray:
        return np.concatenate([self.n_a, self.n_p])


def _check_state(params: RobotParams, q, qd) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if q.shape != (params.n,) or qd.shape != (params.n,):
        raise DynamicsError(
            f"state dimensions {q.shape}, {qd.shape} do not match n={params.n}")
    return q, qd


def mass_matrix(params: RobotParams, q) -> np.ndarray:
    """Full inertia matrix in joint order."""
    m1, m2 = params.mass
    l1, _ = params.length
    a1, a2 = params.com
    I1, I2 = params.inertia
    h = m2 * l1 * a2
    c2 = np.cos(q[1])
    m22 = I2 + m2 * a2 * a2
    m12 = m22 + h * c2
    m11 = I1 + m1 * a1 * a1 + m2 * l1 * l1 + m22 + 2.0 * h * c2
    return np.array([[m11, m12], [m12, m22]])


def bias_forces(params: RobotParams, q, qd) -> np.ndarray:
    """Coriolis/centrifugal + gravity + viscous friction, in joint order."""
    m1, m2 = params.mass
    l1, _ = params.length
    a1, a2 = params.com
    b1, b2 = params.friction
    g = params.g
    h = m2 * l1 * a2
    s2 = np.sin(q[1])
    s12 = np.sin(q[0] + q[1])
    g2 = g * m2 * a2 * s12
    n1 = -h * s2 * (2.0 * qd[0] * qd[1] + qd[1] ** 2) + g * (m1 * a1 + m2 * l1) * np.sin(q[0]) + g2 + b1 * qd[0]
    n2 = h * s2 * qd[0] ** 2 + g2 + b2 * qd[1]
    return np.array([n1, n2])


def derivatives(params: RobotParams, q, qd):
    """Partial derivatives of the joint-order model.

    Returns ``(dM, dn_dq, dn_dqd)`` where ``dM[:, :, k] = dM/dq_k``.
    """
    m1, m2 = params.mass
    l1, _ = params.length
    a1, a2 = params.com
    b1, b2 = params.friction
    g = params.g
    h = m2 * l1 * a2
    s2, c2 = np.sin(q[1]), np.cos(q[1])
    c1 = np.cos(q[0])
    c12 = np.cos(q[0] + q[1])
    dM = np.zeros((2, 2, 2))
    dM[0, 0, 1] = -2.0 * h * s2
    dM[0, 1, 1] = dM[1, 0, 1] = -h * s2
    gc12 = g * m2 * a2 * c12
    dn_dq = np.array([
        [g * (m1 * a1 + m2 * l1) * c1 + gc12,
         -h * c2 * (2.0 * qd[0] * qd[1] + qd[1] ** 2) + gc12],
        [gc12, h * c2 * qd[0] ** 2 + gc12],
    ])
    dn_dqd = np.array([
        [-2.0 * h * s2 * qd[1] + b1, -2.0 * h * s2 * (qd[0] + qd[1])],
        [2.0 * h * s2 * qd[0], b2],
    ])
    return dM, dn_dq, dn_dqd


def evaluate(params: RobotParams, q, qd) -> PartitionedDynamics:
    """Inertia matrix and nonlinear terms partitioned as active/passive."""
    q, qd = _check_state(params, q, qd)
    M = mass_matrix(params, q)
    nv = bias_forces(params, q, qd)
    a, p = list(params.actuated), list(params.passive)
    M_pp = M[np.ix_(p, p)]
    if abs(np.linalg.det(M_pp)) < 1e-12:
        raise DynamicsError("passive inertia block is singular; check parameters")
    return PartitionedDynamics(
        M_aa=M[np.ix_(a, a)], M_ap=M[np.ix_(a, p)], M_pa=M[np.ix_(p, a)],
        M_pp=M_pp, n_a=nv[a], n_p=nv[p])


def forward_dynamics(params: RobotParams, q, qd, tau) -> np.ndarray:
    """Joint accelerations of the plant for actuator torques ``tau``."""
    q, qd = _check_state(params, q, qd)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.shape != (params.m,):
        raise DynamicsError(f"tau must have length {params.m}, got {tau.shape}")
    gen = np.zeros(params.n)
    gen[list(params.actuated)] = tau
    M = mass_matrix(params, q)
    try:
        return np.linalg.solve(M, gen - bias_forces(params, q, qd))
    except np.linalg.LinAlgError as exc:
        raise DynamicsError("singular inertia matrix") from exc


def total_energy(params: RobotParams, q, qd) -> float:
    """Kinetic plus potential energy, zero at the hanging rest configuration."""
    q, qd = _check_state(params, q, qd)
    m1, m2 = params.mass
    l1, _ = params.length
    a1, a2 = params.com
    kinetic = 0.5 * qd @ mass_matrix(params, q) @ qd
    potential = params.g * ((m1 * a1 + m2 * l1) * (1.0 - np.cos(q[0]))
                            + m2 * a2 * (1.0 - np.cos(q[0] + q[1])))
    return float(kinetic + potential)


def rk4_step(params: RobotParams, q, qd, tau, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One classical Runge-Kutta step with torque held constant."""
    def f(q_, qd_):
        return qd_, forward_dynamics(params, q_, qd_, tau)

    k1q, k1v = f(q, qd)
    k2q, k2v = f(q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v)
    k3q, k3v = f(q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v)
    k4q, k4v = f(q + dt * k3q, qd + dt * k3v)
    q_next = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
    qd_next = qd + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return q_next, qd_next


@dataclass(frozen=True)
class PerturbationSpec:
    """Multiplicative changes applied to a parameter set.

    With ``inertia_rule="com_squared"`` each barycentral inertia is rescaled
    by the square of its COM-distance factor; ``"none"`` leaves inertias alone.
    ``friction`` scales the viscous coefficients (0 drops friction).
    """

    mass: tuple[float, float] = (1.0, 1.0)
    com: tuple[float, float] = (1.0, 1.0)
    friction: tuple[float, float] = (1.0, 1.0)
    inertia_rule: str = "com_squared"

    @classmethod
    def percent(cls, mass_change: float, com_change: float, **kw) -> "PerturbationSpec":
        return cls(mass=(1 + mass_change,) * 2, com=(1 + com_change,) * 2, **kw)


def perturb(nominal: RobotParams, spec: PerturbationSpec) -> RobotParams:
    """Return a new parameter set with ``spec`` applied."""
    if spec.inertia_rule not in ("com_squared", "none"):
        raise DynamicsError(f"unknown inertia rule {spec.inertia_rule!r}")
    if min(spec.mass) <= 0 or min(spec.com) <= 0 or min(spec.friction) < 0:
        raise DynamicsError("perturbation factors must keep parameters positive")
    mass = tuple(m * s for m, s in zip(nominal.mass, spec.mass))
    com = tuple(a * s for a, s in zip(nominal.com, spec.com))
    if spec.inertia_rule == "com_squared":
        inertia = tuple(I * s * s for I, s in zip(nominal.inertia, spec.com))
    else:
        inertia = nominal.inertia
    friction = tuple(b * s for b, s in zip(nominal.friction, spec.friction))
    return nominal.replace(mass=mass, com=com, inertia=inertia, friction=friction)
