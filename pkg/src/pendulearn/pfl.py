"""Collocated partial feedback linearization and perturbation residuals.

On the nominal model the torque ``tau = B u + eta`` makes the active joints
follow ``qdd_a = u`` exactly.  On the real plant the equality is broken by a
perturbation acceleration on each subsystem; the residual functions below
turn measured accelerations into samples of those perturbations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import RobotParams, evaluate


@dataclass(frozen=True)
class PFLTerms:
    B_hat: np.ndarray
    eta_hat: np.ndarray


def pfl_terms(nominal: RobotParams, q, qd) -> PFLTerms:
    """Effective active inertia (Schur complement) and bias torque."""
    d = evaluate(nominal, q, qd)
    Mpp_inv_Mpa = np.linalg.solve(d.M_pp, d.M_pa)
    Mpp_inv_np = np.linalg.solve(d.M_pp, d.n_p)
    return PFLTerms(B_hat=d.M_aa - d.M_ap @ Mpp_inv_Mpa,
                    eta_hat=d.n_a - d.M_ap @ Mpp_inv_np)


def pfl_torque(nominal: RobotParams, q, qd, u) -> np.ndarray:
    terms = pfl_terms(nominal, q, qd)
    return terms.B_hat @ np.atleast_1d(u) + terms.eta_hat


def residual_active(u, qdd_a) -> np.ndarray:
    """Active perturbation sample: realised minus commanded acceleration."""
    return np.atleast_1d(np.asarray(qdd_a, dtype=float)) - np.atleast_1d(np.asarray(u, dtype=float))


def passive_nominal_accel(nominal: RobotParams, q, qd, qdd_a) -> np.ndarray:
    """Passive acceleration predicted by the nominal model for given ``qdd_a``."""
    d = evaluate(nominal, q, qd)
    return -np.linalg.solve(d.M_pp, d.n_p + d.M_pa @ np.atleast_1d(qdd_a))


def residual_passive(nominal: RobotParams, q, qd, qdd_a, qdd_p) -> np.ndarray:
    """Passive perturbation sample ``qdd_p + M_pp^-1 (n_p + M_pa qdd_a)``."""
    return np.atleast_1d(np.asarray(qdd_p, dtype=float)) - passive_nominal_accel(nominal, q, qd, qdd_a)
