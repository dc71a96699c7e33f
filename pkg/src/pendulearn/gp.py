"""Gaussian-process regression with a squared-exponential kernel.

Models are immutable values: :func:`fit` factorizes ``K + sigma_w^2 I`` once
and caches ``alpha = (K + sigma_w^2 I)^-1 Y`` so that a mean prediction costs
one kernel row.  Inputs are z-scored per dimension (statistics taken from the
training set at fit time) before the isotropic kernel is applied.

:func:`reduced_insert` maintains a budgeted training set for on-line use.  A
candidate point is scored by the entropy reduction it would bring,
``0.5 * log(1 + var(x) / sigma_w^2)``; retained points are scored the same
way with their leave-one-out variance, and the weakest one is swapped out
when the candidate beats it.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

JITTER_FLOOR = 1e-10
_LOG_BOUNDS = {
    "amplitude": (math.log(1e-4), math.log(1e3)),
    "length_scale": (math.log(1e-2), math.log(1e2)),
    "noise_var": (math.log(JITTER_FLOOR), math.log(1e2)),
}


class GPError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    amplitude: float = 1.0
    length_scale: float = 1.0
    noise_var: float = 1e-3

    def __post_init__(self):
        if self.amplitude <= 0 or self.length_scale <= 0:
            raise ValueError("amplitude and length-scale must be positive")
        if self.noise_var < JITTER_FLOOR:
            object.__setattr__(self, "noise_var", JITTER_FLOOR)


def kernel(x1, x2, hyper: Hyperparams) -> float:
    """Squared-exponential covariance between two raw input vectors."""
    d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    return hyper.amplitude ** 2 * math.exp(-float(d @ d) / (2.0 * hyper.length_scale ** 2))


def kernel_matrix(A: np.ndarray, B: np.ndarray, hyper: Hyperparams) -> np.ndarray:
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return hyper.amplitude ** 2 * np.exp(-sq / (2.0 * hyper.length_scale ** 2))


def _scaling(X: np.ndarray, standardize: bool) -> tuple[np.ndarray, np.ndarray]:
    dim = X.shape[1]
    if not standardize or X.shape[0] < 2:
        shift = X.mean(axis=0) if (standardize and X.shape[0]) else np.zeros(dim)
        return shift, np.ones(dim)
    scale = X.std(axis=0)
    scale[scale < 1e-9] = 1.0
    return X.mean(axis=0), scale


@dataclass(frozen=True)
class GPModel:
    X: np.ndarray
    Y: np.ndarray
    hyper: Hyperparams
    shift: np.ndarray
    scale: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    standardize: bool = True

    @property
    def size(self) -> int:
        return self.Y.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def _z(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    @cached_property
    def Xs(self) -> np.ndarray:
        return (self.X - self.shift) / self.scale

    @cached_property
    def _inv2l2(self) -> float:
        return 1.0 / (2.0 * self.hyper.length_scale ** 2)

    def predict(self, x) -> tuple[float, float]:
        return predict(self, x)

    def mean(self, x) -> float:
        if self.size == 0:
            return 0.0
        diff = self.Xs - self._z(x)
        k = np.exp(-np.einsum("ij,ij->i", diff, diff) * self._inv2l2)
        return self.hyper.amplitude ** 2 * float(k @ self.alpha)

    def mean_and_grad(self, x) -> tuple[float, np.ndarray]:
        """Posterior mean and its gradient with respect to the raw input."""
        if self.size == 0:
            return 0.0, np.zeros(np.asarray(x).shape[-1])
        diff = self.Xs - (x - self.shift) / self.scale
        w = np.exp(-np.einsum("ij,ij->i", diff, diff) * self._inv2l2) * self.alpha
        w *= self.hyper.amplitude ** 2
        return float(w.sum()), (w @ diff) * (2.0 * self._inv2l2) / self.scale

    def predict_batch(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        a2 = self.hyper.amplitude ** 2
        if self.size == 0:
            return np.zeros(len(Xq)), np.full(len(Xq), a2)
        Ks = kernel_matrix((Xq - self.shift) / self.scale, self.Xs, self.hyper)
        mean = Ks @ self.alpha
        v = solve_triangular(self.chol, Ks.T, lower=True)
        var = np.clip(a2 - np.sum(v * v, axis=0), 0.0, a2)
        return mean, var


def _factor(K: np.ndarray, noise_var: float, amplitude: float) -> np.ndarray:
    n = K.shape[0]
    A = K + noise_var * np.eye(n)
    try:
        return cho_factor(A, lower=True, check_finite=False)[0]
    except np.linalg.LinAlgError:
        pass
    try:
        return cho_factor(A + 1e-8 * amplitude ** 2 * np.eye(n), lower=True, check_finite=False)[0]
    except np.linalg.LinAlgError as exc:
        raise GPError("covariance factorization failed after adding jitter") from exc


def fit(X, Y, hyper: Hyperparams, standardize: bool = True, dim: int | None = None) -> GPModel:
    """Condition a zero-mean GP on ``(X, Y)``."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        if dim is None:
            dim = X.shape[1] if X.ndim == 2 else 0
        X = np.zeros((0, dim))
    X = X.reshape(len(Y), -1) if len(Y) else X
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    shift, scale = _scaling(X, standardize)
    n = len(Y)
    if n == 0:
        chol = np.zeros((0, 0))
        alpha = np.zeros(0)
    else:
        Xs = (X - shift) / scale
        chol = np.tril(_factor(kernel_matrix(Xs, Xs, hyper), hyper.noise_var, hyper.amplitude))
        alpha = cho_solve((chol, True), Y, check_finite=False)
    return GPModel(X=X, Y=Y, hyper=hyper, shift=shift, scale=scale, chol=chol,
                   alpha=alpha, standardize=standardize)


def predict(model: GPModel, x) -> tuple[float, float]:
    """Posterior mean and variance at a single raw input."""
    a2 = model.hyper.amplitude ** 2
    if model.size == 0:
        return 0.0, a2
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"query has shape {x.shape}, expected ({model.dim},)")
    diff = model.Xs - model._z(x)
    k = a2 * np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * model.hyper.length_scale ** 2))
    v = solve_triangular(model.chol, k, lower=True, check_finite=False)
    var = min(max(a2 - float(v @ v), 0.0), a2)
    return float(k @ model.alpha), var


def log_marginal_likelihood(X, Y, hyper: Hyperparams, standardize: bool = True) -> float:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    shift, scale = _scaling(X, standardize)
    Xs = (X - shift) / scale
    K = kernel_matrix(Xs, Xs, hyper) + hyper.noise_var * np.eye(len(Y))
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return -math.inf
    alpha = cho_solve((L, True), Y, check_finite=False)
    return float(-0.5 * Y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(Y) * math.log(2 * math.pi))


def optimize_hyperparams(X, Y, init: Hyperparams, *, optimize_noise: bool = False,
                         standardize: bool = True, starts: int = 3,
                         evals_per_start: int = 50) -> Hyperparams:
    """Maximize the log marginal likelihood in log-space.

    A derivative-free coordinate search from three starts (``init`` and
    copies with the length-scale multiplied by 3 and 1/3) finds the basin;
    a bounded quasi-Newton polish then settles on a stationary point, so
    calling again from the result changes nothing.  Never returns a point
    worse than ``init``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if len(Y) < 5:
        return init
    names = ["amplitude", "length_scale"] + (["noise_var"] if optimize_noise else [])

    def to_hyper(theta) -> Hyperparams:
        vals = {k: math.exp(v) for k, v in zip(names, theta)}
        return dataclasses.replace(init, **vals)

    def objective(theta) -> float:
        value = log_marginal_likelihood(X, Y, to_hyper(theta), standardize)
        return value if math.isfinite(value) else -math.inf

    base = np.array([math.log(getattr(init, k)) for k in names])
    best_theta, best_val = base.copy(), objective(base)
    start_points = [base]
    for factor in (3.0, 1.0 / 3.0)[: max(starts - 1, 0)]:
        s = base.copy()
        s[1] += math.log(factor)
        start_points.append(s)

    for theta0 in start_points:
        theta = np.clip(theta0, *zip(*(_LOG_BOUNDS[k] for k in names)))
        val = objective(theta)
        evals, step = 1, 1.0
        while evals < evals_per_start and step > 1e-6:
            moved = False
            for i, name in enumerate(names):
                lo, hi = _LOG_BOUNDS[name]
                for sign in (1.0, -1.0):
                    if evals >= evals_per_start:
                        break
                    trial = theta.copy()
                    trial[i] = min(max(trial[i] + sign * step, lo), hi)
                    if trial[i] == theta[i]:
                        continue
                    tv = objective(trial)
                    evals += 1
                    if tv > val:
                        theta, val, moved = trial, tv, True
                        break
            if not moved:
                step *= 0.5
        if val > best_val:
            best_theta, best_val = theta, val
    if not math.isfinite(best_val):
        return init
    def negated(theta) -> float:
        value = objective(theta)
        return -value if math.isfinite(value) else 1e300

    res = minimize(negated, best_theta, method="L-BFGS-B", bounds=[_LOG_BOUNDS[k] for k in names],
                   options={"maxiter": 100, "ftol": 1e-14, "gtol": 1e-9})
    if np.all(np.isfinite(res.x)) and -res.fun > best_val:
        best_theta = res.x
    return to_hyper(best_theta)


def _loo_scores(model: GPModel) -> np.ndarray:
    """Information score of each retained point given all the others."""
    Kinv_diag = np.diag(cho_solve((model.chol, True), np.eye(model.size), check_finite=False))
    # var_loo = 1/Kinv_ii - s2, so 1 + var_loo/s2 = 1/(s2 Kinv_ii)
    return 0.5 * np.log(np.maximum(1.0 / (model.hyper.noise_var * Kinv_diag), 1.0))


def information_score(model: GPModel, x) -> float:
    _, var = predict(model, x)
    return 0.5 * math.log1p(var / model.hyper.noise_var)


def _insert(X, Y, x, y, budget, scores_fn, cand_fn):
    """Shared append/swap logic; returns (X, Y, changed)."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if X.shape[0] < budget:
        return np.vstack([X, x]), np.concatenate([Y, np.reshape(y, (1,) + Y.shape[1:])]), True
    scores = scores_fn()
    worst = int(np.argmin(scores))
    if cand_fn() <= scores[worst]:
        return X, Y, False
    X = X.copy()
    Y = Y.copy()
    X[worst] = x[0]
    Y[worst] = y
    return X, Y, True


def reduced_insert(model: GPModel, x, y, budget: int) -> GPModel:
    """Offer ``(x, y)`` to a budgeted model; returns the (possibly same) model."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    X, Y, changed = _insert(model.X, model.Y, x, float(y), budget,
                            lambda: _loo_scores(model), lambda: information_score(model, x))
    if not changed:
        return model
    return fit(X, Y, model.hyper, model.standardize)


@dataclass(frozen=True)
class GPStack:
    """Independent scalar GPs sharing one input set, one per output."""

    models: tuple[GPModel, ...]

    @classmethod
    def empty(cls, dim: int, hypers: Sequence[Hyperparams], standardize: bool = True) -> "GPStack":
        return cls(tuple(fit(np.zeros((0, dim)), np.zeros(0), h, standardize, dim=dim) for h in hypers))

    @classmethod
    def fit(cls, X, Y, hypers: Sequence[Hyperparams], standardize: bool = True) -> "GPStack":
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float).reshape(len(X), -1) if len(X) else np.zeros((0, len(hypers)))
        dim = X.shape[1] if X.ndim == 2 else None
        return cls(tuple(fit(X, Y[:, j], h, standardize, dim=dim) for j, h in enumerate(hypers)))

    @property
    def size(self) -> int:
        return self.models[0].size

    @property
    def outputs(self) -> int:
        return len(self.models)

    @property
    def X(self) -> np.ndarray:
        return self.models[0].X

    @property
    def Y(self) -> np.ndarray:
        return np.stack([m.Y for m in self.models], axis=1)

    @property
    def hypers(self) -> tuple[Hyperparams, ...]:
        return tuple(m.hyper for m in self.models)

    def mean(self, x) -> np.ndarray:
        return np.array([m.mean(x) for m in self.models])

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        out = [predict(m, x) for m in self.models]
        return np.array([o[0] for o in out]), np.array([o[1] for o in out])

    def mean_and_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        out = [m.mean_and_grad(x) for m in self.models]
        return np.array([o[0] for o in out]), np.stack([o[1] for o in out])

    def refit(self, X, Y, hypers: Sequence[Hyperparams] | None = None) -> "GPStack":
        hypers = self.hypers if hypers is None else hypers
        return GPStack.fit(X, Y, hypers, self.models[0].standardize)

    def optimized(self, **kw) -> "GPStack":
        """Refit with hyperparameters re-optimized on the current data."""
        if self.size < 5:
            return self
        hypers = [optimize_hyperparams(m.X, m.Y, m.hyper, standardize=m.standardize, **kw)
                  for m in self.models]
        return self.refit(self.X, self.Y, hypers)

    def reduced_insert(self, x, y, budget: int) -> "GPStack":
        """Budgeted insertion; the score is summed over the independent outputs."""
        if budget < 1:
            raise ValueError("budget must be at least 1")
        y = np.atleast_1d(np.asarray(y, dtype=float))
        X, Y, changed = _insert(
            self.X, self.Y, x, y, budget,
            lambda: sum(_loo_scores(m) for m in self.models),
            lambda: sum(information_score(m, x) for m in self.models))
        if not changed:
            return self
        return self.refit(X, Y)
