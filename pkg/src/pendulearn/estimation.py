"""Velocity and acceleration reconstruction from sampled joint positions.

On-line estimates use a causal Savitzky-Golay fit evaluated at the newest
sample of a short window; off-line estimates use the centred (non-causal)
filter over a whole logged signal, with one-sided fits at the ends.
"""
from __future__ import annotations

from collections import deque

import numpy as np
from scipy.signal import savgol_coeffs, savgol_filter

CAUSAL_WINDOW = 9
CAUSAL_DEGREE = 4
OFFLINE_WINDOW = 21
OFFLINE_ORDER = 3


class SignalWindow:
    """Ring buffer of uniformly spaced position samples for one or more joints."""

    def __init__(self, capacity: int, Ts: float):
        if capacity < 2:
            raise ValueError("window capacity must be at least 2")
        self.capacity = capacity
        self.Ts = Ts
        self._t: deque[float] = deque(maxlen=capacity)
        self._x: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._t)

    def append(self, t: float, value) -> None:
        if self._t:
            dt = t - self._t[-1]
            if dt <= 0 or abs(dt - self.Ts) > 1e-9 * max(1.0, abs(t)):
                raise ValueError(f"sample at t={t} breaks the uniform spacing {self.Ts}")
        self._t.append(float(t))
        self._x.append(np.atleast_1d(np.asarray(value, dtype=float)).copy())

    def samples(self) -> np.ndarray:
        return np.array(self._x)

    def clear(self) -> None:
        self._t.clear()
        self._x.clear()


def _centred(window: SignalWindow, length: int) -> np.ndarray:
    # derivative stencils sum to zero, so removing the newest value changes
    # nothing except the round-off, which it shrinks considerably
    x = window.samples()[-length:]
    return x - x[-1]


def causal_derivative(window: SignalWindow, order: int, length: int = CAUSAL_WINDOW,
                      degree: int = CAUSAL_DEGREE):
    """Derivative of the given order at the newest sample, or None if too few samples."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if len(window) < length:
        return None
    coeffs = savgol_coeffs(length, degree, deriv=order, delta=window.Ts, pos=length - 1, use="dot")
    return coeffs @ _centred(window, length)


def smooth_offline(signal, Ts: float, window: int = OFFLINE_WINDOW, order: int = OFFLINE_ORDER,
                   deriv: int = 0) -> np.ndarray:
    """Centred Savitzky-Golay smoothing/differentiation along axis 0."""
    signal = np.asarray(signal, dtype=float)
    if window % 2 == 0 or order >= window or window < 3:
        raise ValueError("window must be odd, at least 3 and larger than the order")
    if signal.shape[0] < window:
        raise ValueError(f"signal of length {signal.shape[0]} is shorter than the window")
    return savgol_filter(signal, window, order, deriv=deriv, delta=Ts, axis=0, mode="interp")


def interval_acceleration(window: SignalWindow, length: int = CAUSAL_WINDOW,
                          degree: int = CAUSAL_DEGREE):
    """Mean acceleration over the newest sampling interval, or None if too few samples.

    Differences the fitted velocity at the two newest samples, which matches
    the ``(qd_{k+1} - qd_k) / Ts`` convention used with exact measurements.
    """
    if len(window) < length:
        return None
    end = savgol_coeffs(length, degree, deriv=1, delta=window.Ts, pos=length - 1, use="dot")
    before = savgol_coeffs(length, degree, deriv=1, delta=window.Ts, pos=length - 2, use="dot")
    return (end - before) @ _centred(window, length) / window.Ts
