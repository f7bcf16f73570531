"""Log-linear fits of exponential growth and decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_SAMPLES = 5


@dataclass(frozen=True)
class RateFit:
    rate: float
    window: tuple[float, float]
    residual: float
    intercept: float
    n_samples: int

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError(f"empty fit window {self.window}")


def fit_exponential_rate(t, v, window: tuple[float, float] | None = None) -> RateFit:
    """Least-squares slope of ``log v`` against ``t`` over ``window``.

    The residual is the rms misfit in log space, so exact exponentials give
    a residual at round-off level.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("t and v must be 1-d arrays of equal length")
    if window is None:
        window = (float(t[0]), float(t[-1]))
    t0, t1 = float(window[0]), float(window[1])
    if not t0 < t1:
        raise ValueError(f"fit window must satisfy t0 < t1, got {window}")
    mask = (t >= t0) & (t <= t1)
    if np.count_nonzero(mask) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples in window {window}, got {np.count_nonzero(mask)}")
    tw, vw = t[mask], v[mask]
    if np.any(~(vw > 0)):
        raise ValueError("all values in the fit window must be positive")
    logv = np.log(vw)
    A = np.column_stack([tw, np.ones_like(tw)])
    (slope, intercept), *_ = np.linalg.lstsq(A, logv, rcond=None)
    resid = logv - (slope * tw + intercept)
    return RateFit(
        rate=float(slope),
        window=(t0, t1),
        residual=float(np.sqrt(np.mean(resid**2))),
        intercept=float(intercept),
        n_samples=int(tw.size),
    )
