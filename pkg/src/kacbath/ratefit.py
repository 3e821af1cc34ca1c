"""Least-squares exponential rate fitting for decay curves.

Every quantitative check in this package reduces to "this signal decays
exponentially at rate r": the fit is ordinary least squares of
log|y - asymptote| against t.  Two guards keep it honest.  The window
starts only after one expected relaxation time, so early transients do not
bias the slope, and it ends as soon as the signal stops clearing three
times its standard error, so the noise floor is never fitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["RateFit", "fit_rate"]


@dataclass(frozen=True)
class RateFit:
    """Result of an exponential fit: y ~ exp(intercept - rate * t)."""

    rate: float
    intercept: float
    r_squared: float
    window: tuple
    n_points: int

    def __str__(self):
        lo, hi = self.window
        return (
            f"rate {self.rate:.6g} over t in [{lo:.4g}, {hi:.4g}] "
            f"({self.n_points} points, R^2 {self.r_squared:.6f})"
        )


def fit_rate(
    times,
    values,
    stderrs=None,
    asymptote: float = 0.0,
    relaxation_time: float = 0.0,
) -> RateFit:
    """Fit a decay rate to values(t) - asymptote.

    The fit window opens at the first time >= relaxation_time and closes
    just before the first later sample whose |value - asymptote| fails to
    exceed 3x its standard error (always open ended when stderrs is None).
    A positive rate means decay; growth comes back negative.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float) - asymptote
    if t.ndim != 1 or t.shape != y.shape:
        raise ValueError("times and values must be matching 1D vectors")
    if stderrs is None:
        floor = np.zeros_like(y)
    else:
        floor = 3.0 * np.asarray(stderrs, dtype=float)
        if floor.shape != y.shape:
            raise ValueError("stderrs must match values")
    start = int(np.searchsorted(t, relaxation_time))
    stop = start
    while stop < t.size and abs(y[stop]) > floor[stop]:
        stop += 1
    if stop - start < 3:
        raise ValueError(
            "need at least 3 samples above the noise floor after the "
            f"relaxation time; window [{start}, {stop}) is too short"
        )
    tw = t[start:stop]
    logy = np.log(np.abs(y[start:stop]))
    design = np.column_stack([np.ones(tw.size), tw])
    coef, *_ = np.linalg.lstsq(design, logy, rcond=None)
    resid = logy - design @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r_sq = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(
        rate=float(-coef[1]),
        intercept=float(coef[0]),
        r_squared=float(r_sq),
        window=(float(tw[0]), float(tw[-1])),
        n_points=int(tw.size),
    )
