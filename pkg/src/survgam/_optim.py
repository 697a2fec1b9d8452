"""Deterministic scalar maximization used by the smoothing and frailty engines.

Golden-section search (ties resolved toward the lower endpoint so reruns are
bit-stable) followed by a finite-difference Newton polish when the optimum is
interior.  All objective evaluations are cached and counted against a budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import FitError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class ScalarMaxResult:
    x: float
    fx: float
    n_evals: int
    at_lower: bool
    at_upper: bool


def maximize_scalar(
    f,
    lo: float,
    hi: float,
    width_tol: float = 1e-5,
    budget: int = 100,
    polish: bool = True,
    polish_step: float = 1e-3,
    grad_tol: float = 1e-5,
    what: str = "objective",
) -> ScalarMaxResult:
    """Maximize f on [lo, hi]; raise FitError when the budget is exhausted."""
    cache: dict[float, float] = {}

    def ev(x: float) -> float:
        if x in cache:
            return cache[x]
        if len(cache) >= budget:
            best = max(cache, key=lambda k: (cache[k], -k))
            raise FitError(
                f"{what}: no convergence within {budget} evaluations",
                best=(best, cache[best]),
            )
        cache[x] = f(x)
        return cache[x]

    a, b = float(lo), float(hi)
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = ev(x1), ev(x2)
    while b - a > width_tol:
        if f1 >= f2:  # tie keeps the lower bracket
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = ev(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = ev(x2)

    # endpoints can beat the interior bracket when the optimum is a boundary
    ev(lo), ev(hi)
    x = max(cache, key=lambda k: (cache[k], -k))
    at_lower = x <= lo + max(width_tol, 1e-12)
    at_upper = x >= hi - max(width_tol, 1e-12)

    if polish and not (at_lower or at_upper):
        h = polish_step
        for _ in range(12):
            fp, fm, f0 = ev(x + h), ev(x - h), ev(x)
            grad = (fp - fm) / (2 * h)
            if abs(grad) < grad_tol:
                break
            hess = (fp - 2 * f0 + fm) / (h * h)
            if hess >= 0:
                break
            step = max(-1.0, min(1.0, -grad / hess))
            xn = max(lo + h, min(hi - h, x + step))
            if ev(xn) >= f0:
                x = xn
            else:
                xn = max(lo + h, min(hi - h, x + step / 8))
                if ev(xn) >= f0:
                    x = xn
                else:
                    break
        x = max(cache, key=lambda k: (cache[k], -k))
        at_lower = x <= lo + max(width_tol, 1e-12)
        at_upper = x >= hi - max(width_tol, 1e-12)

    return ScalarMaxResult(x=x, fx=cache[x], n_evals=len(cache), at_lower=at_lower, at_upper=at_upper)
