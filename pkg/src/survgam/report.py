"""JSON fit documents: everything needed to reproduce predictions."""

from __future__ import annotations

import numpy as np

from .backfit import BackfitResult
from .cox import CoxFit
from .frailty import FrailtyFit
from .gam import GamFit


def _fold_level_into_fixed(gam: GamFit, level: float) -> np.ndarray:
    """Absorb a constant log-hazard shift into the fixed spline block.

    The first fixed column is the constant direction of the penalty null
    space, so a level shift is exactly a change of its coefficient.
    """
    coef = gam.spline_fixed.copy()
    if level:
        const_val = float(
            (gam.decomposition.fixed_transform[:, 0] * 0 + gam.decomposition.fixed_transform[0, 0])
        )
        # value of the constant basis column: all entries of column 0 are equal
        coef[0] += level / const_val
    return coef


def gam_document(gam: GamFit, level: float = 0.0) -> dict:
    names = list(gam.covariate_names)
    ses = gam.se
    return {
        "coefficients": [
            {"name": names[j], "estimate": float(gam.beta[j]), "se": float(ses[j])}
            for j in range(len(names))
        ],
        "smoothing": {"log_lambda": float(gam.log_lambda), "edf": float(gam.edf),
                      "edf_total": float(gam.edf_total),
                      "lambda_at_bound": bool(gam.lambda_at_bound)},
        "baseline": {
            "knots": [float(k) for k in gam.basis.knots],
            "degree": int(gam.basis.degree),
            "penalty_order": int(gam.basis.penalty_order),
            "upper": float(gam.basis.upper),
            "coef_fixed": [float(v) for v in _fold_level_into_fixed(gam, level)],
            "coef_random": [float(v) for v in gam.spline_random],
            "fixed_transform": gam.decomposition.fixed_transform.tolist(),
            "random_transform": gam.decomposition.random_transform.tolist(),
            "level_folded": float(level),
        },
        "convergence": {
            "iterations": int(gam.iterations),
            "deviance": float(gam.deviance),
            "reml": float(gam.reml_value),
            "converged": bool(gam.converged),
        },
    }


def frailty_document(fr: FrailtyFit) -> dict:
    method = fr.method if fr.method == "laplace" else f"agq:{fr.agq_nodes}"
    return {
        "sigma_u": float(fr.sigma_u),
        "alpha": None if fr.alpha is None else float(fr.alpha),
        "method": method,
        "boundary": bool(fr.boundary),
        "loglik": float(fr.marginal_loglik),
    }


def backfit_document(result: BackfitResult) -> dict:
    doc = gam_document(result.gam, level=result.frailty.alpha or 0.0)
    doc["frailty"] = frailty_document(result.frailty)
    doc["backfit"] = {
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "dampened": bool(result.dampened),
        "deviance_trace": [float(v) for v in result.deviance_trace],
    }
    return doc


def cox_document(fit: CoxFit, covariate_names) -> dict:
    return {
        "coefficients": [
            {"name": n, "estimate": float(b), "se": float(s)}
            for n, b, s in zip(covariate_names, fit.beta, fit.se)
        ],
        "loglik": float(fit.loglik),
        "baseline": [
            {"time": float(t), "increment": float(h)}
            for t, h in zip(fit.baseline_times, fit.baseline_increments)
        ],
        "iterations": int(fit.iterations),
    }
