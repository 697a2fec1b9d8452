"""Penalized Poisson regression on the expanded dataset.

The working model is log mu = X beta + F gamma_F + R gamma_R + offset with an
identity penalty lambda * ||gamma_R||^2 from the basis reparameterization.
Coefficients are found by penalized iteratively reweighted least squares
(Newton with step halving on the penalized deviance); the smoothing parameter
maximizes a Laplace-approximate restricted likelihood.  A one-stage variant
adds one random intercept per subject and eliminates that diagonal block by a
Schur complement so the dense solve never grows with the number of subjects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import gammaln

from ._optim import maximize_scalar
from .basis import PenaltyDecomposition, SplineBasis, evaluate_basis
from .errors import FitError
from .quadrature import ExpandedDataset

LOG2PI = math.log(2.0 * math.pi)


@dataclass
class GamConfig:
    basis_dim: int = 10
    penalty_order: int = 2
    max_pirls_iter: int = 200
    pirls_rtol: float = 1e-8
    outer_budget: int = 100
    log_lambda_bounds: tuple[float, float] = (-15.0, 20.0)
    fixed_log_lambda: float | None = None
    # one-stage settings
    sigma_bounds: tuple[float, float] = (1e-4, 50.0)
    sigma_init: float = 0.5
    max_subjects_one_stage: int = 50_000


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return 2.0 * float(np.sum(term - (y - mu)))


def poisson_loglik(y: np.ndarray, eta: np.ndarray, mu: np.ndarray) -> float:
    return float(np.sum(y * eta - mu) - np.sum(gammaln(y + 1.0)))


@dataclass
class WorkingState:
    """Converged PIRLS state: coefficients, curvature, and fit diagnostics."""

    coefficients: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    deviance: float
    penalized_deviance: float
    loglik: float
    penalized_info: np.ndarray  # A' W A + penalty at the final iterate
    iterations: int
    converged: bool
    deviance_trace: list[float] = field(default_factory=list)


def _name_null_direction(penalized_info: np.ndarray, names: list[str] | None) -> str:
    evals, evecs = np.linalg.eigh(penalized_info)
    v = np.abs(evecs[:, 0])
    loaded = np.nonzero(v >= 0.5 * v.max())[0]
    labels = ", ".join(
        names[j] if names and j < len(names) else f"column {j}" for j in loaded
    )
    return f"rank-deficient penalized information; null direction loads on {labels}"


def pirls(
    design: np.ndarray,
    y: np.ndarray,
    offset: np.ndarray,
    penalty: np.ndarray,
    init: np.ndarray | None = None,
    names: list[str] | None = None,
    rtol: float = 1e-8,
    max_iter: int = 200,
) -> WorkingState:
    """Newton iteration for the penalized Poisson log-likelihood.

    Accepts any positive semidefinite penalty matrix on the coefficient
    vector.  Step halving enforces descent of the penalized deviance; the loop
    stops when its relative change drops below ``rtol``.
    """
    n, m = design.shape
    theta = np.zeros(m) if init is None else np.asarray(init, dtype=float).copy()
    eta = design @ theta + offset
    mu = np.exp(eta)
    pen_dev = poisson_deviance(y, mu) + float(theta @ penalty @ theta)
    if not np.isfinite(pen_dev):
        theta = np.zeros(m)
        eta = design @ theta + offset
        mu = np.exp(eta)
        pen_dev = poisson_deviance(y, mu) + 0.0
    trace = [pen_dev]

    info = None
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        score = design.T @ (y - mu) - penalty @ theta
        info = design.T @ (mu[:, None] * design) + penalty
        try:
            cho = sla.cho_factor(info, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise FitError(_name_null_direction(info, names)) from None
        # a pivot collapsing relative to its own column signals rank deficiency
        pivots = np.diag(cho[0]) ** 2
        if np.any(pivots < 1e-12 * np.abs(np.diag(info))):
            raise FitError(_name_null_direction(info, names))
        step = sla.cho_solve(cho, score, check_finite=False)

        accepted = False
        for half in range(31):
            cand = theta + step / 2.0**half
            cand_eta = design @ cand + offset
            cand_mu = np.exp(cand_eta)
            cand_pen = poisson_deviance(y, cand_mu) + float(cand @ penalty @ cand)
            if np.isfinite(cand_pen) and cand_pen <= pen_dev + 1e-12:
                theta, eta, mu = cand, cand_eta, cand_mu
                delta = pen_dev - cand_pen
                pen_dev = cand_pen
                accepted = True
                break
        if not accepted:
            raise FitError("PIRLS diverged: no finite descent step after 30 halvings")
        trace.append(pen_dev)
        if delta <= rtol * (abs(pen_dev) + 0.1):
            converged = True
            break

    # curvature at the accepted iterate, for the restricted-likelihood terms
    info = design.T @ (mu[:, None] * design) + penalty
    dev = poisson_deviance(y, mu)
    return WorkingState(
        coefficients=theta,
        eta=eta,
        mu=mu,
        deviance=dev,
        penalized_deviance=pen_dev,
        loglik=poisson_loglik(y, eta, mu),
        penalized_info=info,
        iterations=iterations,
        converged=converged,
        deviance_trace=trace,
    )


def reml_criterion(state: WorkingState, d_random: int, log_lambda: float) -> float:
    """Laplace-approximate restricted log-likelihood at a converged state.

    The penalized block carries an identity penalty scaled by lambda, so its
    pseudo-determinant is d_random * log(lambda); null-space directions are
    excluded.  The 2*pi constant uses the full coefficient dimension (the
    convention cancels when comparing values at different lambda).
    """
    pen_quad = state.penalized_deviance - state.deviance  # theta' P theta
    sign, logdet = np.linalg.slogdet(state.penalized_info)
    if sign <= 0:
        raise FitError("penalized information is not positive definite")
    m = state.coefficients.shape[0]
    return (
        state.loglik
        - 0.5 * pen_quad
        + 0.5 * d_random * log_lambda
        - 0.5 * logdet
        + 0.5 * m * LOG2PI
    )


@dataclass(frozen=True)
class GamFit:
    """Fitted smooth hazard model: covariate effects plus the time smoother."""

    beta: np.ndarray
    spline_fixed: np.ndarray
    spline_random: np.ndarray
    log_lambda: float
    covariance: np.ndarray  # inverse penalized information, core coefficients
    deviance: float
    reml_value: float
    edf: float  # effective degrees of freedom of the time smooth
    edf_total: float
    converged: bool
    iterations: int
    covariate_names: tuple[str, ...]
    basis: SplineBasis
    decomposition: PenaltyDecomposition
    lambda_at_bound: bool = False
    outer_evals: int = 0

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def baseline_log_hazard(self, t: np.ndarray) -> np.ndarray:
        f_blk, r_blk = evaluate_basis(self.basis, self.decomposition, t)
        return f_blk @ self.spline_fixed + r_blk @ self.spline_random

    def baseline_log_hazard_se(self, t: np.ndarray) -> np.ndarray:
        f_blk, r_blk = evaluate_basis(self.basis, self.decomposition, t)
        p = len(self.beta)
        rows = np.hstack([np.zeros((len(t), p)), f_blk, r_blk])
        return np.sqrt(np.einsum("ij,jk,ik->i", rows, self.covariance, rows))

    def linear_predictor(self, t: np.ndarray, covariates: np.ndarray) -> np.ndarray:
        return self.baseline_log_hazard(t) + np.atleast_2d(covariates) @ self.beta


class GamDesign:
    """Row-level design for the expanded dataset: covariates then spline blocks."""

    def __init__(
        self,
        expanded: ExpandedDataset,
        sb: SplineBasis,
        decomp: PenaltyDecomposition,
        covariates: np.ndarray | None,
        covariate_names: tuple[str, ...] = (),
    ):
        self.expanded = expanded
        self.basis = sb
        self.decomp = decomp
        f_blk, r_blk = evaluate_basis(sb, decomp, expanded.node_time)
        if covariates is None or covariates.size == 0:
            self.p = 0
            blocks = [f_blk, r_blk]
        else:
            covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
            self.p = covariates.shape[1]
            blocks = [covariates[expanded.subject], f_blk, r_blk]
        self.matrix = np.hstack(blocks)
        self.d_fixed = decomp.d_fixed
        self.d_random = decomp.d_random
        self.names = list(covariate_names) + [
            f"time_spline_fixed[{i}]" for i in range(self.d_fixed)
        ] + [f"time_spline_random[{i}]" for i in range(self.d_random)]
        self.y = expanded.y
        self.n_coef = self.matrix.shape[1]

    def penalty(self, lam: float) -> np.ndarray:
        pen = np.zeros((self.n_coef, self.n_coef))
        idx = np.arange(self.p + self.d_fixed, self.n_coef)
        pen[idx, idx] = lam
        return pen

    def smooth_slice(self) -> slice:
        return slice(self.p, self.n_coef)

    def initial_coefficients(self, offset: np.ndarray) -> np.ndarray:
        """Start values: zero covariate effects, spline from binned event rates."""
        e = self.expanded
        n_bins = min(4 * self.basis.dim, max(self.basis.dim, e.n_rows // 20 + 1))
        edges = np.quantile(e.node_time, np.linspace(0, 1, n_bins + 1))
        edges = np.unique(edges)
        if edges.size < 3:
            rate = max(float(e.y.sum()) / max(float(np.exp(offset).sum()), 1e-300), 1e-8)
            theta = np.zeros(self.n_coef)
            const_col = self.matrix[0, self.p]
            if const_col != 0:
                theta[self.p] = math.log(rate) / const_col
            return theta
        which = np.clip(np.searchsorted(edges, e.node_time, side="right") - 1, 0, edges.size - 2)
        occ = np.bincount(which, weights=e.y, minlength=edges.size - 1)
        exp_w = np.bincount(which, weights=np.exp(offset), minlength=edges.size - 1)
        keep = exp_w > 0
        rates = np.log(np.maximum(occ[keep] / exp_w[keep], 1e-8))
        mids = 0.5 * (edges[:-1] + edges[1:])[keep]
        f_blk, r_blk = evaluate_basis(self.basis, self.decomp, mids)
        design = np.hstack([f_blk, r_blk])
        ridge = 1e-6 * np.eye(design.shape[1])
        ridge[: self.d_fixed, : self.d_fixed] = 0.0
        coef = np.linalg.solve(design.T @ design + ridge + 1e-10 * np.eye(design.shape[1]),
                               design.T @ rates)
        theta = np.zeros(self.n_coef)
        theta[self.p :] = coef
        return theta


def _edf_parts(state: WorkingState, penalty: np.ndarray, smooth: slice) -> tuple[float, float]:
    """Per-fit effective degrees of freedom: total and smooth-restricted.

    edf_j = diag(V^{-1} A'WA)_j = 1 - diag(V^{-1} P)_j.
    """
    v_inv = np.linalg.inv(state.penalized_info)
    edf_vec = 1.0 - np.einsum("ij,ji->i", v_inv, penalty)
    return float(edf_vec[smooth].sum()), float(edf_vec.sum())


def optimize_smoothing(
    expanded: ExpandedDataset,
    sb: SplineBasis,
    decomp: PenaltyDecomposition,
    covariates: np.ndarray | None,
    config: GamConfig | None = None,
    covariate_names: tuple[str, ...] = (),
    extra_offset: np.ndarray | None = None,
) -> GamFit:
    """Fit the smooth hazard model, choosing lambda by restricted likelihood.

    ``extra_offset`` is an additional per-row offset (frozen frailty values in
    the two-stage loop); the quadrature log-weights are always included.
    """
    cfg = config or GamConfig()
    design = GamDesign(expanded, sb, decomp, covariates, covariate_names)
    offset = expanded.log_weight if extra_offset is None else expanded.log_weight + extra_offset

    warm = {"theta": design.initial_coefficients(offset)}
    total_iters = [0]

    def fit_at(log_lam: float) -> WorkingState:
        state = pirls(
            design.matrix,
            design.y,
            offset,
            design.penalty(math.exp(log_lam)),
            init=warm["theta"],
            names=design.names,
            rtol=cfg.pirls_rtol,
            max_iter=cfg.max_pirls_iter,
        )
        warm["theta"] = state.coefficients
        total_iters[0] += state.iterations
        return state

    if cfg.fixed_log_lambda is not None:
        log_lam = float(cfg.fixed_log_lambda)
        state = fit_at(log_lam)
        at_bound = False
        n_evals = 1
    else:
        cache: dict[float, WorkingState] = {}

        def objective(log_lam: float) -> float:
            state = fit_at(log_lam)
            cache[log_lam] = state
            return reml_criterion(state, design.d_random, log_lam)

        lo, hi = cfg.log_lambda_bounds
        res = maximize_scalar(
            objective,
            lo,
            hi,
            width_tol=1e-5,
            budget=cfg.outer_budget,
            polish=True,
            polish_step=1e-3,
            grad_tol=1e-5,
            what="smoothing-parameter search",
        )
        log_lam = res.x
        state = cache[log_lam]
        at_bound = res.at_lower or res.at_upper
        n_evals = res.n_evals

    penalty = design.penalty(math.exp(log_lam))
    reml_value = reml_criterion(state, design.d_random, log_lam)
    try:
        covariance = np.linalg.inv(state.penalized_info)
    except np.linalg.LinAlgError:
        raise FitError(_name_null_direction(state.penalized_info, design.names)) from None
    edf_smooth, edf_total = _edf_parts(state, penalty, design.smooth_slice())

    p, d_f = design.p, design.d_fixed
    theta = state.coefficients
    return GamFit(
        beta=theta[:p],
        spline_fixed=theta[p : p + d_f],
        spline_random=theta[p + d_f :],
        log_lambda=log_lam,
        covariance=covariance,
        deviance=state.deviance,
        reml_value=reml_value,
        edf=edf_smooth,
        edf_total=edf_total,
        converged=state.converged,
        iterations=total_iters[0],
        covariate_names=tuple(covariate_names),
        basis=sb,
        decomposition=decomp,
        lambda_at_bound=at_bound,
        outer_evals=n_evals,
    )


def standard_errors(fit: GamFit, time_grid: np.ndarray | None = None):
    """Covariate-coefficient standard errors plus pointwise log-hazard bands."""
    p = len(fit.beta)
    beta_se = fit.se[:p]
    if time_grid is None:
        time_grid = np.linspace(0.0, fit.basis.upper, 101)
    return beta_se, time_grid, fit.baseline_log_hazard_se(time_grid)


# ---------------------------------------------------------------------------
# one-stage joint fit with a per-subject random intercept
# ---------------------------------------------------------------------------


@dataclass
class _FrailtyPirlsState:
    theta: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    deviance: float
    penalized_deviance: float
    loglik: float
    logdet_v: float
    core_schur: np.ndarray  # C - B D^-1 B', core-coefficient information
    iterations: int
    converged: bool


def _pirls_with_frailty(
    design: GamDesign,
    offset: np.ndarray,
    lam: float,
    sigma: float,
    init_theta: np.ndarray,
    init_b: np.ndarray,
    rtol: float,
    max_iter: int,
) -> _FrailtyPirlsState:
    """PIRLS on (core coefficients, subject intercepts) via block elimination.

    The subject block of the Newton system is diagonal; it is eliminated with
    a Schur complement so memory stays O(m^2 + m N) and the dense factorization
    is m x m.
    """
    a_mat = design.matrix
    subj = design.expanded.subject
    n_subjects = design.expanded.n_subjects
    y = design.y
    m = design.n_coef
    prec_b = 1.0 / (sigma * sigma)
    pen_core = design.penalty(lam)

    theta = init_theta.copy()
    b = init_b.copy()

    def predict(th, bb):
        eta = a_mat @ th + bb[subj] + offset
        mu = np.exp(eta)
        pen = poisson_deviance(y, mu) + float(th @ pen_core @ th) + prec_b * float(bb @ bb)
        return eta, mu, pen

    eta, mu, pen_dev = predict(theta, b)
    if not np.isfinite(pen_dev):
        theta = np.zeros(m)
        b = np.zeros(n_subjects)
        eta, mu, pen_dev = predict(theta, b)

    converged = False
    core_schur = None
    d_diag = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        resid = y - mu
        score_core = a_mat.T @ resid - pen_core @ theta
        score_b = np.bincount(subj, weights=resid, minlength=n_subjects) - prec_b * b

        wa = mu[:, None] * a_mat
        c_mat = a_mat.T @ wa + pen_core
        b_mat = np.empty((m, n_subjects))
        for j in range(m):
            b_mat[j] = np.bincount(subj, weights=wa[:, j], minlength=n_subjects)
        d_diag = np.bincount(subj, weights=mu, minlength=n_subjects) + prec_b

        b_over_d = b_mat / d_diag[None, :]
        core_schur = c_mat - b_over_d @ b_mat.T
        rhs = score_core - b_mat @ (score_b / d_diag)
        try:
            cho = sla.cho_factor(core_schur, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise FitError(_name_null_direction(core_schur, design.names)) from None
        step_core = sla.cho_solve(cho, rhs, check_finite=False)
        step_b = (score_b - b_mat.T @ step_core) / d_diag

        accepted = False
        for half in range(31):
            scale = 1.0 / 2.0**half
            cand_t = theta + scale * step_core
            cand_b = b + scale * step_b
            cand_eta, cand_mu, cand_pen = predict(cand_t, cand_b)
            if np.isfinite(cand_pen) and cand_pen <= pen_dev + 1e-12:
                delta = pen_dev - cand_pen
                theta, b, eta, mu, pen_dev = cand_t, cand_b, cand_eta, cand_mu, cand_pen
                accepted = True
                break
        if not accepted:
            raise FitError("one-stage PIRLS diverged: no finite descent step after 30 halvings")
        if delta <= rtol * (abs(pen_dev) + 0.1):
            converged = True
            break

    # refresh curvature at the accepted iterate
    wa = mu[:, None] * a_mat
    c_mat = a_mat.T @ wa + pen_core
    b_mat = np.empty((m, n_subjects))
    for j in range(m):
        b_mat[j] = np.bincount(subj, weights=wa[:, j], minlength=n_subjects)
    d_diag = np.bincount(subj, weights=mu, minlength=n_subjects) + prec_b
    core_schur = c_mat - (b_mat / d_diag[None, :]) @ b_mat.T
    sign, logdet_core = np.linalg.slogdet(core_schur)
    if sign <= 0:
        raise FitError("one-stage penalized information is not positive definite")
    logdet_v = float(np.sum(np.log(d_diag)) + logdet_core)

    dev = poisson_deviance(y, mu)
    return _FrailtyPirlsState(
        theta=theta,
        b=b,
        mu=mu,
        deviance=dev,
        penalized_deviance=pen_dev,
        loglik=poisson_loglik(y, a_mat @ theta + b[subj] + offset, mu),
        logdet_v=logdet_v,
        core_schur=core_schur,
        iterations=iterations,
        converged=converged,
    )


def one_stage_reml(state: _FrailtyPirlsState, design: GamDesign, log_lam: float, log_sigma: float) -> float:
    """Restricted likelihood for the joint (smooth, frailty) model."""
    n_subjects = design.expanded.n_subjects
    pen_quad = state.penalized_deviance - state.deviance
    m = design.n_coef
    log_pseudo_det = design.d_random * log_lam - 2.0 * n_subjects * log_sigma
    return (
        state.loglik
        - 0.5 * pen_quad
        + 0.5 * log_pseudo_det
        - 0.5 * state.logdet_v
        + 0.5 * (m + n_subjects) * LOG2PI
    )


def one_stage_fit(
    expanded: ExpandedDataset,
    sb: SplineBasis,
    decomp: PenaltyDecomposition,
    covariates: np.ndarray | None,
    config: GamConfig | None = None,
    covariate_names: tuple[str, ...] = (),
):
    """Joint restricted-likelihood fit of the smooth model and subject frailty.

    Optimizes (log lambda, log sigma_u) together by a deterministic
    Nelder-Mead over the 2-D criterion. Returns the smooth fit and the frailty
    component; sigma_u pinned at its lower bound sets the boundary flag rather
    than raising.
    """
    from .frailty import FrailtyFit  # local import to avoid a cycle

    cfg = config or GamConfig()
    if expanded.n_subjects > cfg.max_subjects_one_stage:
        raise FitError(
            f"one-stage fit guard: {expanded.n_subjects} subjects exceeds the "
            f"configured limit {cfg.max_subjects_one_stage}"
        )
    design = GamDesign(expanded, sb, decomp, covariates, covariate_names)
    offset = expanded.log_weight

    warm = {
        "theta": design.initial_coefficients(offset),
        "b": np.zeros(expanded.n_subjects),
    }
    states: dict[tuple[float, float], _FrailtyPirlsState] = {}
    total_iters = [0]

    sig_lo, sig_hi = cfg.sigma_bounds
    log_sig_lo, log_sig_hi = math.log(sig_lo), math.log(sig_hi)

    def fit_at(log_lam: float, log_sigma: float) -> _FrailtyPirlsState:
        key = (log_lam, log_sigma)
        if key not in states:
            state = _pirls_with_frailty(
                design,
                offset,
                math.exp(log_lam),
                math.exp(log_sigma),
                warm["theta"],
                warm["b"],
                cfg.pirls_rtol,
                cfg.max_pirls_iter,
            )
            warm["theta"], warm["b"] = state.theta, state.b
            total_iters[0] += state.iterations
            states[key] = state
        return states[key]

    lam_lo, lam_hi = cfg.log_lambda_bounds

    if log_sig_hi - log_sig_lo < 1e-12:
        # degenerate sigma bounds: only the smoothing parameter is free
        log_sigma_hat = log_sig_lo

        def objective_1d(log_lam: float) -> float:
            return one_stage_reml(fit_at(log_lam, log_sigma_hat), design, log_lam, log_sigma_hat)

        res = maximize_scalar(
            objective_1d, lam_lo, lam_hi, width_tol=1e-5,
            budget=cfg.outer_budget, what="one-stage smoothing search",
        )
        log_lam_hat = res.x
        n_evals = res.n_evals
    else:
        from scipy.optimize import minimize

        eval_count = [0]

        def neg_objective(z) -> float:
            log_lam = float(np.clip(z[0], lam_lo, lam_hi))
            log_sigma = float(np.clip(z[1], log_sig_lo, log_sig_hi))
            eval_count[0] += 1
            if eval_count[0] > 4 * cfg.outer_budget:
                raise FitError("one-stage outer optimization exceeded its budget")
            state = fit_at(log_lam, log_sigma)
            return -one_stage_reml(state, design, log_lam, log_sigma)

        start = np.array([0.0, math.log(cfg.sigma_init)])
        opt = minimize(
            neg_objective,
            start,
            method="Nelder-Mead",
            options={"xatol": 1e-4, "fatol": 1e-7, "maxiter": 2 * cfg.outer_budget},
        )
        log_lam_hat = float(np.clip(opt.x[0], lam_lo, lam_hi))
        log_sigma_hat = float(np.clip(opt.x[1], log_sig_lo, log_sig_hi))
        n_evals = eval_count[0]

    state = fit_at(log_lam_hat, log_sigma_hat)
    sigma_hat = math.exp(log_sigma_hat)
    boundary = log_sigma_hat <= log_sig_lo + 1e-3

    try:
        covariance = np.linalg.inv(state.core_schur)
    except np.linalg.LinAlgError:
        raise FitError("one-stage information not invertible at the optimum") from None
    penalty = design.penalty(math.exp(log_lam_hat))
    v_inv_pen = covariance @ penalty
    edf_vec = 1.0 - np.diag(v_inv_pen)
    smooth = design.smooth_slice()

    p, d_f = design.p, design.d_fixed
    theta = state.theta
    gam = GamFit(
        beta=theta[:p],
        spline_fixed=theta[p : p + d_f],
        spline_random=theta[p + d_f :],
        log_lambda=log_lam_hat,
        covariance=covariance,
        deviance=state.deviance,
        reml_value=one_stage_reml(state, design, log_lam_hat, log_sigma_hat),
        edf=float(edf_vec[smooth].sum()),
        edf_total=float(edf_vec.sum()),
        converged=state.converged,
        iterations=total_iters[0],
        covariate_names=tuple(covariate_names),
        basis=sb,
        decomposition=decomp,
        lambda_at_bound=log_lam_hat in (lam_lo, lam_hi),
        outer_evals=n_evals,
    )
    frailty = FrailtyFit(
        sigma_u=sigma_hat,
        modes=state.b,
        alpha=None,
        marginal_loglik=gam.reml_value,
        method="laplace",
        agq_nodes=1,
        converged=state.converged,
        boundary=boundary,
        outer_evals=n_evals,
    )
    return gam, frailty
