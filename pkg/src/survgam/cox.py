"""Reference fitters used as ground truth: Cox partial likelihood (Breslow
ties), the Breslow baseline estimator, and the equivalent unpenalized Poisson
regression on the event-time partition.

These are oracle-scale implementations: risk-set sums are computed by suffix
scans over time-sorted copies of the data, O(N log N + N p) per Newton step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataValidationError, FitError
from .quadrature import RiskSetPartition, partition_at_events

_BETA_DIVERGED = 50.0
_MAX_ROWS = 10_000_000


@dataclass(frozen=True)
class CoxFit:
    beta: np.ndarray
    se: np.ndarray
    loglik: float
    baseline_times: np.ndarray  # distinct event times t_k
    baseline_increments: np.ndarray  # cumulative-hazard jumps d_k / sum_{R_k} exp(X beta)
    iterations: int

    def cumulative_hazard(self, t: float) -> float:
        return float(self.baseline_increments[self.baseline_times <= t].sum())


class _RiskScan:
    """Suffix-sum machinery for risk-set aggregates with delayed entry.

    For any boundary t: sum over the risk set {entry < t <= time} of a
    per-subject quantity v equals suffix_by_time(v, t) - suffix_by_entry(v, t),
    because entry >= t implies time > t (times are strictly after entries).
    """

    def __init__(self, d: Dataset, boundaries: np.ndarray):
        self.time_order = np.argsort(d.time, kind="stable")
        self.entry_order = np.argsort(d.entry, kind="stable")
        self.sorted_time = d.time[self.time_order]
        self.sorted_entry = d.entry[self.entry_order]
        self.t_idx = np.searchsorted(self.sorted_time, boundaries, side="left")
        self.e_idx = np.searchsorted(self.sorted_entry, boundaries, side="left")

    def risk_sums(self, values: np.ndarray) -> np.ndarray:
        """Per-boundary risk-set sums; values has shape (N,) or (N, ...)."""
        by_time = np.concatenate(
            [np.cumsum(values[self.time_order][::-1], axis=0)[::-1], np.zeros((1, *values.shape[1:]))]
        )
        by_entry = np.concatenate(
            [np.cumsum(values[self.entry_order][::-1], axis=0)[::-1], np.zeros((1, *values.shape[1:]))]
        )
        return by_time[self.t_idx] - by_entry[self.e_idx]


def _death_sums(d: Dataset, boundaries: np.ndarray):
    """Per-boundary event counts and covariate sums over the death sets."""
    is_event = d.event == 1
    k_of_event = np.searchsorted(boundaries, d.time[is_event])
    d_k = np.bincount(k_of_event, minlength=boundaries.size).astype(float)
    x_events = d.covariates[is_event]
    x_sum = np.zeros((boundaries.size, d.n_covariates))
    np.add.at(x_sum, k_of_event, x_events)
    return d_k, x_sum


def cox_partial_fit(d: Dataset, max_iter: int = 50, tol: float = 1e-8) -> CoxFit:
    """Newton-Raphson on the Cox partial likelihood with Breslow tie handling.

    Supports delayed entry through risk-set membership.  Raises on constant
    covariates (not identifiable) and on monotone likelihood (separation).
    """
    if d.n_events == 0:
        raise DataValidationError("no events: cannot fit")
    for j, name in enumerate(d.covariate_names):
        if np.ptp(d.covariates[:, j]) == 0.0:
            raise DataValidationError(f"covariate {name!r} is constant; remove it before fitting")

    boundaries = np.unique(d.time[d.event == 1])
    scan = _RiskScan(d, boundaries)
    d_k, x_death_sum = _death_sums(d, boundaries)
    x = d.covariates
    p = d.n_covariates

    def loglik_parts(beta):
        w = np.exp(x @ beta)
        s0 = scan.risk_sums(w[:, None])[:, 0]
        if np.any(s0 <= 0):
            raise FitError("empty risk set at an event time")
        ll = float(np.sum(x_death_sum @ beta) - np.sum(d_k * np.log(s0)))
        return ll, w, s0

    beta = np.zeros(p)
    ll, w, s0 = loglik_parts(beta)
    iterations = 0
    step_norm = np.inf
    for iterations in range(1, max_iter + 1):
        s1 = scan.risk_sums(w[:, None] * x)  # (K, p)
        s2 = scan.risk_sums(w[:, None, None] * (x[:, :, None] * x[:, None, :]))  # (K, p, p)
        xbar = s1 / s0[:, None]
        score = np.sum(x_death_sum - d_k[:, None] * xbar, axis=0)
        info = np.einsum("k,kij->ij", d_k, s2 / s0[:, None, None]) - np.einsum(
            "k,ki,kj->ij", d_k, xbar, xbar
        )
        # a vanishing score with O(1) Newton steps is the signature of a
        # monotone likelihood, not of an optimum
        if np.max(np.abs(score)) < tol and step_norm < 1e-6:
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise FitError("singular partial-likelihood information matrix") from None
        # step halving on the partial log-likelihood
        for half in range(31):
            cand = beta + step / 2**half
            cand_ll, cand_w, cand_s0 = loglik_parts(cand)
            if np.isfinite(cand_ll) and cand_ll >= ll - 1e-12:
                step_norm = np.max(np.abs(step / 2**half))
                beta, ll, w, s0 = cand, cand_ll, cand_w, cand_s0
                break
        else:
            raise FitError("partial-likelihood step halving failed to improve")
        if np.max(np.abs(beta)) > _BETA_DIVERGED:
            raise FitError("separation: a coefficient diverged (monotone partial likelihood)")
    else:
        if np.max(np.abs(beta)) > 15.0:
            raise FitError("separation: a coefficient diverged (monotone partial likelihood)")
        raise FitError(f"Cox fit did not converge in {max_iter} iterations", best=beta)

    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise FitError("singular partial-likelihood information matrix") from None
    se = np.sqrt(np.diag(cov))
    increments = d_k / s0
    return CoxFit(
        beta=beta,
        se=se,
        loglik=ll,
        baseline_times=boundaries,
        baseline_increments=increments,
        iterations=iterations,
    )


def breslow_baseline(d: Dataset, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative-hazard increments d_k / sum_{R_k} exp(X beta) at event times."""
    beta = np.asarray(beta, dtype=float)
    boundaries = np.unique(d.time[d.event == 1])
    scan = _RiskScan(d, boundaries)
    w = np.exp(d.covariates @ beta)
    s0 = scan.risk_sums(w[:, None])[:, 0]
    if np.any(s0 <= 0):
        raise FitError("empty risk set at an event time")
    d_k, _ = _death_sums(d, boundaries)
    return boundaries, d_k / s0


@dataclass(frozen=True)
class SemiparametricFit:
    """Joint Poisson MLE on the event-time partition."""

    beta: np.ndarray
    interval_log_hazard: np.ndarray  # log average hazard per interval
    baseline_times: np.ndarray
    baseline_increments: np.ndarray  # exp(log hazard) * interval length
    deviance: float
    iterations: int


def poisson_semiparametric_fit(
    d: Dataset,
    partition: RiskSetPartition | None = None,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> SemiparametricFit:
    """Unpenalized Poisson GLM over (subject, event-interval) exposure rows.

    Linear predictor is X beta + log-hazard of the interval, with the interval
    length as offset.  The interval block of the Newton system is diagonal and
    eliminated by a Schur complement, so the dense solve stays p x p.
    """
    part = partition if partition is not None else partition_at_events(d)
    subj, interval = np.nonzero(part.at_risk)
    if subj.size > _MAX_ROWS:
        raise FitError(
            f"event-time expansion needs {subj.size} rows (> {_MAX_ROWS}); use the quadrature engine"
        )
    k_count = part.n_intervals
    x = d.covariates[subj]
    offset = np.log(part.interval_lengths)[interval]
    y = (
        (d.time[subj] == part.boundaries[interval]) & (d.event[subj] == 1)
    ).astype(float)

    p = d.n_covariates
    beta = np.zeros(p)
    # occurrence/exposure start for the interval hazards
    exposure = np.bincount(interval, weights=np.exp(offset), minlength=k_count)
    log_h = np.log(part.death_counts / exposure)

    def deviance(mu):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(y > 0, y * np.log(y / mu), 0.0)
        return 2.0 * float(np.sum(term - (y - mu)))

    eta = x @ beta + log_h[interval] + offset
    mu = np.exp(eta)
    dev = deviance(mu)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        resid = y - mu
        score_beta = x.T @ resid
        score_h = np.bincount(interval, weights=resid, minlength=k_count)
        if max(np.max(np.abs(score_beta), initial=0.0), np.max(np.abs(score_h))) < tol:
            break
        wx = mu[:, None] * x
        h_bb = x.T @ wx  # (p, p)
        h_bh = np.zeros((p, k_count))
        for j in range(p):
            h_bh[j] = np.bincount(interval, weights=wx[:, j], minlength=k_count)
        h_hh = np.bincount(interval, weights=mu, minlength=k_count)
        # Schur complement eliminating the diagonal interval block
        inv_hh = 1.0 / h_hh
        core = h_bb - (h_bh * inv_hh[None, :]) @ h_bh.T
        rhs = score_beta - h_bh @ (inv_hh * score_h)
        try:
            step_beta = np.linalg.solve(core, rhs)
        except np.linalg.LinAlgError:
            raise FitError("singular information in the event-partition Poisson fit") from None
        step_h = inv_hh * (score_h - h_bh.T @ step_beta)
        for half in range(31):
            scale = 1.0 / 2**half
            cand_beta = beta + scale * step_beta
            cand_h = log_h + scale * step_h
            cand_mu = np.exp(x @ cand_beta + cand_h[interval] + offset)
            cand_dev = deviance(cand_mu)
            if np.isfinite(cand_dev) and cand_dev <= dev + 1e-12:
                beta, log_h, mu, dev = cand_beta, cand_h, cand_mu, cand_dev
                break
        else:
            raise FitError("Poisson step halving failed to improve")
        if np.max(np.abs(beta)) > _BETA_DIVERGED:
            raise FitError("separation: a coefficient diverged in the Poisson fit")
    else:
        raise FitError(f"event-partition Poisson fit did not converge in {max_iter} iterations")

    increments = np.exp(log_h) * part.interval_lengths
    return SemiparametricFit(
        beta=beta,
        interval_log_hazard=log_h,
        baseline_times=part.boundaries,
        baseline_increments=increments,
        deviance=dev,
        iterations=iterations,
    )
