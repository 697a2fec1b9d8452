"""Gauss-Lobatto rules and the two dataset expansions used for fitting.

The smooth engines integrate each subject's cumulative hazard with a fixed
Gauss-Lobatto rule mapped onto (entry, time]; because both endpoints are
nodes, the observed time itself carries the event indicator and every other
node is an artificial Poisson zero.  The semiparametric oracle instead
partitions follow-up at the distinct event times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataValidationError

_NEWTON_TOL = 1e-14


@dataclass(frozen=True)
class LobattoRule:
    """Nodes and weights of the n-point Gauss-Lobatto-Legendre rule on [-1, 1].

    Exact for polynomials of degree <= 2n - 3; weights sum to 2.
    """

    n: int
    nodes: np.ndarray
    weights: np.ndarray


def _legendre(x: np.ndarray, m: int) -> np.ndarray:
    """P_m(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, m):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
    return p


def _legendre_and_derivative(x: np.ndarray, m: int):
    """P_m(x) and P'_m(x); requires |x| < 1 strictly."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, m):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
    # derivative identity: (1 - x^2) P'_m = m (P_{m-1} - x P_m)
    dp = m * (p_prev - x * p) / (1.0 - x * x)
    return p, dp


def lobatto_rule(n: int) -> LobattoRule:
    """Classical Gauss-Lobatto-Legendre rule with n nodes, n in [2, 64].

    Interior nodes are the roots of P'_{n-1}, found by Newton iteration from
    the Chebyshev-Gauss-Lobatto initial guess; weights are
    2 / (n (n-1) P_{n-1}(x)^2).  Deterministic for any n, no tables.
    """
    if not 2 <= n <= 64:
        raise ValueError(f"node count must be in [2, 64], got {n}")
    if n == 2:
        return LobattoRule(2, np.array([-1.0, 1.0]), np.array([1.0, 1.0]))

    m = n - 1
    # interior initial guess, strictly inside (-1, 1)
    x = -np.cos(np.pi * np.arange(1, m) / m)
    for _ in range(100):
        # roots of P'_m: Newton step dx = P'_m / P''_m, with
        # P''_m from the Legendre ODE (1-x^2) P'' = 2x P' - m(m+1) P
        p, dp = _legendre_and_derivative(x, m)
        d2p = (2.0 * x * dp - m * (m + 1) * p) / (1.0 - x * x)
        dx = dp / d2p
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    nodes = np.concatenate(([-1.0], x, [1.0]))
    weights = 2.0 / (n * m * _legendre(nodes, m) ** 2)
    # force exact symmetry so downstream sums are bit-stable
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return LobattoRule(n, nodes, weights)


@dataclass(frozen=True)
class ExpandedDataset:
    """Poisson pseudo-observations at quadrature nodes, n rows per subject.

    ``log_weight`` holds log((T-E)/2 * w_j), the offset that turns the
    integrated hazard into a weighted sum of hazard values; exp(log_weight)
    sums to the subject's follow-up length.  ``y`` is zero everywhere except
    the final node, which carries the event indicator.
    """

    subject: np.ndarray  # int, row -> subject index
    node_time: np.ndarray
    y: np.ndarray
    log_weight: np.ndarray
    n_subjects: int
    nodes_per_subject: int

    @property
    def n_rows(self) -> int:
        return self.subject.shape[0]


def expand(d: Dataset, n: int) -> ExpandedDataset:
    """Expand each record into n pseudo-observations at mapped Lobatto nodes."""
    rule = lobatto_rule(n)
    if np.any(d.time == d.entry):
        i = int(np.nonzero(d.time == d.entry)[0][0])
        raise DataValidationError(f"subject {d.subject_ids[i]!r}: zero-length observation interval")

    half = 0.5 * (d.time - d.entry)  # (N,)
    mid = 0.5 * (d.time + d.entry)
    node_time = mid[:, None] + half[:, None] * rule.nodes[None, :]
    node_time[:, 0] = d.entry  # exact endpoints, no round-off drift
    node_time[:, -1] = d.time
    log_weight = np.log(half)[:, None] + np.log(rule.weights)[None, :]
    y = np.zeros((d.n_subjects, n))
    y[:, -1] = d.event

    subject = np.repeat(np.arange(d.n_subjects), n)
    return ExpandedDataset(
        subject=subject,
        node_time=node_time.ravel(),
        y=y.ravel(),
        log_weight=log_weight.ravel(),
        n_subjects=d.n_subjects,
        nodes_per_subject=n,
    )


@dataclass(frozen=True)
class RiskSetPartition:
    """Follow-up split at the distinct event times.

    Interval k is (boundaries[k-1], boundaries[k]] with boundaries[-1] := 0
    implied; a subject is at risk in interval k iff it is in the risk set at
    the event time closing the interval (entry < t_k <= time).  Exposure past
    the last event time is dropped: the interval hazard there maximizes at
    zero and carries no information about anything else.
    """

    boundaries: np.ndarray  # (K,) distinct event times, increasing
    death_counts: np.ndarray  # (K,) d_k >= 1
    interval_lengths: np.ndarray  # (K,) delta t_k
    at_risk: np.ndarray  # (N, K) bool membership I_{i,k}
    terminal_interval: np.ndarray  # (N,) last at-risk interval index, -1 if none

    @property
    def n_intervals(self) -> int:
        return self.boundaries.shape[0]


def partition_at_events(d: Dataset) -> RiskSetPartition:
    """Build the event-time partition with risk-set membership per interval."""
    if d.n_events == 0:
        raise DataValidationError("no events: cannot partition at event times")
    boundaries = np.unique(d.time[d.event == 1])
    death_counts = np.array(
        [int(np.sum((d.time == t) & (d.event == 1))) for t in boundaries]
    )
    lengths = np.diff(np.concatenate(([0.0], boundaries)))
    # at risk at the closing time t_k: entry < t_k <= time
    at_risk = (d.entry[:, None] < boundaries[None, :]) & (d.time[:, None] >= boundaries[None, :])
    any_risk = at_risk.any(axis=1)
    terminal = np.where(
        any_risk,
        at_risk.shape[1] - 1 - np.argmax(at_risk[:, ::-1], axis=1),
        -1,
    )
    return RiskSetPartition(
        boundaries=boundaries,
        death_counts=death_counts,
        interval_lengths=lengths,
        at_risk=at_risk,
        terminal_interval=terminal,
    )


def save_expanded(e: ExpandedDataset, path) -> None:
    """Dump expanded rows as CSV ``subject,t,y,log_weight`` (debugging aid)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "t", "y", "log_weight"])
        for s, t, y, lw in zip(e.subject, e.node_time, e.y, e.log_weight):
            writer.writerow([int(s), repr(float(t)), int(y), repr(float(lw))])
