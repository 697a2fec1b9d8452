"""Benchmark harness: replay a design table over fitting methods, recording
wall time, peak resident memory, and estimator bias per run.

Timing brackets the whole pipeline including dataset expansion.  Peak memory
is the maximum resident set size observed by a 50 ms sampling thread during
the fit; it is recorded as absent (empty cell) when the platform offers no
reading, never as zero.  Output rows are flushed as they complete so an
interrupted sweep can resume by skipping finished (row, method, replicate)
keys.
"""

from __future__ import annotations

import csv
import hashlib
import threading
import time
from dataclasses import dataclass, fields

import numpy as np

from .backfit import BackfitConfig, two_stage_fit
from .basis import build_basis
from .cox import cox_partial_fit
from .errors import SurvgamError
from .gam import GamConfig, one_stage_fit
from .quadrature import expand
from .simulate import DesignPoint, SimulationConfig, simulate_dataset

METHODS = (
    "one-stage",
    "two-stage-laplace",
    "two-stage-agq3",
    "two-stage-agq9",
    "two-stage-agq15",
    "cox-oracle",
)

DESIGN_COLUMNS = ("N", "dim_beta", "f", "r", "S_Tmax", "q")

# benchmark hypercube: N x dim_beta x f x r x S_Tmax x q
HYPERCUBE = (
    (20_000.0, 40_000.0),
    (10.0, 80.0),
    (0.10, 0.90),
    (0.1, 1.0),
    (0.05, 0.95),
    (10.0, 20.0),
)


@dataclass
class Measurement:
    row: int
    N: int
    dim_beta: int
    f: float
    r: float
    S_Tmax: float
    q: float
    method: str
    replicate: int
    seed: int
    wall_time_s: float
    peak_mem_bytes: int | None
    sigma_f_true: float
    sigma_f_est: float | None
    mean_abs_rel_bias_beta: float
    converged: bool
    error: str = ""


def bias_metric(estimate: float, truth: float) -> float:
    """Absolute relative bias in percent: 100 * |1 - estimate/truth|."""
    if truth == 0:
        raise ValueError("undefined relative bias: true value is zero")
    return 100.0 * abs(1.0 - estimate / truth)


def stable_seed(*parts) -> int:
    """Platform-stable 63-bit seed from a tuple of design identifiers."""
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class PeakMemorySampler:
    """Background thread recording the maximum RSS at a fixed cadence."""

    def __init__(self, interval_s: float = 0.05):
        self.interval_s = interval_s
        self.peak: int | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        try:
            import psutil

            self._proc = psutil.Process()
        except Exception:
            self._proc = None

    def _sample(self):
        try:
            rss = self._proc.memory_info().rss
        except Exception:
            return
        if self.peak is None or rss > self.peak:
            self.peak = rss

    def _run(self):
        while not self._stop.wait(self.interval_s):
            self._sample()

    def __enter__(self):
        if self._proc is not None:
            self._sample()
            self._thread = threading.Thread(target=self._run, daemon=True)
            self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        if self._proc is not None:
            self._sample()
        return False


def _fit_two_stage(d, method: str):
    if method == "two-stage-laplace":
        cfg = BackfitConfig(frailty_method="laplace")
    else:
        nodes = int(method.rsplit("agq", 1)[1])
        cfg = BackfitConfig(frailty_method="agq", agq_nodes=nodes)
    res = two_stage_fit(d, cfg)
    return res.gam.beta, res.frailty.sigma_u, res.converged


def run_method(d, method: str):
    """Fit one dataset with one method; returns (beta, sigma_est, converged).

    Expansion happens inside so the caller's timing bracket includes it.
    """
    if method == "cox-oracle":
        fit = cox_partial_fit(d)
        return fit.beta, None, True
    if method == "one-stage":
        e = expand(d, 9)
        sb, decomp = build_basis(
            d.time[d.event == 1], dim=10, penalty_order=2, upper=float(d.time.max())
        )
        gam, frailty = one_stage_fit(e, sb, decomp, d.covariates, GamConfig(), d.covariate_names)
        return gam.beta, frailty.sigma_u, gam.converged
    if method.startswith("two-stage"):
        return _fit_two_stage(d, method)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def load_design(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in DESIGN_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SurvgamError(f"design file missing columns: {missing}")
        rows = []
        for raw in reader:
            rows.append(
                {
                    "N": int(float(raw["N"])),
                    "dim_beta": int(float(raw["dim_beta"])),
                    "f": float(raw["f"]),
                    "r": float(raw["r"]),
                    "S_Tmax": float(raw["S_Tmax"]),
                    "q": float(raw["q"]),
                }
            )
    return rows


def make_space_filling_design(n_rows: int, seed: int = 0) -> list[dict]:
    """Sobol-style space-filling rows over the benchmark hypercube.

    A smoke-test stand-in only: the points cover the cube uniformly, they are
    not an optimal design of any kind.
    """
    from scipy.stats import qmc

    sampler = qmc.Sobol(d=6, scramble=True, seed=seed)
    lo = np.array([b[0] for b in HYPERCUBE])
    hi = np.array([b[1] for b in HYPERCUBE])
    pts = qmc.scale(sampler.random(n_rows), lo, hi)
    rows = []
    for p in pts:
        rows.append(
            {
                "N": int(round(p[0])),
                "dim_beta": int(round(p[1])),
                "f": float(p[2]),
                "r": float(p[3]),
                "S_Tmax": float(p[4]),
                "q": float(p[5]),
            }
        )
    return rows


def save_design(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(DESIGN_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row[c] for c in DESIGN_COLUMNS})


_FIELDNAMES = [f.name for f in fields(Measurement)]


def _existing_keys(path) -> set[tuple[int, str, int]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        return set()
    with fh:
        reader = csv.DictReader(fh)
        return {
            (int(row["row"]), row["method"], int(row["replicate"]))
            for row in reader
            if row.get("row")
        }


def measure_one(design_row: dict, row_index: int, method: str, replicate: int,
                t_max: float = 20.0, mc_size: int = 100_000) -> Measurement:
    """Simulate + fit one cell; failures are recorded, not raised."""
    seed = stable_seed(
        design_row["N"], design_row["dim_beta"], design_row["f"], design_row["r"],
        design_row["S_Tmax"], design_row["q"], replicate,
    )
    dp = DesignPoint(
        n_subjects=design_row["N"],
        dim_beta=design_row["dim_beta"],
        f=design_row["f"],
        r=design_row["r"],
        s_tmax=design_row["S_Tmax"],
        q=design_row["q"],
        t_max=t_max,
        seed=seed,
    )
    sim = simulate_dataset(dp, SimulationConfig(mc_size=mc_size))
    d = sim.dataset

    sigma_est = None
    converged = False
    error = ""
    beta_bias = float("nan")
    with PeakMemorySampler() as mem:
        start = time.perf_counter()
        try:
            beta_hat, sigma_est, converged = run_method(d, method)
            nonzero = sim.truth.beta != 0
            beta_bias = float(
                np.mean([bias_metric(b, t) for b, t in zip(beta_hat[nonzero], sim.truth.beta[nonzero])])
            )
        except SurvgamError as exc:
            error = str(exc)
        wall = time.perf_counter() - start

    return Measurement(
        row=row_index,
        N=design_row["N"],
        dim_beta=design_row["dim_beta"],
        f=design_row["f"],
        r=design_row["r"],
        S_Tmax=design_row["S_Tmax"],
        q=design_row["q"],
        method=method,
        replicate=replicate,
        seed=seed,
        wall_time_s=wall,
        peak_mem_bytes=mem.peak,
        sigma_f_true=sim.truth.sigma_f,
        sigma_f_est=sigma_est,
        mean_abs_rel_bias_beta=beta_bias,
        converged=converged,
        error=error,
    )


def run_design(
    design_rows: list[dict],
    methods: list[str],
    replicates: int,
    out_path,
    t_max: float = 20.0,
    mc_size: int = 100_000,
    progress=None,
) -> list[Measurement]:
    """Sweep rows x methods x replicates, appending one CSV line per cell.

    Cells already present in ``out_path`` are skipped, making reruns cheap.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    done = _existing_keys(out_path)
    new_file = len(done) == 0
    results: list[Measurement] = []
    with open(out_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_FIELDNAMES)
        if new_file:
            writer.writeheader()
            fh.flush()
        for row_index, design_row in enumerate(design_rows):
            for method in methods:
                for replicate in range(replicates):
                    key = (row_index, method, replicate)
                    if key in done:
                        continue
                    meas = measure_one(design_row, row_index, method, replicate,
                                       t_max=t_max, mc_size=mc_size)
                    record = {
                        k: ("" if getattr(meas, k) is None else getattr(meas, k))
                        for k in _FIELDNAMES
                    }
                    writer.writerow(record)
                    fh.flush()
                    results.append(meas)
                    if progress is not None:
                        progress(meas)
    return results
