"""Command-line interface: fit, simulate, bench, expand, oracle.

Exit codes: 0 success, 1 input/validation error, 2 numerical failure.
Structured results go to stdout as JSON when no --out is given.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .backfit import BackfitConfig, predict_survival, two_stage_fit
from .basis import build_basis
from .cox import cox_partial_fit
from .data import load_dataset, save_dataset, validate_for_fit
from .errors import DataValidationError, SurvgamError
from .gam import GamConfig, one_stage_fit, optimize_smoothing
from .quadrature import expand, save_expanded
from .report import backfit_document, cox_document, frailty_document, gam_document
from .simulate import DesignPoint, SimulationConfig, simulate_dataset


def _thread_limit(n: int | None):
    """Cap BLAS threads; default is all cores, env SURVGAM_THREADS overrides."""
    if n is None:
        env = os.environ.get("SURVGAM_THREADS")
        n = int(env) if env else None
    if n is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=n)
    except ImportError:
        return contextlib.nullcontext()


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _parse_frailty(spec: str) -> tuple[str | None, int]:
    if spec == "none":
        return None, 0
    if spec == "laplace":
        return "laplace", 1
    if spec.startswith("agq:"):
        return "agq", int(spec.split(":", 1)[1])
    raise DataValidationError(f"unknown frailty spec {spec!r} (use none, laplace, or agq:K)")


def cmd_fit(args) -> int:
    d = load_dataset(args.data)
    method, agq_nodes = _parse_frailty(args.frailty)

    if method is None:
        e = expand(d, args.nodes)
        sb, decomp = build_basis(
            d.time[d.event == 1], dim=args.basis_dim,
            penalty_order=args.penalty_order, upper=float(d.time.max()),
        )
        gam = optimize_smoothing(
            e, sb, decomp, d.covariates if d.n_covariates else None,
            GamConfig(basis_dim=args.basis_dim, penalty_order=args.penalty_order),
            d.covariate_names,
        )
        doc = gam_document(gam)
        result = None
    elif args.stage == "one":
        e = expand(d, args.nodes)
        sb, decomp = build_basis(
            d.time[d.event == 1], dim=args.basis_dim,
            penalty_order=args.penalty_order, upper=float(d.time.max()),
        )
        gam, frailty = one_stage_fit(
            e, sb, decomp, d.covariates if d.n_covariates else None,
            GamConfig(basis_dim=args.basis_dim, penalty_order=args.penalty_order),
            d.covariate_names,
        )
        doc = gam_document(gam)
        doc["frailty"] = frailty_document(frailty)
        result = None
    else:
        cfg = BackfitConfig(
            nodes=args.nodes,
            basis_dim=args.basis_dim,
            penalty_order=args.penalty_order,
            frailty_method=method,
            agq_nodes=agq_nodes,
            with_intercept=not args.no_intercept,
            max_iters=args.max_iters,
        )
        result = two_stage_fit(d, cfg)
        doc = backfit_document(result)

    doc["model"] = {
        "data": str(args.data),
        "nodes": args.nodes,
        "basis_dim": args.basis_dim,
        "frailty": args.frailty,
        "stage": args.stage if method is not None else None,
    }
    _emit(doc, args.out)

    if args.survival_grid:
        if result is None:
            raise DataValidationError("--survival-grid requires a two-stage frailty fit")
        times = np.linspace(0.0, float(d.time.max()), args.survival_points)
        surv = predict_survival(result, None, "zero", times)
        with open(args.survival_grid, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "survival"])
            for t, s in zip(times, surv):
                writer.writerow([repr(float(t)), repr(float(s))])
    return 0


def cmd_expand(args) -> int:
    d = load_dataset(args.data)
    e = expand(d, args.nodes)
    if args.out:
        save_expanded(e, args.out)
    else:
        save_expanded(e, "/dev/stdout")
    return 0


def cmd_oracle(args) -> int:
    d = load_dataset(args.data)
    validate_for_fit(d)
    fit = cox_partial_fit(d)
    _emit(cox_document(fit, d.covariate_names), args.out)
    return 0


def cmd_simulate(args) -> int:
    rows = bench_mod.load_design(args.design)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = SimulationConfig(mc_size=args.mc_size)
    index = []
    for i, row in enumerate(rows):
        seed = bench_mod.stable_seed(args.seed, i, *(row[c] for c in bench_mod.DESIGN_COLUMNS))
        dp = DesignPoint(
            n_subjects=row["N"], dim_beta=row["dim_beta"], f=row["f"], r=row["r"],
            s_tmax=row["S_Tmax"], q=row["q"], t_max=args.t_max, seed=seed,
        )
        sim = simulate_dataset(dp, cfg)
        data_path = out_dir / f"dataset_{i:03d}.csv"
        save_dataset(sim.dataset, data_path)
        truth = {
            "seed": seed,
            "base_seed": args.seed,
            "beta": [float(b) for b in sim.truth.beta],
            "gamma": sim.truth.gamma,
            "lambda": sim.truth.lam,
            "sigma_f": sim.truth.sigma_f,
            "B": sim.truth.lp_mean,
            "u": sim.truth.lp_sd,
            "design": {c: row[c] for c in bench_mod.DESIGN_COLUMNS},
        }
        (out_dir / f"truth_{i:03d}.json").write_text(json.dumps(truth, indent=2) + "\n")
        index.append({"row": i, "dataset": data_path.name, "events": sim.dataset.n_events})
    _emit({"written": index, "seed": args.seed, "out": str(out_dir)}, None)
    return 0


def cmd_bench(args) -> int:
    if args.make_design:
        rows = bench_mod.make_space_filling_design(args.make_design, seed=args.seed)
        bench_mod.save_design(rows, args.design)
        print(
            f"wrote {len(rows)} space-filling design rows to {args.design} "
            "(uniform cube coverage, not an optimal design)"
        )
        return 0
    rows = bench_mod.load_design(args.design)
    methods = args.methods.split(",")

    def progress(m):
        print(
            f"row={m.row} method={m.method} rep={m.replicate} "
            f"wall={m.wall_time_s:.2f}s converged={m.converged}"
            + (f" error={m.error}" if m.error else ""),
            file=sys.stderr,
        )

    bench_mod.run_design(
        rows, methods, args.replicates, args.out,
        t_max=args.t_max, mc_size=args.mc_size, progress=progress,
    )
    print(f"measurements in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survgam",
        description="Smooth-hazard survival models with per-subject frailty, "
        "fitted as penalized Poisson regressions over quadrature-expanded data.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread cap (default: all cores; env SURVGAM_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the smooth hazard model, optionally with frailty")
    p_fit.add_argument("--data", required=True, help="CSV with header id[,entry],time,event,<covariates>")
    p_fit.add_argument("--nodes", type=int, default=9, help="quadrature nodes per subject")
    p_fit.add_argument("--basis-dim", type=int, default=10)
    p_fit.add_argument("--penalty-order", type=int, default=2)
    p_fit.add_argument("--frailty", default="none", help="none | laplace | agq:K")
    p_fit.add_argument("--stage", choices=("one", "two"), default="two")
    p_fit.add_argument("--no-intercept", action="store_true",
                       help="drop the global intercept from the frailty stage")
    p_fit.add_argument("--max-iters", type=int, default=50, help="backfit cycles")
    p_fit.add_argument("--out", default=None, help="write fit JSON here instead of stdout")
    p_fit.add_argument("--survival-grid", default=None,
                       help="CSV of the predicted reference survival curve")
    p_fit.add_argument("--survival-points", type=int, default=101)
    p_fit.set_defaults(func=cmd_fit)

    p_exp = sub.add_parser("expand", help="write the quadrature pseudo-observation rows")
    p_exp.add_argument("--data", required=True)
    p_exp.add_argument("--nodes", type=int, default=9)
    p_exp.add_argument("--out", default=None)
    p_exp.set_defaults(func=cmd_expand)

    p_or = sub.add_parser("oracle", help="Cox partial-likelihood reference fit")
    p_or.add_argument("--data", required=True)
    p_or.add_argument("--out", default=None)
    p_or.set_defaults(func=cmd_oracle)

    p_sim = sub.add_parser("simulate", help="generate datasets from a design table")
    p_sim.add_argument("--design", required=True, help="CSV with columns N,dim_beta,f,r,S_Tmax,q")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--t-max", type=float, default=20.0)
    p_sim.add_argument("--mc-size", type=int, default=100_000)
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="replay a design over methods, measuring each fit")
    p_bench.add_argument("--design", required=True)
    p_bench.add_argument("--methods", default="two-stage-agq9",
                         help=f"comma list from {','.join(METHOD for METHOD in bench_mod.METHODS)}")
    p_bench.add_argument("--replicates", type=int, default=1)
    p_bench.add_argument("--out", default="results.csv")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--t-max", type=float, default=20.0)
    p_bench.add_argument("--mc-size", type=int, default=100_000)
    p_bench.add_argument("--make-design", type=int, default=None, metavar="ROWS",
                         help="write a space-filling design to --design and exit")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except DataValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SurvgamError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
