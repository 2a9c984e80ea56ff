"""Command-line interface: fit on CSV data, run simulation suites, compute
influence curves, segment images.

Exit codes are a stable contract: 0 success, 2 input error, 3 computation
failure. Every subcommand is deterministic given its inputs, flags and
seed. The MIXCLUST_LOG environment variable sets the log level.

Cluster labels in emitted files are 1-based; arrays inside the library are
0-based.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .clustering import AlgoConfig, fit
from .constraints import ConstraintConfig
from .errors import ImageFormatError, MixclustError
from .influence import (
    TrueDistribution,
    if_curve,
    solve_functional,
    write_if_curve,
)
from .imageseg import load_image, reconstruct, save_ppm, save_sidecar, segment
from .mdpde import IrlsConfig
from .schemas import validate
from .simulation import (
    ScenarioSpec,
    aggregate_rows,
    default_threshold,
    paper_design,
    run_experiment,
)

log = logging.getLogger("mixclust")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


class InputError(Exception):
    """User-facing input problem (maps to exit code 2)."""


def _write_json(path: Path, payload: dict, schema: str | None = None) -> None:
    if schema is not None:
        validate(payload, schema)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out_dir(out: str, force: bool) -> Path:
    path = Path(out)
    if path.exists() and not force:
        raise InputError(f"output path {path} exists (use --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_csv_matrix(path) -> np.ndarray:
    """Strict CSV reader: comma separated, '.' decimals, optional single
    header row detected by a non-numeric first line. Errors carry the
    offending 1-based line number."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = [c.strip() for c in line.split(",")]
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header row
                raise InputError(f"{path}:{lineno}: non-numeric cell") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise InputError(
                    f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _algo_config(args, p: int | None = None) -> AlgoConfig:
    threshold = args.threshold
    if threshold is None:
        threshold = default_threshold(p) if p is not None else 1e-3
    return AlgoConfig(
        beta=args.beta,
        constraint=ConstraintConfig(c=args.c, c1=args.c1),
        outlier_threshold=threshold,
        max_outer_iter=args.max_iter,
        n_restarts=args.restarts,
        seed=args.seed,
        irls=IrlsConfig(),
    )


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    data = read_csv_matrix(args.csv)
    n, p = data.shape
    cfg = _algo_config(args, p)
    out = _prepare_out_dir(args.out, args.force)
    result = fit(data, args.k, cfg)
    payload = {
        "n": int(n),
        "p": int(p),
        "k": int(args.k),
        "beta": float(cfg.beta),
        "seed": int(cfg.seed),
        "threshold": float(cfg.outlier_threshold),
        "weights": [float(w) for w in result.params.weights],
        "means": [c.mean.tolist() for c in result.params.components],
        "covariances": [c.cov.tolist() for c in result.params.components],
        "objective": float(result.objective),
        "iterations": int(result.iterations),
        "restart_index": int(result.restart_index),
        "outlier_count": int(result.outlier_flags.sum()),
    }
    _write_json(out / "result.json", payload, schema="fit_result")
    with open(out / "assignments.csv", "w", encoding="utf-8") as fh:
        fh.write("row,cluster,discriminant,outlier,outlier_type\n")
        for i in range(n):
            otype = result.outlier_types[i]
            fh.write(
                f"{i + 1},{result.assignments[i] + 1},{result.discriminants[i]:.12g},"
                f"{int(result.outlier_flags[i])},{otype + 1 if otype >= 0 else ''}\n")
    log.info("fit written to %s", out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _load_scenario(path, replications_override: int | None) -> tuple[ScenarioSpec, dict]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"scenario file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    known = {"n", "p", "k", "means", "cov_scale", "weights", "contamination",
             "contamination_level", "replications", "seed", "c", "c1",
             "threshold", "restarts", "max_outer_iter", "betas"}
    unknown = set(raw) - known
    if unknown:
        raise InputError(f"{path}: unknown fields {sorted(unknown)}")
    try:
        p = int(raw["p"])
        base = paper_design(
            p=p,
            cov_scale=float(raw.get("cov_scale", 1.0)),
            contamination=raw.get("contamination", "none"),
            n=int(raw.get("n", 1000)),
            replications=int(raw.get("replications", 20)),
            seed=int(raw.get("seed", 0)),
        )
        spec = ScenarioSpec(
            n=base.n,
            p=base.p,
            k=int(raw.get("k", 3)),
            means=np.asarray(raw["means"], dtype=float) if "means" in raw else base.means,
            cov_scale=base.cov_scale,
            weights=np.asarray(raw["weights"], dtype=float) if "weights" in raw else base.weights,
            contamination=base.contamination,
            contamination_level=float(raw.get("contamination_level",
                                              base.contamination_level)),
            replications=base.replications,
            seed=base.seed,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: invalid scenario ({exc})") from None
    if replications_override is not None:
        spec = dataclasses.replace(spec, replications=replications_override)
    return spec, raw


def _print_table(spec: ScenarioSpec, labels: list[str], aggregates: dict) -> None:
    print(f"p={spec.p}  cov={spec.cov_scale}*I  contamination={spec.contamination}  "
          f"n={spec.n}  replications={spec.replications}")
    header = f"{'metric':28s}" + "".join(f"{lbl:>14s}" for lbl in labels)
    print(header)
    second = ("misclassification", "(detected outliers)") if spec.contamination == "none" \
        else ("misclassification", "(undetected proportion)")
    line = f"{second[0]:28s}"
    for lbl in labels:
        val = aggregates[lbl]["misclassification"]
        line += f"{val:>14.4f}" if val is not None else f"{'-':>14s}"
    print(line)
    key = "detected" if spec.contamination == "none" else "undetected"
    line = f"{second[1]:28s}"
    for lbl in labels:
        val = aggregates[lbl][key]
        line += f"{('(' + format(val, '.4g') + ')'):>14s}" if val is not None else f"{'-':>14s}"
    print(line)


def cmd_simulate(args) -> int:
    spec, raw = _load_scenario(args.spec, args.replications)
    out = _prepare_out_dir(args.out, args.force)
    betas = raw.get("betas", [args.beta])
    threshold = raw.get("threshold", args.threshold)
    if threshold is None:
        threshold = default_threshold(spec.p)
    cfgs, labels = [], []
    for beta in betas:
        cfgs.append(AlgoConfig(
            beta=float(beta),
            constraint=ConstraintConfig(c=float(raw.get("c", args.c)),
                                        c1=float(raw.get("c1", args.c1))),
            outlier_threshold=float(threshold),
            max_outer_iter=int(raw.get("max_outer_iter", args.max_iter)),
            n_restarts=int(raw.get("restarts", args.restarts)),
            seed=args.seed,
        ))
        labels.append(f"beta={beta:g}")
    report = run_experiment(spec, cfgs, labels, threads=args.threads)
    report.to_csv(out / "replications.csv")
    aggregates = aggregate_rows(report.rows, labels)
    payload = {
        "scenario": {
            "n": spec.n, "p": spec.p, "k": spec.k,
            "contamination": spec.contamination,
            "contamination_level": spec.contamination_level,
            "replications": spec.replications, "seed": spec.seed,
            "cov_scale": spec.cov_scale,
        },
        "configs": labels,
        "aggregates": aggregates,
    }
    _write_json(out / "report.json", payload, schema="simulation_report")
    _print_table(spec, labels, aggregates)
    return EXIT_OK


# ---------------------------------------------------------------------------
# influence
# ---------------------------------------------------------------------------


def cmd_influence(args) -> int:
    if any(beta == 0.0 for beta in args.beta):
        raise InputError(
            "beta = 0 is refused: the corresponding influence functions are unbounded")
    dist = TrueDistribution(
        weights=(args.pi1, 1.0 - args.pi1),
        means=(args.mu1, args.mu2),
        variances=(args.var1, args.var2),
    )
    out = _prepare_out_dir(args.out, args.force)
    cfg = ConstraintConfig(c=args.c, c1=args.c1)
    grid = np.linspace(args.grid_lo, args.grid_hi, args.grid_points)
    solutions = []
    for beta in args.beta:
        sol = solve_functional(dist, beta, cfg)
        solutions.append({
            "beta": float(beta), "a": sol.a, "b": sol.b,
            "pi1": sol.pi1, "pi2": sol.pi2,
            "mu1": sol.mu1, "mu2": sol.mu2,
            "var1": sol.var1, "var2": sol.var2,
            "residual_norm": sol.residual_norm,
        })
        table = if_curve(sol, dist, beta, grid)
        write_if_curve(out / f"if_curve_beta{beta:g}.csv", table)
    payload = {
        "model": {
            "weights": [args.pi1, 1.0 - args.pi1],
            "means": [args.mu1, args.mu2],
            "variances": [args.var1, args.var2],
        },
        "solutions": solutions,
    }
    _write_json(out / "solution.json", payload, schema="influence_solution")
    log.info("influence output written to %s", out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# image
# ---------------------------------------------------------------------------


def cmd_image(args) -> int:
    out = Path(args.out)
    sidecar = out.with_suffix(out.suffix + ".json")
    for target in (out, sidecar):
        if target.exists() and not args.force:
            raise InputError(f"output path {target} exists (use --force to overwrite)")
    grid = load_image(args.image)
    cfg = _algo_config(args)
    if args.threshold is None:
        cfg = dataclasses.replace(cfg, outlier_threshold=0.02)
    seg = segment(grid, args.k, cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_ppm(reconstruct(grid, seg), out)
    save_sidecar(seg, sidecar)
    with open(sidecar, "r", encoding="utf-8") as fh:
        validate(json.load(fh), "image_sidecar")
    log.info("reconstruction written to %s", out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / main
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--beta", type=float, default=0.1,
                     help="downweighting exponent in [0, 1]")
    sub.add_argument("--c", type=float, default=20.0, help="eigenvalue ratio bound")
    sub.add_argument("--c1", type=float, default=0.1, help="eigenvalue floor")
    sub.add_argument("--threshold", type=float, default=None,
                     help="outlier threshold (default depends on dimension)")
    sub.add_argument("--restarts", type=int, default=10)
    sub.add_argument("--max-iter", dest="max_iter", type=int, default=100)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sub.add_argument("--out", type=str, required=True, help="output path")
    sub.add_argument("--force", action="store_true",
                     help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixclust",
        description="Robust normal-mixture clustering with outlier detection")
    subs = parser.add_subparsers(dest="command", required=True)

    p_fit = subs.add_parser("fit", help="cluster a CSV of numeric rows")
    p_fit.add_argument("csv", type=str)
    p_fit.add_argument("--k", type=int, required=True)
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = subs.add_parser("simulate", help="run a scenario file")
    p_sim.add_argument("spec", type=str)
    p_sim.add_argument("--replications", type=int, default=None,
                       help="override the scenario's replication count")
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_inf = subs.add_parser("influence", help="influence curves for a 1-D two-component model")
    p_inf.add_argument("--pi1", type=float, default=0.5)
    p_inf.add_argument("--mu1", type=float, default=0.0)
    p_inf.add_argument("--var1", type=float, default=1.0)
    p_inf.add_argument("--mu2", type=float, default=5.0)
    p_inf.add_argument("--var2", type=float, default=4.0)
    p_inf.add_argument("--beta", type=float, action="append", default=None,
                       help="repeatable; defaults to 0.1 0.2 1.0")
    p_inf.add_argument("--grid-lo", type=float, default=-30.0)
    p_inf.add_argument("--grid-hi", type=float, default=30.0)
    p_inf.add_argument("--grid-points", type=int, default=601)
    p_inf.add_argument("--c", type=float, default=5.0)
    p_inf.add_argument("--c1", type=float, default=0.1)
    p_inf.add_argument("--seed", type=int, default=0)
    p_inf.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p_inf.add_argument("--out", type=str, required=True)
    p_inf.add_argument("--force", action="store_true")
    p_inf.set_defaults(func=cmd_influence)

    p_img = subs.add_parser("image", help="segment a PNG/PPM image")
    p_img.add_argument("image", type=str)
    p_img.add_argument("--k", type=int, default=2)
    _add_common(p_img)
    p_img.set_defaults(func=cmd_image)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MIXCLUST_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "influence" and args.beta is None:
        args.beta = [0.1, 0.2, 1.0]
    try:
        return args.func(args)
    except (InputError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MixclustError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
