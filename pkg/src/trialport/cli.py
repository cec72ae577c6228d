"""Command-line interface: simulate | estimate | diagnose | experiment | sweep.

Exit codes are a stable contract: 0 success, 2 config/schema violation,
3 requested quantity not identifiable under the study design, 4 numerical or
fitting failure. Every command accepts ``--seed`` to override the config's
seed and records the fully resolved config next to its outputs. All
randomness flows from the seeds in the resolved config; nothing is drawn
from the environment.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .dgp import simulate_actual_population
from .errors import (
    ConfigError,
    DataError,
    InsufficientData,
    NonConvergence,
    NotIdentifiable,
    RankDeficient,
    SeparationDetected,
)
from .estimators import (
    Method,
    StudyPopulation,
    gformula_mean_nonrandomized,
    gformula_mean_randomized,
    gformula_mean_target,
    ipw_mean_nonrandomized,
    ipw_mean_target,
    trial_only_mean,
)
from .experiment import (
    EstimatorSpec,
    bootstrap_replicates,
    design_comparison,
    mix_seed,
    run_experiment,
    summary_rows_to_csv,
)
from .outcome import fit_outcome
from .participation import fit_participation
from .sampling import apply_design

EXIT_OK, EXIT_CONFIG, EXIT_NOT_IDENTIFIABLE, EXIT_NUMERICAL = 0, 2, 3, 4

_SAMPLING_TAG = 5  # seed-derivation tag for design thinning in `simulate`


def _dataset_paths(arg: str) -> tuple[Path, Path]:
    path = Path(arg)
    if path.suffix == ".csv":
        return path, path.with_suffix(".json")
    return Path(str(path) + ".csv"), Path(str(path) + ".json")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# simulate


def _cmd_simulate(args) -> int:
    cfg = dataio.load_json(args.config)
    dgp, design, n, sampling_seed = dataio.simulate_config_from_dict(cfg)
    if args.seed is not None:
        dgp = dataclasses.replace(dgp, seed=args.seed)
    if sampling_seed is None:
        sampling_seed = mix_seed(dgp.seed, _SAMPLING_TAG)

    population = simulate_actual_population(dgp, n)
    data = apply_design(population, design, seed=sampling_seed)

    out = Path(args.out)
    csv_path, sidecar_path = Path(str(out) + ".csv"), Path(str(out) + ".json")
    dataio.write_dataset(data, csv_path, sidecar_path)
    resolved = {
        "dgp": dataio.dgp_to_dict(dgp),
        "design": dataio.design_to_dict(design),
        "n": n,
        "sampling_seed": sampling_seed,
    }
    _write_json(Path(str(out) + ".config.json"), resolved)

    print(f"trial participants:            {data.n_trial}")
    print(f"sampled non-randomized:        {data.n_external}")
    if data.n_unsampled_nonrandomized is not None:
        print(f"unsampled non-randomized:      {data.n_unsampled_nonrandomized}")
    else:
        print("unsampled non-randomized:      unknown (non-nested design)")
    print(f"wrote {csv_path} and {sidecar_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate


def _ipw_variant(method: str) -> str:
    return "ht" if method == "ipw_ht" else "hajek"


def _run_estimator(data, estimand: str, method: str, arm: int, truncate_q):
    if method in ("ipw", "ipw_ht", "ipw_hajek"):
        pmodel = fit_participation(data)
        if estimand == "target":
            return ipw_mean_target(data, pmodel, arm, _ipw_variant(method), truncate_q)
        if estimand == "nonrandomized":
            return ipw_mean_nonrandomized(data, pmodel, arm, truncate_q)
        raise ConfigError("ipw estimates the target or nonrandomized population")
    if method == "gformula":
        omodel = fit_outcome(data)
        fn = {
            "target": gformula_mean_target,
            "nonrandomized": gformula_mean_nonrandomized,
            "randomized": gformula_mean_randomized,
        }[estimand]
        return fn(data, omodel, arm)
    if method == "trial_only":
        if estimand != "randomized":
            raise ConfigError("trial_only estimates the randomized population only")
        return trial_only_mean(data, arm)
    raise ConfigError(f"unknown method '{method}'")


def _cmd_estimate(args) -> int:
    csv_path, sidecar_path = _dataset_paths(args.dataset)
    data = dataio.read_dataset(csv_path, sidecar_path)
    arms = [0, 1] if args.arm == "both" else [int(args.arm)]

    reports = [
        _run_estimator(data, args.estimand, args.method, arm, args.truncate_q) for arm in arms
    ]
    doc = {
        "reports": [r.to_dict() for r in reports],
        "config": {
            "dataset": str(csv_path),
            "estimand": args.estimand,
            "method": args.method,
            "arms": arms,
            "truncate_q": args.truncate_q,
            "seed": args.seed,
        },
    }
    print(json.dumps(doc, indent=2))
    if args.out:
        lines = [reports[0].CSV_HEADER] + [r.to_csv_row() for r in reports]
        Path(args.out).write_text("\n".join(lines) + "\n")
        _write_json(Path(str(args.out) + ".config.json"), doc["config"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose


def _cmd_diagnose(args) -> int:
    csv_path, sidecar_path = _dataset_paths(args.dataset)
    data = dataio.read_dataset(csv_path, sidecar_path)
    seed = args.seed if args.seed is not None else 0

    def diff_stat(arm):
        def stat(d):
            trial = trial_only_mean(d, arm).value
            if args.method == "ipw":
                external = ipw_mean_nonrandomized(d, fit_participation(d), arm).value
            else:
                external = gformula_mean_nonrandomized(d, fit_outcome(d), arm).value
            return trial - external
        return stat

    arms_out = []
    for arm in (0, 1):
        trial = trial_only_mean(data, arm).value
        if args.method == "ipw":
            external = ipw_mean_nonrandomized(data, fit_participation(data), arm).value
        else:
            external = gformula_mean_nonrandomized(data, fit_outcome(data), arm).value
        reps = bootstrap_replicates(
            data, diff_stat(arm), args.bootstrap_b, seed=mix_seed(seed, 6, arm)
        )
        good = reps[~np.isnan(reps)]
        boot_se = float(good.std(ddof=1)) if good.size > 1 else float("nan")
        arms_out.append(
            {
                "arm": arm,
                "mean_randomized": trial,
                "mean_nonrandomized": external,
                "difference": trial - external,
                "difference_bootstrap_se": boot_se,
            }
        )
    doc = {
        "arms": arms_out,
        "config": {
            "dataset": str(csv_path),
            "method": args.method,
            "bootstrap_b": args.bootstrap_b,
            "seed": seed,
        },
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment / sweep


def _resolved_config_doc(cfg, workers: int) -> dict:
    doc = dataio.experiment_config_to_dict(cfg)
    doc["workers"] = workers
    return doc


def _cmd_experiment(args) -> int:
    doc = dataio.load_json(args.config)
    cfg = dataio.experiment_config_from_dict(doc)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    summary = run_experiment(cfg, workers=args.workers)
    out = Path(args.out)
    out.write_text(summary.csv_text())
    _write_json(Path(str(out) + ".config.json"), _resolved_config_doc(cfg, args.workers))
    print(f"wrote {out} ({len(summary.rows)} rows)")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    doc = dataio.load_json(args.config)
    grid = doc.get("grid")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("sweep config needs a nonempty 'grid' list of designs")
    base = {k: v for k, v in doc.items() if k != "grid"}
    configs = []
    for i, cell in enumerate(grid):
        cell_doc = dict(base)
        cell_doc["design"] = cell
        cfg = dataio.experiment_config_from_dict(cell_doc)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, master_seed=args.seed)
        configs.append(cfg)
    rows = design_comparison(configs, workers=args.workers)
    out = Path(args.out)
    out.write_text(summary_rows_to_csv(rows))
    _write_json(
        Path(str(out) + ".config.json"),
        {
            "cells": [_resolved_config_doc(cfg, args.workers) for cfg in configs],
        },
    )
    print(f"wrote {out} ({len(rows)} rows over {len(configs)} cells)")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialport",
        description="Extend randomized-trial inferences to a target population: "
        "simulation, estimation, and Monte Carlo verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("simulate", help="simulate a dataset under a study design")
    p.add_argument("config", help="JSON config with dgp, design, n")
    p.add_argument("out", help="output prefix (writes .csv, .json, .config.json)")
    add_seed(p)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("estimate", help="fit models and estimate a potential outcome mean")
    p.add_argument("dataset", help="dataset prefix or .csv path (sidecar .json expected)")
    p.add_argument("--estimand", choices=["target", "nonrandomized", "randomized"], required=True)
    p.add_argument(
        "--method",
        choices=["gformula", "ipw", "ipw_ht", "ipw_hajek", "trial_only"],
        default="gformula",
    )
    p.add_argument("--arm", choices=["0", "1", "both"], default="both")
    p.add_argument("--truncate-q", type=float, default=None, help="weight truncation quantile")
    p.add_argument("--out", default=None, help="also write a one-row-per-arm CSV report")
    add_seed(p)
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("diagnose", help="compare randomized vs non-randomized outcome means")
    p.add_argument("dataset")
    p.add_argument("--method", choices=["gformula", "ipw"], default="gformula")
    p.add_argument("--bootstrap-b", type=int, default=200)
    add_seed(p)
    p.set_defaults(fn=_cmd_diagnose)

    p = sub.add_parser("experiment", help="run a Monte Carlo replication study")
    p.add_argument("config")
    p.add_argument("out", help="summary CSV path")
    p.add_argument("--workers", type=int, default=1)
    add_seed(p)
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("sweep", help="run an experiment grid over designs")
    p.add_argument("config", help="experiment config plus a 'grid' list of designs")
    p.add_argument("out")
    p.add_argument("--workers", type=int, default=1)
    add_seed(p)
    p.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotIdentifiable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_IDENTIFIABLE
    except (NonConvergence, SeparationDetected, RankDeficient, InsufficientData) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
