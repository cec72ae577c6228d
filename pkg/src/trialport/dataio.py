"""On-disk formats: dataset CSV + sidecar JSON, generator and experiment configs.

Dataset CSV columns are exactly ``role,a,y,x1,...,xp`` with role in
{trial, external}; treatment and outcome cells are empty on external rows.
The sidecar JSON records the design variant, its known sampling fraction (or
rule), the auxiliary split k, the randomization probability, and — for nested
designs only — the count of unsampled non-randomized individuals. The hidden
``u`` of a simulated non-nested design is never written anywhere.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .dgp import Bernoulli, CovariateDist, DgpSpec, Normal, Uniform
from .domain import (
    CensusNested,
    Design,
    NonNested,
    ObservedDataset,
    StepRule,
    SubsampledNested,
    SubsampledNestedCovariate,
    is_nested,
)
from .errors import ConfigError, DataError
from .estimators import Method, StudyPopulation
from .experiment import EstimatorSpec, ExperimentConfig, MisspecifySpec


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing required key '{key}' in {where}")
    return d[key]


# ---------------------------------------------------------------------------
# Designs


def design_to_dict(design: Design) -> dict:
    if isinstance(design, CensusNested):
        return {"variant": "census_nested"}
    if isinstance(design, SubsampledNested):
        return {"variant": "subsampled_nested", "c": design.c}
    if isinstance(design, SubsampledNestedCovariate):
        rule = design.c_rule
        if not isinstance(rule, StepRule):
            raise ConfigError(
                "only StepRule sampling rules are serializable; got "
                f"{type(rule).__name__}"
            )
        return {
            "variant": "subsampled_nested_covariate",
            "c_table": {
                "type": "step",
                "coord": rule.coord,
                "cutoff": rule.cutoff,
                "low": rule.low,
                "high": rule.high,
            },
        }
    if isinstance(design, NonNested):
        return {"variant": "non_nested"}  # u_hidden intentionally not recorded
    raise ConfigError(f"unknown design {design!r}")


def design_from_dict(d: dict, where: str = "design") -> Design:
    variant = _require(d, "variant", where)
    if variant == "census_nested":
        return CensusNested()
    if variant == "subsampled_nested":
        return SubsampledNested(c=float(_require(d, "c", where)))
    if variant == "subsampled_nested_covariate":
        table = _require(d, "c_table", where)
        if table.get("type", "step") != "step":
            raise ConfigError(f"unsupported c_table type {table.get('type')!r} in {where}")
        return SubsampledNestedCovariate(
            c_rule=StepRule(
                coord=int(table.get("coord", 0)),
                cutoff=float(table.get("cutoff", 0.0)),
                low=float(_require(table, "low", f"{where}.c_table")),
                high=float(_require(table, "high", f"{where}.c_table")),
            )
        )
    if variant == "non_nested":
        u = d.get("u_hidden")
        return NonNested(u_hidden=float(u) if u is not None else None)
    raise ConfigError(f"unknown design variant '{variant}' in {where}")


# ---------------------------------------------------------------------------
# Generating processes

_DIST_KEYS = {"normal": ("mean", "sd"), "bernoulli": ("p",), "uniform": ("lo", "hi")}


def _dist_to_dict(dist: CovariateDist) -> dict:
    if isinstance(dist, Normal):
        return {"dist": "normal", "mean": dist.mean, "sd": dist.sd}
    if isinstance(dist, Bernoulli):
        return {"dist": "bernoulli", "p": dist.p}
    if isinstance(dist, Uniform):
        return {"dist": "uniform", "lo": dist.lo, "hi": dist.hi}
    raise ConfigError(f"unknown covariate distribution {dist!r}")


def _dist_from_dict(d: dict, where: str) -> CovariateDist:
    kind = _require(d, "dist", where)
    if kind not in _DIST_KEYS:
        raise ConfigError(f"unknown covariate distribution '{kind}' in {where}")
    args = {k: float(_require(d, k, where)) for k in _DIST_KEYS[kind]}
    return {"normal": Normal, "bernoulli": Bernoulli, "uniform": Uniform}[kind](**args)


def dgp_to_dict(dgp: DgpSpec) -> dict:
    out = {
        "covariates": [_dist_to_dict(d) for d in dgp.covariates],
        "participation_logit": list(dgp.participation_logit),
        "treatment_prob": dgp.treatment_prob,
        "outcome_mean_a0": list(dgp.outcome_mean_a0),
        "outcome_mean_a1": list(dgp.outcome_mean_a1),
        "noise_sd": dgp.noise_sd,
        "seed": dgp.seed,
    }
    if dgp.aux_split:
        out["aux_split"] = dgp.aux_split
    return out


def dgp_from_dict(d: dict, where: str = "dgp") -> DgpSpec:
    covs = _require(d, "covariates", where)
    if not isinstance(covs, list) or not covs:
        raise ConfigError(f"'covariates' must be a nonempty list in {where}")
    try:
        return DgpSpec(
            covariates=tuple(
                _dist_from_dict(c, f"{where}.covariates[{i}]") for i, c in enumerate(covs)
            ),
            participation_logit=tuple(_require(d, "participation_logit", where)),
            treatment_prob=float(_require(d, "treatment_prob", where)),
            outcome_mean_a0=tuple(_require(d, "outcome_mean_a0", where)),
            outcome_mean_a1=tuple(_require(d, "outcome_mean_a1", where)),
            noise_sd=float(_require(d, "noise_sd", where)),
            seed=int(_require(d, "seed", where)),
            aux_split=int(d.get("aux_split", 0)),
        )
    except DataError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


# ---------------------------------------------------------------------------
# Dataset CSV + sidecar


def dataset_to_csv_text(data: ObservedDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["role", "a", "y"] + [f"x{j + 1}" for j in range(data.p)])
    for i in range(data.n_rows):
        xs = [repr(float(v)) for v in data.x[i]]
        if data.s[i] == 1:
            writer.writerow(["trial", str(int(data.a[i])), repr(float(data.y[i]))] + xs)
        else:
            writer.writerow(["external", "", ""] + xs)
    return buf.getvalue()


def dataset_sidecar_dict(data: ObservedDataset) -> dict:
    out = {
        "design": design_to_dict(data.design),
        "k": data.k,
        "treatment_prob": data.treatment_prob,
    }
    if is_nested(data.design):
        out["n_unsampled_nonrandomized"] = data.n_unsampled_nonrandomized
    return out


def write_dataset(data: ObservedDataset, csv_path, sidecar_path) -> None:
    Path(csv_path).write_text(dataset_to_csv_text(data))
    Path(sidecar_path).write_text(json.dumps(dataset_sidecar_dict(data), indent=2) + "\n")


def _parse_cell(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line}: cannot parse {what} value {text!r}") from None


def read_dataset(csv_path, sidecar_path) -> ObservedDataset:
    sidecar = json.loads(Path(sidecar_path).read_text())
    design = design_from_dict(_require(sidecar, "design", "sidecar"), "sidecar.design")

    rows = list(csv.reader(Path(csv_path).read_text().splitlines()))
    if not rows:
        raise DataError(f"{csv_path}: empty dataset file")
    header = rows[0]
    if header[:3] != ["role", "a", "y"]:
        raise DataError(f"{csv_path}: header must start with role,a,y")
    p = len(header) - 3

    s, a, y, x = [], [], [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != p + 3:
            raise DataError(f"line {line_no}: expected {p + 3} cells, got {len(row)}")
        role = row[0]
        if role == "trial":
            s.append(1)
            a.append(_parse_cell(row[1], "treatment", line_no))
            y.append(_parse_cell(row[2], "outcome", line_no))
        elif role == "external":
            if row[1] or row[2]:
                raise DataError(f"line {line_no}: external rows must not carry a/y")
            s.append(0)
            a.append(math.nan)
            y.append(math.nan)
        else:
            raise DataError(f"line {line_no}: unknown role {role!r}")
        x.append([_parse_cell(v, "covariate", line_no) for v in row[3:]])

    return ObservedDataset(
        x=np.asarray(x, dtype=float).reshape(len(s), p),
        s=np.asarray(s),
        a=np.asarray(a),
        y=np.asarray(y),
        design=design,
        k=int(sidecar.get("k", 0)),
        treatment_prob=float(sidecar.get("treatment_prob", 0.5)),
        n_unsampled_nonrandomized=(
            int(_require(sidecar, "n_unsampled_nonrandomized", "sidecar"))
            if is_nested(design)
            else None
        ),
    )


# ---------------------------------------------------------------------------
# Command configs


def simulate_config_from_dict(d: dict):
    """Returns (dgp, design, n, sampling_seed)."""
    dgp = dgp_from_dict(_require(d, "dgp", "config"))
    design = design_from_dict(_require(d, "design", "config"), "config.design")
    n = int(_require(d, "n", "config"))
    sampling_seed = d.get("sampling_seed")
    return dgp, design, n, (int(sampling_seed) if sampling_seed is not None else None)


def estimator_spec_from_dict(d: dict, where: str) -> EstimatorSpec:
    try:
        return EstimatorSpec(
            method=Method(_require(d, "method", where)),
            population=StudyPopulation(_require(d, "population", where)),
            arm=int(_require(d, "arm", where)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid estimator in {where}: {exc}") from exc


def estimator_spec_to_dict(spec: EstimatorSpec) -> dict:
    return {"method": spec.method.value, "population": spec.population.value, "arm": spec.arm}


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    kwargs = {}
    if "estimators" in d:
        kwargs["estimators"] = tuple(
            estimator_spec_from_dict(e, f"config.estimators[{i}]")
            for i, e in enumerate(d["estimators"])
        )
    mis = d.get("misspecify", {})
    if not isinstance(mis, dict):
        raise ConfigError("'misspecify' must be an object")
    try:
        return ExperimentConfig(
            dgp=dgp_from_dict(_require(d, "dgp", "config")),
            design=design_from_dict(_require(d, "design", "config"), "config.design"),
            n=int(_require(d, "n", "config")),
            replications=int(_require(d, "replications", "config")),
            master_seed=int(_require(d, "master_seed", "config")),
            misspecify=MisspecifySpec(
                participation=bool(mis.get("participation", False)),
                outcome=bool(mis.get("outcome", False)),
                s_shift=float(mis.get("s_shift", 0.0)),
            ),
            bootstrap_b=int(d.get("bootstrap_b", 0)),
            oracle_m=int(d.get("oracle_m", 1_000_000)),
            oracle_seed=int(d["oracle_seed"]) if d.get("oracle_seed") is not None else None,
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def experiment_config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {
        "dgp": dgp_to_dict(cfg.dgp),
        "design": design_to_dict(cfg.design),
        "n": cfg.n,
        "replications": cfg.replications,
        "master_seed": cfg.master_seed,
        "estimators": [estimator_spec_to_dict(s) for s in cfg.estimators],
        "misspecify": {
            "participation": cfg.misspecify.participation,
            "outcome": cfg.misspecify.outcome,
            "s_shift": cfg.misspecify.s_shift,
        },
        "bootstrap_b": cfg.bootstrap_b,
        "oracle_m": cfg.oracle_m,
    }
    if cfg.oracle_seed is not None:
        out["oracle_seed"] = cfg.oracle_seed
    return out


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return doc
