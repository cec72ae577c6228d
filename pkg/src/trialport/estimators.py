"""Point estimators for potential outcome means, gated by design identifiability.

Two routes per estimand: standardization of the trial outcome regression over
an estimated covariate distribution (the g-formula route), and inverse
participation-probability (or odds) weighting of trial outcomes. Every
estimator first checks the study design's identification gate and raises
:class:`NotIdentifiable` rather than silently returning a number.

The non-randomized-mean weighting estimator is deliberately built from
intercept-free slope scores: multiplicative constants in the participation
odds cancel in its ratio, and dropping the intercept before exponentiation
makes that cancellation exact down to the bit level.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .domain import (
    Design,
    Estimand,
    ObservedDataset,
    identification_matrix,
    known_sampling_fractions,
)
from .errors import InsufficientData, NoExternalRows, NotIdentifiable
from .outcome import OutcomeModel, predict
from .participation import ParticipationModel, Scale

EXTREME_WEIGHT_THRESHOLD = 0.1


class Method(enum.Enum):
    GFORMULA = "gformula"
    IPW_HT = "ipw_ht"
    IPW_HAJEK = "ipw_hajek"
    TRIAL_ONLY = "trial_only"


class StudyPopulation(enum.Enum):
    TARGET = "target"
    NONRANDOMIZED = "nonrandomized"
    RANDOMIZED = "randomized"


@dataclass(frozen=True)
class WeightedSample:
    """Per-record standardization weights representing a covariate distribution."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive total")
        object.__setattr__(self, "weights", w)
        w.flags.writeable = False

    @classmethod
    def target_population(cls, data: ObservedDataset) -> "WeightedSample":
        """Weights whose empirical law is the target covariate distribution.

        Trial rows get weight 1; sampled external rows get the inverse of
        their known sampling fraction (1 for a census). Requires a nested
        design — without a known fraction the target distribution cannot be
        reconstructed.
        """
        if Estimand.MEAN_TARGET not in identification_matrix(data.design):
            raise NotIdentifiable(
                "the target-population covariate distribution is "
                "not identifiable under non-nested design"
            )
        w = np.ones(data.n_rows)
        ext = data.external_mask
        w[ext] = 1.0 / known_sampling_fractions(data.design, data.aux[ext])
        return cls(w)

    @classmethod
    def nonrandomized_population(cls, data: ObservedDataset) -> "WeightedSample":
        """Weights representing the covariate law of the S=0 stratum.

        Zero on trial rows. External rows get weight 1 when the sampling
        fraction is constant (any constant — it cancels), and 1/c(X1) under
        covariate-dependent sampling, where the sampled externals are not a
        simple random sample of the stratum.
        """
        if data.n_external == 0:
            raise NoExternalRows("dataset has no sampled non-randomized rows")
        w = np.zeros(data.n_rows)
        ext = data.external_mask
        try:
            w[ext] = 1.0 / known_sampling_fractions(data.design, data.aux[ext])
        except NotIdentifiable:
            w[ext] = 1.0  # unknown constant fraction cancels
        return cls(w)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> np.ndarray:
        return self.weights / self.total


def _weight_diagnostics(weights: np.ndarray) -> tuple[float, float]:
    """(max normalized weight, effective sample size) of the positive weights."""
    w = weights[weights > 0]
    total = w.sum()
    v = w / total
    return float(v.max()), float(1.0 / np.sum(v * v))


@dataclass(frozen=True)
class EstimateReport:
    """A point estimate with its provenance and weight diagnostics."""

    estimand: StudyPopulation
    arm: int
    method: Method
    value: float | None
    identifiable: bool
    max_normalized_weight: float | None = None
    effective_sample_size: float | None = None
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.identifiable and self.value is not None:
            raise ValueError("non-identifiable reports must not carry a value")

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand.value,
            "arm": self.arm,
            "method": self.method.value,
            "value": self.value,
            "identifiable": self.identifiable,
            "max_normalized_weight": self.max_normalized_weight,
            "effective_sample_size": self.effective_sample_size,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    CSV_HEADER = "estimand,arm,method,value,ess,max_weight,identifiable"

    def to_csv_row(self) -> str:
        cells = (
            self.estimand.value,
            str(self.arm),
            self.method.value,
            "" if self.value is None else repr(self.value),
            "" if self.effective_sample_size is None else repr(self.effective_sample_size),
            "" if self.max_normalized_weight is None else repr(self.max_normalized_weight),
            str(self.identifiable).lower(),
        )
        return ",".join(cells)


def _report(estimand, arm, method, value, weights, extra_warnings=()):
    max_w, ess = _weight_diagnostics(weights)
    warnings = tuple(extra_warnings)
    if max_w > EXTREME_WEIGHT_THRESHOLD:
        warnings = warnings + (
            f"extreme weights: max normalized weight {max_w:.3g} > {EXTREME_WEIGHT_THRESHOLD}",
        )
    return EstimateReport(
        estimand=estimand,
        arm=arm,
        method=method,
        value=float(value),
        identifiable=True,
        max_normalized_weight=max_w,
        effective_sample_size=ess,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# G-formula route


def gformula_mean_target(data: ObservedDataset, model: OutcomeModel, arm: int) -> EstimateReport:
    """Standardize the trial outcome regression over the target covariate law.

    Weighted average of per-row predictions with target-population weights; a
    plain average over all rows for a census.
    """
    sample = WeightedSample.target_population(data)
    preds = predict(model, arm, data.x)
    value = float(np.sum(sample.weights * preds) / sample.total)
    return _report(StudyPopulation.TARGET, arm, Method.GFORMULA, value, sample.weights)


def gformula_mean_nonrandomized(
    data: ObservedDataset, model: OutcomeModel, arm: int
) -> EstimateReport:
    """Average the trial outcome regression over sampled non-randomized rows.

    Identifiable under every design, non-nested included.
    """
    sample = WeightedSample.nonrandomized_population(data)
    ext = data.external_mask
    preds = predict(model, arm, data.x[ext])
    value = float(np.sum(sample.weights[ext] * preds) / sample.total)
    return _report(StudyPopulation.NONRANDOMIZED, arm, Method.GFORMULA, value, sample.weights)


def gformula_mean_randomized(
    data: ObservedDataset, model: OutcomeModel, arm: int
) -> EstimateReport:
    """Average the trial outcome regression over trial rows (the S=1 stratum)."""
    trial = data.trial_mask
    preds = predict(model, arm, data.x[trial])
    value = float(np.mean(preds))
    return _report(
        StudyPopulation.RANDOMIZED, arm, Method.GFORMULA, value, np.ones(int(trial.sum()))
    )


# ---------------------------------------------------------------------------
# Inverse-probability route


def _truncate(weights: np.ndarray, q: float | None) -> tuple[np.ndarray, tuple[str, ...]]:
    if q is None:
        return weights, ()
    if not 0.0 < q <= 1.0:
        raise ValueError(f"truncation quantile must be in (0, 1], got {q}")
    cap = float(np.quantile(weights, q))
    return np.minimum(weights, cap), (f"weights truncated at q={q:g} (cap {cap:.6g})",)


def ipw_mean_target(
    data: ObservedDataset,
    model: ParticipationModel,
    arm: int,
    variant: str = "hajek",
    truncate_q: float | None = None,
) -> EstimateReport:
    """Weight trial outcomes by inverse participation and treatment probability.

    ``variant="ht"`` normalizes by the estimated target-population size (the
    sum of the target standardization weights); ``"hajek"`` normalizes by the
    sum of the inverse-probability weights themselves, which bounds the
    estimate by the outcome range and makes constant weights cancel exactly.
    """
    if variant not in ("ht", "hajek"):
        raise ValueError(f"variant must be 'ht' or 'hajek', got {variant!r}")
    target = WeightedSample.target_population(data)  # also enforces the gate
    if model.scale is not Scale.POPULATION:
        raise ValueError(
            "target-mean weighting needs a population-scale participation model; "
            "refit with design weights"
        )
    rows = data.trial_mask & (data.a == arm)
    prob = expit(model.coefficients[0] + model.slope_score(data.x[rows]))
    w = 1.0 / (prob * data.prob_treatment(arm))
    w, notes = _truncate(w, truncate_q)
    y = data.y[rows]
    if variant == "ht":
        value = float(np.sum(y * w) / target.total)
        method = Method.IPW_HT
    else:
        value = float(np.sum(y * w) / np.sum(w))
        method = Method.IPW_HAJEK
    return _report(StudyPopulation.TARGET, arm, method, value, w, notes)


def ipw_mean_nonrandomized(
    data: ObservedDataset,
    model: ParticipationModel,
    arm: int,
    truncate_q: float | None = None,
) -> EstimateReport:
    """Ratio estimator of the non-randomized mean from inverse participation odds.

    Works for every design and either model scale: the weights enter numerator
    and denominator through the same factor, so unknown multiplicative
    constants in the odds cancel. Weights are computed from intercept-free
    slope scores (centered at their minimum before exponentiation), so any
    intercept shift of the model leaves the estimate bit-identical.
    """
    rows = data.trial_mask & (data.a == arm)
    score = model.slope_score(data.x[rows])
    w = np.exp(score.min() - score) / data.prob_treatment(arm)
    w, notes = _truncate(w, truncate_q)
    y = data.y[rows]
    value = float(np.sum(y * w) / np.sum(w))
    return _report(StudyPopulation.NONRANDOMIZED, arm, Method.IPW_HAJEK, value, w, notes)


def trial_only_mean(data: ObservedDataset, arm: int) -> EstimateReport:
    """Unweighted outcome mean among trial participants assigned to ``arm``.

    Estimates the randomized-stratum mean E[Y^a | S=1] under marginal
    randomization; its contrast with the non-randomized estimates is the
    basic transportability diagnostic.
    """
    rows = data.trial_mask & (data.a == arm)
    if not rows.any():
        raise InsufficientData(f"no trial rows in arm {arm}")
    value = float(np.mean(data.y[rows]))
    return _report(
        StudyPopulation.RANDOMIZED, arm, Method.TRIAL_ONLY, value, np.ones(int(rows.sum()))
    )
