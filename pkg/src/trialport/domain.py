"""Core data model: study designs, observed records, and the identifiability gate.

Two families of study design are represented. In *nested* designs the trial is
embedded in a sample of the actual population and the sampling probability of
non-randomized individuals is known (a constant ``c``, or a known function of
auxiliary covariates). In *non-nested* (composite dataset) designs the external
sample was obtained separately with an unknown sampling fraction ``u``; the
analyst never learns ``u`` or the number of unsampled individuals.

Per-unit data: every randomized individual contributes covariates, treatment,
and outcome; sampled non-randomized individuals contribute covariates only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Union

import numpy as np

from .errors import DataError, NotIdentifiable


class Estimand(enum.Enum):
    """Quantities whose identifiability depends on the study design."""

    MEAN_TARGET = "mean_target"                              # E[Y^a]
    MEAN_NONRANDOMIZED = "mean_nonrandomized"                # E[Y^a | S=0]
    MARGINAL_PARTICIPATION = "marginal_participation"        # Pr[S=1]
    CONDITIONAL_PARTICIPATION = "conditional_participation"  # Pr[S=1 | X]


@dataclass(frozen=True)
class CovariateVector:
    """One unit's covariates.

    ``aux_split`` partitions the vector: the first ``aux_split`` entries are
    auxiliary covariates available for every member of the actual population
    (covariate-dependent sampling may only depend on these); the rest are
    measured only on units that contribute data.
    """

    values: tuple[float, ...]
    aux_split: int = 0

    def __post_init__(self):
        if not (0 <= self.aux_split <= len(self.values)):
            raise DataError(f"aux_split {self.aux_split} out of range for p={len(self.values)}")
        if not all(math.isfinite(v) for v in self.values):
            raise DataError("covariate values must be finite")

    @property
    def aux(self) -> tuple[float, ...]:
        return self.values[: self.aux_split]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class TruthRecord:
    """One superpopulation unit with both potential outcomes (simulator-side only)."""

    x: CovariateVector
    s: int
    a: int | None
    y0: float
    y1: float
    y: float | None
    d: int = 1


@dataclass(frozen=True)
class TrialParticipant:
    """Observed record for a randomized individual (S=1, D=1)."""

    x: CovariateVector
    a: int
    y: float


@dataclass(frozen=True)
class SampledNonRandomized:
    """Observed record for a sampled non-randomized individual (S=0, D=1)."""

    x: CovariateVector


# ---------------------------------------------------------------------------
# Study designs


@dataclass(frozen=True)
class CensusNested:
    """Nested design where the whole actual population contributes data."""


@dataclass(frozen=True)
class SubsampledNested:
    """Nested design keeping non-randomized units with known constant probability ``c``."""

    c: float

    def __post_init__(self):
        if not (isinstance(self.c, (int, float)) and 0.0 < self.c <= 1.0):
            raise DataError(f"sampling fraction c must be in (0, 1], got {self.c}")


@dataclass(frozen=True)
class StepRule:
    """Sampling fraction that steps between two values on one auxiliary coordinate.

    Returns ``high`` where the coordinate exceeds ``cutoff``, else ``low``.
    Serializable, picklable stand-in for an arbitrary sampling-rule callable.
    """

    coord: int = 0
    cutoff: float = 0.0
    low: float = 0.5
    high: float = 1.0

    def __post_init__(self):
        for v in (self.low, self.high):
            if not 0.0 < v <= 1.0:
                raise DataError(f"step rule values must be in (0, 1], got {v}")
        if self.coord < 0:
            raise DataError("step rule coordinate must be non-negative")

    def __call__(self, aux: np.ndarray) -> np.ndarray:
        aux = np.asarray(aux, dtype=float)
        if aux.ndim == 1:
            aux = aux.reshape(1, -1)
        if self.coord >= aux.shape[1]:
            raise DataError(
                f"step rule needs auxiliary coordinate {self.coord}, "
                f"but only {aux.shape[1]} are available"
            )
        return np.where(aux[:, self.coord] > self.cutoff, self.high, self.low)


@dataclass(frozen=True)
class SubsampledNestedCovariate:
    """Nested design whose sampling fraction is a known function of auxiliary covariates.

    ``c_rule`` maps an (n, k) block of auxiliary covariates to per-row sampling
    fractions in (0, 1]. Use :class:`StepRule` for a serializable rule.
    """

    c_rule: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NonNested:
    """Composite dataset design: external sampling fraction ``u`` is unknown.

    ``u_hidden`` exists only so simulators and oracles can generate data; it is
    stripped before a dataset ever reaches estimator code (see
    :meth:`redacted`) and is never serialized.
    """

    u_hidden: float | None = None

    def __post_init__(self):
        if self.u_hidden is not None and not (0.0 < self.u_hidden <= 1.0):
            raise DataError(f"u_hidden must be in (0, 1], got {self.u_hidden}")

    def redacted(self) -> "NonNested":
        return NonNested(u_hidden=None)


Design = Union[CensusNested, SubsampledNested, SubsampledNestedCovariate, NonNested]

_NESTED_TYPES = (CensusNested, SubsampledNested, SubsampledNestedCovariate)


def is_nested(design: Design) -> bool:
    return isinstance(design, _NESTED_TYPES)


def design_name(design: Design) -> str:
    return {
        CensusNested: "census_nested",
        SubsampledNested: "subsampled_nested",
        SubsampledNestedCovariate: "subsampled_nested_covariate",
        NonNested: "non_nested",
    }[type(design)]


def redacted(design: Design) -> Design:
    """Estimator-facing view of a design: hides the simulator-only ``u``."""
    if isinstance(design, NonNested):
        return design.redacted()
    return design


def known_sampling_fractions(design: Design, aux: np.ndarray) -> np.ndarray:
    """Known per-row sampling fractions of non-randomized units.

    ``aux`` is the (n, k) auxiliary-covariate block of the rows in question
    (a 1-D input is treated as a single row).
    Raises :class:`NotIdentifiable` for non-nested designs, where the fraction
    is unknown by definition.
    """
    aux = np.asarray(aux, dtype=float)
    if aux.ndim == 1:
        aux = aux.reshape(1, -1)
    if aux.ndim != 2:
        raise DataError(f"auxiliary block must be 2-D, got shape {aux.shape}")
    n = aux.shape[0]
    if isinstance(design, CensusNested):
        return np.ones(n)
    if isinstance(design, SubsampledNested):
        return np.full(n, design.c)
    if isinstance(design, SubsampledNestedCovariate):
        frac = np.asarray(design.c_rule(aux), dtype=float)
        if frac.shape != (n,):
            raise DataError(f"sampling rule returned shape {frac.shape}, expected ({n},)")
        if np.any(frac <= 0.0) or np.any(frac > 1.0):
            raise DataError("sampling rule returned fractions outside (0, 1]")
        return frac
    raise NotIdentifiable(
        "sampling fraction of non-randomized units is unknown under a non-nested design"
    )


_ALL_ESTIMANDS = frozenset(Estimand)
_NON_NESTED_ESTIMANDS = frozenset({Estimand.MEAN_NONRANDOMIZED})


def identification_matrix(design: Design) -> frozenset[Estimand]:
    """Which estimands the study design identifies.

    Nested designs (census, sub-sampled, covariate sub-sampled) identify all
    four; non-nested designs identify only the mean among non-randomized
    individuals, because the unknown sampling fraction enters every other
    quantity without cancelling.
    """
    if is_nested(design):
        return _ALL_ESTIMANDS
    if isinstance(design, NonNested):
        return _NON_NESTED_ESTIMANDS
    raise TypeError(f"not a study design: {design!r}")


# ---------------------------------------------------------------------------
# Observed dataset


@dataclass(frozen=True, eq=False)
class ObservedDataset:
    """Design-masked analysis data: one row per sampled unit, in column form.

    Rows with ``s == 1`` are trial participants carrying treatment and outcome;
    rows with ``s == 0`` are sampled non-randomized individuals carrying
    covariates only (``a``/``y`` are NaN there by contract).
    ``n_unsampled_nonrandomized`` counts the dropped S=0 units and is present
    exactly when the design is nested.
    """

    x: np.ndarray
    s: np.ndarray
    a: np.ndarray
    y: np.ndarray
    design: Design
    k: int = 0
    treatment_prob: float = 0.5
    n_unsampled_nonrandomized: int | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        s = np.asarray(self.s, dtype=np.int8)
        a = np.asarray(self.a, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        # u must never be visible downstream, even on hand-built datasets
        object.__setattr__(self, "design", redacted(self.design))
        self._validate()
        for arr in (x, s, a, y):
            arr.flags.writeable = False

    def _validate(self):
        n = self.x.shape[0]
        if self.s.shape != (n,) or self.a.shape != (n,) or self.y.shape != (n,):
            raise DataError("x, s, a, y must have matching first dimension")
        if not np.all(np.isfinite(self.x)):
            raise DataError("covariates must be finite")
        if not np.all((self.s == 0) | (self.s == 1)):
            raise DataError("s must be 0/1")
        trial = self.s == 1
        if not trial.any():
            raise DataError("dataset must contain at least one trial participant")
        if not np.all(np.isfinite(self.a[trial])) or not np.all(np.isfinite(self.y[trial])):
            raise DataError("trial rows must carry finite treatment and outcome")
        if not np.all(np.isin(self.a[trial], (0.0, 1.0))):
            raise DataError("treatment must be binary")
        for arm in (0, 1):
            if not np.any(self.a[trial] == arm):
                raise DataError(f"dataset must contain at least one trial participant in arm {arm}")
        ext = ~trial
        if np.any(np.isfinite(self.a[ext])) or np.any(np.isfinite(self.y[ext])):
            raise DataError("non-randomized rows must not carry treatment or outcome")
        if not (0 <= self.k <= self.p):
            raise DataError(f"k={self.k} out of range for p={self.p}")
        if isinstance(self.design, SubsampledNestedCovariate) and self.k < 1:
            raise DataError("covariate-dependent sampling requires at least one auxiliary covariate")
        if not (0.0 < self.treatment_prob < 1.0):
            raise DataError("treatment_prob must be in (0, 1)")
        if is_nested(self.design):
            if self.n_unsampled_nonrandomized is None or self.n_unsampled_nonrandomized < 0:
                raise DataError("nested designs must carry a non-negative unsampled count")
        elif self.n_unsampled_nonrandomized is not None:
            raise DataError("the unsampled count is unknown under a non-nested design")

    # -- shapes and masks ---------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def trial_mask(self) -> np.ndarray:
        return self.s == 1

    @property
    def external_mask(self) -> np.ndarray:
        return self.s == 0

    @property
    def n_trial(self) -> int:
        return int(self.trial_mask.sum())

    @property
    def n_external(self) -> int:
        return int(self.external_mask.sum())

    @property
    def aux(self) -> np.ndarray:
        """Auxiliary block X1 = x[:, :k]."""
        return self.x[:, : self.k]

    def prob_treatment(self, arm: int) -> float:
        """Known randomization probability Pr[A=arm | X, S=1]."""
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm}")
        return self.treatment_prob if arm == 1 else 1.0 - self.treatment_prob

    def records(self) -> Iterator[TrialParticipant | SampledNonRandomized]:
        """Lazy per-row record view (the unsampled tally is not a record)."""
        for i in range(self.n_rows):
            xv = CovariateVector(tuple(self.x[i]), self.k)
            if self.s[i] == 1:
                yield TrialParticipant(xv, int(self.a[i]), float(self.y[i]))
            else:
                yield SampledNonRandomized(xv)
