"""Apply a study design to a simulated actual population.

Thinning is independent Bernoulli per unit (the per-unit sampling-probability
statements of the designs), driven by a counter-based stream so a fixed seed
gives identical output regardless of partitioning. Fixed-size sampling without
replacement is deliberately not offered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dgp import ActualPopulation, _stream
from .domain import (
    CensusNested,
    Design,
    NonNested,
    ObservedDataset,
    SubsampledNested,
    SubsampledNestedCovariate,
    known_sampling_fractions,
)
from .errors import DataError

# spawn-key prefix for thinning draws; distinct from the dgp module's prefixes
_THIN = 2


def _keep_probabilities(population: ActualPopulation, design: Design, external: np.ndarray) -> np.ndarray:
    """Per-unit Pr[D=1 | S=0] for the external units of the population."""
    if isinstance(design, NonNested):
        if design.u_hidden is None:
            raise DataError("simulating a non-nested design requires u_hidden")
        return np.full(int(external.sum()), design.u_hidden)
    aux = population.x[external, : population.aux_split]
    return known_sampling_fractions(design, aux)


def apply_design(population: ActualPopulation, design: Design, seed: int) -> ObservedDataset:
    """Produce the design-masked observed dataset.

    Every trial participant is kept (Pr[D=1|S=1] = 1 in all designs).
    Non-randomized units are kept independently with the design's probability;
    kept ones are stripped of treatment and outcome. For nested designs the
    number of dropped units is recorded; for non-nested designs it is unknown
    and absent.
    """
    s = population.s == 1
    if not s.any():
        raise DataError("population contains no trial participants")
    external = ~s

    prob = _keep_probabilities(population, design, external)
    u = _stream(seed, _THIN, 0).random(int(external.sum()))
    kept_external = np.zeros(len(population), dtype=bool)
    kept_external[external] = u < prob

    keep = s | kept_external
    n_unsampled = int(external.sum() - kept_external.sum())

    a = np.where(s[keep], population.a[keep].astype(float), np.nan)
    y = np.where(s[keep], population.y[keep], np.nan)
    return ObservedDataset(
        x=population.x[keep],
        s=population.s[keep],
        a=a,
        y=y,
        design=design,
        k=population.aux_split,
        treatment_prob=population.treatment_prob,
        n_unsampled_nonrandomized=None if isinstance(design, NonNested) else n_unsampled,
    )


@dataclass(frozen=True)
class StratumCheck:
    stratum: str
    n: int
    kept: int
    expected_fraction: float
    se: float
    within: bool


@dataclass(frozen=True)
class IndependenceCheckReport:
    """Kept-fraction diagnostics for the design property Pr[D=1 | X, A, Y, S=0] = c.

    Each stratum of the non-randomized units (covariate quartiles, potential-
    outcome signs) should show a kept fraction within 4 binomial standard
    errors of the design's sampling fraction (stratum mean of c(X1) for
    covariate-dependent rules).
    """

    strata: tuple[StratumCheck, ...]

    @property
    def passed(self) -> bool:
        return all(row.within for row in self.strata)


def _stratum_rows(population: ActualPopulation, external_idx: np.ndarray):
    """Yield (label, member mask over external units)."""
    x = population.x[external_idx]
    for j in range(population.p):
        col = x[:, j]
        edges = np.quantile(col, [0.25, 0.5, 0.75])
        bins = np.searchsorted(edges, col, side="left")
        for q in range(4):
            mask = bins == q
            if mask.any():
                yield f"x{j + 1}_q{q + 1}", mask
    for name, vals in (("y0", population.y0[external_idx]), ("y1", population.y1[external_idx])):
        for label, mask in ((f"{name}_neg", vals < 0), (f"{name}_nonneg", vals >= 0)):
            if mask.any():
                yield label, mask


def sampling_indicator_independence_check(
    population: ActualPopulation, design: Design, seed: int
) -> IndependenceCheckReport:
    """Empirically verify that thinning ignores covariates and outcomes.

    Applies the design's thinning to the population, then compares kept
    fractions across strata of X (per-coordinate quartiles) and across
    potential-outcome signs against the design fraction.
    """
    if isinstance(design, CensusNested):
        raise ValueError("the census design keeps everyone; nothing to check")
    if not isinstance(design, (SubsampledNested, SubsampledNestedCovariate, NonNested)):
        raise TypeError(f"not a study design: {design!r}")

    external = population.s == 0
    external_idx = np.flatnonzero(external)
    if external_idx.size == 0:
        raise DataError("population contains no non-randomized units")

    prob = _keep_probabilities(population, design, external)
    u = _stream(seed, _THIN, 0).random(external_idx.size)
    kept = u < prob

    rows = []
    for label, mask in _stratum_rows(population, external_idx):
        n = int(mask.sum())
        k = int(kept[mask].sum())
        expected = float(prob[mask].mean())
        se = float(np.sqrt(np.sum(prob[mask] * (1.0 - prob[mask]))) / n)
        within = abs(k / n - expected) <= 4.0 * se if se > 0 else k == n * expected
        rows.append(StratumCheck(label, n, k, expected, se, within))
    return IndependenceCheckReport(strata=tuple(rows))
