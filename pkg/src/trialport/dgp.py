"""Parametric data-generating processes and the brute-force Monte Carlo oracle.

The generating family is fixed so that the model classes used downstream are
correctly specified: logistic trial participation in the covariates, constant
randomization probability inside the trial, and linear per-arm outcome means
with additive Gaussian noise. Potential outcomes are generated from covariates
alone, so exchangeability over participation and positivity hold by
construction (participation probabilities are strictly inside (0, 1) for every
finite covariate value).

Randomness is counter-based (Philox). Each field (covariate coordinate,
participation draw, treatment draw, noise draws) gets its own stream keyed by
``(seed, field tag)`` via ``numpy.random.SeedSequence`` spawn keys, and record
``i`` consumes the i-th variate of each stream. Output therefore depends only
on ``(seed, record index)``, never on scheduling or partitioning.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np

from .domain import CovariateVector, TruthRecord
from .errors import DataError


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd) and self.sd >= 0):
            raise DataError("normal covariate needs finite mean and sd >= 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(self.mean, self.sd, n)

    def expectation(self) -> float:
        return self.mean


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DataError("bernoulli covariate needs p in [0, 1]")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return (rng.random(n) < self.p).astype(float)

    def expectation(self) -> float:
        return self.p


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo <= self.hi):
            raise DataError("uniform covariate needs finite lo <= hi")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, n)

    def expectation(self) -> float:
        return 0.5 * (self.lo + self.hi)


CovariateDist = Union[Normal, Bernoulli, Uniform]


@dataclass(frozen=True)
class DgpSpec:
    """Full description of a generating process.

    Fields
    ------
    covariates : per-coordinate distributions, independent coordinates.
    participation_logit : (g0, g1..gp); Pr[S=1|X] = logistic(g0 + g.X).
    treatment_prob : Pr[A=1|X, S=1], a constant in (0, 1).
    outcome_mean_a0 / outcome_mean_a1 : (b0, b1..bp) linear mean per arm.
    noise_sd : sd of the additive outcome noise (two independent draws per
        unit, one per potential outcome; their joint law is irrelevant to the
        marginal-mean estimands and unverifiable from data).
    seed : 64-bit stream seed.
    aux_split : how many leading coordinates are auxiliary (available on the
        whole actual population; covariate-dependent sampling may use them).
    """

    covariates: tuple[CovariateDist, ...]
    participation_logit: tuple[float, ...]
    treatment_prob: float
    outcome_mean_a0: tuple[float, ...]
    outcome_mean_a1: tuple[float, ...]
    noise_sd: float
    seed: int
    aux_split: int = 0

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "participation_logit", tuple(float(v) for v in self.participation_logit))
        object.__setattr__(self, "outcome_mean_a0", tuple(float(v) for v in self.outcome_mean_a0))
        object.__setattr__(self, "outcome_mean_a1", tuple(float(v) for v in self.outcome_mean_a1))
        p = self.p
        for name in ("participation_logit", "outcome_mean_a0", "outcome_mean_a1"):
            coefs = getattr(self, name)
            if len(coefs) != p + 1:
                raise DataError(f"{name} must have length p+1={p + 1}, got {len(coefs)}")
            if not all(math.isfinite(v) for v in coefs):
                raise DataError(f"{name} must be finite")
        if not (0.0 < self.treatment_prob < 1.0):
            raise DataError("treatment_prob must be in (0, 1)")
        if not (math.isfinite(self.noise_sd) and self.noise_sd >= 0.0):
            raise DataError("noise_sd must be finite and >= 0")
        if not (0 <= self.aux_split <= p):
            raise DataError(f"aux_split {self.aux_split} out of range for p={p}")

    @property
    def p(self) -> int:
        return len(self.covariates)

    def outcome_mean(self, arm: int, x: np.ndarray) -> np.ndarray:
        coefs = self.outcome_mean_a1 if arm == 1 else self.outcome_mean_a0
        b = np.asarray(coefs)
        return b[0] + np.atleast_2d(x) @ b[1:]

    def participation_prob(self, x: np.ndarray) -> np.ndarray:
        g = np.asarray(self.participation_logit)
        eta = g[0] + np.atleast_2d(x) @ g[1:]
        return 1.0 / (1.0 + np.exp(-eta))

    def covariate_expectations(self) -> np.ndarray:
        return np.array([d.expectation() for d in self.covariates])


class ActualPopulation(Sequence):
    """Column-store of simulated units; behaves as a sequence of TruthRecord."""

    def __init__(self, x, s, a, y0, y1, y, aux_split, treatment_prob):
        self.x = np.asarray(x, dtype=float)
        self.s = np.asarray(s, dtype=np.int8)
        self.a = np.asarray(a, dtype=np.int8)  # -1 where undefined (s == 0)
        self.y0 = np.asarray(y0, dtype=float)
        self.y1 = np.asarray(y1, dtype=float)
        self.y = np.asarray(y, dtype=float)  # NaN where s == 0
        self.d = np.ones(len(self.s), dtype=np.int8)
        self.aux_split = int(aux_split)
        self.treatment_prob = float(treatment_prob)

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i) -> TruthRecord:
        if isinstance(i, slice):
            raise TypeError("slicing an ActualPopulation is not supported")
        xv = CovariateVector(tuple(self.x[i]), self.aux_split)
        s = int(self.s[i])
        return TruthRecord(
            x=xv,
            s=s,
            a=int(self.a[i]) if s == 1 else None,
            y0=float(self.y0[i]),
            y1=float(self.y1[i]),
            y=float(self.y[i]) if s == 1 else None,
            d=int(self.d[i]),
        )

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_trial(self) -> int:
        return int((self.s == 1).sum())


def _stream(seed: int, *key: int) -> np.random.Generator:
    """Philox stream for one field, keyed by (seed, key...)."""
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


# spawn-key prefixes: 0 = simulation fields, 1 = oracle fields (disjoint even
# when the same seed is reused for both)
_SIM, _ORACLE = 0, 1


def _draw_fields(dgp: DgpSpec, n: int, seed: int, prefix: int):
    p = dgp.p
    x = np.empty((n, p))
    for j, dist in enumerate(dgp.covariates):
        x[:, j] = dist.sample(_stream(seed, prefix, 0, j), n)
    u_s = _stream(seed, prefix, 1, 0).random(n)
    u_a = _stream(seed, prefix, 1, 1).random(n)
    z0 = _stream(seed, prefix, 1, 2).standard_normal(n)
    z1 = _stream(seed, prefix, 1, 3).standard_normal(n)
    return x, u_s, u_a, z0, z1


def simulate_actual_population(dgp: DgpSpec, n: int, seed: int | None = None) -> ActualPopulation:
    """Draw ``n`` i.i.d. units from the superpopulation.

    Treatment is drawn only for trial participants; everyone is initially
    sampled (``d = 1``) — study-design thinning happens separately. The
    realized outcome is set by consistency from the assigned arm's potential
    outcome. Deterministic given ``(seed, n)``.
    """
    if n < 1:
        raise DataError(f"population size must be >= 1, got {n}")
    if seed is None:
        seed = dgp.seed
    x, u_s, u_a, z0, z1 = _draw_fields(dgp, n, seed, _SIM)

    s = (u_s < dgp.participation_prob(x)).astype(np.int8)
    a = np.where(s == 1, (u_a < dgp.treatment_prob).astype(np.int8), np.int8(-1))
    y0 = dgp.outcome_mean(0, x) + dgp.noise_sd * z0
    y1 = dgp.outcome_mean(1, x) + dgp.noise_sd * z1
    y = np.where(s == 1, np.where(a == 1, y1, y0), np.nan)
    return ActualPopulation(x, s, a, y0, y1, y, dgp.aux_split, dgp.treatment_prob)


@dataclass(frozen=True)
class OracleTruth:
    """Monte Carlo truth for every estimand, with per-entry standard errors.

    Tuples are indexed by arm (entry 0 for a=0, entry 1 for a=1).
    """

    mean_target: tuple[float, float]
    mean_nonrandomized: tuple[float, float]
    mean_randomized: tuple[float, float]
    pr_s1: float
    mc_sample_size: int
    se_mean_target: tuple[float, float]
    se_mean_nonrandomized: tuple[float, float]
    se_mean_randomized: tuple[float, float]
    se_pr_s1: float


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    m = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values)))
    return m, se


def oracle_truth(dgp: DgpSpec, m: int, oracle_seed: int | None = None) -> OracleTruth:
    """Brute-force oracle: simulate ``m`` units and average potential outcomes.

    Uses streams disjoint from :func:`simulate_actual_population` even when the
    seeds coincide. Because the outcome means are linear, the target means have
    the closed form b0 + b.E[X]; the Monte Carlo estimates are cross-checked
    against it (6 standard errors) as an internal consistency guard.
    """
    if m < 100_000:
        raise DataError(f"oracle sample size must be >= 1e5, got {m}")
    if oracle_seed is None:
        oracle_seed = dgp.seed
    x, u_s, _, z0, z1 = _draw_fields(dgp, m, oracle_seed, _ORACLE)
    s = u_s < dgp.participation_prob(x)
    if s.sum() < 2 or (~s).sum() < 2:
        raise DataError("oracle needs at least two units in each participation stratum")
    ys = (
        dgp.outcome_mean(0, x) + dgp.noise_sd * z0,
        dgp.outcome_mean(1, x) + dgp.noise_sd * z1,
    )

    target, se_target = zip(*(_mean_se(ya) for ya in ys))
    nonrand, se_nonrand = zip(*(_mean_se(ya[~s]) for ya in ys))
    rand, se_rand = zip(*(_mean_se(ya[s]) for ya in ys))
    pr = float(s.mean())
    se_pr = math.sqrt(pr * (1.0 - pr) / m)

    ex = dgp.covariate_expectations()
    for arm, coefs in enumerate((dgp.outcome_mean_a0, dgp.outcome_mean_a1)):
        closed = coefs[0] + float(np.dot(coefs[1:], ex))
        if abs(target[arm] - closed) > 6.0 * max(se_target[arm], 1e-300):
            raise RuntimeError(
                f"oracle self-check failed for arm {arm}: "
                f"MC {target[arm]:.6g} vs closed form {closed:.6g}"
            )

    return OracleTruth(
        mean_target=target,
        mean_nonrandomized=nonrand,
        mean_randomized=rand,
        pr_s1=pr,
        mc_sample_size=m,
        se_mean_target=se_target,
        se_mean_nonrandomized=se_nonrand,
        se_mean_randomized=se_rand,
        se_pr_s1=se_pr,
    )
