import dataclasses
import math

import numpy as np
import pytest

import trialport as tp
from trialport.estimators import Method, StudyPopulation
from trialport.experiment import splitmix64

from support import oracles


def spec(method, population, arm=1):
    return tp.EstimatorSpec(Method(method), StudyPopulation(population), arm)


def small_config(dgp, design, **kwargs):
    defaults = dict(n=2_000, replications=20, master_seed=901, oracle_m=200_000)
    defaults.update(kwargs)
    return tp.ExperimentConfig(dgp=dgp, design=design, **defaults)


class TestSeedMixing:
    def test_splitmix64_reference_vector(self):
        # first output of the splitmix64 stream seeded with 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_mixing_is_deterministic_and_spread(self):
        seeds = {tp.mix_seed(42, 1, r) for r in range(1000)}
        assert len(seeds) == 1000
        assert tp.mix_seed(42, 1, 5) == tp.mix_seed(42, 1, 5)
        assert tp.mix_seed(42, 1, 5) != tp.mix_seed(42, 2, 5)


class TestEstimatorSpec:
    def test_rejects_invalid_combinations(self):
        with pytest.raises(ValueError):
            spec("trial_only", "target")
        with pytest.raises(ValueError):
            spec("ipw_ht", "nonrandomized")
        with pytest.raises(ValueError):
            tp.EstimatorSpec(Method.GFORMULA, StudyPopulation.TARGET, arm=2)

    def test_default_grid_covers_both_arms(self):
        specs = tp.default_estimators()
        assert len(specs) == 10
        assert {s.arm for s in specs} == {0, 1}


class TestRunExperiment:
    def test_summary_fields_consistent(self, dgp1):
        cfg = small_config(dgp1, tp.CensusNested())
        summary = tp.run_experiment(cfg)
        assert len(summary.rows) == 10
        for row in summary.rows:
            assert row.bias == row.mean - row.truth  # exact by construction
            assert row.replications == 20
            assert row.not_identifiable_frac == 0.0
            assert row.rmse >= abs(row.bias) - 1e-15

    def test_reproducible_and_worker_independent(self, dgp1):
        cfg = small_config(dgp1, tp.SubsampledNested(c=0.5), replications=8)
        first = tp.run_experiment(cfg, workers=1)
        second = tp.run_experiment(cfg, workers=1)
        parallel = tp.run_experiment(cfg, workers=2)
        assert first.csv_text() == second.csv_text() == parallel.csv_text()

    def test_non_nested_target_is_fully_gated(self, dgp1):
        cfg = small_config(
            dgp1,
            tp.NonNested(u_hidden=0.3),
            estimators=(spec("gformula", "target"), spec("gformula", "nonrandomized")),
        )
        summary = tp.run_experiment(cfg)
        target_row = summary.rows[0]
        assert target_row.not_identifiable_frac == 1.0
        assert math.isnan(target_row.mean)
        assert summary.rows[1].not_identifiable_frac == 0.0

    def test_generalizability_violation_biases_by_the_shift(self, dgp1):
        delta = 0.7
        cfg = small_config(
            dgp1,
            tp.CensusNested(),
            n=5_000,
            replications=80,
            misspecify=tp.MisspecifySpec(s_shift=delta),
            estimators=(spec("gformula", "nonrandomized"),),
            oracle_m=2_000_000,
        )
        summary = tp.run_experiment(cfg)
        row = summary.rows[0]
        # estimator keeps its unshifted limit, truth moved up by delta
        assert row.bias == pytest.approx(-delta, abs=4 * row.sd / math.sqrt(80) + 0.01)

    def test_failures_are_tallied_not_fatal(self, dgp1):
        # tiny populations: some replications lack a treatment arm entirely
        cfg = small_config(dgp1, tp.CensusNested(), n=12, replications=60)
        summary = tp.run_experiment(cfg)
        assert any(row.n_failed > 0 for row in summary.rows)

    def test_census_equals_subsampled_c1(self, dgp1):
        census = tp.run_experiment(small_config(dgp1, tp.CensusNested()))
        sub1 = tp.run_experiment(small_config(dgp1, tp.SubsampledNested(c=1.0)))
        for r_census, r_sub in zip(census.rows, sub1.rows):
            assert r_census.mean == r_sub.mean
            assert r_census.sd == r_sub.sd

    def test_misspecified_participation_biases_weighting(self, dgp1):
        cfg = small_config(
            dgp1,
            tp.CensusNested(),
            n=20_000,
            replications=40,
            misspecify=tp.MisspecifySpec(participation=True),
            estimators=(spec("ipw_hajek", "target"),),
            oracle_m=2_000_000,
        )
        summary = tp.run_experiment(cfg)
        row = summary.rows[0]
        # intercept-only participation model cannot remove covariate selection
        assert abs(row.bias) > 6 * row.sd / math.sqrt(40)


class TestEquivalenceOfObjectives:
    def test_weighted_and_census_fits_share_their_limit(self, dgp1):
        # two-sample comparison of fitted coefficients over replications
        R, n = 500, 10_000
        census_coefs, weighted_coefs = [], []
        for r in range(R):
            pop = tp.simulate_actual_population(dgp1, n, seed=tp.mix_seed(31, 1, r))
            census = tp.apply_design(pop, tp.CensusNested(), seed=tp.mix_seed(31, 2, r))
            census_coefs.append(tp.fit_participation(census).coefficients)
            pop2 = tp.simulate_actual_population(dgp1, n, seed=tp.mix_seed(31, 3, r))
            sub = tp.apply_design(pop2, tp.SubsampledNested(c=0.3), seed=tp.mix_seed(31, 4, r))
            weighted_coefs.append(tp.fit_participation(sub).coefficients)
        census_coefs = np.array(census_coefs)
        weighted_coefs = np.array(weighted_coefs)
        for j in range(2):
            diff = census_coefs[:, j].mean() - weighted_coefs[:, j].mean()
            se = math.sqrt(
                census_coefs[:, j].var(ddof=1) / R + weighted_coefs[:, j].var(ddof=1) / R
            )
            # alpha = 0.01 two-sided with a two-coefficient Bonferroni split
            assert abs(diff) <= 2.81 * se, f"coef {j}: diff {diff:.5f}, se {se:.5f}"


class TestBootstrap:
    def test_constant_outcome_gives_zero_se(self):
        n = 60
        rng = np.random.Generator(np.random.Philox(81))
        x = rng.normal(size=(n, 1))
        s = np.array([1] * 40 + [0] * 20)
        a = np.full(n, np.nan)
        a[:40] = [i % 2 for i in range(40)]
        y = np.full(n, np.nan)
        y[:40] = 3.25
        data = tp.ObservedDataset(
            x=x, s=s, a=a, y=y, design=tp.CensusNested(), k=1, n_unsampled_nonrandomized=0
        )
        se = tp.bootstrap_se(data, spec("trial_only", "randomized"), 150, seed=1)
        assert se == 0.0

    def test_rejects_small_b(self, tiny_dataset):
        with pytest.raises(ValueError):
            tp.bootstrap_se(tiny_dataset, spec("trial_only", "randomized"), 50, seed=1)

    def test_doubling_b_is_stable(self, dgp1):
        pop = tp.simulate_actual_population(dgp1, 4_000)
        data = tp.apply_design(pop, tp.CensusNested(), seed=82)
        est = spec("gformula", "target")
        se_200 = tp.bootstrap_se(data, est, 200, seed=2)
        se_400 = tp.bootstrap_se(data, est, 400, seed=3)
        # bootstrap-noise scale of an SE estimate is roughly se / sqrt(2B)
        assert abs(se_400 - se_200) <= 4 * se_200 / math.sqrt(2 * 200)

    def test_calibrated_against_empirical_sd(self, dgp1):
        est = spec("gformula", "target")
        cfg = small_config(
            dgp1, tp.CensusNested(), n=10_000, replications=500, estimators=(est,),
            oracle_m=200_000,
        )
        empirical_sd = tp.run_experiment(cfg).rows[0].sd
        for seed in (11, 12, 13):
            pop = tp.simulate_actual_population(dgp1, 10_000, seed=seed)
            data = tp.apply_design(pop, tp.CensusNested(), seed=seed + 100)
            boot = tp.bootstrap_se(data, est, 200, seed=seed)
            assert boot == pytest.approx(empirical_sd, rel=0.3)


class TestDesignComparison:
    def test_single_cell_single_estimator_gives_one_row(self, dgp1):
        cfg = small_config(
            dgp1, tp.SubsampledNested(c=0.5), estimators=(spec("gformula", "target"),)
        )
        rows = tp.design_comparison([cfg])
        assert len(rows) == 1
        assert rows[0].c == 0.5

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError):
            tp.design_comparison([])

    def test_sd_does_not_degrade_with_fuller_sampling(self, dgp1):
        est = (spec("gformula", "target"),)
        rows = {}
        for c in (0.1, 1.0):
            cfg = small_config(
                dgp1, tp.SubsampledNested(c=c), n=2_000, replications=400,
                estimators=est, oracle_m=200_000,
            )
            rows[c] = tp.run_experiment(cfg).rows[0]
        noise = rows[1.0].sd / math.sqrt(2 * 400)
        assert rows[1.0].sd <= rows[0.1].sd + 2 * noise
