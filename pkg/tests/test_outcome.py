import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import trialport as tp

from conftest import make_tiny_dataset


def constant_outcome_dataset(value=5.0, n_trial=20, n_external=5):
    n = n_trial + n_external
    rng = np.random.Generator(np.random.Philox(61))
    x = rng.normal(size=(n, 1))
    s = np.array([1] * n_trial + [0] * n_external)
    a = np.full(n, np.nan)
    a[:n_trial] = [i % 2 for i in range(n_trial)]
    y = np.full(n, np.nan)
    y[:n_trial] = value
    return tp.ObservedDataset(
        x=x, s=s, a=a, y=y, design=tp.CensusNested(), k=1, n_unsampled_nonrandomized=0
    )


class TestFit:
    def test_constant_outcome_fits_constant(self):
        model = tp.fit_outcome(constant_outcome_dataset(5.0))
        for arm in (0, 1):
            assert model.coef(arm)[0] == pytest.approx(5.0, abs=1e-10)
            assert model.coef(arm)[1] == pytest.approx(0.0, abs=1e-10)
            assert tp.predict(model, arm, (3.7,)) == pytest.approx(5.0, abs=1e-9)

    def test_recovers_generating_coefficients(self, census_1m):
        model = tp.fit_outcome(census_1m)
        n1 = model.n_per_arm[1]
        # conservative standard error: sd(noise) / sqrt(n_arm)
        se = 1.0 / math.sqrt(n1)
        assert abs(model.coef(1)[0] - 2.0) <= 4 * se
        assert abs(model.coef(1)[1] - 1.3) <= 4 * se
        assert abs(model.coef(0)[0] - 1.0) <= 4 * se
        assert abs(model.coef(0)[1] - 1.0) <= 4 * se
        assert model.residual_variance[1] == pytest.approx(1.0, rel=0.05)

    def test_duplicated_column_rank_deficient(self):
        base = make_tiny_dataset(n_trial=20, n_external=2)
        data = tp.ObservedDataset(
            x=np.column_stack([base.x, base.x[:, 0]]),
            s=base.s, a=base.a, y=base.y,
            design=base.design, n_unsampled_nonrandomized=0,
        )
        with pytest.raises(tp.RankDeficient):
            tp.fit_outcome(data)

    def test_insufficient_rows_per_arm(self):
        data = make_tiny_dataset(n_trial=2, n_external=3, p=2)
        with pytest.raises(tp.InsufficientData):
            tp.fit_outcome(data)

    def test_residuals_orthogonal_to_design(self, dgp1):
        pop = tp.simulate_actual_population(dgp1, 20_000)
        data = tp.apply_design(pop, tp.CensusNested(), seed=62)
        model = tp.fit_outcome(data)
        for arm in (0, 1):
            rows = data.trial_mask & (data.a == arm)
            xmat = np.column_stack([np.ones(rows.sum()), data.x[rows]])
            resid = data.y[rows] - np.asarray(tp.predict(model, arm, data.x[rows]))
            moment = xmat.T @ resid
            scale = np.linalg.norm(xmat, axis=0) * np.linalg.norm(resid)
            assert np.all(np.abs(moment) <= 1e-8 * scale)

    def test_external_rows_never_enter_the_fit(self):
        base = make_tiny_dataset(n_trial=30, n_external=10)
        model = tp.fit_outcome(base)
        perturbed_x = base.x.copy()
        perturbed_x[base.external_mask] += 100.0
        perturbed = tp.ObservedDataset(
            x=perturbed_x, s=base.s, a=base.a, y=base.y,
            design=base.design, n_unsampled_nonrandomized=0,
        )
        model2 = tp.fit_outcome(perturbed)
        assert np.array_equal(model.coef_a0, model2.coef_a0)
        assert np.array_equal(model.coef_a1, model2.coef_a1)

    def test_json_round_trip(self):
        model = tp.fit_outcome(make_tiny_dataset(n_trial=30, n_external=2))
        clone = tp.OutcomeModel.from_dict(model.to_dict())
        assert np.array_equal(clone.coef_a0, model.coef_a0)
        assert clone.residual_variance == model.residual_variance


_KNOWN_MODEL = tp.OutcomeModel(
    coef_a0=np.array([1.0, 1.0]),
    coef_a1=np.array([2.0, 1.3]),
    residual_variance=(1.0, 1.0),
    n_per_arm=(10, 10),
)


class TestPredict:
    @pytest.fixture
    def model(self):
        return _KNOWN_MODEL

    def test_known_points(self, model):
        assert tp.predict(model, 1, (0.0,)) == 2.0
        assert tp.predict(model, 1, (1.0,)) == pytest.approx(3.3, rel=1e-15)
        assert tp.predict(model, 0, (2.0,)) == 3.0

    def test_matrix_input(self, model):
        out = tp.predict(model, 1, np.array([[0.0], [1.0]]))
        assert out.shape == (2,)
        assert out[0] == 2.0

    @given(
        x=st.floats(min_value=-50, max_value=50),
        xp=st.floats(min_value=-50, max_value=50),
    )
    def test_linearity(self, x, xp):
        lhs = tp.predict(_KNOWN_MODEL, 1, (x + xp,)) - tp.predict(_KNOWN_MODEL, 1, (xp,))
        assert lhs == pytest.approx(1.3 * x, rel=1e-9, abs=1e-9)

    def test_rejects_unknown_arm(self, model):
        with pytest.raises(ValueError):
            tp.predict(model, 2, (0.0,))
