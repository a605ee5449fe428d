"""Tests for the synthetic data generators and missingness injection."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from nngp_impute.benchmark import SCENARIOS
from nngp_impute.errors import InputDataError
from nngp_impute.pattern_model import ColumnKind, Dataset, detect_patterns
from nngp_impute.synthetic import (
    InjectionRule,
    InjectionSpec,
    Mechanism,
    Rearrangement,
    SynthConfig,
    adni_injection_spec,
    append_binary,
    default_blocks,
    gen_ar1,
    gen_mar_mask,
    gen_mcar_mask,
    gen_mnar_mask,
    gen_response,
    gen_varying_rate,
    generate_scenario,
    inject_missingness,
    rearrange_columns,
    rearrangement_order,
    varying_rate_config,
)

SMALL = SynthConfig(n=80, p=20, q=(13, 15, 19), seed=3)


class TestRearrangement:
    def test_five_block_p10(self):
        # a1 a2 a3 a6 a7 a8 a4 a9 a5 a10
        assert rearrangement_order(10).tolist() == [0, 1, 2, 5, 6, 7, 3, 8, 4, 9]

    def test_ten_block(self):
        order = rearrangement_order(20, Rearrangement.TEN_BLOCK)
        assert order.tolist() == [
            0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15, 6, 8, 16, 18, 7, 9, 17, 19,
        ]

    @pytest.mark.parametrize("p", [5, 12, 50, 1000])
    @pytest.mark.parametrize("scheme", list(Rearrangement))
    def test_is_permutation(self, p, scheme):
        order = rearrangement_order(p, scheme)
        assert sorted(order.tolist()) == list(range(p))

    def test_rearrange_columns(self):
        a = np.arange(10.0).reshape(1, 10)
        assert rearrange_columns(a).tolist() == [[0, 1, 2, 5, 6, 7, 3, 8, 4, 9]]


class TestGenerators:
    def test_ar1_shape_and_seed(self):
        a = gen_ar1(SMALL)
        assert a.shape == (80, 20)
        np.testing.assert_array_equal(a, gen_ar1(SMALL))

    def test_ar1_recursion_without_noise(self):
        config = SynthConfig(n=5, p=6, q=(1, 2, 3), rho=0.5, noise_scale=0.0)
        a = gen_ar1(config)
        np.testing.assert_allclose(a[:, 3], 0.125 * a[:, 0])

    def test_ar1_exponential_is_positive(self):
        config = SynthConfig(
            n=50, p=10, q=(1, 2, 3), noise="exponential", noise_scale=0.4,
            first_col="exponential", first_col_scale=2.0,
        )
        assert np.all(gen_ar1(config) > 0)

    def test_response_noise_free(self):
        x = np.arange(12.0).reshape(3, 4)
        y = gen_response(x, (1, 2, 4), 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(y, x[:, 0] + x[:, 1] + x[:, 3])

    def test_response_bad_q(self):
        with pytest.raises(InputDataError):
            gen_response(np.zeros((3, 4)), (1, 2, 5), 0.5, np.random.default_rng(0))

    def test_append_binary(self):
        x = np.zeros((2, 100))
        x[0, [9, 49, 99]] = 1.0
        out = append_binary(x)
        assert out.shape == (2, 101)
        assert out[:, 100].tolist() == [1.0, 0.0]

    def test_append_binary_needs_100_columns(self):
        with pytest.raises(InputDataError):
            append_binary(np.zeros((2, 50)))


class TestMasks:
    def test_default_blocks(self):
        assert default_blocks(1000) == ((601, 800), (801, 1000))
        assert default_blocks(1000, 1001) == ((601, 800), (801, 1001))

    @pytest.mark.parametrize("make", ["mar", "mnar", "mcar"])
    def test_block_structure(self, make):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(200, 50))
        y = x[:, :3].sum(axis=1)
        a = (1.0, -2.0, 3.0, 0.0, 2.0, -2.0)
        if make == "mar":
            mask = gen_mar_mask(x, y, a, 50, rng)
        elif make == "mnar":
            mask = gen_mnar_mask(x, y, a, 50, rng)
        else:
            mask = gen_mcar_mask(200, 50, 0.4, rng)
        assert mask[:, :30].all()
        for block in (slice(30, 40), slice(40, 50)):
            rows = mask[:, block]
            assert np.all(rows.all(axis=1) | (~rows).all(axis=1))
        dataset = Dataset(values=x, mask=mask)
        assert detect_patterns(dataset).k <= 4
        assert 0 < (~mask).mean() < 0.4

    def test_mcar_rate(self):
        mask = gen_mcar_mask(5000, 10, 0.3, np.random.default_rng(0))
        assert (~mask[:, 6]).mean() == pytest.approx(0.3, abs=0.03)


class TestInjection:
    @pytest.fixture
    def panel(self) -> Dataset:
        rng = np.random.default_rng(0)
        values = rng.normal(size=(30, 2301))
        return Dataset(values=values, mask=np.ones_like(values, dtype=bool), response_col=2300)

    @pytest.mark.parametrize("mechanism", [Mechanism.MAR, Mechanism.MNAR])
    def test_adni_blocks(self, panel, mechanism):
        injected = inject_missingness(panel, adni_injection_spec(mechanism), seed=2)
        assert injected.mask[:, 2000:].all()
        for block in (slice(0, 1000), slice(1000, 2000)):
            rows = injected.mask[:, block]
            assert np.all(rows.all(axis=1) | (~rows).all(axis=1))
        np.testing.assert_array_equal(injected.values, panel.values)

    def test_adni_rejects_mcar(self):
        with pytest.raises(ValueError):
            adni_injection_spec(Mechanism.MCAR)

    def test_mar_driver_overlap(self, panel):
        spec = InjectionSpec((InjectionRule((1, 10), 0.0, (5, 15), 1.0),), Mechanism.MAR)
        with pytest.raises(InputDataError, match="overlap"):
            inject_missingness(panel, spec)

    def test_response_target_rejected(self, panel):
        spec = InjectionSpec((InjectionRule((2290, 2301), 0.0),))
        with pytest.raises(InputDataError):
            inject_missingness(panel, spec)

    def test_requires_complete_input(self, toy_dataset):
        spec = InjectionSpec((InjectionRule((1, 2), 0.0),))
        with pytest.raises(InputDataError):
            inject_missingness(toy_dataset, spec)

    def test_range_checked(self, panel):
        spec = InjectionSpec((InjectionRule((0, 10), 0.0),))
        with pytest.raises(InputDataError):
            inject_missingness(panel, spec)


class TestSynthConfig:
    def test_invalid_q(self):
        with pytest.raises(ValueError):
            SynthConfig(p=20, q=(1, 2, 21))

    def test_binary_needs_wide_x(self):
        with pytest.raises(ValueError):
            SynthConfig(p=50, q=(1, 2, 3), binary_append=True)

    def test_from_dict(self):
        config = SynthConfig.from_dict({
            "n": 50, "p": 20, "q": [1, 2, 3], "mechanism": "mnar",
            "injection": {"rules": [{"target_cols": [15, 20], "intercept": -1.0}]},
        })
        assert config.mechanism is Mechanism.MNAR
        assert config.injection.rules[0].target_cols == (15, 20)
        assert SynthConfig.from_dict(config.to_dict()) == config

    def test_from_dict_unknown_field(self):
        with pytest.raises(InputDataError, match="bogus"):
            SynthConfig.from_dict({"bogus": 1})


class TestGenerateScenario:
    def test_sample(self):
        sample = generate_scenario(SMALL)
        dataset = sample.dataset
        assert dataset.values.shape == (80, 21)
        assert dataset.column_names[-1] == "y"
        assert dataset.response_col == 20
        assert dataset.mask[:, 20].all()
        np.testing.assert_array_equal(
            dataset.values[dataset.mask], sample.truth[dataset.mask]
        )
        assert sample.true_beta.tolist() == [0.0, 1.0, 1.0, 1.0]
        assert sample.regression.predictor_cols == (12, 14, 18)

    def test_seeded(self):
        first, second = generate_scenario(SMALL), generate_scenario(SMALL)
        np.testing.assert_array_equal(first.truth, second.truth)
        np.testing.assert_array_equal(first.mask, second.mask)

    def test_response_formula(self):
        sample = generate_scenario(SynthConfig(n=20, p=10, q=(2, 5, 9), sigma1=0.0))
        x = sample.truth
        np.testing.assert_allclose(x[:, 10], x[:, 1] + x[:, 4] + x[:, 8])

    def test_binary_column(self):
        config = SynthConfig(n=40, p=100, q=(101, 71, 76), binary_append=True)
        sample = generate_scenario(config)
        assert sample.dataset.column_kinds[100] is ColumnKind.BINARY
        assert sample.binary_cols == [100]
        assert set(np.unique(sample.truth[:, 100])) <= {0.0, 1.0}

    def test_varying_rate_blocks(self):
        config = varying_rate_config(40)
        assert [r.target_cols for r in config.injection.rules] == [(601, 800), (801, 1000)]
        assert config.rearrangement is Rearrangement.TEN_BLOCK

    def test_varying_rate_sample(self):
        sample = gen_varying_rate(60, seed=1, p=100, n=50)
        assert sample.mask[:, :40].all()
        assert not sample.mask[:, 40:100].all()

    def test_varying_rate_unknown(self):
        with pytest.raises(InputDataError):
            varying_rate_config(50)


class TestPresetMissingRates:
    """Row and feature rates of the MAR/MNAR presets, averaged over 20 seeds."""

    @pytest.mark.parametrize("name", [
        "p50-gaussian-mar", "p50-gaussian-mnar", "p250-gaussian-mar",
        "p250-gaussian-mnar", "p1000-gaussian-mnar",
    ])
    def test_incomplete_rows_and_features(self, name):
        base = SCENARIOS[name]
        row_rates, feature_rates = [], []
        for seed in range(20):
            sample = generate_scenario(replace(base, seed=seed))
            observed = sample.mask[:, : base.p]
            row_rates.append((~observed).any(axis=1).mean())
            feature_rates.append((~observed).any(axis=0).mean())
        assert np.mean(row_rates) == pytest.approx(0.90, abs=0.05)
        assert np.mean(feature_rates) == pytest.approx(0.40, abs=0.05)

    def test_missing_cells_below_feature_share(self):
        sample = generate_scenario(SCENARIOS["p250-gaussian-mar"])
        cells = (~sample.mask[:, :250]).mean()
        assert 0.15 < cells < 0.30
