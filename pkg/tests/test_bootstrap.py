"""
Online wild bootstrap chains and pointwise bands
"""

import numpy as np
import pytest

from core.bootstrap import (SIGN_BLOCK, BootstrapChain, ConfidenceBand, InferenceEngine, SignStream, bootstrap_step,
                            chain_generator, compute_bands, fit_stream_with_inference, new_chain, normal_quantile,
                            observe_with_inference, percentile_band, rademacher_block, rademacher_draw,
                            sample_quantile, variance_band)
from core.errors import DomainError, InsufficientChainsError, ShapeError
from core.functional_data import CoefficientField, FunctionalSample, grid_uniform
from core.online_gm import GmState, StepSchedule, fit_stream, step_size
from core.simulation import DgpConfig, generate_dataset


def _engine_with_chain_values(chain_averages, n=100):
    """Engine whose chain averages are set directly; the estimate is zero"""
    chain_averages = np.asarray(chain_averages, dtype=float)
    B, d, m = chain_averages.shape
    grid = grid_uniform(m)
    zero = CoefficientField.zeros(d, grid)
    gm = GmState(zero, zero, n, StepSchedule())
    generators = [chain_generator(0, b) for b in range(B)]
    return InferenceEngine(gm, np.zeros_like(chain_averages), chain_averages, 0, generators)


class TestRademacher:
    def test_values_are_signs(self):
        rng = np.random.default_rng(1)
        assert {rademacher_draw(rng) for _ in range(200)} == {-1, 1}
        assert set(np.unique(rademacher_block(rng, 1000))) == {-1.0, 1.0}

    def test_mean_of_a_million_draws(self):
        draws = rademacher_block(chain_generator(2024, 0), 1_000_000)
        assert abs(draws.mean()) <= 0.003

    def test_same_seed_same_sequence(self):
        a = rademacher_block(chain_generator(7, 3), 500)
        b = rademacher_block(chain_generator(7, 3), 500)
        np.testing.assert_array_equal(a, b)

    def test_chains_have_distinct_streams(self):
        a = rademacher_block(chain_generator(7, 0), 500)
        b = rademacher_block(chain_generator(7, 1), 500)
        assert not np.array_equal(a, b)

    def test_sign_stream_refills_in_blocks(self):
        stream = SignStream(chain_generator(5, 0))
        drawn = [stream.next() for _ in range(SIGN_BLOCK + 3)]
        reference = chain_generator(5, 0)
        expected = np.concatenate([rademacher_block(reference, SIGN_BLOCK), rademacher_block(reference, SIGN_BLOCK)])
        np.testing.assert_array_equal(drawn, expected[:SIGN_BLOCK + 3])


class TestBootstrapStep:
    @pytest.fixture
    def chain(self):
        return new_chain(0, 0, 1, grid_uniform(2))

    def test_exact_fit_residual_is_floored(self, chain):
        beta_bar = CoefficientField([[1.0, 2.0]], chain.iterate.grid)
        stepped = bootstrap_step(chain, FunctionalSample([3.0], [3.0, 6.0]), beta_bar, 0.1, weight=1.0)
        np.testing.assert_array_equal(stepped.iterate.values, chain.iterate.values)
        assert stepped.n == 1

    def test_one_line_example(self, chain):
        beta_bar = CoefficientField.zeros(1, chain.iterate.grid)
        stepped = bootstrap_step(chain, FunctionalSample([1.0], [1.0, 1.0]), beta_bar, 0.1, weight=1.0)
        np.testing.assert_allclose(stepped.iterate.values, [[0.070711, 0.070711]], atol=1e-6)
        np.testing.assert_array_equal(stepped.average.values, stepped.iterate.values)

    def test_one_line_example_on_l2_scale(self, chain):
        beta_bar = CoefficientField.zeros(1, chain.iterate.grid)
        stepped = bootstrap_step(chain, FunctionalSample([1.0], [1.0, 1.0]), beta_bar, 0.1, weight=1.0,
                                 residual_weight=StepSchedule().residual_weight(2))
        np.testing.assert_allclose(stepped.iterate.values, [[0.1, 0.1]], rtol=1e-14)

    def test_negative_weight_negates_the_update_at_origin(self, chain):
        beta_bar = CoefficientField.zeros(1, chain.iterate.grid)
        sample = FunctionalSample([1.5], [0.3, -2.0])
        plus = bootstrap_step(chain, sample, beta_bar, 0.2, weight=1.0)
        minus = bootstrap_step(chain, sample, beta_bar, 0.2, weight=-1.0)
        np.testing.assert_array_equal(minus.iterate.values, -plus.iterate.values)

    def test_shape_mismatch(self, chain):
        with pytest.raises(ShapeError):
            bootstrap_step(chain, FunctionalSample([1.0, 2.0], [1.0, 1.0]),
                           CoefficientField.zeros(1, chain.iterate.grid), 0.1)

    def test_own_stream_is_consumed(self, chain):
        beta_bar = CoefficientField.zeros(1, chain.iterate.grid)
        stepped = bootstrap_step(chain, FunctionalSample([1.0], [1.0, 1.0]), beta_bar, 0.1)
        first_sign = rademacher_block(chain_generator(0, 0), SIGN_BLOCK)[0]
        expected = first_sign * 0.1 / np.sqrt(2)
        np.testing.assert_allclose(stepped.iterate.values, [[expected, expected]], rtol=1e-14)


class TestInferenceEngine:
    @pytest.fixture
    def data(self):
        return generate_dataset(DgpConfig(n=150, m=8, seed=3))

    def _run(self, data, chains=6, seed=99, chain_threads=1):
        engine = InferenceEngine.start(data.grid, 3, StepSchedule(), chains, seed, chain_threads=chain_threads)
        return fit_stream_with_inference(data, engine)

    def test_no_chains_matches_plain_estimator(self, data):
        engine = self._run(data, chains=0)
        plain = fit_stream(data)
        np.testing.assert_array_equal(engine.gm.average.values, plain.average.values)
        np.testing.assert_array_equal(engine.gm.current.values, plain.current.values)

    def test_estimator_unaffected_by_chains(self, data):
        with_chains = self._run(data, chains=5)
        np.testing.assert_array_equal(with_chains.gm.average.values, fit_stream(data).average.values)

    def test_same_seed_same_chains(self, data):
        a = self._run(data)
        b = self._run(data)
        np.testing.assert_array_equal(a.chain_averages, b.chain_averages)

    def test_thread_count_does_not_change_results(self, data):
        serial = self._run(data, chains=7)
        threaded = self._run(data, chains=7, chain_threads=3)
        np.testing.assert_array_equal(serial.chain_iterates, threaded.chain_iterates)
        np.testing.assert_array_equal(serial.chain_averages, threaded.chain_averages)

    def test_engine_chain_matches_standalone_recursion(self, data):
        seed, b = 41, 2
        engine = InferenceEngine.start(data.grid, 3, StepSchedule(), 4, seed)
        chain = new_chain(seed, b, 3, data.grid)
        for sample in data:
            beta_bar = engine.gm.average
            gamma_n = step_size(engine.n + 1, engine.gm.schedule)
            chain = bootstrap_step(chain, sample, beta_bar, gamma_n,
                                   residual_weight=engine.gm.schedule.residual_weight(data.grid.m))
            observe_with_inference(engine, sample)
        np.testing.assert_array_equal(chain.iterate.values, engine.chain_iterates[b])
        np.testing.assert_array_equal(chain.average.values, engine.chain_averages[b])

    def test_detached_chain_continues_like_the_engine(self, data):
        samples = list(data)
        engine = InferenceEngine.start(data.grid, 3, StepSchedule(), 3, 8)
        for sample in samples[:70]:
            observe_with_inference(engine, sample)
        chain = engine.chain(1)
        for sample in samples[70:]:
            gamma_n = step_size(engine.n + 1, engine.gm.schedule)
            chain = bootstrap_step(chain, sample, engine.gm.average, gamma_n,
                                   residual_weight=engine.gm.schedule.residual_weight(data.grid.m))
            observe_with_inference(engine, sample)
        np.testing.assert_array_equal(chain.average.values, engine.chain_averages[1])

    def test_chain_permutation_leaves_bands_unchanged(self, data):
        engine = self._run(data, chains=9)
        order = np.random.default_rng(0).permutation(engine.B)
        permuted = InferenceEngine(engine.gm, engine.chain_iterates[order], engine.chain_averages[order],
                                   engine.master_seed, [engine.generators[i] for i in order])
        for band_a, band_b in zip(compute_bands(engine, [0.1, 0.05]), compute_bands(permuted, [0.1, 0.05])):
            np.testing.assert_array_equal(band_a.lower, band_b.lower)
            np.testing.assert_array_equal(band_a.upper, band_b.upper)

    def test_stored_numbers_do_not_grow_with_n(self):
        grid = grid_uniform(24)
        engine = InferenceEngine.start(grid, 8, StepSchedule(), 500, 1)
        before = engine.stored_numbers()
        rng = np.random.default_rng(0)
        for _ in range(50):
            observe_with_inference(engine, FunctionalSample(rng.normal(size=8), rng.normal(size=24)))
        assert engine.stored_numbers() == before
        assert before == (2 + 2 * 500) * 8 * 24 + 500 * SIGN_BLOCK

    def test_negative_chain_count(self):
        with pytest.raises(InsufficientChainsError):
            InferenceEngine.start(grid_uniform(3), 1, chains=-1)


class TestQuantiles:
    def test_nearest_rank_median(self):
        assert sample_quantile([1, 2, 3, 4], 0.5) == 2

    def test_single_value(self):
        assert sample_quantile([5], 0.01) == 5
        assert sample_quantile([5], 0.99) == 5

    def test_high_quantile(self):
        assert sample_quantile([3, 1, 2], 0.99) == 3

    def test_exact_integer_rank(self):
        # k = ceil(0.05 * 500) must not slip to 26 through rounding
        values = np.arange(1, 501)
        assert sample_quantile(values, 0.05) == 25

    def test_level_just_above_an_integer_rank_moves_up(self):
        assert sample_quantile([1, 2, 3, 4], 0.5000000001) == 3
        assert sample_quantile([1, 2, 3, 4], 0.5) == 2

    def test_empty(self):
        with pytest.raises(InsufficientChainsError):
            sample_quantile([], 0.5)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            sample_quantile([1.0], p)
        with pytest.raises(DomainError):
            normal_quantile(p)

    def test_normal_quantile_values(self):
        assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-15)
        assert normal_quantile(0.975) == pytest.approx(1.959963985, abs=1e-9)

    def test_normal_quantile_symmetry(self):
        for p in np.linspace(0.01, 0.49, 25):
            assert normal_quantile(p) == pytest.approx(-normal_quantile(1 - p), abs=1e-12)


class TestBands:
    def test_zero_chains_give_degenerate_band(self):
        engine = _engine_with_chain_values(np.zeros((10, 2, 4)))
        for band in (percentile_band(engine, 0.1), variance_band(engine, 0.1)):
            np.testing.assert_array_equal(band.lower, band.estimate)
            np.testing.assert_array_equal(band.upper, band.estimate)

    def test_identical_chains_give_zero_width_variance_band(self):
        values = np.broadcast_to(np.arange(8.0).reshape(2, 4), (12, 2, 4))
        band = variance_band(_engine_with_chain_values(values), 0.05)
        np.testing.assert_allclose(band.width, 0.0, atol=1e-15)

    def test_symmetric_values_centre_the_percentile_band(self):
        half = np.linspace(0.1, 1.0, 10)
        values = np.concatenate([half, -half])[:, None, None] * np.ones((1, 1, 3))
        band = percentile_band(_engine_with_chain_values(values, n=25), 0.15)
        np.testing.assert_allclose(band.lower + band.upper, 0.0, atol=1e-12)

    def test_percentile_band_formula(self):
        values = np.arange(1.0, 11.0)[:, None, None] * np.ones((1, 1, 2))
        n = 4
        band = percentile_band(_engine_with_chain_values(values, n=n), 0.2)
        scaled = np.sqrt(n) * np.arange(1.0, 11.0)
        q_low, q_high = scaled[0], scaled[8]
        np.testing.assert_allclose(band.lower, -q_high / np.sqrt(n))
        np.testing.assert_allclose(band.upper, -q_low / np.sqrt(n))
        assert band.level == pytest.approx(0.8)

    def test_variance_band_uses_unbiased_variance(self):
        values = np.array([1.0, 2.0, 3.0, 6.0])[:, None, None] * np.ones((1, 1, 2))
        n = 9
        band = variance_band(_engine_with_chain_values(values, n=n), 0.05)
        sigma2 = np.var(np.sqrt(n) * np.array([1.0, 2.0, 3.0, 6.0]), ddof=1)
        np.testing.assert_allclose(band.upper, 1.959963984540054 * np.sqrt(sigma2 / n), rtol=1e-12)

    def test_needs_two_chains(self):
        engine = _engine_with_chain_values(np.zeros((1, 1, 3)))
        with pytest.raises(InsufficientChainsError):
            percentile_band(engine, 0.1)
        with pytest.raises(InsufficientChainsError):
            variance_band(engine, 0.1)

    def test_tau_outside_unit_interval(self):
        with pytest.raises(DomainError):
            percentile_band(_engine_with_chain_values(np.zeros((4, 1, 3))), 1.0)

    def test_band_ordering_for_random_chains(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            engine = _engine_with_chain_values(rng.standard_t(2, size=(15, 2, 5)), n=int(rng.integers(1, 1000)))
            for band in compute_bands(engine, [0.3, 0.1, 0.01]):
                assert np.all(band.lower <= band.upper)

    def test_methods_agree_for_many_gaussian_chains(self):
        rng = np.random.default_rng(13)
        engine = _engine_with_chain_values(rng.normal(size=(2000, 1, 6)), n=100)
        p = percentile_band(engine, 0.1)
        v = variance_band(engine, 0.1)
        ratio = p.width / v.width
        assert np.all(np.abs(ratio - 1.0) < 0.1)

    def test_band_rejects_crossed_bounds(self):
        grid = grid_uniform(2)
        with pytest.raises(ValueError):
            ConfidenceBand(np.ones((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)), grid, 0.9, "variance")

    def test_contains(self):
        grid = grid_uniform(2)
        band = ConfidenceBand(np.zeros((1, 2)), np.ones((1, 2)), np.zeros((1, 2)), grid, 0.9, "percentile")
        np.testing.assert_array_equal(band.contains(np.array([[0.5, 2.0]])), [[True, False]])


class TestBootstrapChainValue:
    def test_chain_is_immutable(self):
        chain = new_chain(0, 0, 1, grid_uniform(2))
        assert isinstance(chain, BootstrapChain)
        with pytest.raises(Exception):
            chain.n = 3
