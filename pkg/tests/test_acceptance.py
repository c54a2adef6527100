"""
Full-scale Monte-Carlo reproduction checks (run with --runslow)
"""

import numpy as np
import pytest
from joblib import Parallel, delayed

from core.bootstrap import InferenceEngine, fit_stream_with_inference, infer_stream, variance_band
from core.experiments import run_benchmark, run_simulate, simulate_replication
from core.functional_data import FunctionalSample, grid_uniform
from core.online_gm import StepSchedule
from core.settings_manager import SettingsManager
from core.simulation import DgpConfig, generate_dataset

WORKERS = 4

GAUSSIAN_RMISE = (1.28e-2, 1.04e-2, 0.64e-2)
STUDENT_RMISE = (1.73e-2, 1.39e-2, 0.90e-2)


def _configure(**overrides):
    overrides.setdefault("threads", WORKERS)
    return SettingsManager().apply_overrides({"out": "", **overrides})


def _cell(report, gamma, n):
    for row in report["rmise"]:
        if row["gamma"] == gamma and row["n"] == n:
            return np.array(row["mean"])
    raise KeyError((gamma, n))


@pytest.mark.slow
@pytest.mark.parametrize("tail, expected", [("gaussian", GAUSSIAN_RMISE), ("student_t3", STUDENT_RMISE)])
def test_rmise_table_row(tail, expected):
    report = run_simulate(_configure(replications=200, dgp={"tail": tail}))
    np.testing.assert_allclose(_cell(report, 3.0, 10000), expected, rtol=0.2)


@pytest.mark.slow
def test_rmise_rate_in_n():
    report = run_simulate(_configure(replications=200, checkpoints=[10000, 40000], dgp={"n": 40000}))
    ratio = _cell(report, 3.0, 40000) / _cell(report, 3.0, 10000)
    assert np.all((ratio >= 0.40) & (ratio <= 0.60))


@pytest.mark.slow
def test_squared_error_factor_in_n():
    settings = _configure(replications=100, checkpoints=[10000, 40000], dgp={"n": 40000})
    results = Parallel(n_jobs=WORKERS)(delayed(simulate_replication)(rep, settings) for rep in range(100))
    squared = {n: np.mean([np.sum(np.square(e["rmise"])) for res in results for e in res["rmise"] if e["n"] == n])
               for n in (10000, 40000)}
    assert 3.2 <= squared[10000] / squared[40000] <= 4.8


@pytest.mark.slow
def test_variance_band_width_shrinks_with_root_n():
    widths = {10000: [], 40000: []}
    for seed in range(4):
        data = generate_dataset(DgpConfig(n=40000, m=50, seed=seed))
        engine = InferenceEngine.start(data.grid, 3, StepSchedule(), 200, 100 + seed, chain_threads=WORKERS)
        for engine in infer_stream(data, engine):
            if engine.n in widths:
                band = variance_band(engine, 0.05)
                widths[engine.n].append(np.mean(band.upper - band.lower))
    ratio = np.mean(widths[40000]) / np.mean(widths[10000])
    assert 0.45 <= ratio <= 0.55


@pytest.mark.slow
def test_step_constant_insensitivity():
    report = run_simulate(_configure(replications=200, gamma_grid=[2.0, 3.0, 6.0, 10.0]))
    means = np.stack([_cell(report, gamma, 10000) for gamma in (2.0, 3.0, 6.0, 10.0)])
    spread = (means.max(axis=0) - means.min(axis=0)) / means.min(axis=0)
    assert np.all(spread <= 0.15)


@pytest.mark.slow
def test_band_coverage():
    # 600 replications keep the binomial noise of each cell well inside the tolerance
    report = run_simulate(_configure(replications=600, inference=True, bootstrap_chains=500, taus=[0.1, 0.05]))
    assert len(report["coverage"]) == 4
    for row in report["coverage"]:
        assert row["cells_within_tolerance"] >= 0.90, row


@pytest.mark.slow
def test_bootstrap_distribution():
    report = run_simulate(_configure(replications=500, inference=True, bootstrap_chains=500))
    assert report["bootstrap_ks"] <= 0.1


@pytest.mark.slow
@pytest.mark.parametrize("tail, gm_beats_ls", [("gaussian", False), ("student_t3", True)])
def test_online_matches_offline(tail, gm_beats_ls):
    report = run_benchmark(_configure(mode="benchmark", replications=100, dgp={"tail": tail}))
    ratio = np.array(report["ratio_online_to_offline_gm"])
    assert np.all((ratio >= 0.9) & (ratio <= 1.1))
    assert report["offline_gm_beats_ls"] == [gm_beats_ls] * 3


class TestStoredState:
    """Resident state is fixed by (B, d, m); nothing grows with the stream"""

    def _engine_after(self, n):
        rng = np.random.default_rng(n)
        grid = grid_uniform(24)
        engine = InferenceEngine.start(grid, 8, StepSchedule(), 500, 11)
        samples = ((x, x @ rng.normal(size=(8, 24)) + rng.normal(size=24)) for x in rng.normal(size=(n, 8)))
        return fit_stream_with_inference((FunctionalSample(x, y) for x, y in samples), engine)

    def test_counter_matches_layout(self):
        engine = self._engine_after(5)
        assert engine.stored_numbers() == (2 + 2 * 500) * 8 * 24 + 500 * 64

    def test_counter_independent_of_stream_length(self):
        short, long = self._engine_after(3), self._engine_after(40)
        assert short.stored_numbers() == long.stored_numbers()
        assert long.chain_averages.shape == (500, 8, 24)
