"""
Experiments Module
Simulation study, file fitting, snapshot inference and the method benchmark
"""

from __future__ import annotations

import copy
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import trapezoid

from core import __version__
from core.bootstrap import BAND_METHODS, ConfidenceBand, InferenceEngine, compute_bands, infer_stream
from core.errors import ConfigError, EmptyStreamError, ShapeError
from core.functional_data import CoefficientField, Dataset, apply_coefficients, default_covariate_names, grid_uniform
from core.interpolation import interpolate_field, interpolate_rows
from core.metrics import bootstrap_ks_distance, coverage, rmise_all, summarize
from core.offline import OracleConfig, fit_gm_offline, fit_ls_offline
from core.online_gm import StepSchedule, fit_stream, stream_states
from core.simulation import DgpConfig, generate_dataset, true_beta
from core.snapshot import load_snapshot, save_snapshot
from core.stream_io import (BAND_HEADER, ColumnMapping, OnlineStandardizer, band_rows, load_stream,
                            write_report_json, write_table_csv)

logger = logging.getLogger(__name__)

# spawn-key streams under each replication seed
DATA_STREAM = 0
CHAIN_STREAM = 1
RESERVOIR_STREAM = 2

COVERAGE_TOLERANCE = 0.03
BENCHMARK_METHODS = ("online_gm", "offline_gm", "offline_ls")

# Execution details that must not change results; kept out of the config echo
EXECUTION_KEYS = ("threads", "chain_threads")


def replication_seed(master_seed: int, rep: int, stream: int) -> int:
    """Independent 64-bit seed for (replication, purpose); a pure function of its inputs"""
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(int(rep), int(stream)))
    return int(sequence.generate_state(1, np.uint64)[0])


def _config_echo(settings: dict) -> dict:
    echo = copy.deepcopy(settings)
    for key in EXECUTION_KEYS:
        echo.pop(key, None)
    return echo


def _report_header(settings: dict, drop_counts: Optional[dict] = None) -> dict:
    return {
        "mode": settings["mode"],
        "version": __version__,
        "seed": settings["seed"],
        "config": _config_echo(settings),
        "drop_counts": dict(drop_counts or {"missing": 0, "malformed": 0}),
    }


def _timing(settings: dict, started: float, **extra) -> dict:
    timing = {"seconds": time.perf_counter() - started, "threads": settings["threads"],
              "chain_threads": settings["chain_threads"]}
    timing.update(extra)
    return timing


def _schedule(settings: dict, gamma: Optional[float] = None) -> StepSchedule:
    return StepSchedule(float(settings["gamma"] if gamma is None else gamma), float(settings["alpha"]),
                        settings.get("step_norm", "l2"))


def _initial(settings: dict):
    initial = settings.get("initial")
    return None if initial is None else np.asarray(initial, dtype=float)


def _dgp_config(settings: dict, seed: int) -> DgpConfig:
    dgp = settings["dgp"]
    return DgpConfig(n=int(dgp["n"]), m=int(dgp["m"]), tail=dgp["tail"], seed=seed,
                     noise_variance=float(dgp["noise_variance"]),
                     score_covariance_scale=float(dgp["score_covariance_scale"]), beta3=dgp["beta3"])


def _checkpoints(settings: dict) -> List[int]:
    n = int(settings["dgp"]["n"])
    points = settings.get("checkpoints") or [n]
    if any(int(c) < 1 or int(c) > n for c in points):
        raise ConfigError(f"checkpoints must lie in [1, {n}]")
    return sorted({int(c) for c in points})


def _gamma_values(settings: dict) -> List[float]:
    """The configured gamma first, then any extra sweep values"""
    gamma = float(settings["gamma"])
    extra = [float(g) for g in (settings.get("gamma_grid") or []) if float(g) != gamma]
    return [gamma] + list(dict.fromkeys(extra))


def _wants_inference(settings: dict) -> bool:
    if not settings.get("inference"):
        return False
    if int(settings["bootstrap_chains"]) < 2:
        logger.warning("⚠️ Inference requested with fewer than 2 chains; bands skipped")
        return False
    return True


def _out_dir(settings: dict) -> Optional[Path]:
    out = settings.get("out")
    return Path(out) if out else None


def _band_summary(bands: List[ConfidenceBand]) -> List[dict]:
    return [{"tau": round(1.0 - band.level, 12), "method": band.method, "level": band.level,
             "mean_width": float(np.mean(band.width))} for band in bands]


def _band_keys(taus) -> List[tuple]:
    # same order compute_bands produces
    return [(float(tau), method) for tau in taus for method in BAND_METHODS]


# --- simulate -----------------------------------------------------------------

def simulate_replication(rep: int, settings: dict) -> dict:
    """One replication: a single dataset shared by every gamma of the sweep"""
    seed = replication_seed(settings["seed"], rep, DATA_STREAM)
    data = generate_dataset(_dgp_config(settings, seed))
    truth = data.beta
    checkpoints = set(_checkpoints(settings))
    inference = _wants_inference(settings)
    result = {"rep": rep, "seed": seed, "rmise": [], "bands": [], "final_error": None, "chain_averages": None}

    for gamma in _gamma_values(settings):
        schedule = _schedule(settings, gamma)
        primary = gamma == float(settings["gamma"])
        engine = None
        if primary and inference:
            engine = InferenceEngine.start(data.grid, truth.d, schedule, int(settings["bootstrap_chains"]),
                                           replication_seed(settings["seed"], rep, CHAIN_STREAM),
                                           _initial(settings), settings["chain_threads"])
            states = (e.gm for e in infer_stream(data, engine))
        else:
            states = stream_states(data, data.grid, schedule, _initial(settings))

        state = None
        for state in states:
            if state.n in checkpoints:
                result["rmise"].append({"gamma": gamma, "n": state.n, "rmise": rmise_all(state.average, truth)})

        if primary:
            result["final_error"] = state.average.values - truth.values
        if engine is not None:
            result["bands"] = compute_bands(engine, settings["taus"])
            if rep == 0:
                result["chain_averages"] = engine.chain_averages.copy()

    logger.debug(f"replication {rep} done")
    return result


def _rmise_table(results: List[dict], settings: dict) -> List[dict]:
    rows = []
    for gamma in _gamma_values(settings):
        for n in _checkpoints(settings):
            values = [entry["rmise"] for res in results for entry in res["rmise"]
                      if entry["gamma"] == gamma and entry["n"] == n]
            rows.append({"gamma": gamma, "n": n, **summarize(values).as_dict()})
    return rows


def _coverage_table(results: List[dict], settings: dict, names) -> tuple:
    truth = true_beta(grid_uniform(int(settings["dgp"]["m"])), settings["dgp"]["beta3"])
    summary, cells = [], []
    for i, (tau, method) in enumerate(_band_keys(settings["taus"])):
        cover = coverage([res["bands"][i] for res in results], truth)
        level = 1.0 - tau
        summary.append({
            "tau": tau, "method": method, "level": level,
            "mean_coverage": float(np.mean(cover)),
            "min_coverage": float(np.min(cover)),
            "max_coverage": float(np.max(cover)),
            "cells_within_tolerance": float(np.mean(np.abs(cover - level) <= COVERAGE_TOLERANCE)),
        })
        for j, name in enumerate(names):
            for l, t in enumerate(truth.grid.points):
                cells.append([tau, method, name, float(t), float(cover[j, l])])
    return summary, cells


def run_simulate(settings: dict) -> dict:
    """R replications of generate -> fit (-> bands) -> RMISE / coverage -> summary"""
    started = time.perf_counter()
    replications = int(settings["replications"])
    logger.info(f"🚀 Simulating {replications} replications on {settings['threads']} worker(s)")

    results = Parallel(n_jobs=settings["threads"])(
        delayed(simulate_replication)(rep, settings) for rep in range(replications)
    )

    names = default_covariate_names(3)
    report = _report_header(settings)
    report["replications"] = replications
    report["rmise"] = _rmise_table(results, settings)

    coverage_cells = []
    report["coverage"] = None
    report["bootstrap_ks"] = None
    if results[0]["bands"]:
        report["coverage"], coverage_cells = _coverage_table(results, settings, names)
        if replications >= 2:
            errors = np.stack([res["final_error"] for res in results])
            direction = np.ones(errors.shape[1:])
            report["bootstrap_ks"] = bootstrap_ks_distance(errors, results[0]["chain_averages"], direction,
                                                           int(settings["dgp"]["n"]))
    report["timing"] = _timing(settings, started)

    out = _out_dir(settings)
    if out is not None:
        rows = [[res["rep"], res["seed"], entry["gamma"], entry["n"], *entry["rmise"]]
                for res in results for entry in res["rmise"]]
        write_table_csv(out / "replications.csv",
                        ["rep", "seed", "gamma", "n"] + [f"rmise_{name}" for name in names], rows)
        if coverage_cells:
            write_table_csv(out / "coverage.csv", ["tau", "method", "covariate", "t", "coverage"], coverage_cells)
        write_report_json(out / "report.json", report)
        logger.info(f"✅ Simulation report written to {out}")
    return report


# --- fit ------------------------------------------------------------------------

def trajectory_due(n: int, stride) -> bool:
    """Geometric stride records n = 1, 2, 4, ...; an integer k records every k-th n"""
    if stride == "geometric":
        return n & (n - 1) == 0
    return n % int(stride) == 0


def band_on_grid(band: ConfidenceBand, query) -> ConfidenceBand:
    """Band carried to another grid; bounds are re-ordered after interpolation"""
    if query == band.grid:
        return band
    lower = interpolate_field(CoefficientField(band.lower, band.grid), query).values
    upper = interpolate_field(CoefficientField(band.upper, band.grid), query).values
    estimate = interpolate_field(CoefficientField(band.estimate, band.grid), query).values
    return ConfidenceBand(np.minimum(lower, upper), np.maximum(lower, upper), estimate, query,
                          band.level, band.method)


def _open_engine(settings: dict, reader):
    """Fresh engine, or the snapshot named by resume_from"""
    resume_from = settings.get("resume_from")
    if not resume_from:
        engine = InferenceEngine.start(reader.grid, reader.d, _schedule(settings),
                                       int(settings["bootstrap_chains"]), int(settings["seed"]),
                                       _initial(settings), settings["chain_threads"])
        return engine, {}
    engine, meta = load_snapshot(resume_from, settings["chain_threads"])
    if engine.grid != reader.grid or engine.d != reader.d:
        raise ShapeError(f"input {reader.path} does not match the grid or covariates of snapshot {resume_from}")
    logger.info(f"📝 Resuming from {resume_from} at n={engine.n}")
    return engine, meta


def _residual_rows(samples, estimate: CoefficientField, reservoir: list, limit: int, rng: np.random.Generator):
    """Integrated |residual| per observation; a uniform reservoir of residual curves fills as a side effect"""
    points = estimate.grid.points
    for i, sample in enumerate(samples):
        residual = sample.y - apply_coefficients(estimate, sample.x)
        if len(reservoir) < limit:
            reservoir.append((i, residual))
        else:
            k = int(rng.integers(0, i + 1))
            if k < limit:
                reservoir[k] = (i, residual)
        yield [i, float(trapezoid(np.abs(residual), points))]


def run_fit(settings: dict) -> dict:
    """Stream an input CSV through the estimator and its bootstrap chains"""
    started = time.perf_counter()
    if not settings.get("input"):
        raise ConfigError("fit mode needs an input CSV path")
    mapping = ColumnMapping.from_settings(settings["mapping"])

    # resumed runs continue the standardiser the snapshot was taken with
    reader = load_stream(settings["input"], mapping)
    engine, meta = _open_engine(settings, reader)
    if meta.get("standardizer"):
        reader = load_stream(settings["input"], mapping, OnlineStandardizer.from_state(meta["standardizer"]))

    names = list(meta.get("covariate_names") or reader.covariate_names)
    grid = reader.grid
    stride = settings["trajectory_stride"]
    locations = [float(t) for t in settings["trajectory_locations"]]
    start_n = engine.n

    trajectory = []
    last_recorded = None
    for engine in infer_stream(reader, engine):
        if trajectory_due(engine.n, stride):
            trajectory.append((engine.n, interpolate_rows(engine.gm.average.values, grid, locations)))
            last_recorded = engine.n

    if engine.n == start_n:
        raise EmptyStreamError(f"no usable observation in {settings['input']} (dropped {reader.drop_counts})")
    if last_recorded != engine.n:
        trajectory.append((engine.n, interpolate_rows(engine.gm.average.values, grid, locations)))

    if reader.drop_counts["missing"] or reader.drop_counts["malformed"]:
        logger.warning(f"⚠️ Dropped rows: {reader.drop_counts}")

    estimate = engine.gm.average
    bands = compute_bands(engine, settings["taus"]) if _has_chains(engine) else []
    if settings.get("output_grid_size"):
        query = grid_uniform(int(settings["output_grid_size"]))
        estimate = interpolate_field(estimate, query)
        bands = [band_on_grid(band, query) for band in bands]

    report = _report_header(settings, reader.drop_counts)
    report.update({
        "n": engine.n,
        "observations_this_run": engine.n - start_n,
        "rows_read": reader.rows_read,
        "covariate_names": names,
        "grid_locations": reader.locations,
        "chains": engine.B,
        "stored_numbers": engine.stored_numbers(),
        "bands": _band_summary(bands),
        "trajectory_points": len(trajectory),
    })

    out = _out_dir(settings)
    if out is not None:
        write_table_csv(out / "estimate.csv", ["covariate", "t", "estimate"],
                        [[name, float(t), float(estimate.values[j, l])]
                         for j, name in enumerate(names) for l, t in enumerate(estimate.grid.points)])
        if bands:
            write_table_csv(out / "bands.csv", BAND_HEADER, band_rows(bands, names))
        write_table_csv(out / "trajectory.csv", ["n", "covariate", "t", "estimate"],
                        [[n, name, t, float(values[j, k])] for n, values in trajectory
                         for j, name in enumerate(names) for k, t in enumerate(locations)])
        if settings.get("residual_diagnostics"):
            report["residual_curves"] = _write_residuals(settings, reader, engine.gm.average, out)

    if settings.get("snapshot"):
        snapshot_meta = {
            "covariate_names": names,
            "standardizer": reader.standardizer.state() if reader.standardizer is not None else None,
            "grid_locations": list(reader.locations),
        }
        save_snapshot(settings["snapshot"], engine, snapshot_meta)
        report["snapshot"] = str(settings["snapshot"])

    report["timing"] = _timing(settings, started)
    if out is not None:
        write_report_json(out / "report.json", report)
    logger.info(f"✅ Fitted {engine.n - start_n} observations ({engine.B} chains)")
    return report


def _has_chains(engine: InferenceEngine) -> bool:
    if engine.B < 2:
        logger.warning("⚠️ Fewer than 2 bootstrap chains; bands skipped")
        return False
    return True


def _write_residuals(settings: dict, reader, average: CoefficientField, out: Path) -> int:
    """Second pass over the input; the reader replays the same standardisation"""
    reservoir = []
    limit = int(settings.get("residual_curves", 100))
    rng = np.random.default_rng(replication_seed(settings["seed"], 0, RESERVOIR_STREAM))
    write_table_csv(out / "residuals.csv", ["index", "integrated_abs_residual"],
                    _residual_rows(reader, average, reservoir, limit, rng))
    reservoir.sort(key=lambda item: item[0])
    header = ["index"] + [f"r@{format(float(t), '.17g')}" for t in average.grid.points]
    write_table_csv(out / "residual_curves.csv", header,
                    [[i] + [float(v) for v in residual] for i, residual in reservoir])
    return len(reservoir)


# --- infer ----------------------------------------------------------------------

def run_infer(settings: dict) -> dict:
    """Bands at the requested taus from a saved snapshot; the stream is not re-read"""
    started = time.perf_counter()
    if not settings.get("snapshot"):
        raise ConfigError("infer mode needs a snapshot path")
    engine, meta = load_snapshot(settings["snapshot"], settings["chain_threads"])
    if engine.n < 1:
        raise EmptyStreamError(f"snapshot {settings['snapshot']} holds no observation")
    names = list(meta.get("covariate_names") or default_covariate_names(engine.d))

    bands = compute_bands(engine, settings["taus"]) if _has_chains(engine) else []
    if settings.get("output_grid_size"):
        query = grid_uniform(int(settings["output_grid_size"]))
        bands = [band_on_grid(band, query) for band in bands]

    report = _report_header(settings)
    report.update({"n": engine.n, "chains": engine.B, "covariate_names": names,
                   "bands": _band_summary(bands)})
    report["timing"] = _timing(settings, started)

    out = _out_dir(settings)
    if out is not None:
        if bands:
            write_table_csv(out / "bands.csv", BAND_HEADER, band_rows(bands, names))
        write_report_json(out / "report.json", report)
    logger.info(f"✅ Bands computed from snapshot at n={engine.n}")
    return report


# --- benchmark ------------------------------------------------------------------

def benchmark_replication(rep: int, settings: dict) -> dict:
    """Online GM, offline GM and offline LS on the same dataset"""
    seed = replication_seed(settings["seed"], rep, DATA_STREAM)
    stream = generate_dataset(_dgp_config(settings, seed))
    dataset = Dataset.from_samples(stream, stream.grid)
    truth = stream.beta
    timing: Dict[str, float] = {}

    started = time.perf_counter()
    online = fit_stream(dataset, dataset.grid, _schedule(settings), _initial(settings)).average
    timing["online_gm"] = time.perf_counter() - started

    started = time.perf_counter()
    offline = fit_gm_offline(dataset, OracleConfig(**settings["offline"]))
    timing["offline_gm"] = time.perf_counter() - started

    started = time.perf_counter()
    least_squares = fit_ls_offline(dataset)
    timing["offline_ls"] = time.perf_counter() - started

    logger.debug(f"benchmark replication {rep} done")
    return {
        "rep": rep,
        "seed": seed,
        "rmise": {"online_gm": rmise_all(online, truth), "offline_gm": rmise_all(offline.field, truth),
                  "offline_ls": rmise_all(least_squares, truth)},
        "irls_converged": offline.converged,
        "irls_iterations": offline.iterations,
        "timing": timing,
    }


def run_benchmark(settings: dict) -> dict:
    started = time.perf_counter()
    replications = int(settings["replications"])
    logger.info(f"🚀 Benchmarking {replications} replications on {settings['threads']} worker(s)")

    results = Parallel(n_jobs=settings["threads"])(
        delayed(benchmark_replication)(rep, settings) for rep in range(replications)
    )

    summaries = {method: summarize([res["rmise"][method] for res in results]) for method in BENCHMARK_METHODS}
    online_mean = np.array(summaries["online_gm"].mean)
    offline_mean = np.array(summaries["offline_gm"].mean)
    ls_mean = np.array(summaries["offline_ls"].mean)

    report = _report_header(settings)
    report.update({
        "replications": replications,
        "methods": {method: summary.as_dict() for method, summary in summaries.items()},
        "ratio_online_to_offline_gm": (online_mean / offline_mean).tolist(),
        "offline_gm_beats_ls": (offline_mean < ls_mean).tolist(),
        "irls_converged": int(sum(res["irls_converged"] for res in results)),
        "irls_mean_iterations": float(np.mean([res["irls_iterations"] for res in results])),
    })
    report["timing"] = _timing(settings, started, **{
        method: float(sum(res["timing"][method] for res in results)) for method in BENCHMARK_METHODS
    })

    out = _out_dir(settings)
    if out is not None:
        names = default_covariate_names(3)
        rows = [[res["rep"], res["seed"], method, *res["rmise"][method]]
                for res in results for method in BENCHMARK_METHODS]
        write_table_csv(out / "benchmark.csv", ["rep", "seed", "method"] + [f"rmise_{n}" for n in names], rows)
        write_report_json(out / "report.json", report)
        logger.info(f"✅ Benchmark report written to {out}")
    return report


RUNNERS = {
    "simulate": run_simulate,
    "fit": run_fit,
    "infer": run_infer,
    "benchmark": run_benchmark,
}


def run(settings: dict) -> dict:
    try:
        runner = RUNNERS[settings["mode"]]
    except KeyError:
        raise ConfigError(f"unknown mode {settings.get('mode')!r}")
    return runner(settings)
