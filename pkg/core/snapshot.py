"""
Snapshot Module
Versioned .npz layout for stopping and resuming the recursive state

Layout (format_version 1):
    format_version   int
    grid             (m,)   grid points
    gamma, alpha     schedule
    step_norm        residual norm of the schedule ("l2" or "euclidean")
    n                observations absorbed
    gm_current       (d, m) beta_n
    gm_average       (d, m) beta_bar_n
    master_seed      int
    chain_iterates   (B, d, m)
    chain_averages   (B, d, m)
    signs            (B, 64) pending multiplier block
    sign_pos         int
    generator_states JSON list of per-chain bit-generator states
    meta             JSON object (covariate names, standardiser state, ...)
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Tuple

import numpy as np

from core.bootstrap import InferenceEngine
from core.errors import SnapshotError
from core.functional_data import CoefficientField, Grid
from core.online_gm import GmState, StepSchedule

FORMAT_VERSION = 1


def save_snapshot(path, engine: InferenceEngine, meta: dict = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    gm = engine.gm
    states = [g.bit_generator.state for g in engine.generators]
    with open(path, "wb") as f:
        np.savez(
            f,
            format_version=np.array(FORMAT_VERSION),
            grid=gm.grid.points,
            gamma=np.array(gm.schedule.gamma),
            alpha=np.array(gm.schedule.alpha),
            step_norm=np.array(gm.schedule.norm),
            n=np.array(gm.n),
            gm_current=gm.current.values,
            gm_average=gm.average.values,
            master_seed=np.array(engine.master_seed, dtype=np.uint64),
            chain_iterates=engine.chain_iterates,
            chain_averages=engine.chain_averages,
            signs=engine.signs,
            sign_pos=np.array(engine.sign_pos),
            generator_states=np.array(json.dumps(states)),
            meta=np.array(json.dumps(meta or {})),
        )
    return path


def _restore_generator(state: dict) -> np.random.Generator:
    bit_generator = getattr(np.random, state["bit_generator"])()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def load_snapshot(path, chain_threads: int = 1) -> Tuple[InferenceEngine, dict]:
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != FORMAT_VERSION:
                raise SnapshotError(f"unsupported snapshot format {version}, expected {FORMAT_VERSION}")
            grid = Grid(data["grid"])
            schedule = StepSchedule(float(data["gamma"]), float(data["alpha"]), str(data["step_norm"]))
            gm = GmState(CoefficientField(data["gm_current"], grid), CoefficientField(data["gm_average"], grid),
                         int(data["n"]), schedule)
            generators = [_restore_generator(s) for s in json.loads(str(data["generator_states"]))]
            engine = InferenceEngine(gm, data["chain_iterates"].copy(), data["chain_averages"].copy(),
                                     int(data["master_seed"]), generators, data["signs"].copy(),
                                     int(data["sign_pos"]), chain_threads)
            meta = json.loads(str(data["meta"]))
    except (OSError, KeyError, ValueError) as e:
        raise SnapshotError(f"cannot read snapshot {path}: {e}") from e
    return engine, meta
