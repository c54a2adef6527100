"""
Bootstrap Inference Module
Online wild bootstrap chains run alongside the estimator, plus pointwise bands
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from core.errors import DomainError, InsufficientChainsError, InvalidCounterError, ShapeError
from core.functional_data import CoefficientField, FunctionalSample, Grid, apply_coefficients, combine_rows
from core.online_gm import GmState, StepSchedule, normalized_update, observe, running_average, start_state, step_size

DEFAULT_CHAINS = 500

# Multipliers are drawn per chain in blocks of this size
SIGN_BLOCK = 64

BAND_METHODS = ("percentile", "variance")


def chain_generator(master_seed: int, index: int) -> np.random.Generator:
    """Private generator of chain `index`; depends only on (master_seed, index)"""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


def rademacher_draw(rng: np.random.Generator) -> int:
    return 1 if rng.integers(0, 2) == 1 else -1


def rademacher_block(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0


class SignStream:
    """Rademacher multipliers of one chain, consumed one per observation"""

    def __init__(self, rng: np.random.Generator, buffer: Optional[np.ndarray] = None, pos: int = SIGN_BLOCK):
        self.rng = rng
        self.buffer = buffer
        self.pos = pos

    def next(self) -> float:
        if self.buffer is None or self.pos >= SIGN_BLOCK:
            self.buffer = rademacher_block(self.rng, SIGN_BLOCK)
            self.pos = 0
        weight = float(self.buffer[self.pos])
        self.pos += 1
        return weight


@dataclass(frozen=True)
class BootstrapChain:
    """
    One bootstrap recursion: iterate Upsilon_n, its average, and its multiplier stream.

    The sign stream is owned by whichever chain value was produced last;
    bootstrap_step hands it over to the returned chain.
    """

    iterate: CoefficientField
    average: CoefficientField
    n: int
    signs: SignStream


def new_chain(master_seed: int, index: int, d: int, grid: Grid) -> BootstrapChain:
    zero = CoefficientField.zeros(d, grid)
    return BootstrapChain(zero, zero, 0, SignStream(chain_generator(master_seed, index)))


def bootstrap_step(chain: BootstrapChain, sample: FunctionalSample, beta_bar: CoefficientField,
                   gamma_n: float, weight: Optional[float] = None, residual_weight: float = 1.0) -> BootstrapChain:
    """
    Advance one chain with a perturbed residual.

    beta_bar must be the estimator average from before this sample is absorbed.
    A given weight replaces the chain's own draw and leaves its stream untouched.
    residual_weight is the estimator schedule's, see StepSchedule.residual_weight.
    """
    sample.check(chain.iterate.d, chain.iterate.grid)
    if beta_bar.values.shape != chain.iterate.values.shape:
        raise ShapeError("estimator average and chain iterate differ in shape")
    w = chain.signs.next() if weight is None else float(weight)
    perturbed = w * (sample.y - apply_coefficients(beta_bar, sample.x))
    iterate = normalized_update(chain.iterate.values[None], sample.x, perturbed[None], gamma_n, residual_weight)[0]
    average = running_average(chain.average.values, iterate, chain.n)
    grid = chain.iterate.grid
    return BootstrapChain(CoefficientField(iterate, grid), CoefficientField(average, grid), chain.n + 1, chain.signs)


def _advance_chains(iterates, averages, x, targets, gamma_n, n, residual_weight):
    updated = normalized_update(iterates, x, targets, gamma_n, residual_weight)
    return updated, running_average(averages, updated, n)


class InferenceEngine:
    """Estimator state plus B bootstrap chains advanced in lockstep"""

    def __init__(self, gm: GmState, chain_iterates: np.ndarray, chain_averages: np.ndarray,
                 master_seed: int, generators: Sequence[np.random.Generator],
                 signs: Optional[np.ndarray] = None, sign_pos: int = SIGN_BLOCK, chain_threads: int = 1):
        shape = (len(generators), gm.d, gm.grid.m)
        if chain_iterates.shape != shape or chain_averages.shape != shape:
            raise ShapeError(f"chain arrays must have shape {shape}")
        self.gm = gm
        self.chain_iterates = np.asarray(chain_iterates, dtype=float)
        self.chain_averages = np.asarray(chain_averages, dtype=float)
        self.master_seed = int(master_seed)
        self.generators = list(generators)
        self.signs = signs if signs is not None else np.zeros((len(generators), SIGN_BLOCK))
        self.sign_pos = sign_pos
        self.chain_threads = max(1, int(chain_threads))

    @classmethod
    def start(cls, grid: Grid, d: int, schedule: Optional[StepSchedule] = None, chains: int = DEFAULT_CHAINS,
              master_seed: int = 0, initial=None, chain_threads: int = 1) -> "InferenceEngine":
        if chains < 0:
            raise InsufficientChainsError(f"chain count must be non-negative, got {chains}")
        gm = start_state(grid, d, schedule, initial)
        zeros = np.zeros((chains, d, grid.m))
        generators = [chain_generator(master_seed, b) for b in range(chains)]
        return cls(gm, zeros, zeros.copy(), master_seed, generators, chain_threads=chain_threads)

    @property
    def B(self) -> int:
        return len(self.generators)

    @property
    def n(self) -> int:
        return self.gm.n

    @property
    def d(self) -> int:
        return self.gm.d

    @property
    def grid(self) -> Grid:
        return self.gm.grid

    def next_signs(self) -> np.ndarray:
        if self.sign_pos >= SIGN_BLOCK:
            self.signs = np.stack([rademacher_block(g, SIGN_BLOCK) for g in self.generators])
            self.sign_pos = 0
        column = self.signs[:, self.sign_pos]
        self.sign_pos += 1
        return column

    def chain(self, b: int) -> BootstrapChain:
        """Detached copy of chain b that continues exactly as the engine would"""
        grid = self.grid
        stream = SignStream(copy.deepcopy(self.generators[b]),
                            None if self.sign_pos >= SIGN_BLOCK else self.signs[b].copy(), self.sign_pos)
        return BootstrapChain(CoefficientField(self.chain_iterates[b], grid),
                              CoefficientField(self.chain_averages[b], grid), self.n, stream)

    def stored_numbers(self) -> int:
        """Floats held by the engine; independent of how many samples were seen"""
        return int(self.gm.current.values.size + self.gm.average.values.size
                   + self.chain_iterates.size + self.chain_averages.size + self.signs.size)


def _chain_slices(count: int, parts: int) -> List[slice]:
    bounds = np.linspace(0, count, min(parts, count) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def observe_with_inference(engine: InferenceEngine, sample: FunctionalSample,
                           parallel: Optional[Parallel] = None) -> InferenceEngine:
    """
    Advance the estimator and every chain by one sample (in place).

    Chains see the perturbed residual against the average from before this
    sample; the estimator is updated afterwards.
    """
    sample.check(engine.d, engine.grid)
    n = engine.gm.n
    if engine.B:
        gamma_n = step_size(n + 1, engine.gm.schedule)
        residual_weight = engine.gm.schedule.residual_weight(engine.grid.m)
        base = sample.y - combine_rows(sample.x, engine.gm.average.values)
        targets = engine.next_signs()[:, None] * base
        if parallel is not None and engine.chain_threads > 1:
            parts = _chain_slices(engine.B, engine.chain_threads)
            results = parallel(
                delayed(_advance_chains)(engine.chain_iterates[s], engine.chain_averages[s],
                                         sample.x, targets[s], gamma_n, n, residual_weight)
                for s in parts
            )
            engine.chain_iterates = np.concatenate([r[0] for r in results])
            engine.chain_averages = np.concatenate([r[1] for r in results])
        else:
            engine.chain_iterates, engine.chain_averages = _advance_chains(
                engine.chain_iterates, engine.chain_averages, sample.x, targets, gamma_n, n, residual_weight)
    engine.gm = observe(engine.gm, sample)
    return engine


def infer_stream(samples: Iterable[FunctionalSample], engine: InferenceEngine) -> Iterator[InferenceEngine]:
    """Yield the engine after each sample; chain slices run on a thread pool when configured"""
    if engine.chain_threads > 1 and engine.B > 1:
        with Parallel(n_jobs=engine.chain_threads, prefer="threads") as parallel:
            for sample in samples:
                yield observe_with_inference(engine, sample, parallel)
    else:
        for sample in samples:
            yield observe_with_inference(engine, sample)


def fit_stream_with_inference(samples: Iterable[FunctionalSample], engine: InferenceEngine) -> InferenceEngine:
    for engine in infer_stream(samples, engine):
        pass
    return engine


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    """Pointwise bounds for every (covariate j, grid point l) at level 1 - tau"""

    lower: np.ndarray
    upper: np.ndarray
    estimate: np.ndarray
    grid: Grid
    level: float
    method: str

    def __post_init__(self):
        if self.method not in BAND_METHODS:
            raise ValueError(f"unknown band method {self.method!r}")
        if self.lower.shape != self.upper.shape or self.lower.shape[-1] != self.grid.m:
            raise ShapeError("band bounds disagree in shape")
        if np.any(self.lower > self.upper):
            raise ValueError("band lower bound exceeds upper bound")

    def contains(self, truth: np.ndarray) -> np.ndarray:
        return (self.lower <= truth) & (truth <= self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def _nearest_rank_index(count: int, p: float) -> int:
    # p * count within a few ulps of an integer is that integer (0.05 * 500 is 25, not 26)
    x = p * count
    nearest = round(x)
    k = nearest if abs(x - nearest) <= 4 * math.ulp(max(nearest, 1)) else math.ceil(x)
    return min(max(k, 1), count) - 1


def sample_quantile(values: Sequence[float], p: float) -> float:
    """Nearest-rank quantile: k-th smallest with k = ceil(p * B)"""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size == 0:
        raise InsufficientChainsError("quantile of an empty list")
    return float(ordered[_nearest_rank_index(ordered.size, p)])


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal quantile needs p in (0, 1), got {p}")
    return float(norm.ppf(p))


def _scaled_chain_values(engine: InferenceEngine, tau: float) -> np.ndarray:
    if engine.B < 2:
        raise InsufficientChainsError(f"bands need at least 2 chains, engine has {engine.B}")
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    if engine.n < 1:
        raise InvalidCounterError("bands need at least one observation")
    # sorted first so every band is a symmetric function of the chain set
    return np.sort(math.sqrt(engine.n) * engine.chain_averages, axis=0)


def percentile_band(engine: InferenceEngine, tau: float) -> ConfidenceBand:
    ordered = _scaled_chain_values(engine, tau)
    q_low = ordered[_nearest_rank_index(engine.B, tau / 2)]
    q_high = ordered[_nearest_rank_index(engine.B, 1 - tau / 2)]
    estimate = engine.gm.average.values
    root_n = math.sqrt(engine.n)
    return ConfidenceBand(estimate - q_high / root_n, estimate - q_low / root_n,
                          estimate, engine.grid, 1 - tau, "percentile")


def variance_band(engine: InferenceEngine, tau: float) -> ConfidenceBand:
    ordered = _scaled_chain_values(engine, tau)
    sigma2 = np.var(ordered, axis=0, ddof=1)
    half_width = normal_quantile(1 - tau / 2) * np.sqrt(sigma2 / engine.n)
    estimate = engine.gm.average.values
    return ConfidenceBand(estimate - half_width, estimate + half_width,
                          estimate, engine.grid, 1 - tau, "variance")


def compute_bands(engine: InferenceEngine, taus: Iterable[float],
                  methods: Sequence[str] = BAND_METHODS) -> List[ConfidenceBand]:
    builders = {"percentile": percentile_band, "variance": variance_band}
    return [builders[method](engine, tau) for tau in taus for method in methods]
