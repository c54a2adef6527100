"""
Online Geometric Median Module
Averaged stochastic-gradient estimator of the slope field beta(t)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from core.errors import ConfigError, EmptyStreamError, InvalidCounterError, NumericError, ShapeError
from core.functional_data import CoefficientField, FunctionalSample, Grid, combine_rows

# Residual curves with a smaller grid norm carry no usable direction
RESIDUAL_FLOOR = 1e-10

DEFAULT_GAMMA = 3.0
DEFAULT_ALPHA = 0.75

# "l2": residuals normalised by the L2[0, 1] norm sqrt(mean r^2), so gamma does not depend on m
# "euclidean": plain grid_norm over the grid values
STEP_NORMS = ("l2", "euclidean")


@dataclass(frozen=True)
class StepSchedule:
    """gamma_n = gamma * n^(-alpha) with 1/2 < alpha <= 1, and the norm residuals are scaled by"""

    gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA
    norm: str = "l2"

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ConfigError(f"step size gamma must be positive, got {self.gamma}")
        if not (0.5 < self.alpha <= 1.0):
            raise ConfigError(f"step exponent alpha must lie in (0.5, 1], got {self.alpha}")
        if self.norm not in STEP_NORMS:
            raise ConfigError(f"step norm must be one of {STEP_NORMS}, got {self.norm!r}")

    def residual_weight(self, m: int) -> float:
        """Weight on sum(r^2) inside the residual norm"""
        return 1.0 / m if self.norm == "l2" else 1.0


@dataclass(frozen=True)
class GmState:
    """Current iterate beta_n, running average, and the number of absorbed observations"""

    current: CoefficientField
    average: CoefficientField
    n: int
    schedule: StepSchedule

    def __post_init__(self):
        if self.current.values.shape != self.average.values.shape or self.current.grid != self.average.grid:
            raise ShapeError("current iterate and average must share shape and grid")
        if self.n < 0:
            raise InvalidCounterError(f"observation count must be non-negative, got {self.n}")

    @property
    def grid(self) -> Grid:
        return self.current.grid

    @property
    def d(self) -> int:
        return self.current.d


def step_size(n: int, schedule: StepSchedule) -> float:
    """Step length for the n-th incoming observation (1-based)"""
    if n < 1:
        raise InvalidCounterError(f"step counter must be >= 1, got {n}")
    return schedule.gamma * float(n) ** (-schedule.alpha)


def normalized_update(iterates: np.ndarray, x: np.ndarray, targets: np.ndarray, gamma_n: float,
                      residual_weight: float = 1.0) -> np.ndarray:
    """
    One normalised-gradient step on iterates shaped (..., d, m).

    The residual r = target - x^T iterate is scaled to unit norm
    sqrt(residual_weight * sum r^2); rows whose residual norm falls under
    RESIDUAL_FLOOR are returned unchanged.
    """
    residual = targets - combine_rows(x, iterates)
    norm = np.sqrt(residual_weight * np.sum(residual * residual, axis=-1))
    accepted = norm >= RESIDUAL_FLOOR
    direction = residual / np.where(accepted, norm, 1.0)[..., None]
    step = gamma_n * (x[:, None] * direction[..., None, :])
    updated = np.where(accepted[..., None, None], iterates + step, iterates)
    if not np.all(np.isfinite(updated)):
        raise NumericError("gradient step produced non-finite values")
    return updated


def running_average(average: np.ndarray, iterate: np.ndarray, n: int) -> np.ndarray:
    """Average of n + 1 iterates given the average of the first n"""
    if n == 0:
        return np.array(iterate, dtype=float)
    return average + (iterate - average) / (n + 1)


def sgd_step(state: GmState, sample: FunctionalSample) -> CoefficientField:
    """beta_{n+1} from beta_n and the incoming sample"""
    sample.check(state.d, state.grid)
    gamma_n = step_size(state.n + 1, state.schedule)
    values = normalized_update(state.current.values, sample.x, sample.y, gamma_n,
                               state.schedule.residual_weight(state.grid.m))
    return CoefficientField(values, state.grid)


def update_average(state: GmState, iterate: CoefficientField) -> CoefficientField:
    values = running_average(state.average.values, iterate.values, state.n)
    return CoefficientField(values, state.grid)


def observe(state: GmState, sample: FunctionalSample) -> GmState:
    """Absorb one sample: gradient step, then averaging, then counter increment"""
    current = sgd_step(state, sample)
    average = update_average(state, current)
    return GmState(current, average, state.n + 1, state.schedule)


def start_state(grid: Grid, d: int, schedule: Optional[StepSchedule] = None,
                initial: Optional[np.ndarray] = None) -> GmState:
    """Empty estimator; beta_0 defaults to zeros and the average starts at beta_0"""
    schedule = schedule or StepSchedule()
    if initial is None:
        start = CoefficientField.zeros(d, grid)
    else:
        values = initial.values if isinstance(initial, CoefficientField) else np.asarray(initial, dtype=float)
        if values.shape != (d, grid.m):
            raise ShapeError(f"initial field shape {values.shape} does not match ({d}, {grid.m})")
        start = CoefficientField(values, grid)
    return GmState(start, start, 0, schedule)


def _resolve_grid(samples, grid: Optional[Grid]) -> Grid:
    if grid is not None:
        return grid
    grid = getattr(samples, "grid", None)
    if grid is None:
        raise ShapeError("a grid is required when the sample source does not carry one")
    return grid


def stream_states(samples: Iterable[FunctionalSample], grid: Optional[Grid] = None,
                  schedule: Optional[StepSchedule] = None, initial=None,
                  state: Optional[GmState] = None) -> Iterator[GmState]:
    """Yield the estimator state after every observation of the stream"""
    if state is None:
        grid = _resolve_grid(samples, grid)
    for sample in samples:
        if state is None:
            state = start_state(grid, sample.d, schedule, initial)
        state = observe(state, sample)
        yield state


def fit_stream(samples: Iterable[FunctionalSample], grid: Optional[Grid] = None,
               schedule: Optional[StepSchedule] = None, initial=None,
               state: Optional[GmState] = None) -> GmState:
    """Fold observe over the whole stream"""
    final = None
    for final in stream_states(samples, grid, schedule, initial, state):
        pass
    if final is None:
        raise EmptyStreamError("cannot fit an empty stream")
    return final
