"""
Functional Data Module
Grid, functional samples, coefficient fields and the discrete grid norm
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Iterable, Iterator, Sequence

import numpy as np

from core.errors import EmptyStreamError, InvalidGridError, NumericError, ShapeError

UNIFORM_GRID_TOLERANCE = 1e-12


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Common sampling locations t_1 < ... < t_m inside [0, 1]"""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidGridError(f"grid needs at least 2 points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidGridError("grid points must be finite")
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise InvalidGridError(f"grid points must lie in [0, 1], got [{pts[0]}, {pts[-1]}]")
        if np.any(np.diff(pts) <= 0.0):
            raise InvalidGridError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return int(self.points.size)

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def is_uniform(self) -> bool:
        expected = np.arange(self.m) / (self.m - 1)
        return bool(np.max(np.abs(self.points - expected)) <= UNIFORM_GRID_TOLERANCE)


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """One observation: covariates x (length d) and the response y on the grid (length m)"""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y)
        if x.ndim != 1 or y.ndim != 1:
            raise ShapeError(f"sample x and y must be 1-D, got {x.shape} and {y.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NumericError("sample holds non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return int(self.x.size)

    def check(self, d: int, grid: Grid):
        if self.x.size != d:
            raise ShapeError(f"sample has {self.x.size} covariates, expected {d}")
        if self.y.size != grid.m:
            raise ShapeError(f"sample has {self.y.size} response values, grid has {grid.m}")


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """d x m array of beta_j(t_l), row j per covariate"""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 2 or vals.shape[1] != self.grid.m:
            raise ShapeError(f"field shape {vals.shape} does not match grid of {self.grid.m} points")
        if not np.all(np.isfinite(vals)):
            raise NumericError("coefficient field holds non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return int(self.values.shape[0])

    @property
    def m(self) -> int:
        return self.grid.m

    @classmethod
    def zeros(cls, d: int, grid: Grid) -> "CoefficientField":
        return cls(np.zeros((d, grid.m)), grid)

    def row(self, j: int) -> np.ndarray:
        return self.values[j]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Materialised sample set sharing one grid; x is n x d, y is n x m"""

    grid: Grid
    x: np.ndarray
    y: np.ndarray
    covariate_names: tuple = dataclass_field(default=())

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y)
        if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ShapeError(f"dataset arrays disagree: x {x.shape}, y {y.shape}")
        if y.shape[1] != self.grid.m:
            raise ShapeError(f"dataset responses have {y.shape[1]} columns, grid has {self.grid.m}")
        if x.shape[0] == 0:
            raise EmptyStreamError("dataset is empty")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", default_covariate_names(x.shape[1]))

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[FunctionalSample]:
        for i in range(self.n):
            yield FunctionalSample(self.x[i], self.y[i])

    @classmethod
    def from_samples(cls, samples: Iterable[FunctionalSample], grid: Grid) -> "Dataset":
        xs, ys = [], []
        for sample in samples:
            if xs:
                sample.check(xs[0].size, grid)
            xs.append(sample.x)
            ys.append(sample.y)
        if not xs:
            raise EmptyStreamError("no samples to collect")
        return cls(grid, np.vstack(xs), np.vstack(ys))


def default_covariate_names(d: int) -> tuple:
    return tuple(f"x{j + 1}" for j in range(d))


def grid_uniform(m: int) -> Grid:
    """Uniform grid t_l = (l - 1) / (m - 1) including both endpoints"""
    if m < 2:
        raise InvalidGridError(f"uniform grid needs m >= 2, got {m}")
    return Grid(np.arange(m) / (m - 1))


def grid_norm(v: Sequence[float]) -> float:
    """Plain Euclidean norm of grid values (no spacing weight)"""
    arr = np.asarray(v, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(arr * arr)))


def combine_rows(x: np.ndarray, values: np.ndarray) -> np.ndarray:
    """sum_j x_j * values[..., j, :] accumulated in covariate order"""
    acc = x[0] * values[..., 0, :]
    for j in range(1, x.shape[0]):
        acc = acc + x[j] * values[..., j, :]
    return acc


def apply_coefficients(field: CoefficientField, x: Sequence[float]) -> np.ndarray:
    """Mean structure x^T beta(t) evaluated on the grid"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != field.d:
        raise ShapeError(f"covariate vector of length {x.size} does not match d={field.d}")
    return combine_rows(x, field.values)
