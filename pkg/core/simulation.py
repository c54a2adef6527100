"""
Simulation Module
Data-generating process for the functional regression study
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from core.errors import ConfigError
from core.functional_data import CoefficientField, FunctionalSample, Grid, grid_uniform

TAILS = ("gaussian", "student_t3")
BETA3_VARIANTS = ("verbatim", "sine")
T_DOF = 3

COVARIATE_VARIANCES = np.array([0.5, 1.0, 2.0])
COVARIATE_CORRELATION_BASE = 0.5


@dataclass(frozen=True)
class DgpConfig:
    n: int
    m: int = 50
    tail: str = "gaussian"
    seed: int = 0
    noise_variance: float = 0.5
    score_covariance_scale: float = 0.5
    beta3: str = "verbatim"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"sample count must be >= 1, got {self.n}")
        if self.m < 2:
            raise ConfigError(f"grid size must be >= 2, got {self.m}")
        if self.tail not in TAILS:
            raise ConfigError(f"tail must be one of {TAILS}, got {self.tail!r}")
        if self.beta3 not in BETA3_VARIANTS:
            raise ConfigError(f"beta3 must be one of {BETA3_VARIANTS}, got {self.beta3!r}")
        if self.noise_variance < 0 or self.score_covariance_scale < 0:
            raise ConfigError("variances must be non-negative")

    @property
    def grid(self) -> Grid:
        return grid_uniform(self.m)


def true_beta(grid: Grid, beta3: str = "verbatim") -> CoefficientField:
    t = grid.points
    beta_1 = 2.0 * t ** 2
    beta_2 = np.cos(3.0 * np.pi * t / 2.0 + np.pi / 2.0)
    if beta3 == "verbatim":
        beta_3 = np.sin(np.pi * t / 2.0) + np.sqrt(2.0) * (3.0 * np.pi * t / 2.0)
    elif beta3 == "sine":
        beta_3 = np.sin(np.pi * t / 2.0) + np.sqrt(2.0) * np.sin(3.0 * np.pi * t / 2.0)
    else:
        raise ConfigError(f"unknown beta3 variant {beta3!r}")
    return CoefficientField(np.vstack([beta_1, beta_2, beta_3]), grid)


def covariate_covariance() -> np.ndarray:
    sd = np.sqrt(COVARIATE_VARIANCES)
    idx = np.arange(sd.size)
    correlation = COVARIATE_CORRELATION_BASE ** np.abs(idx[:, None] - idx[None, :])
    return correlation * np.outer(sd, sd)


COVARIATE_FACTOR = np.linalg.cholesky(covariate_covariance())


def sample_covariates(rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Mean-zero trivariate normal draw(s); shape (3,) or (size, 3)"""
    if size is None:
        return COVARIATE_FACTOR @ rng.standard_normal(3)
    return rng.standard_normal((size, 3)) @ COVARIATE_FACTOR.T


def residual_basis(grid: Grid) -> np.ndarray:
    """Rows phi_1(t) = -cos(pi (t - 0.5)) and phi_2(t) = sin(t - 0.5)"""
    t = grid.points
    return np.vstack([-np.cos(np.pi * (t - 0.5)), np.sin(t - 0.5)])


def _scores(rng, tail, scale, size):
    shape = (2,) if size is None else (size, 2)
    z = rng.standard_normal(shape)
    if tail == "gaussian":
        return np.sqrt(scale) * z
    # t_3 scale matrix (scale / 3) I so that the covariance is scale * I
    w = rng.chisquare(T_DOF, size=None if size is None else (size, 1))
    return np.sqrt(scale / T_DOF) * z * np.sqrt(T_DOF / w)


def sample_residual(rng: np.random.Generator, grid: Grid, tail: str = "gaussian",
                    noise_variance: float = 0.5, score_covariance_scale: float = 0.5,
                    size: Optional[int] = None) -> np.ndarray:
    """
    U(t) = xi_1 phi_1(t) + xi_2 phi_2(t) + eps(t) on the grid.

    Draw order per residual is scores, then (t_3 only) the chi-square mixing
    variable, then the white noise.
    """
    if tail not in TAILS:
        raise ConfigError(f"tail must be one of {TAILS}, got {tail!r}")
    xi = _scores(rng, tail, score_covariance_scale, size)
    noise_shape = (grid.m,) if size is None else (size, grid.m)
    noise = np.sqrt(noise_variance) * rng.standard_normal(noise_shape)
    return xi @ residual_basis(grid) + noise


class FunctionalDgp:
    """Seeded generator of samples y = x^T beta(t) + U(t)"""

    def __init__(self, config: DgpConfig):
        self.config = config
        self.grid = config.grid
        self.beta = true_beta(self.grid, config.beta3)

    def __iter__(self) -> Iterator[FunctionalSample]:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        for _ in range(cfg.n):
            x = sample_covariates(rng)
            u = sample_residual(rng, self.grid, cfg.tail, cfg.noise_variance, cfg.score_covariance_scale)
            yield FunctionalSample(x, x @ self.beta.values + u)

    def __len__(self) -> int:
        return self.config.n


def generate_dataset(config: DgpConfig) -> FunctionalDgp:
    """Lazy, re-iterable sample stream; every pass replays the same samples"""
    return FunctionalDgp(config)
