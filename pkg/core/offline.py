"""
Offline Oracle Module
Batch geometric-median regression (IRLS) and least squares on a full dataset
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dataclass_field
from typing import List

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from core.errors import ConfigError, ShapeError, SingularDesignError
from core.functional_data import CoefficientField, Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleConfig:
    max_iterations: int = 500
    rel_tolerance: float = 1e-8
    weight_floor: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.rel_tolerance <= 0 or self.weight_floor <= 0:
            raise ConfigError("rel_tolerance and weight_floor must be positive")


@dataclass
class OfflineFit:
    """Best IRLS iterate with its loss and convergence flag"""

    field: CoefficientField
    loss: float
    iterations: int
    converged: bool
    loss_history: List[float] = dataclass_field(default_factory=list)


def residual_norms(values: np.ndarray, dataset: Dataset) -> np.ndarray:
    residuals = dataset.y - dataset.x @ values
    return np.sqrt(np.sum(residuals * residuals, axis=1))


def gm_loss(field: CoefficientField, dataset: Dataset) -> float:
    """Sum over samples of the grid norm of y_i - x_i^T beta"""
    if field.values.shape != (dataset.d, dataset.grid.m):
        raise ShapeError(f"field shape {field.values.shape} does not match dataset ({dataset.d}, {dataset.grid.m})")
    return float(np.sum(residual_norms(field.values, dataset)))


def _check_design(dataset: Dataset):
    if dataset.n < dataset.d or np.linalg.matrix_rank(dataset.x) < dataset.d:
        raise SingularDesignError(f"design of {dataset.n} samples has rank below d={dataset.d}")


def _weighted_solve(dataset: Dataset, weights: np.ndarray) -> np.ndarray:
    """All grid points share the sample weights, so one d x d factorisation serves every column"""
    xw = dataset.x * weights[:, None]
    gram = dataset.x.T @ xw
    rhs = xw.T @ dataset.y
    try:
        factor = cho_factor(gram)
    except LinAlgError as e:
        raise SingularDesignError(f"weighted normal equations are not positive definite: {e}") from e
    return cho_solve(factor, rhs)


def fit_ls_offline(dataset: Dataset) -> CoefficientField:
    """Per grid point least squares via the normal equations"""
    _check_design(dataset)
    return CoefficientField(_weighted_solve(dataset, np.ones(dataset.n)), dataset.grid)


def fit_gm_offline(dataset: Dataset, config: OracleConfig = OracleConfig()) -> OfflineFit:
    """
    Geometric-median regression by iteratively reweighted least squares.

    Starts from least squares; each pass weights sample i by
    1 / max(||r_i||, weight_floor) and re-solves. The best iterate seen is
    returned, with converged=False when max_iterations ran out first.
    """
    _check_design(dataset)
    values = _weighted_solve(dataset, np.ones(dataset.n))
    loss = float(np.sum(residual_norms(values, dataset)))
    best_values, best_loss = values, loss
    history = [loss]
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        weights = 1.0 / np.maximum(residual_norms(values, dataset), config.weight_floor)
        updated = _weighted_solve(dataset, weights)
        loss = float(np.sum(residual_norms(updated, dataset)))
        history.append(loss)
        if loss < best_loss:
            best_values, best_loss = updated, loss

        change = np.linalg.norm(updated - values) / max(np.linalg.norm(values), np.finfo(float).tiny)
        values = updated
        if change < config.rel_tolerance:
            converged = True
            break

    if not converged:
        logger.warning(f"⚠️ IRLS stopped after {iterations} iterations without reaching tolerance")
    return OfflineFit(CoefficientField(best_values, dataset.grid), best_loss, iterations, converged, history)
