"""
Metrics Module
RMISE, band coverage, replication summaries and the bootstrap KS check
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import ks_2samp

from core.bootstrap import ConfidenceBand
from core.errors import EmptyStreamError, ShapeError
from core.functional_data import CoefficientField


@dataclass(frozen=True)
class ReplicationSummary:
    """Per-coefficient mean and (n - 1) standard deviation of RMISE"""

    mean: tuple
    sd: tuple
    count: int
    single_replication: bool = False

    def as_dict(self) -> dict:
        return {"mean": list(self.mean), "sd": list(self.sd), "count": self.count,
                "single_replication": self.single_replication}


def rmise(estimate: CoefficientField, truth: CoefficientField, k: int) -> float:
    """sqrt(m^-1 sum_l (beta_hat_k(t_l) - beta_k(t_l))^2)"""
    if estimate.grid != truth.grid or estimate.values.shape != truth.values.shape:
        raise ShapeError("estimate and truth must share grid and shape")
    err = estimate.values[k] - truth.values[k]
    return float(np.sqrt(np.mean(err * err)))


def rmise_all(estimate: CoefficientField, truth: CoefficientField) -> list:
    return [rmise(estimate, truth, k) for k in range(truth.d)]


def coverage(bands: Sequence[ConfidenceBand], truth: CoefficientField) -> np.ndarray:
    """Fraction of replications whose band holds the truth, per (j, l)"""
    if not bands:
        raise EmptyStreamError("coverage needs at least one replication")
    hits = np.zeros(truth.values.shape)
    for band in bands:
        if band.lower.shape != truth.values.shape:
            raise ShapeError(f"band shape {band.lower.shape} does not match truth {truth.values.shape}")
        hits += band.contains(truth.values)
    return hits / len(bands)


def summarize(rmise_values: Sequence[Sequence[float]]) -> ReplicationSummary:
    """rmise_values holds one list of per-coefficient RMISE per replication"""
    table = np.asarray(rmise_values, dtype=float)
    if table.ndim != 2 or table.shape[0] == 0:
        raise EmptyStreamError("summary needs at least one replication")
    count = table.shape[0]
    mean = table.mean(axis=0)
    if count == 1:
        # sd undefined for a single replication; reported as 0 and flagged
        return ReplicationSummary(tuple(mean.tolist()), tuple([0.0] * table.shape[1]), 1, True)
    sd = table.std(axis=0, ddof=1)
    return ReplicationSummary(tuple(mean.tolist()), tuple(sd.tolist()), count)


def project(values: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Inner product over the trailing (d, m) axes"""
    return np.tensordot(values, direction, axes=([-2, -1], [0, 1]))


def bootstrap_ks_distance(replication_errors: np.ndarray, chain_averages: np.ndarray,
                          direction: np.ndarray, n: int) -> float:
    """
    KS distance between sqrt(n) <u, beta_bar - beta> across replications and
    sqrt(n) <u, Upsilon_bar^b> across the chains of one run.
    """
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    sampled = np.sqrt(n) * project(np.asarray(replication_errors, dtype=float), direction)
    bootstrapped = np.sqrt(n) * project(np.asarray(chain_averages, dtype=float), direction)
    return float(ks_2samp(sampled, bootstrapped).statistic)
