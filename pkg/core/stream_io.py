"""
Stream IO Module
CSV ingestion of functional samples, online standardisation and result export
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence

import numpy as np

from core.bootstrap import ConfidenceBand
from core.errors import ConfigError, InvalidGridError, MalformedRowError
from core.functional_data import FunctionalSample, Grid, default_covariate_names

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null", "none"}
FLOAT_FORMAT = ".17g"
MALFORMED_POLICIES = ("skip", "abort")


@dataclass(frozen=True)
class ColumnMapping:
    """Which columns are covariates, how response headers are tagged, and row policies"""

    covariates: Optional[tuple] = None
    response_prefix: str = "y@"
    standardize: bool = False
    on_malformed: str = "skip"

    def __post_init__(self):
        if self.on_malformed not in MALFORMED_POLICIES:
            raise ConfigError(f"on_malformed must be one of {MALFORMED_POLICIES}, got {self.on_malformed!r}")
        if not self.response_prefix:
            raise ConfigError("response_prefix must not be empty")

    @classmethod
    def from_settings(cls, mapping: dict) -> "ColumnMapping":
        covariates = mapping.get("covariates")
        return cls(
            covariates=tuple(covariates) if covariates else None,
            response_prefix=mapping.get("response_prefix", "y@"),
            standardize=bool(mapping.get("standardize", False)),
            on_malformed=mapping.get("on_malformed", "skip"),
        )


@dataclass(frozen=True)
class StreamRecord:
    """One parsed CSV row: d covariate values then m response values"""

    line: int
    x: np.ndarray
    y: np.ndarray


class MissingFieldError(Exception):
    """Row with an empty or NA field; such rows are always dropped"""


class OnlineStandardizer:
    """Running per-covariate mean / variance (Welford), applied after each update"""

    def __init__(self, n_features: int, epsilon: float = 1e-8):
        self.n_features = n_features
        self.epsilon = epsilon
        self.count = 0
        self.mean = np.zeros(n_features)
        self.m2 = np.zeros(n_features)

    def update(self, x: np.ndarray):
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(self.n_features)
        return self.m2 / self.count

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / (np.sqrt(self.variance) + self.epsilon)

    def fit_transform(self, x: np.ndarray) -> np.ndarray:
        self.update(x)
        return self.transform(x)

    def state(self) -> dict:
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self.m2.tolist(), "epsilon": self.epsilon}

    @classmethod
    def from_state(cls, state: dict) -> "OnlineStandardizer":
        scaler = cls(len(state["mean"]), state.get("epsilon", 1e-8))
        scaler.count = int(state["count"])
        scaler.mean = np.asarray(state["mean"], dtype=float)
        scaler.m2 = np.asarray(state["m2"], dtype=float)
        return scaler


def parse_grid_headers(headers: Sequence[str], prefix: str):
    """Locations from `<prefix><loc>` headers, rescaled to [0, 1]"""
    try:
        locations = np.array([float(h[len(prefix):]) for h in headers])
    except ValueError as e:
        raise InvalidGridError(f"response headers must carry numeric locations: {e}") from e
    if locations.size < 2:
        raise InvalidGridError(f"need at least 2 response columns, found {locations.size}")
    if np.any(np.diff(locations) <= 0):
        raise InvalidGridError("response locations must be strictly increasing")
    lo, hi = locations[0], locations[-1]
    return Grid((locations - lo) / (hi - lo)), locations


def _parse_value(token: str, line: int, column: str) -> float:
    if token.strip().lower() in MISSING_TOKENS:
        raise MissingFieldError(f"line {line}: missing value in column {column}")
    try:
        value = float(token)
    except ValueError as e:
        raise MalformedRowError(f"line {line}: non-numeric value {token!r} in column {column}") from e
    if not np.isfinite(value):
        raise MalformedRowError(f"line {line}: non-finite value in column {column}")
    return value


def parse_record(row: Sequence[str], header: Sequence[str], cov_idx: Sequence[int],
                 resp_idx: Sequence[int], line: int) -> StreamRecord:
    if len(row) != len(header):
        raise MalformedRowError(f"line {line}: {len(row)} fields, header has {len(header)}")
    x = np.array([_parse_value(row[i], line, header[i]) for i in cov_idx])
    y = np.array([_parse_value(row[i], line, header[i]) for i in resp_idx])
    return StreamRecord(line, x, y)


class StreamReader:
    """
    Lazy, re-iterable sample source over a CSV file.

    Each pass starts from the configured standardiser state and recounts the
    dropped rows.
    """

    def __init__(self, path, mapping: ColumnMapping = ColumnMapping(),
                 standardizer: Optional[OnlineStandardizer] = None):
        self.path = Path(path)
        self.mapping = mapping
        with open(self.path, newline="") as f:
            try:
                self.header = next(csv.reader(f))
            except StopIteration:
                raise MalformedRowError(f"{self.path} has no header row")
        self.header = [h.strip() for h in self.header]
        prefix = mapping.response_prefix
        self._resp_idx = [i for i, h in enumerate(self.header) if h.startswith(prefix)]
        if mapping.covariates:
            missing = [c for c in mapping.covariates if c not in self.header]
            if missing:
                raise ConfigError(f"covariate columns not in header: {missing}")
            self._cov_idx = [self.header.index(c) for c in mapping.covariates]
        else:
            self._cov_idx = [i for i, h in enumerate(self.header) if not h.startswith(prefix)]
        if not self._cov_idx:
            raise ConfigError("no covariate columns found")
        self.covariate_names = tuple(self.header[i] for i in self._cov_idx)
        self.grid, self.locations = parse_grid_headers([self.header[i] for i in self._resp_idx], prefix)
        self._initial_standardizer = standardizer
        self.standardizer: Optional[OnlineStandardizer] = None
        self.drop_counts = {"missing": 0, "malformed": 0}
        self.rows_read = 0

    @property
    def d(self) -> int:
        return len(self._cov_idx)

    def _fresh_standardizer(self) -> Optional[OnlineStandardizer]:
        if not self.mapping.standardize:
            return None
        if self._initial_standardizer is not None:
            return OnlineStandardizer.from_state(self._initial_standardizer.state())
        return OnlineStandardizer(self.d)

    def __iter__(self) -> Iterator[FunctionalSample]:
        self.drop_counts = {"missing": 0, "malformed": 0}
        self.rows_read = 0
        self.standardizer = self._fresh_standardizer()
        with open(self.path, newline="") as f:
            reader = csv.reader(f)
            next(reader)
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                self.rows_read += 1
                try:
                    record = parse_record(row, self.header, self._cov_idx, self._resp_idx, line)
                except MissingFieldError:
                    self.drop_counts["missing"] += 1
                    continue
                except MalformedRowError as e:
                    if self.mapping.on_malformed == "abort":
                        raise
                    self.drop_counts["malformed"] += 1
                    logger.debug(f"skipping {e}")
                    continue
                x = record.x
                if self.standardizer is not None:
                    x = self.standardizer.fit_transform(x)
                yield FunctionalSample(x, record.y)


def load_stream(path, mapping: ColumnMapping = ColumnMapping(),
                standardizer: Optional[OnlineStandardizer] = None) -> StreamReader:
    return StreamReader(path, mapping, standardizer)


def _fmt(value: float) -> str:
    return format(float(value), FLOAT_FORMAT)


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_stream_csv(path, samples: Iterable[FunctionalSample], grid: Grid,
                     covariate_names: Optional[Sequence[str]] = None) -> Path:
    """Samples as `x1..xd, y@<t>...` rows at 17 significant digits"""
    samples = iter(samples)
    first = next(samples, None)
    if first is None:
        raise MalformedRowError("no samples to write")
    names = list(covariate_names or default_covariate_names(first.d))
    header = names + [f"y@{_fmt(t)}" for t in grid.points]

    def rows():
        for sample in itertools.chain([first], samples):
            yield [float(v) for v in sample.x] + [float(v) for v in sample.y]

    return write_table_csv(path, header, rows())


def band_rows(bands: Sequence[ConfidenceBand], covariate_names: Sequence[str]) -> List[list]:
    rows = []
    for band in bands:
        for j, name in enumerate(covariate_names):
            for l, t in enumerate(band.grid.points):
                rows.append([name, float(t), float(band.estimate[j, l]), band.method, float(band.level),
                             float(band.lower[j, l]), float(band.upper[j, l])])
    return rows


BAND_HEADER = ["covariate", "t", "estimate", "method", "level", "lower", "upper"]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_report_json(path, report: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_jsonable(report), f, indent=2)
    return path
