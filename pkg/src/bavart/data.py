"""Time-series ingestion, lag designs and Nelson-Siegel factor maps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """T x M panel; rows are time, columns are variables."""

    values: np.ndarray
    names: tuple[str, ...]
    frequency: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError("values must be a 2-D array")
        names = tuple(str(n) for n in self.names)
        if len(names) != values.shape[1]:
            raise DataError(f"{len(names)} names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if values.shape[0] < 2:
            raise DataError("need at least 2 rows")
        if not np.all(np.isfinite(values)):
            raise DataError("values must be finite (no missing cells)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def head(self, rows: int) -> "TimeSeriesMatrix":
        return TimeSeriesMatrix(self.values[:rows], self.names, self.frequency)

    def reorder(self, ordering: Sequence[str]) -> "TimeSeriesMatrix":
        ordering = list(ordering)
        if sorted(ordering) != sorted(self.names):
            raise DataError(f"ordering {ordering} is not a permutation of {list(self.names)}")
        idx = [self.names.index(n) for n in ordering]
        return TimeSeriesMatrix(self.values[:, idx], tuple(ordering), self.frequency)

    def difference(self) -> "TimeSeriesMatrix":
        return TimeSeriesMatrix(np.diff(self.values, axis=0), self.names, self.frequency)


@dataclass(frozen=True)
class LagDesign:
    X: np.ndarray
    Y: np.ndarray
    P: int

    @property
    def K(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class NsCurveConfig:
    """Nelson-Siegel setup; maturities are in months."""

    maturities: tuple[float, ...]
    gamma: float = 0.0609

    def __post_init__(self):
        mats = tuple(float(m) for m in self.maturities)
        if any(m <= 0 for m in mats):
            raise DataError("maturities must be positive")
        if any(b <= a for a, b in zip(mats, mats[1:])):
            raise DataError("maturities must be strictly increasing")
        if not self.gamma > 0:
            raise DataError("gamma must be positive")
        object.__setattr__(self, "maturities", mats)


def load_csv(path, frequency: str = "") -> TimeSeriesMatrix:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {i}, column {j + 1} ({header[j]!r}): cannot parse {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {i}, column {j + 1} ({header[j]!r}): non-finite value")
            values[i - 2, j] = v
    if len(body) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(body)}")
    return TimeSeriesMatrix(values, tuple(header), frequency)


def write_csv(path, Y: TimeSeriesMatrix) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(Y.names)
        for row in Y.values:
            w.writerow([repr(float(v)) for v in row])


def build_lag_design(Y: TimeSeriesMatrix | np.ndarray, P: int) -> LagDesign:
    """Row t of X is (y_{t-1}', ..., y_{t-P}') aligned with row t of the trimmed Y."""
    values = Y.values if isinstance(Y, TimeSeriesMatrix) else np.asarray(Y, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    if P < 1:
        raise DataError(f"lag order must be >= 1, got {P}")
    if P >= T:
        raise DataError(f"lag order {P} needs more than {T} observations")
    X = np.hstack([values[P - lag : T - lag] for lag in range(1, P + 1)])
    return LagDesign(X=X, Y=values[P:].copy(), P=P)


def lag_vector(history: np.ndarray, P: int) -> np.ndarray:
    """Regressor vector for the period after the last row of ``history``."""
    return history[::-1][:P].reshape(-1)


def ns_loadings(maturity: float, gamma: float) -> np.ndarray:
    if not (maturity > 0 and gamma > 0):
        raise DataError("maturity and gamma must be positive")
    z = gamma * maturity
    # -expm1(-z)/z keeps precision for short maturities
    slope = -math.expm1(-z) / z
    return np.array([1.0, slope, slope - math.exp(-z)])


def ns_loading_matrix(cfg: NsCurveConfig) -> np.ndarray:
    return np.vstack([ns_loadings(m, cfg.gamma) for m in cfg.maturities])


def ns_extract_factors(yields: TimeSeriesMatrix, cfg: NsCurveConfig) -> TimeSeriesMatrix:
    """Period-by-period least-squares level/slope/curvature factors."""
    n = len(cfg.maturities)
    if yields.M != n:
        raise DataError(f"{yields.M} yield columns but {n} maturities")
    if n < 3:
        raise DataError("need at least 3 maturities to identify three factors")
    L = ns_loading_matrix(cfg)
    if np.linalg.matrix_rank(L) < 3:
        raise DataError("Nelson-Siegel loading matrix is rank deficient")
    factors, *_ = np.linalg.lstsq(L, yields.values.T, rcond=None)
    return TimeSeriesMatrix(factors.T, ("level", "slope", "curvature"), yields.frequency)


def ns_fitted_yields(factors: np.ndarray, cfg: NsCurveConfig) -> np.ndarray:
    return np.asarray(factors) @ ns_loading_matrix(cfg).T


def ns_map_forecasts(factor_draws, cfg: NsCurveConfig):
    """Map factor values to yields along the last axis.

    Accepts a (..., 3) array, returning (..., n_maturities), or a predictive
    draw object with ``values``/``origin`` fields, returning the same type with
    one column per maturity.
    """
    if hasattr(factor_draws, "values") and hasattr(factor_draws, "origin"):
        mapped = ns_map_forecasts(factor_draws.values, cfg)
        names = tuple(f"m{m:g}" for m in cfg.maturities)
        return type(factor_draws)(mapped, names, factor_draws.origin)
    factor_draws = np.asarray(factor_draws, dtype=float)
    if factor_draws.shape[-1] != 3:
        raise DataError(f"expected 3 factors in the last axis, got {factor_draws.shape[-1]}")
    return factor_draws @ ns_loading_matrix(cfg).T
