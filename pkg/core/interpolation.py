"""
Interpolation Module
Natural cubic splines carrying grid estimates to arbitrary t in [0, 1]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline

from core.errors import NumericError, ShapeError
from core.functional_data import CoefficientField, Grid

BOUNDARY = "natural"


@dataclass(frozen=True, eq=False)
class SplineCurve:
    """Piecewise cubic through the knots; coefficients are (4, m - 1), highest power first"""

    knots: Grid
    poly: CubicSpline
    boundary: str = BOUNDARY

    @property
    def coefficients(self) -> np.ndarray:
        return self.poly.c


def spline_fit(knots: Grid, values: Sequence[float]) -> SplineCurve:
    values = np.asarray(values, dtype=float)
    if values.shape != (knots.m,):
        raise ShapeError(f"{values.size} values for {knots.m} knots")
    if not np.all(np.isfinite(values)):
        raise NumericError("spline values must be finite")
    return SplineCurve(knots, CubicSpline(knots.points, values, bc_type=BOUNDARY))


def spline_eval(curve: SplineCurve, t: Union[float, np.ndarray], nu: int = 0):
    """
    Evaluate the curve (or its nu-th derivative) at t.

    Outside [t_1, t_m] the curve is held at its boundary value, so derivatives
    there are zero.
    """
    pts = curve.knots.points
    t_arr = np.asarray(t, dtype=float)
    clipped = np.clip(t_arr, pts[0], pts[-1])
    out = curve.poly(clipped, nu)
    if nu > 0:
        out = np.where((t_arr < pts[0]) | (t_arr > pts[-1]), 0.0, out)
    return float(out) if out.ndim == 0 else out


def interpolate_field(field: CoefficientField, query: Grid) -> CoefficientField:
    """One spline per covariate row, evaluated on the query grid"""
    if query == field.grid:
        return CoefficientField(field.values.copy(), query)
    poly = CubicSpline(field.grid.points, field.values, axis=1, bc_type=BOUNDARY)
    return CoefficientField(poly(query.points), query)


def interpolate_rows(values: np.ndarray, grid: Grid, locations: Sequence[float]) -> np.ndarray:
    """Rows of `values` evaluated at arbitrary locations with constant extension"""
    values = np.asarray(values, dtype=float)
    locations = np.clip(np.asarray(locations, dtype=float), grid.points[0], grid.points[-1])
    poly = CubicSpline(grid.points, values, axis=-1, bc_type=BOUNDARY)
    return poly(locations)
