"""Normalized-difference spectral indices and split-window LST retrieval."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GeoMismatch, MissingBand
from .raster import BandStack, Grid

KELVIN_OFFSET = 273.15

# kind -> (numerator role, denominator role) of (a - b) / (a + b)
INDEX_BANDS = {
    "NDVI": ("nir", "red"),
    "NDBI": ("swir1", "nir"),
    "NDWI": ("green", "nir"),
}


def index_roles(kind: str) -> tuple[str, str]:
    try:
        return INDEX_BANDS[kind]
    except KeyError:
        raise ValueError(f"unknown index kind {kind!r}") from None


def normalized_difference(a: Grid, b: Grid) -> Grid:
    """(a - b) / (a + b) per pixel; nodata where either input is nodata or a + b == 0."""
    if not a.same_geometry(b):
        raise GeoMismatch("index inputs are not co-registered")
    denom = a.values + b.values
    mask = a.nodata_mask | b.nodata_mask | (denom == 0.0)
    safe = np.where(mask, 1.0, denom)
    out = (a.values - b.values) / safe
    out = np.clip(np.where(mask, 0.0, out), -1.0, 1.0)
    return Grid(out, a.georef, "index", mask)


def compute_index(stack: BandStack, kind: str) -> Grid:
    """Evaluate NDVI, NDBI, or NDWI over a reflectance stack."""
    num_role, den_role = index_roles(kind)
    for role in (num_role, den_role):
        if not stack.has(role):
            raise MissingBand(f"{kind} needs band {role!r}")
    return normalized_difference(stack.band(num_role), stack.band(den_role))


@dataclass(frozen=True)
class SplitWindowCoeffs:
    """Coefficient set for two-band thermal LST retrieval.

    b0..b7 are dimensionless; epsilon is the scene emissivity and
    delta_epsilon the band-difference emissivity. Water vapor dependence is
    assumed folded into the coefficients.
    """

    b0: float = 0.0
    b1: float = 1.0
    b2: float = 0.0
    b3: float = 0.0
    b4: float = 0.0
    b5: float = 0.0
    b6: float = 0.0
    b7: float = 0.0
    epsilon: float = 1.0
    delta_epsilon: float = 0.0
    name: str = "unnamed"

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must be in (0, 1]")
        if abs(self.delta_epsilon) >= 0.05:
            raise ValueError("|delta_epsilon| must be < 0.05")

    @classmethod
    def from_json(cls, doc) -> "SplitWindowCoeffs":
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        fields = {k: doc[k] for k in doc if k in (
            "b0", "b1", "b2", "b3", "b4", "b5", "b6", "b7",
            "epsilon", "delta_epsilon", "name")}
        return cls(**fields)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            **{f"b{i}": getattr(self, f"b{i}") for i in range(8)},
            "epsilon": self.epsilon,
            "delta_epsilon": self.delta_epsilon,
        }


# Du-2015-style default coefficient set. Treated strictly as data: loaded
# from config in production runs and replaceable by degenerate sets in tests.
DEFAULT_COEFFS = SplitWindowCoeffs(
    b0=-0.41165,
    b1=1.00522,
    b2=0.14543,
    b3=-0.27297,
    b4=4.06655,
    b5=-6.92512,
    b6=-18.27461,
    b7=0.24468,
    epsilon=0.985,
    delta_epsilon=0.003,
    name="du2015-style-defaults",
)


def split_window_lst(tb10: Grid, tb11: Grid, coeffs: SplitWindowCoeffs) -> Grid:
    """LST in celsius from the two brightness-temperature bands (kelvin).

    LST_K = b0
          + (b1 + b2*(1-eps)/eps + b3*deps/eps^2) * (T10+T11)/2
          + (b4 + b5*(1-eps)/eps + b6*deps/eps^2) * (T10-T11)/2
          + b7 * (T10-T11)^2
    """
    if not tb10.same_geometry(tb11):
        raise GeoMismatch("brightness-temperature bands are not co-registered")
    eps = coeffs.epsilon
    deps = coeffs.delta_epsilon
    mean_coef = coeffs.b1 + coeffs.b2 * (1.0 - eps) / eps + coeffs.b3 * deps / eps**2
    diff_coef = coeffs.b4 + coeffs.b5 * (1.0 - eps) / eps + coeffs.b6 * deps / eps**2
    t_mean = (tb10.values + tb11.values) / 2.0
    t_diff = (tb10.values - tb11.values) / 2.0
    lst_k = coeffs.b0 + mean_coef * t_mean + diff_coef * t_diff + coeffs.b7 * (2.0 * t_diff) ** 2
    mask = tb10.nodata_mask | tb11.nodata_mask
    out = np.where(mask, 0.0, lst_k - KELVIN_OFFSET)
    return Grid(out, tb10.georef, "celsius", mask)


def brightness_temperature(dn: Grid, rad_mult: float, rad_add: float, k1: float, k2: float) -> Grid:
    """Thermal DN -> at-sensor brightness temperature in kelvin.

    L = rad_mult*DN + rad_add; TB = k2 / ln(k1/L + 1). Pixels with L <= 0 are
    nodata.
    """
    if k1 <= 0 or k2 <= 0:
        raise ValueError("calibration constants k1, k2 must be positive")
    radiance = rad_mult * dn.values + rad_add
    mask = dn.nodata_mask | (radiance <= 0.0)
    safe = np.where(mask, 1.0, radiance)
    tb = k2 / np.log(k1 / safe + 1.0)
    out = np.where(mask, 0.0, tb)
    return Grid(out, dn.georef, "kelvin", mask)
