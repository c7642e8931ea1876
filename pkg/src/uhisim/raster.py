"""Raster data model: georeferenced grids, band stacks, resampling, tiling.

Grids are single-band rasters with an axis-aligned affine georeference
(origin + positive pixel sizes, rows increasing southward). All operations
are pure: inputs are never mutated and outputs are freshly allocated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateRole,
    EmptyOverlap,
    GeoMismatch,
    MissingBand,
    OverlapConflict,
    PatchTooLarge,
)

# Band roles a stack may carry, in canonical order.
BAND_ROLES = (
    "coastal",
    "blue",
    "green",
    "red",
    "nir",
    "swir1",
    "t2m",
    "tb10",
    "tb11",
    "lst",
    "lulc",
)

REFLECTANCE_ROLES = ("coastal", "blue", "green", "red", "nir", "swir1")

UNITS = ("reflectance", "kelvin", "celsius", "index", "class_id")


@dataclass(frozen=True)
class GeoRef:
    """Axis-aligned georeference: map coords of the top-left corner plus pixel size.

    pixel_h is stored positive; rows increase southward (y decreases).
    crs_id is an opaque identifier compared by string equality.
    """

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float
    crs_id: str = "local"

    def __post_init__(self):
        if not (self.pixel_w > 0 and self.pixel_h > 0):
            raise ValueError("pixel sizes must be positive")

    def pixel_center(self, row: int | np.ndarray, col: int | np.ndarray):
        x = self.origin_x + (np.asarray(col) + 0.5) * self.pixel_w
        y = self.origin_y - (np.asarray(row) + 0.5) * self.pixel_h
        return x, y

    def shifted(self, row_off: int, col_off: int) -> "GeoRef":
        """Georef of a sub-window starting at (row_off, col_off)."""
        return GeoRef(
            self.origin_x + col_off * self.pixel_w,
            self.origin_y - row_off * self.pixel_h,
            self.pixel_w,
            self.pixel_h,
            self.crs_id,
        )


class Grid:
    """Single-band 2-D raster with nodata mask and units.

    values is float64 row-major (height, width); nodata_mask is boolean with
    True marking invalid pixels. Non-masked values must be finite; index-unit
    grids must lie in [-1, 1].
    """

    __slots__ = ("values", "nodata_mask", "georef", "units")

    def __init__(self, values, georef: GeoRef, units: str, nodata_mask=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"grid values must be 2-D, got shape {values.shape}")
        if units not in UNITS:
            raise ValueError(f"unknown units {units!r}")
        if nodata_mask is None:
            nodata_mask = np.zeros(values.shape, dtype=bool)
        else:
            nodata_mask = np.asarray(nodata_mask, dtype=bool)
            if nodata_mask.shape != values.shape:
                raise ValueError("nodata_mask shape differs from values shape")
        valid = values[~nodata_mask]
        if valid.size and not np.all(np.isfinite(valid)):
            raise ValueError("non-masked grid values must be finite")
        if units == "index" and valid.size:
            if valid.min() < -1.0 - 1e-12 or valid.max() > 1.0 + 1e-12:
                raise ValueError("index grids must lie in [-1, 1]")
        self.values = values
        self.nodata_mask = nodata_mask
        self.georef = georef
        self.units = units

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def copy(self) -> "Grid":
        return Grid(self.values.copy(), self.georef, self.units, self.nodata_mask.copy())

    def window(self, row0: int, col0: int, height: int, width: int) -> "Grid":
        """Sub-grid of the given extent with a shifted georef."""
        return Grid(
            self.values[row0 : row0 + height, col0 : col0 + width].copy(),
            self.georef.shifted(row0, col0),
            self.units,
            self.nodata_mask[row0 : row0 + height, col0 : col0 + width].copy(),
        )

    def same_geometry(self, other: "Grid") -> bool:
        return self.shape == other.shape and self.georef == other.georef

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.same_geometry(other)
            and self.units == other.units
            and np.array_equal(self.nodata_mask, other.nodata_mask)
            and np.array_equal(
                self.values[~self.nodata_mask], other.values[~other.nodata_mask]
            )
        )

    def __repr__(self):
        return f"Grid({self.height}x{self.width}, units={self.units})"


class BandStack:
    """Ordered collection of co-registered single-band grids keyed by role."""

    __slots__ = ("bands",)

    def __init__(self, bands):
        bands = list(bands)
        if not bands:
            raise ValueError("stack needs at least one band")
        seen = set()
        first_role, first = bands[0]
        for role, grid in bands:
            if role not in BAND_ROLES:
                raise ValueError(f"unknown band role {role!r}")
            if role in seen:
                raise DuplicateRole(f"role {role!r} appears twice")
            seen.add(role)
            if not grid.same_geometry(first):
                raise GeoMismatch(
                    f"band {role!r} geometry {grid.shape}/{grid.georef} differs "
                    f"from {first_role!r}"
                )
        self.bands = bands

    @property
    def roles(self) -> list[str]:
        return [role for role, _ in self.bands]

    @property
    def height(self) -> int:
        return self.bands[0][1].height

    @property
    def width(self) -> int:
        return self.bands[0][1].width

    @property
    def georef(self) -> GeoRef:
        return self.bands[0][1].georef

    def band(self, role: str) -> Grid:
        for r, grid in self.bands:
            if r == role:
                return grid
        raise MissingBand(f"stack has no band {role!r}")

    def has(self, role: str) -> bool:
        return any(r == role for r, _ in self.bands)

    def window(self, row0: int, col0: int, height: int, width: int) -> "BandStack":
        return BandStack(
            [(r, g.window(row0, col0, height, width)) for r, g in self.bands]
        )

    def replace(self, role: str, grid: Grid) -> "BandStack":
        """New stack with one band substituted (geometry re-checked)."""
        if not self.has(role):
            raise MissingBand(f"stack has no band {role!r}")
        return BandStack(
            [(r, grid if r == role else g) for r, g in self.bands]
        )

    def __eq__(self, other):
        if not isinstance(other, BandStack):
            return NotImplemented
        return self.roles == other.roles and all(
            a == b for (_, a), (_, b) in zip(self.bands, other.bands)
        )

    def __repr__(self):
        return f"BandStack({self.height}x{self.width}, roles={self.roles})"


@dataclass
class Patch:
    """A square window of a parent stack, tagged with its parent offsets."""

    stack: BandStack
    origin_row: int
    origin_col: int
    patch_size: int = field(default=0)

    def __post_init__(self):
        if self.patch_size == 0:
            self.patch_size = self.stack.height
        if self.stack.height != self.patch_size or self.stack.width != self.patch_size:
            raise ValueError("patch stack dims must equal patch_size")


def align_stack(bands) -> BandStack:
    """Build a BandStack, rejecting geometry mismatches and duplicate roles."""
    return BandStack(bands)


def _extent(georef: GeoRef, height: int, width: int):
    # (xmin, xmax, ymin, ymax) of the outer pixel edges
    xmin = georef.origin_x
    xmax = georef.origin_x + width * georef.pixel_w
    ymax = georef.origin_y
    ymin = georef.origin_y - height * georef.pixel_h
    return xmin, xmax, ymin, ymax


def resample(src: Grid, target_georef: GeoRef, target_shape, method: str = "bilinear") -> Grid:
    """Resample src onto the target geometry.

    nearest picks the closest source center; bilinear interpolates from the 4
    enclosing source centers (edge-clamped inside the source extent) and
    yields nodata if any contributing pixel is nodata. Target pixels whose
    centers fall outside the source extent are nodata. Units are copied from
    src.
    """
    if method not in ("nearest", "bilinear"):
        raise ValueError(f"unknown resampling method {method!r}")
    th, tw = target_shape
    if (th, tw) == src.shape and target_georef == src.georef:
        return src.copy()
    sxmin, sxmax, symin, symax = _extent(src.georef, src.height, src.width)
    txmin, txmax, tymin, tymax = _extent(target_georef, th, tw)
    if txmin >= sxmax or txmax <= sxmin or tymin >= symax or tymax <= symin:
        raise EmptyOverlap("target extent does not intersect source extent")

    rows = np.arange(th)
    cols = np.arange(tw)
    tx, _ = target_georef.pixel_center(np.zeros(tw, dtype=int), cols)
    _, ty = target_georef.pixel_center(rows, np.zeros(th, dtype=int))
    # fractional source pixel coordinates of the target centers
    fx = (tx - src.georef.origin_x) / src.georef.pixel_w - 0.5
    fy = (src.georef.origin_y - ty) / src.georef.pixel_h - 0.5
    fxg, fyg = np.meshgrid(fx, fy)

    outside = (
        (fxg < -0.5)
        | (fxg > src.width - 0.5)
        | (fyg < -0.5)
        | (fyg > src.height - 0.5)
    )

    if method == "nearest":
        ci = np.clip(np.floor(fxg + 0.5).astype(int), 0, src.width - 1)
        ri = np.clip(np.floor(fyg + 0.5).astype(int), 0, src.height - 1)
        out = src.values[ri, ci]
        mask = src.nodata_mask[ri, ci] | outside
        return Grid(out, target_georef, src.units, mask)

    c0 = np.clip(np.floor(fxg).astype(int), 0, src.width - 1)
    r0 = np.clip(np.floor(fyg).astype(int), 0, src.height - 1)
    c1 = np.minimum(c0 + 1, src.width - 1)
    r1 = np.minimum(r0 + 1, src.height - 1)
    wx = np.clip(fxg - c0, 0.0, 1.0)
    wy = np.clip(fyg - r0, 0.0, 1.0)

    v00 = src.values[r0, c0]
    v01 = src.values[r0, c1]
    v10 = src.values[r1, c0]
    v11 = src.values[r1, c1]
    top = v00 + wx * (v01 - v00)
    bot = v10 + wx * (v11 - v10)
    out = top + wy * (bot - top)
    # exact-hit shortcut keeps identity resampling bit-exact (incl. -0.0)
    exact = (wx == 0.0) & (wy == 0.0)
    out = np.where(exact, v00, out)

    mask = outside.copy()
    # conservative nodata: any contributing source pixel invalidates the output
    m = src.nodata_mask
    contrib = m[r0, c0].copy()
    contrib |= np.where(wx > 0, m[r0, c1], False)
    contrib |= np.where(wy > 0, m[r1, c0], False)
    contrib |= np.where((wx > 0) & (wy > 0), m[r1, c1], False)
    mask |= contrib
    out = np.where(mask, 0.0, out)
    return Grid(out, target_georef, src.units, mask)


def tile(stack: BandStack, patch_size: int = 64, stride: int | None = None) -> list[Patch]:
    """Cut the stack into square patches at every full-window position.

    Patch offsets are multiples of stride; trailing rows/cols that do not fit
    a full window are left uncovered.
    """
    if stride is None:
        stride = patch_size
    if patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if patch_size > stack.height or patch_size > stack.width:
        raise PatchTooLarge(
            f"patch {patch_size} exceeds stack dims {stack.height}x{stack.width}"
        )
    patches = []
    for r in range(0, stack.height - patch_size + 1, stride):
        for c in range(0, stack.width - patch_size + 1, stride):
            patches.append(
                Patch(stack.window(r, c, patch_size, patch_size), r, c, patch_size)
            )
    return patches


def stitch(pieces, parent_shape, parent_georef: GeoRef, units: str | None = None) -> Grid:
    """Reassemble (origin_row, origin_col, Grid) pieces into a parent-sized grid.

    Pixels covered by no piece are nodata. Two pieces writing differing values
    to the same pixel raise OverlapConflict (bit-identical rewrites are
    allowed, so stride == patch_size round trips are exact).
    """
    ph, pw = parent_shape
    values = np.zeros((ph, pw), dtype=np.float64)
    mask = np.ones((ph, pw), dtype=bool)
    written = np.zeros((ph, pw), dtype=bool)
    for origin_row, origin_col, grid in pieces:
        if units is None:
            units = grid.units
        r0, c0 = origin_row, origin_col
        r1, c1 = r0 + grid.height, c0 + grid.width
        if r0 < 0 or c0 < 0 or r1 > ph or c1 > pw:
            raise ValueError("piece extends beyond parent dims")
        sub_written = written[r0:r1, c0:c1]
        if sub_written.any():
            prev_vals = values[r0:r1, c0:c1]
            prev_mask = mask[r0:r1, c0:c1]
            clash = sub_written & (
                (prev_mask != grid.nodata_mask)
                | (~prev_mask & ~grid.nodata_mask & (prev_vals != grid.values))
            )
            if clash.any():
                rr, cc = np.argwhere(clash)[0]
                raise OverlapConflict(
                    f"pixel ({r0 + rr}, {c0 + cc}) written twice with differing values"
                )
        values[r0:r1, c0:c1] = grid.values
        mask[r0:r1, c0:c1] = grid.nodata_mask
        written[r0:r1, c0:c1] = True
    if units is None:
        raise ValueError("cannot stitch zero pieces without explicit units")
    values[mask] = 0.0
    return Grid(values, parent_georef, units, mask)


def stitch_patches(patches: list[Patch], parent_shape, parent_georef: GeoRef) -> BandStack:
    """Band-wise stitch of full patches back into a parent stack."""
    if not patches:
        raise ValueError("no patches to stitch")
    roles = patches[0].stack.roles
    bands = []
    for role in roles:
        pieces = [(p.origin_row, p.origin_col, p.stack.band(role)) for p in patches]
        bands.append((role, stitch(pieces, parent_shape, parent_georef)))
    return BandStack(bands)
