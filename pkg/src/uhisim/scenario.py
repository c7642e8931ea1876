"""What-if simulation: region edits on input stacks plus model re-inference.

Three modification modes mirror the supported mitigation experiments:
swapping a rectangle of reflectance pixels for a donor spectrum, rewriting
one band so a spectral index hits a target value, and substituting the
coarse air-temperature channel with a climate-projection grid. Each run
predicts LST on the modified and unmodified sample, differences them, and
extracts a vertical profile through the edited region.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .catalog import Sample
from .errors import (
    BboxOutOfBounds,
    ClassAbsent,
    MissingHorizon,
    UnreachableTarget,
)
from .indices import KELVIN_OFFSET, compute_index, index_roles
from .model.vit import ModelParams, forward_regress
from .raster import (
    BandStack,
    Grid,
    REFLECTANCE_ROLES,
    resample,
    stitch,
    tile,
)

DONOR_CLASS_FOREST = 2   # Trees
DONOR_CLASS_URBAN = 7    # Built Area

SUPPORTED_HORIZONS = (2030, 2050, 2100)

RCP_METADATA = {
    "cordex_rcp26": "strong mitigation, peak near 2020, <2 degC warming",
    "cordex_rcp45": "stabilization, ~650 ppm CO2 by 2100",
    "cordex_rcp85": "high emissions, ~1370 ppm CO2 by 2100",
}


@dataclass(frozen=True)
class Bbox:
    """Inclusive pixel rectangle: rows row0..row1, cols col0..col1."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self):
        if self.row0 > self.row1 or self.col0 > self.col1:
            raise ValueError("bbox must be normalized (row0 <= row1, col0 <= col1)")

    @property
    def height(self) -> int:
        return self.row1 - self.row0 + 1

    @property
    def width(self) -> int:
        return self.col1 - self.col0 + 1

    def check_within(self, shape) -> None:
        h, w = shape
        if self.row0 < 0 or self.col0 < 0 or self.row1 >= h or self.col1 >= w:
            raise BboxOutOfBounds(f"{self} outside grid {h}x{w}")

    def slices(self) -> tuple[slice, slice]:
        return slice(self.row0, self.row1 + 1), slice(self.col0, self.col1 + 1)

    def center_col(self) -> int:
        # even widths take the pixel whose left edge sits on the center line
        return self.col0 + self.width // 2

    def to_json(self) -> dict:
        return {"row0": self.row0, "col0": self.col0,
                "row1": self.row1, "col1": self.col1}

    @classmethod
    def from_json(cls, doc: dict) -> "Bbox":
        return cls(doc["row0"], doc["col0"], doc["row1"], doc["col1"])


@dataclass
class ForcingRecord:
    """Projection air-temperature grids for one emissions pathway."""

    source: str                      # cordex_rcp26 | cordex_rcp45 | cordex_rcp85
    grids: dict[int, Grid]           # horizon year -> t2m grid
    metadata: str = ""

    def __post_init__(self):
        if not self.metadata:
            self.metadata = RCP_METADATA.get(self.source, "")

    def grid_for(self, year: int) -> Grid:
        if year not in self.grids:
            raise MissingHorizon(f"{self.source} has no grid for {year}")
        return self.grids[year]


@dataclass
class ScenarioDef:
    """A persisted what-if request against one base sample."""

    scenario_id: str
    base_sample_id: str
    kind: str                        # pixel_swap | index_retarget | forcing
    bbox: Bbox | None = None
    donor: str | dict | None = None  # "forest" | "urban" | explicit role->value
    index_kind: str | None = None
    target_value: float | None = None
    delta: float | None = None
    adjusted_band: str | None = None
    forcing_source: str | None = None
    horizon_year: int | None = None
    created_at: str = ""

    def __post_init__(self):
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat()
        if self.kind not in ("pixel_swap", "index_retarget", "forcing"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind in ("pixel_swap", "index_retarget") and self.bbox is None:
            raise ValueError(f"{self.kind} needs a bbox")
        if self.kind == "index_retarget":
            if self.target_value is None and self.delta is None:
                raise ValueError("index_retarget needs target_value or delta")
            if self.target_value is not None and not -1.0 < self.target_value < 1.0:
                raise ValueError("target_value must lie in (-1, 1)")
        if self.kind == "forcing":
            if self.horizon_year not in SUPPORTED_HORIZONS:
                raise ValueError(f"horizon_year must be one of {SUPPORTED_HORIZONS}")
            if self.forcing_source not in RCP_METADATA:
                raise ValueError(f"unknown forcing source {self.forcing_source!r}")

    def to_json(self) -> dict:
        doc = {
            "scenario_id": self.scenario_id,
            "base_sample_id": self.base_sample_id,
            "kind": self.kind,
            "created_at": self.created_at,
        }
        if self.bbox is not None:
            doc["bbox"] = self.bbox.to_json()
        for key in ("donor", "index_kind", "target_value", "delta",
                    "adjusted_band", "forcing_source", "horizon_year"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioDef":
        bbox = Bbox.from_json(doc["bbox"]) if "bbox" in doc else None
        return cls(
            scenario_id=doc["scenario_id"],
            base_sample_id=doc["base_sample_id"],
            kind=doc["kind"],
            bbox=bbox,
            donor=doc.get("donor"),
            index_kind=doc.get("index_kind"),
            target_value=doc.get("target_value"),
            delta=doc.get("delta"),
            adjusted_band=doc.get("adjusted_band"),
            forcing_source=doc.get("forcing_source"),
            horizon_year=doc.get("horizon_year"),
            created_at=doc.get("created_at", ""),
        )


@dataclass
class ScenarioResult:
    predicted_lst: Grid
    baseline_lst: Grid
    diff: Grid
    profile: list[dict]              # {row, value_celsius, inside_bbox}
    stats: dict[str, float]
    scenario_id: str = ""
    clamped_fraction: float = 0.0

    def to_json(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "stats": self.stats,
            "profile": self.profile,
            "clamped_fraction": self.clamped_fraction,
        }


def pixel_swap(sample: Sample, bbox: Bbox, donor_spectrum: dict) -> Sample:
    """Overwrite all reflectance pixels inside bbox with the donor spectrum.

    The t2m channel, the LULC grid, and every pixel outside the bbox stay
    bit-identical to the base sample.
    """
    bbox.check_within(sample.label.shape)
    missing = [r for r in REFLECTANCE_ROLES if r not in donor_spectrum]
    if missing:
        raise ValueError(f"donor spectrum missing roles {missing}")
    rs, cs = bbox.slices()
    bands = []
    for role, grid in sample.inputs.bands:
        if role in REFLECTANCE_ROLES:
            values = grid.values.copy()
            values[rs, cs] = float(donor_spectrum[role])
            grid = Grid(values, grid.georef, grid.units, grid.nodata_mask.copy())
        bands.append((role, grid))
    return Sample(sample.scene_id, sample.date, BandStack(bands),
                  sample.label, sample.lulc)


def derive_donor(sample: Sample, class_id: int) -> dict[str, float]:
    """Per-band median reflectance over valid pixels of one LULC class."""
    lulc = sample.lulc
    sel = (lulc.values == class_id) & ~lulc.nodata_mask
    if not sel.any():
        raise ClassAbsent(f"class {class_id} absent from the LULC grid")
    donor = {}
    for role in REFLECTANCE_ROLES:
        grid = sample.inputs.band(role)
        usable = sel & ~grid.nodata_mask
        if not usable.any():
            raise ClassAbsent(f"class {class_id} has no valid {role!r} pixels")
        donor[role] = float(np.median(grid.values[usable]))
    return donor


def resolve_donor(sample: Sample, donor) -> dict[str, float]:
    if donor == "forest":
        return derive_donor(sample, DONOR_CLASS_FOREST)
    if donor == "urban":
        return derive_donor(sample, DONOR_CLASS_URBAN)
    if isinstance(donor, dict):
        return {k: float(v) for k, v in donor.items()}
    raise ValueError(f"donor must be 'forest', 'urban', or a spectrum, got {donor!r}")


def index_retarget(sample: Sample, bbox: Bbox, kind: str, target: float,
                   adjusted_band: str, allow_clamp: bool = False):
    """Rewrite one band inside bbox so the index equals target there.

    For index (a - b) / (a + b): adjusting a gives a = b*(1+t)/(1-t),
    adjusting b gives b = a*(1-t)/(1+t). Values are clamped to [0, 1]; unless
    allow_clamp is set, any clamped pixel raises UnreachableTarget. Returns
    (modified sample, clamp mask over the bbox window).
    """
    bbox.check_within(sample.label.shape)
    if not -1.0 < target < 1.0:
        raise ValueError("target must lie in (-1, 1)")
    num_role, den_role = index_roles(kind)
    if adjusted_band == num_role:
        fixed_role = den_role
    elif adjusted_band == den_role:
        fixed_role = num_role
    else:
        raise ValueError(
            f"adjusted_band {adjusted_band!r} is not part of {kind}"
        )
    rs, cs = bbox.slices()
    fixed = sample.inputs.band(fixed_role).values[rs, cs]
    if np.any(fixed <= 0.0):
        raise UnreachableTarget(
            f"{fixed_role!r} must be positive inside the bbox to invert {kind}"
        )
    if adjusted_band == num_role:
        required = fixed * (1.0 + target) / (1.0 - target)
    else:
        required = fixed * (1.0 - target) / (1.0 + target)
    clamped_vals = np.clip(required, 0.0, 1.0)
    clamp_mask = clamped_vals != required
    if clamp_mask.any() and not allow_clamp:
        worst = float(np.abs(required - clamped_vals).max())
        raise UnreachableTarget(
            f"target {kind}={target} needs reflectance beyond [0,1] "
            f"(overshoot {worst:.3g}) at {int(clamp_mask.sum())} pixels"
        )
    grid = sample.inputs.band(adjusted_band)
    values = grid.values.copy()
    values[rs, cs] = clamped_vals
    new_grid = Grid(values, grid.georef, grid.units, grid.nodata_mask.copy())
    modified = Sample(sample.scene_id, sample.date,
                      sample.inputs.replace(adjusted_band, new_grid),
                      sample.label, sample.lulc)
    return modified, clamp_mask


def current_index_mean(sample: Sample, bbox: Bbox, kind: str) -> float:
    bbox.check_within(sample.label.shape)
    rs, cs = bbox.slices()
    grid = compute_index(sample.inputs, kind)
    window = grid.values[rs, cs]
    mask = grid.nodata_mask[rs, cs]
    if mask.all():
        raise UnreachableTarget("no valid index pixels inside bbox")
    return float(window[~mask].mean())


def apply_forcing(sample: Sample, forcing: ForcingRecord, year: int) -> Sample:
    """Swap the t2m channel for the projection grid of the given horizon year.

    The grid is resampled bilinear onto the sample grid and converted to
    celsius when declared in kelvin; reflectance bands are untouched.
    """
    coarse = forcing.grid_for(year)
    fine = resample(coarse, sample.inputs.georef,
                    (sample.inputs.height, sample.inputs.width), "bilinear")
    if fine.units == "kelvin":
        fine = Grid(np.where(fine.nodata_mask, 0.0, fine.values - KELVIN_OFFSET),
                    fine.georef, "celsius", fine.nodata_mask)
    return Sample(sample.scene_id, sample.date,
                  sample.inputs.replace("t2m", fine),
                  sample.label, sample.lulc)


def vertical_profile(grid: Grid, bbox: Bbox) -> list[dict]:
    """All rows top-to-bottom at the bbox center column, tagged inside/outside."""
    bbox.check_within(grid.shape)
    col = bbox.center_col()
    profile = []
    for row in range(grid.height):
        masked = bool(grid.nodata_mask[row, col])
        profile.append({
            "row": row,
            "value_celsius": None if masked else float(grid.values[row, col]),
            "inside_bbox": bool(bbox.row0 <= row <= bbox.row1),
        })
    return profile


def profile_csv(profile: list[dict]) -> str:
    lines = ["row,value_celsius,inside_bbox"]
    for entry in profile:
        value = "" if entry["value_celsius"] is None else repr(entry["value_celsius"])
        lines.append(f"{entry['row']},{value},{str(entry['inside_bbox']).lower()}")
    return "\n".join(lines) + "\n"


def apply_modification(sample: Sample, definition: ScenarioDef,
                       forcing: ForcingRecord | None = None):
    """Dispatch one ScenarioDef to its modification; returns (sample, clamp_frac)."""
    if definition.kind == "pixel_swap":
        donor = resolve_donor(sample, definition.donor)
        return pixel_swap(sample, definition.bbox, donor), 0.0
    if definition.kind == "index_retarget":
        target = definition.target_value
        if target is None:
            base = current_index_mean(sample, definition.bbox, definition.index_kind)
            target = float(np.clip(base + definition.delta, -0.999999, 0.999999))
        adjusted = definition.adjusted_band or index_roles(definition.index_kind)[0]
        modified, clamp_mask = index_retarget(
            sample, definition.bbox, definition.index_kind, target,
            adjusted, allow_clamp=True)
        return modified, float(clamp_mask.mean())
    if definition.kind == "forcing":
        if forcing is None:
            raise MissingHorizon(
                f"no forcing data available for {definition.forcing_source}"
            )
        return apply_forcing(sample, forcing, definition.horizon_year), 0.0
    raise ValueError(f"unknown scenario kind {definition.kind!r}")


def _predict_full(params: ModelParams, sample: Sample, patch_size: int) -> Grid:
    stack = sample.inputs
    if stack.height == patch_size and stack.width == patch_size:
        return forward_regress(params, stack)
    pieces = []
    for patch in tile(stack, patch_size, patch_size):
        pred = forward_regress(params, patch.stack)
        pieces.append((patch.origin_row, patch.origin_col, pred))
    return stitch(pieces, (stack.height, stack.width), stack.georef, "celsius")


def dilation_ring(bbox: Bbox, shape, width: int = 3) -> np.ndarray:
    """Boolean band of `width` pixels around the bbox, clipped to the grid."""
    h, w = shape
    outer = np.zeros((h, w), dtype=bool)
    r0 = max(bbox.row0 - width, 0)
    c0 = max(bbox.col0 - width, 0)
    r1 = min(bbox.row1 + width, h - 1)
    c1 = min(bbox.col1 + width, w - 1)
    outer[r0 : r1 + 1, c0 : c1 + 1] = True
    rs, cs = bbox.slices()
    outer[rs, cs] = False
    return outer


def run_scenario(definition: ScenarioDef, sample: Sample, params: ModelParams,
                 forcing: ForcingRecord | None = None,
                 patch_size: int = 64) -> ScenarioResult:
    """Modify, re-infer, difference against the unmodified prediction.

    The profile samples the predicted map through the bbox center column (or
    the full-grid center column for forcing scenarios, which have no bbox).
    """
    modified, clamp_frac = apply_modification(sample, definition, forcing)
    baseline = _predict_full(params, sample, patch_size)
    predicted = _predict_full(params, modified, patch_size)
    diff_mask = baseline.nodata_mask | predicted.nodata_mask
    diff = Grid(np.where(diff_mask, 0.0, predicted.values - baseline.values),
                baseline.georef, "celsius", diff_mask)

    bbox = definition.bbox or Bbox(0, 0, sample.label.height - 1,
                                   sample.label.width - 1)
    profile = vertical_profile(predicted, bbox)

    rs, cs = bbox.slices()
    inside = np.zeros(diff.shape, dtype=bool)
    inside[rs, cs] = True
    inside &= ~diff_mask
    ring = dilation_ring(bbox, diff.shape) & ~diff_mask
    valid = ~diff_mask
    stats = {
        "mean_delta_inside": float(diff.values[inside].mean()) if inside.any() else 0.0,
        "mean_delta_outside_ring": float(diff.values[ring].mean()) if ring.any() else 0.0,
        "max_abs_delta": float(np.abs(diff.values[valid]).max()) if valid.any() else 0.0,
    }
    return ScenarioResult(
        predicted_lst=predicted,
        baseline_lst=baseline,
        diff=diff,
        profile=profile,
        stats=stats,
        scenario_id=definition.scenario_id,
        clamped_fraction=clamp_frac,
    )
