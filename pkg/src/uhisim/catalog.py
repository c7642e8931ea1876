"""Scene catalogs: directory scanning, record matching, and sample assembly."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DateMismatch, DuplicateScene, GeoMismatch, MissingBand
from .indices import (
    KELVIN_OFFSET,
    SplitWindowCoeffs,
    DEFAULT_COEFFS,
    brightness_temperature,
    split_window_lst,
)
from .raster import BandStack, Grid, REFLECTANCE_ROLES, resample
from .sidecar import read_sidecar
from .tiff import read_geotiff

SOURCES = (
    "landsat8",
    "era5",
    "cordex_rcp26",
    "cordex_rcp45",
    "cordex_rcp85",
    "lulc",
    "lst_label",
)

# single-band sources and the role their files carry
SINGLE_ROLE = {
    "era5": "t2m",
    "cordex_rcp26": "t2m",
    "cordex_rcp45": "t2m",
    "cordex_rcp85": "t2m",
    "lulc": "lulc",
    "lst_label": "lst",
}

LANDSAT_REQUIRED = REFLECTANCE_ROLES + ("tb10", "tb11")


@dataclass
class SceneRecord:
    scene_id: str
    source: str
    date: str                      # ISO-8601 day
    band_paths: dict[str, Path] = field(default_factory=dict)
    hour: int | None = None        # hourly reanalysis files only

    @property
    def year(self) -> int:
        return int(self.date[:4])


@dataclass
class Sample:
    """One training unit: co-registered inputs, LST label, and LULC grid."""

    scene_id: str
    date: str
    inputs: BandStack
    label: Grid
    lulc: Grid

    def validate(self) -> None:
        for role, grid in self.inputs.bands:
            if not grid.same_geometry(self.label):
                raise GeoMismatch(f"band {role!r} vs label")
        if not self.lulc.same_geometry(self.label):
            raise GeoMismatch("lulc vs label")
        all_inputs_valid = ~np.logical_or.reduce(
            [g.nodata_mask for _, g in self.inputs.bands]
        )
        if (all_inputs_valid & self.label.nodata_mask).any():
            raise ValueError("label is nodata where all inputs are valid")


@dataclass
class CatalogConfig:
    """Naming patterns and radiometric constants for a scene directory.

    patterns maps source -> regex with named groups: scene_id (optional),
    date (YYYYMMDD or YYYY-MM-DD; optional), band (landsat8 only). Band names
    map to roles through band_map.
    """

    patterns: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_PATTERNS))
    band_map: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_BAND_MAP))
    reflectance_scale: float = 2.75e-5
    reflectance_offset: float = -0.2
    t2m_units: str = "kelvin"
    overpass_hour: int = 10        # local solar time of the satellite pass
    thermal: dict | None = None    # {"rad_mult","rad_add","k1","k2"} per tb role
    coeffs: SplitWindowCoeffs = field(default_factory=lambda: DEFAULT_COEFFS)

    @classmethod
    def from_json(cls, doc: dict | str | Path) -> "CatalogConfig":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        kwargs = {}
        for key in ("patterns", "band_map", "reflectance_scale",
                    "reflectance_offset", "t2m_units", "overpass_hour",
                    "thermal"):
            if key in doc:
                kwargs[key] = doc[key]
        if "coeffs" in doc:
            kwargs["coeffs"] = SplitWindowCoeffs.from_json(doc["coeffs"])
        return cls(**kwargs)


DEFAULT_PATTERNS = {
    "landsat8": r"^LC08_(?P<scene_id>[A-Za-z0-9]+)_(?P<date>\d{8})_B(?P<band>\d+)\.(tif|bin)$",
    "era5": r"^ERA5_T2M_(?P<date>\d{8})(T(?P<hour>\d{2}))?\.(tif|bin)$",
    "cordex_rcp26": r"^CORDEX_RCP26_(?P<date>\d{8})\.(tif|bin)$",
    "cordex_rcp45": r"^CORDEX_RCP45_(?P<date>\d{8})\.(tif|bin)$",
    "cordex_rcp85": r"^CORDEX_RCP85_(?P<date>\d{8})\.(tif|bin)$",
    "lulc": r"^LULC_(?P<date>\d{4})\.(tif|bin)$",
    "lst_label": r"^LST_(?P<date>\d{8})\.(tif|bin)$",
}

DEFAULT_BAND_MAP = {
    "1": "coastal", "2": "blue", "3": "green",
    "4": "red", "5": "nir", "6": "swir1",
    "10": "tb10", "11": "tb11",
}


@dataclass
class Catalog:
    records: list[SceneRecord] = field(default_factory=list)
    ignored: list[str] = field(default_factory=list)

    def by_source(self, source: str) -> list[SceneRecord]:
        return [r for r in self.records if r.source == source]

    def find(self, source: str, scene_id: str) -> SceneRecord:
        for r in self.records:
            if r.source == source and r.scene_id == scene_id:
                return r
        raise KeyError(f"no {source} record {scene_id!r}")


def _normalize_date(raw: str) -> str:
    digits = raw.replace("-", "")
    if len(digits) == 8:
        return f"{digits[:4]}-{digits[4:6]}-{digits[6:]}"
    if len(digits) == 4:
        return f"{digits}-01-01"
    raise ValueError(f"cannot parse date {raw!r}")


def catalog_scan(directory: str | Path, config: CatalogConfig) -> Catalog:
    """Match directory files against the configured patterns.

    The result is deterministic: records sorted by (source, date, scene_id),
    unmatched files listed under ignored. Files are not opened.
    """
    directory = Path(directory)
    compiled = {src: re.compile(pat) for src, pat in config.patterns.items()}
    records: dict[tuple[str, str], SceneRecord] = {}
    ignored = []
    for entry in sorted(directory.iterdir()):
        if not entry.is_file() or entry.suffix == ".json":
            continue
        matched = False
        for source, regex in compiled.items():
            m = regex.match(entry.name)
            if not m:
                continue
            matched = True
            groups = m.groupdict()
            date = _normalize_date(groups.get("date") or "1970-01-01")
            hour = int(groups["hour"]) if groups.get("hour") else None
            scene_id = groups.get("scene_id") or f"{source}-{date}"
            if hour is not None:
                scene_id = f"{scene_id}T{hour:02d}"
            if source == "landsat8":
                band = groups.get("band")
                role = config.band_map.get(band)
                if role is None:
                    ignored.append(entry.name)
                    break
            else:
                role = SINGLE_ROLE[source]
            key = (source, scene_id)
            rec = records.get(key)
            if rec is None:
                rec = SceneRecord(scene_id, source, date, hour=hour)
                records[key] = rec
            elif rec.date != date:
                raise DuplicateScene(
                    f"scene {scene_id!r} appears with dates {rec.date} and {date}"
                )
            if role in rec.band_paths:
                raise DuplicateScene(
                    f"scene {scene_id!r} has two files for band {role!r}"
                )
            rec.band_paths[role] = entry
            break
        if not matched:
            ignored.append(entry.name)
    out = sorted(records.values(), key=lambda r: (r.source, r.date, r.scene_id))
    return Catalog(records=out, ignored=sorted(ignored))


def pick_era5_record(records, date: str, overpass_hour: int) -> SceneRecord | None:
    """ERA5 record for one day: the hour nearest the overpass when hourly
    files exist, the daily file otherwise."""
    same_day = [r for r in records if r.date == date]
    hourly = [r for r in same_day if r.hour is not None]
    if hourly:
        return min(hourly, key=lambda r: (abs(r.hour - overpass_hour), r.hour))
    return same_day[0] if same_day else None


def _read_band(path: Path, role: str, units: str) -> Grid:
    if path.suffix == ".bin":
        obj = read_sidecar(path)
        if isinstance(obj, BandStack):
            return obj.band(role)
        return Grid(obj.values, obj.georef, units, obj.nodata_mask)
    stack = read_geotiff(path, [role], units)
    return stack.band(role)


def build_sample(landsat: SceneRecord, era5: SceneRecord, lulc: SceneRecord,
                 config: CatalogConfig) -> Sample:
    """Assemble one co-registered sample on the fine (30 m) grid.

    Reflectance DNs are scaled with the configured scale/offset and clipped
    to [0, 1]; T2M is resampled bilinear and converted to celsius; the label
    comes from the split-window retrieval over tb10/tb11. Validity is
    all-or-nothing per pixel: the label mask and the union of input masks are
    merged both ways.
    """
    if landsat.date != era5.date:
        raise DateMismatch(f"landsat {landsat.date} vs era5 {era5.date}")
    if lulc.year != int(landsat.date[:4]):
        raise DateMismatch(f"lulc year {lulc.year} vs scene year {landsat.date[:4]}")
    for role in LANDSAT_REQUIRED:
        if role not in landsat.band_paths:
            raise MissingBand(f"landsat record {landsat.scene_id!r} missing {role!r}")

    scale, offset = config.reflectance_scale, config.reflectance_offset
    bands = []
    for role in REFLECTANCE_ROLES:
        dn = _read_band(landsat.band_paths[role], role, "reflectance")
        vals = np.clip(scale * dn.values + offset, 0.0, 1.0)
        bands.append((role, Grid(np.where(dn.nodata_mask, 0.0, vals),
                                 dn.georef, "reflectance", dn.nodata_mask)))
    fine = bands[0][1]

    tb = {}
    for role in ("tb10", "tb11"):
        grid = _read_band(landsat.band_paths[role], role, "kelvin")
        if config.thermal:
            c = config.thermal[role] if role in config.thermal else config.thermal
            grid = brightness_temperature(grid, c["rad_mult"], c["rad_add"],
                                          c["k1"], c["k2"])
        tb[role] = grid
    label = split_window_lst(tb["tb10"], tb["tb11"], config.coeffs)

    t2m = _read_band(era5.band_paths["t2m"], "t2m", config.t2m_units)
    t2m_fine = resample(t2m, fine.georef, fine.shape, "bilinear")
    if config.t2m_units == "kelvin":
        t2m_fine = Grid(
            np.where(t2m_fine.nodata_mask, 0.0, t2m_fine.values - KELVIN_OFFSET),
            t2m_fine.georef, "celsius", t2m_fine.nodata_mask)
    bands.append(("t2m", t2m_fine))

    lulc_grid = _read_band(lulc.band_paths["lulc"], "lulc", "class_id")
    lulc_fine = resample(lulc_grid, fine.georef, fine.shape, "nearest")

    inputs = BandStack(bands)
    if not label.same_geometry(fine):
        raise GeoMismatch("label grid does not match the reflectance grid")

    # all-or-nothing pixel validity across inputs and label
    invalid = label.nodata_mask.copy()
    for _, g in inputs.bands:
        invalid |= g.nodata_mask
    inputs = BandStack([
        (r, Grid(np.where(invalid, 0.0, g.values), g.georef, g.units, invalid))
        for r, g in inputs.bands
    ])
    label = Grid(np.where(invalid, 0.0, label.values), label.georef,
                 "celsius", invalid)

    sample = Sample(
        scene_id=landsat.scene_id,
        date=landsat.date,
        inputs=inputs,
        label=label,
        lulc=lulc_fine,
    )
    sample.validate()
    return sample
