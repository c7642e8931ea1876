"""Sidecar raster format: flat little-endian float32 .bin + JSON .json header."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import CorruptFile
from .raster import BandStack, GeoRef, Grid


def _georef_json(georef: GeoRef) -> dict:
    return {
        "origin_x": georef.origin_x,
        "origin_y": georef.origin_y,
        "pixel_w": georef.pixel_w,
        "pixel_h": georef.pixel_h,
        "crs_id": georef.crs_id,
    }


def _georef_from_json(doc: dict) -> GeoRef:
    return GeoRef(doc["origin_x"], doc["origin_y"], doc["pixel_w"],
                  doc["pixel_h"], doc["crs_id"])


def write_sidecar(obj: Grid | BandStack, path: str | Path) -> None:
    """Write <path>.bin (bands concatenated row-major) and <path>.json.

    Masked pixels are stored as NaN; the header declares "nodata": "nan".
    """
    path = Path(path)
    if isinstance(obj, Grid):
        bands = [(None, obj)]
    else:
        bands = obj.bands
    height, width = bands[0][1].shape
    blob = bytearray()
    for _, grid in bands:
        vals = grid.values.astype("<f4")
        vals = np.where(grid.nodata_mask, np.float32("nan"), vals)
        blob += np.ascontiguousarray(vals, dtype="<f4").tobytes()
    header = {
        "width": width,
        "height": height,
        "georef": _georef_json(bands[0][1].georef),
        "units": [g.units for _, g in bands],
        "nodata": "nan",
    }
    if bands[0][0] is not None:
        header["roles"] = [r for r, _ in bands]
    _atomic_write(path.with_suffix(".bin"), bytes(blob))
    _atomic_write(path.with_suffix(".json"),
                  json.dumps(header, indent=2).encode("utf-8"))


def read_sidecar(path: str | Path) -> Grid | BandStack:
    """Read a sidecar pair; returns a Grid, or a BandStack when roles are present."""
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    width, height = header["width"], header["height"]
    georef = _georef_from_json(header["georef"])
    units = header["units"]
    roles = header.get("roles")
    n_bands = len(units)
    blob = path.with_suffix(".bin").read_bytes()
    expected = width * height * n_bands * 4
    if len(blob) != expected:
        raise CorruptFile(
            f"{path}.bin holds {len(blob)} bytes, header implies {expected}"
        )
    raw = np.frombuffer(blob, dtype="<f4").reshape(n_bands, height, width)
    grids = []
    for b in range(n_bands):
        values = raw[b].astype(np.float64)
        mask = np.isnan(values)
        grids.append(Grid(np.where(mask, 0.0, values), georef, units[b], mask))
    if roles is None:
        if n_bands != 1:
            raise CorruptFile("multi-band sidecar without roles")
        return grids[0]
    return BandStack(list(zip(roles, grids)))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
