"""Unified raster file entry points over the GeoTIFF and sidecar backends."""

from __future__ import annotations

from pathlib import Path

from .raster import BandStack, Grid
from .sidecar import read_sidecar, write_sidecar
from .tiff import read_geotiff, write_geotiff


def write_raster(obj: Grid | BandStack, path: str | Path,
                 file_format: str = "geotiff") -> None:
    """Write a grid or stack as "geotiff" (uncompressed float32 strips) or
    "sidecar" (<path>.bin + <path>.json)."""
    if file_format == "geotiff":
        write_geotiff(obj, path)
    elif file_format == "sidecar":
        write_sidecar(obj, path)
    else:
        raise ValueError(f"unknown raster format {file_format!r}")


def read_raster(path: str | Path, roles=None, units: str = "celsius"):
    """Read either format back; the backend is picked by file extension.

    Sidecar pairs (.bin/.json, or a bare stem with both present) carry their
    own roles and units; GeoTIFF needs them caller-assigned.
    """
    path = Path(path)
    if path.suffix in (".bin", ".json"):
        return read_sidecar(path.with_suffix(""))
    if path.with_suffix(".bin").exists() and path.with_suffix(".json").exists():
        return read_sidecar(path)
    if roles is None:
        raise ValueError("reading a GeoTIFF needs caller-assigned roles")
    return read_geotiff(path, roles, units)
