"""Grid-to-image rendering: linear color ramps, PNG and P6 PPM encoders.

The PNG encoder is self-contained (stdlib zlib only) so rendering carries no
codec dependency; the portable-pixmap writer is the zero-dependency fallback
format.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .raster import Grid

# palettes as (position in [0,1], r, g, b) stops
PALETTES = {
    "thermal": [
        (0.00, 13, 8, 135),
        (0.25, 126, 3, 168),
        (0.50, 204, 71, 120),
        (0.75, 248, 149, 64),
        (1.00, 240, 249, 33),
    ],
    "diverging": [
        (0.00, 33, 102, 172),
        (0.25, 146, 197, 222),
        (0.50, 247, 247, 247),
        (0.75, 244, 165, 130),
        (1.00, 178, 24, 43),
    ],
    "grayscale": [
        (0.00, 0, 0, 0),
        (1.00, 255, 255, 255),
    ],
}


@dataclass(frozen=True)
class ColorMapSpec:
    """Linear value->color ramp over [min_c, max_c] with a nodata color."""

    palette: str = "thermal"
    min_c: float = 0.0
    max_c: float = 40.0
    nodata_color: tuple[int, int, int] = (30, 30, 30)

    def __post_init__(self):
        if self.min_c >= self.max_c:
            raise ValueError("min_c must be < max_c")
        if self.palette not in PALETTES:
            raise ValueError(f"unknown palette {self.palette!r}")

    def to_json(self) -> dict:
        return {
            "palette": self.palette,
            "min_c": self.min_c,
            "max_c": self.max_c,
            "nodata_color": list(self.nodata_color),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ColorMapSpec":
        return cls(doc.get("palette", "thermal"), doc.get("min_c", 0.0),
                   doc.get("max_c", 40.0),
                   tuple(doc.get("nodata_color", (30, 30, 30))))


def palette_lookup(palette: str, t: np.ndarray) -> np.ndarray:
    """Interpolate palette stops at positions t in [0,1] -> uint8 (..., 3)."""
    stops = PALETTES[palette]
    positions = np.array([s[0] for s in stops])
    colors = np.array([s[1:] for s in stops], dtype=np.float64)
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    out = np.empty(t.shape + (3,), dtype=np.float64)
    for ch in range(3):
        out[..., ch] = np.interp(t, positions, colors[:, ch])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def colorize(grid: Grid, spec: ColorMapSpec) -> np.ndarray:
    """Grid -> uint8 RGB array (H, W, 3), one image pixel per grid pixel."""
    t = (grid.values - spec.min_c) / (spec.max_c - spec.min_c)
    rgb = palette_lookup(spec.palette, t)
    rgb[grid.nodata_mask] = np.array(spec.nodata_color, dtype=np.uint8)
    return rgb


def encode_png(rgb: np.ndarray) -> bytes:
    """Lossless 8-bit RGB PNG from an (H, W, 3) uint8 array."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected (H, W, 3) uint8")
    height, width = rgb.shape[:2]

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (struct.pack(">L", len(payload)) + tag + payload
                + struct.pack(">L", zlib.crc32(tag + payload)))

    ihdr = struct.pack(">LLBBBBB", width, height, 8, 2, 0, 0, 0)
    # filter byte 0 (None) per scanline
    raw = b"".join(b"\x00" + rgb[r].tobytes() for r in range(height))
    return (b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 6))
            + chunk(b"IEND", b""))


def encode_ppm(rgb: np.ndarray) -> bytes:
    """Binary P6 portable pixmap from an (H, W, 3) uint8 array."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected (H, W, 3) uint8")
    height, width = rgb.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + rgb.tobytes()


def render_map(grid: Grid, spec: ColorMapSpec, image_format: str = "png") -> bytes:
    """Render a grid through the colormap; format is "png" or "ppm"."""
    rgb = colorize(grid, spec)
    if image_format == "png":
        return encode_png(rgb)
    if image_format == "ppm":
        return encode_ppm(rgb)
    raise ValueError(f"unknown image format {image_format!r}")


def diff_spec(diff: Grid, symmetric_limit: float | None = None) -> ColorMapSpec:
    """Diverging spec centered at zero, sized to the diff's magnitude."""
    if symmetric_limit is None:
        vals = diff.values[~diff.nodata_mask]
        symmetric_limit = float(np.abs(vals).max()) if vals.size else 1.0
        symmetric_limit = max(symmetric_limit, 1e-6)
    return ColorMapSpec("diverging", -symmetric_limit, symmetric_limit)
