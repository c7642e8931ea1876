"""Deterministic synthetic scenes for demos and desk-scale training runs.

Each scene is built from a smooth latent "greenness" field v in [-amp, amp]:
reflectance bands are affine in v with nir/red chosen so the vegetation index
(nir-red)/(nir+red) equals v exactly, t2m is constant per scene, the LULC
grid thresholds v into Trees/Crops/Built Area, and the LST label is

    label = offset + coef * NDVI(inputs) + gaussian noise.

NDVI is recomputed from the stored reflectance arrays, so the label is an
exact function of the inputs the model sees; `coef` < 0 gives the physical
vegetation-cools convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import Sample
from .raster import BandStack, GeoRef, Grid

LULC_TREES = 2
LULC_CROPS = 5
LULC_BUILT = 7

# per-band affine response to the latent field: reflectance = base + slope * v
BAND_RESPONSE = {
    "coastal": (0.28, 0.02),
    "blue": (0.30, 0.03),
    "green": (0.35, 0.06),
    "red": (0.40, -0.40),
    "nir": (0.40, 0.40),
    "swir1": (0.45, -0.12),
}

PIXEL_METERS = 30.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs of the generator; defaults produce the standard demo corpus."""

    size: int = 64
    ndvi_coef: float = 20.0
    ndvi_offset: float = 10.0
    noise_sigma: float = 0.1
    field_amp: float = 0.7
    waves: int = 6
    t2m_base: float = 20.0
    t2m_spread: float = 2.0
    tree_threshold: float = 0.35


def smooth_field(rng: np.random.Generator, size: int, waves: int, amp: float) -> np.ndarray:
    """Random low-frequency cosine mixture scaled to roughly [-amp, amp]."""
    rows = np.arange(size)[:, None]
    cols = np.arange(size)[None, :]
    field = np.zeros((size, size))
    for _ in range(waves):
        fr, fc = rng.uniform(-1.0, 1.0, size=2) / rng.uniform(12.0, 48.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        field += rng.uniform(0.4, 1.0) * np.cos(2.0 * np.pi * (fr * rows + fc * cols) + phase)
    peak = np.abs(field).max()
    if peak > 0:
        field *= amp / peak
    return field


def synthetic_sample(scene_id: str, date: str, origin_row: int, origin_col: int,
                     rng: np.random.Generator, spec: SyntheticSpec) -> Sample:
    size = spec.size
    georef = GeoRef(
        origin_x=500_000.0 + origin_col * size * PIXEL_METERS,
        origin_y=5_000_000.0 - origin_row * size * PIXEL_METERS,
        pixel_w=PIXEL_METERS,
        pixel_h=PIXEL_METERS,
        crs_id="EPSG:32635",
    )
    v = smooth_field(rng, size, spec.waves, spec.field_amp)

    bands = []
    for role, (base, slope) in BAND_RESPONSE.items():
        bands.append((role, Grid(base + slope * v, georef, "reflectance")))
    t2m = spec.t2m_base + rng.normal(0.0, spec.t2m_spread)
    bands.append(("t2m", Grid(np.full((size, size), t2m), georef, "celsius")))
    inputs = BandStack(bands)

    nir = inputs.band("nir").values
    red = inputs.band("red").values
    ndvi = (nir - red) / (nir + red)
    label_values = (spec.ndvi_offset + spec.ndvi_coef * ndvi
                    + rng.normal(0.0, spec.noise_sigma, size=(size, size)))
    label = Grid(label_values, georef, "celsius")

    lulc_values = np.full((size, size), float(LULC_CROPS))
    lulc_values[v > spec.tree_threshold] = LULC_TREES
    lulc_values[v < -spec.tree_threshold] = LULC_BUILT
    lulc = Grid(lulc_values, georef, "class_id")

    return Sample(scene_id=scene_id, date=date, inputs=inputs, label=label, lulc=lulc)


def synthetic_dataset(n_samples: int, seed: int = 0,
                      spec: SyntheticSpec | None = None) -> list[Sample]:
    """n deterministic scenes on a tiled grid with dates marching daily."""
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(seed)
    samples = []
    per_row = max(int(np.ceil(np.sqrt(n_samples))), 1)
    base = np.datetime64("2020-06-01")
    for i in range(n_samples):
        date = str(base + i % 120)
        samples.append(synthetic_sample(
            scene_id=f"synth-{i:04d}",
            date=date,
            origin_row=i // per_row,
            origin_col=i % per_row,
            rng=rng,
            spec=spec,
        ))
    return samples


def synthetic_forcing(samples, source: str, deltas: dict[int, float],
                      coarse_pixel: float = 960.0):
    """Coarse projection grids covering the union extent of the given scenes.

    Each horizon-year grid is the scene-average t2m plus the pathway's delta,
    so applying it shifts every scene's t2m channel by that delta.
    """
    from .scenario import ForcingRecord

    xs, ys = [], []
    t2m_values = []
    for sample in samples:
        g = sample.inputs.georef
        xs += [g.origin_x, g.origin_x + sample.inputs.width * g.pixel_w]
        ys += [g.origin_y - sample.inputs.height * g.pixel_h, g.origin_y]
        t2m_values.append(float(sample.inputs.band("t2m").values.mean()))
    xmin, xmax = min(xs) - coarse_pixel, max(xs) + coarse_pixel
    ymin, ymax = min(ys) - coarse_pixel, max(ys) + coarse_pixel
    width = int(np.ceil((xmax - xmin) / coarse_pixel))
    height = int(np.ceil((ymax - ymin) / coarse_pixel))
    georef = GeoRef(xmin, ymax, coarse_pixel, coarse_pixel,
                    samples[0].inputs.georef.crs_id)
    base_t2m = float(np.mean(t2m_values))
    grids = {}
    for year, delta in deltas.items():
        grids[int(year)] = Grid(np.full((height, width), base_t2m + delta),
                                georef, "celsius")
    return ForcingRecord(source=source, grids=grids)
