"""Dataset split protocols, error metrics, and per-land-cover breakdowns."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDistribution,
    EmptyCatalog,
    GeoMismatch,
    NoValidPixels,
)
from .raster import Grid

LULC_CLASS_NAMES = {
    1: "Water",
    2: "Trees",
    4: "Flooded Vegetation",
    5: "Crops",
    7: "Built Area",
    8: "Bare Ground",
    10: "Clouds",
    11: "Rangeland",
}


@dataclass
class SplitPlan:
    """Assignment of sample ids to train/val/test under one protocol."""

    protocol: str                          # "random" | "high_heat"
    assignments: dict[str, str]
    seed: int = 0
    threshold_celsius: float | None = None

    def ids(self, part: str) -> list[str]:
        return [sid for sid, p in self.assignments.items() if p == part]

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "assignments": self.assignments,
            "seed": self.seed,
            "threshold_celsius": self.threshold_celsius,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SplitPlan":
        return cls(doc["protocol"], dict(doc["assignments"]), doc.get("seed", 0),
                   doc.get("threshold_celsius"))


def random_split(sample_ids, ratios=(0.72, 0.18, 0.10), seed: int = 0) -> SplitPlan:
    """Seeded shuffle into train/val/test.

    Counts are floors of ratio * n with the remainder distributed to train
    first, then val.
    """
    sample_ids = list(sample_ids)
    if not sample_ids:
        raise EmptyCatalog("cannot split an empty catalog")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("need three positive ratios")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n = len(sample_ids)
    counts = [int(np.floor(r * n)) for r in ratios]
    remainder = n - sum(counts)
    for i in range(remainder):
        counts[i % 2] += 1  # train first, then val, alternating if more remain
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignments = {}
    parts = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    for idx, part in zip(order, parts):
        assignments[sample_ids[idx]] = part
    return SplitPlan("random", assignments, seed=seed)


def nearest_rank_percentile(values, percentile: float) -> float:
    """Value at index ceil(p/100 * n) of the sorted sample (no interpolation)."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("empty sample")
    rank = int(np.ceil(percentile / 100.0 * arr.size))
    rank = min(max(rank, 1), arr.size)
    return float(arr[rank - 1])


def heat_split(statistics: dict[str, float], percentile: float = 90.0,
               seed: int = 0) -> SplitPlan:
    """Hold the hottest samples out for testing.

    statistics maps sample id -> split statistic (tile mean LST, celsius).
    The nearest-rank percentile over all samples becomes the threshold;
    samples strictly above it go to test, the remainder splits 80/20 into
    train/val by seed.
    """
    if not statistics:
        raise EmptyCatalog("cannot split an empty catalog")
    values = np.array(list(statistics.values()), dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("every sample needs a finite split statistic")
    if np.all(values == values[0]):
        raise DegenerateDistribution("all split statistics are equal")
    threshold = nearest_rank_percentile(values, percentile)
    ids = list(statistics.keys())
    test_ids = [sid for sid in ids if statistics[sid] > threshold]
    rest = [sid for sid in ids if statistics[sid] <= threshold]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(rest))
    n_train = int(np.floor(0.8 * len(rest)))
    assignments = {sid: "test" for sid in test_ids}
    for pos, idx in enumerate(order):
        assignments[rest[idx]] = "train" if pos < n_train else "val"
    return SplitPlan("high_heat", assignments, seed=seed,
                     threshold_celsius=threshold)


@dataclass
class ClassMetrics:
    class_id: int
    mae: float
    rmse: float
    mse: float
    share_percent: float
    n_pixels: int


@dataclass
class MetricReport:
    """MAE/MSE/RMSE over valid pixels, optionally broken down per LULC class."""

    mae: float
    mse: float
    rmse: float
    n_pixels: int
    per_class: list[ClassMetrics] = field(default_factory=list)

    def to_json(self) -> dict:
        doc = {
            "mae": self.mae,
            "mse": self.mse,
            "rmse": self.rmse,
            "n_pixels": self.n_pixels,
        }
        if self.per_class:
            doc["per_class"] = [
                {
                    "class_id": c.class_id,
                    "class_name": LULC_CLASS_NAMES.get(c.class_id, "Unknown"),
                    "mae": c.mae,
                    "rmse": c.rmse,
                    "mse": c.mse,
                    "share_percent": c.share_percent,
                    "n_pixels": c.n_pixels,
                }
                for c in self.per_class
            ]
        return doc

    def to_csv(self) -> str:
        """Per-class table with the column order LULC Class, MAE, RMSE, MSE, share."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["LULC Class", "MAE", "RMSE", "MSE", "LULC Distribution (%)"])
        for c in self.per_class:
            name = LULC_CLASS_NAMES.get(c.class_id, "Unknown")
            writer.writerow([
                f"Class {c.class_id} ({name})",
                f"{c.mae:.4f}", f"{c.rmse:.4f}", f"{c.mse:.4f}",
                f"{c.share_percent:.2f}",
            ])
        return buf.getvalue()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _valid_mask(pred: Grid, truth: Grid, mask=None) -> np.ndarray:
    if not pred.same_geometry(truth):
        raise GeoMismatch("prediction and truth are not co-registered")
    valid = ~pred.nodata_mask & ~truth.nodata_mask
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    return valid


def metrics(pred: Grid, truth: Grid, mask=None) -> MetricReport:
    """MAE, MSE, RMSE over non-nodata pixels inside the optional mask."""
    valid = _valid_mask(pred, truth, mask)
    n = int(valid.sum())
    if n == 0:
        raise NoValidPixels("no valid pixels to score")
    diff = pred.values[valid] - truth.values[valid]
    mae = float(np.abs(diff).mean())
    mse = float((diff * diff).mean())
    return MetricReport(mae=mae, mse=mse, rmse=float(np.sqrt(mse)), n_pixels=n)


def per_lulc_metrics(pred: Grid, truth: Grid, lulc: Grid, mask=None) -> MetricReport:
    """Pooled metrics plus a per-class table; absent classes are omitted.

    share_percent is the class pixel count over all valid pixels; shares over
    present classes sum to 100.
    """
    if not lulc.same_geometry(pred):
        raise GeoMismatch("lulc grid is not co-registered")
    valid = _valid_mask(pred, truth, mask) & ~lulc.nodata_mask
    n = int(valid.sum())
    if n == 0:
        raise NoValidPixels("no valid pixels to score")
    diff = pred.values - truth.values
    classes = np.unique(lulc.values[valid]).astype(int)
    table = []
    for cid in sorted(classes):
        sel = valid & (lulc.values == cid)
        cdiff = diff[sel]
        cmse = float((cdiff * cdiff).mean())
        table.append(ClassMetrics(
            class_id=int(cid),
            mae=float(np.abs(cdiff).mean()),
            rmse=float(np.sqrt(cmse)),
            mse=cmse,
            share_percent=float(sel.sum()) / n * 100.0,
            n_pixels=int(sel.sum()),
        ))
    pooled = metrics(pred, truth, valid)
    pooled.per_class = table
    return pooled


def extrapolation_capacity(test_predictions, threshold_celsius: float) -> float:
    """Max valid predicted value minus the high-heat threshold (may be negative)."""
    best = None
    for grid in test_predictions:
        vals = grid.values[~grid.nodata_mask]
        if vals.size:
            peak = float(vals.max())
            best = peak if best is None else max(best, peak)
    if best is None:
        raise NoValidPixels("no valid predictions")
    return best - threshold_celsius
