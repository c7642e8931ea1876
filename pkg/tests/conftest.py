"""Shared fixtures: small grids, synthetic scenes, and a quickly trained model."""

from __future__ import annotations

import numpy as np
import pytest

from uhisim.evalsplit import random_split
from uhisim.model import TinyViTConfig
from uhisim.model.train import TrainSchedule, samples_to_dataset, train
from uhisim.raster import BandStack, GeoRef, Grid
from uhisim.synthetic import SyntheticSpec, synthetic_dataset


@pytest.fixture
def georef():
    return GeoRef(500_000.0, 5_000_000.0, 30.0, 30.0, "EPSG:32635")


@pytest.fixture
def small_grid(georef):
    return Grid(np.arange(16, dtype=np.float64).reshape(4, 4), georef, "celsius")


def make_stack(values_by_role, georef, units="reflectance"):
    bands = []
    for role, values in values_by_role.items():
        u = units if isinstance(units, str) else units[role]
        bands.append((role, Grid(np.asarray(values, dtype=np.float64), georef, u)))
    return BandStack(bands)


@pytest.fixture(scope="session")
def cool_veg_samples():
    """Vegetation-cools corpus: label = 10 - 20 * NDVI(inputs) + noise."""
    spec = SyntheticSpec(ndvi_coef=-20.0)
    return synthetic_dataset(120, seed=11, spec=spec)


@pytest.fixture(scope="session")
def quick_model(cool_veg_samples):
    """Small fast fine-tune for scenario/service tests (not the acceptance run)."""
    ids = [s.scene_id for s in cool_veg_samples]
    plan = random_split(ids, seed=5)
    by_id = {s.scene_id: s for s in cool_veg_samples}
    train_data = samples_to_dataset([by_id[i] for i in plan.ids("train")])
    val_data = samples_to_dataset([by_id[i] for i in plan.ids("val")])
    schedule = TrainSchedule(epochs=10, batch_size=16, lr=4e-4, seed=2,
                             early_stop_val_mae=1.2)
    params, log = train(train_data, val_data, TinyViTConfig(), schedule)
    return {"params": params, "log": log, "plan": plan,
            "samples": cool_veg_samples, "by_id": by_id}
