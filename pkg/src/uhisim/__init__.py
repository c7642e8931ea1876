"""uhisim: desk-scale urban heat island simulation engine.

Raster ingestion (GeoTIFF subset + sidecar), spectral indices and
split-window LST retrieval, a tiny masked-autoencoder vision transformer
with pixel-wise regression fine-tuning, percentile-split evaluation, and a
what-if scenario engine exposed as a library, CLI, and HTTP service.
"""

from .raster import BandStack, GeoRef, Grid, Patch, align_stack, resample, stitch, tile
from .indices import (
    DEFAULT_COEFFS,
    SplitWindowCoeffs,
    brightness_temperature,
    compute_index,
    split_window_lst,
)
from .formats import read_raster, write_raster
from .tiff import read_geotiff, write_geotiff
from .sidecar import read_sidecar, write_sidecar
from .catalog import Catalog, CatalogConfig, Sample, SceneRecord, build_sample, catalog_scan
from .evalsplit import (
    MetricReport,
    SplitPlan,
    extrapolation_capacity,
    heat_split,
    metrics,
    per_lulc_metrics,
    random_split,
)
from .model import (
    ModelParams,
    TinyViTConfig,
    TrainSchedule,
    adamw_step,
    backward,
    forward_mae,
    forward_regress,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .scenario import (
    Bbox,
    ForcingRecord,
    ScenarioDef,
    ScenarioResult,
    apply_forcing,
    derive_donor,
    index_retarget,
    pixel_swap,
    run_scenario,
    vertical_profile,
)
from .render import ColorMapSpec, render_map
from .store import JobRecord, Store
from .config import EngineConfig

__version__ = "0.1.0"
