import json

import numpy as np
import pytest

from uhisim.catalog import CatalogConfig, build_sample, catalog_scan
from uhisim.errors import CorruptFile, DateMismatch, DuplicateScene, MissingBand
from uhisim.indices import SplitWindowCoeffs
from uhisim.raster import BandStack, GeoRef, Grid
from uhisim.sidecar import read_sidecar, write_sidecar
from uhisim.tiff import write_geotiff


class TestSidecar:
    def test_grid_round_trip(self, tmp_path, georef):
        values = np.linspace(-5, 30, 16).reshape(4, 4)
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = True
        grid = Grid(np.where(mask, 0.0, values), georef, "celsius", mask)
        write_sidecar(grid, tmp_path / "g")
        back = read_sidecar(tmp_path / "g")
        assert np.array_equal(back.nodata_mask, mask)
        assert np.allclose(back.values[~mask], values[~mask], atol=1e-6)
        assert back.units == "celsius" and back.georef == georef

    def test_header_contract(self, tmp_path, georef):
        grid = Grid(np.zeros((4, 4)), georef, "celsius")
        write_sidecar(grid, tmp_path / "g")
        header = json.loads((tmp_path / "g.json").read_text())
        assert header["units"] == ["celsius"]
        assert header["width"] == 4 and header["height"] == 4
        assert header["georef"]["pixel_w"] == 30.0

    def test_stack_round_trip(self, tmp_path, georef):
        stack = BandStack([
            ("red", Grid(np.full((2, 3), 0.25), georef, "reflectance")),
            ("nir", Grid(np.full((2, 3), 0.5), georef, "reflectance")),
        ])
        write_sidecar(stack, tmp_path / "s")
        back = read_sidecar(tmp_path / "s")
        assert isinstance(back, BandStack)
        assert back.roles == ["red", "nir"]
        assert np.allclose(back.band("nir").values, 0.5)

    def test_truncated_bin_detected(self, tmp_path, georef):
        write_sidecar(Grid(np.zeros((4, 4)), georef, "celsius"), tmp_path / "g")
        blob = (tmp_path / "g.bin").read_bytes()
        (tmp_path / "g.bin").write_bytes(blob[:-8])
        with pytest.raises(CorruptFile):
            read_sidecar(tmp_path / "g")


class TestCatalogScan:
    def test_empty_directory(self, tmp_path):
        catalog = catalog_scan(tmp_path, CatalogConfig())
        assert catalog.records == [] and catalog.ignored == []

    def test_band_pattern_maps_roles(self, tmp_path):
        (tmp_path / "LC08_scene1_20200715_B5.tif").write_bytes(b"x")
        (tmp_path / "LC08_scene1_20200715_B4.tif").write_bytes(b"x")
        (tmp_path / "notes.txt").write_bytes(b"x")
        catalog = catalog_scan(tmp_path, CatalogConfig())
        assert len(catalog.records) == 1
        record = catalog.records[0]
        assert record.scene_id == "scene1"
        assert record.date == "2020-07-15"
        assert set(record.band_paths) == {"nir", "red"}
        assert catalog.ignored == ["notes.txt"]

    def test_duplicate_scene_raises(self, tmp_path):
        (tmp_path / "ERA5_T2M_20200715.tif").write_bytes(b"x")
        (tmp_path / "ERA5_T2M_20200715.bin").write_bytes(b"x")
        with pytest.raises(DuplicateScene):
            catalog_scan(tmp_path, CatalogConfig())

    def test_sorted_deterministically(self, tmp_path):
        (tmp_path / "ERA5_T2M_20200801.tif").write_bytes(b"x")
        (tmp_path / "ERA5_T2M_20200714.tif").write_bytes(b"x")
        (tmp_path / "LULC_2020.tif").write_bytes(b"x")
        catalog = catalog_scan(tmp_path, CatalogConfig())
        keys = [(r.source, r.date) for r in catalog.records]
        assert keys == sorted(keys)


def _write_landsat_fixture(tmp_path, georef, size=4, tb10_mask=None):
    """Full landsat + era5 + lulc file set on disk; returns the catalog."""
    dn = np.full((size, size), 20000.0)  # scale 2.75e-5, offset -0.2 -> 0.35
    for band in ("1", "2", "3", "4", "5", "6"):
        write_geotiff(Grid(dn, georef, "reflectance"),
                      tmp_path / f"LC08_demo_20200715_B{band}.tif")
    tb10 = Grid(np.full((size, size), 302.0), georef, "kelvin",
                tb10_mask)
    tb11 = Grid(np.full((size, size), 298.0), georef, "kelvin")
    write_geotiff(tb10, tmp_path / "LC08_demo_20200715_B10.tif")
    write_geotiff(tb11, tmp_path / "LC08_demo_20200715_B11.tif")
    # coarse t2m grid covering the landsat extent
    coarse = GeoRef(georef.origin_x - 60.0, georef.origin_y + 60.0,
                    120.0, 120.0, georef.crs_id)
    write_geotiff(Grid(np.full((4, 4), 293.15), coarse, "kelvin"),
                  tmp_path / "ERA5_T2M_20200715.tif")
    write_geotiff(Grid(np.full((size, size), 5.0), georef, "class_id"),
                  tmp_path / "LULC_2020.tif")
    return catalog_scan(tmp_path, CatalogConfig())


class TestBuildSample:
    def test_t2m_unit_conversion(self, tmp_path, georef):
        catalog = _write_landsat_fixture(tmp_path, georef)
        sample = build_sample(catalog.find("landsat8", "demo"),
                              catalog.by_source("era5")[0],
                              catalog.by_source("lulc")[0],
                              CatalogConfig())
        t2m = sample.inputs.band("t2m")
        assert np.allclose(t2m.values[~t2m.nodata_mask], 20.0, atol=1e-9)

    def test_reflectance_scaling(self, tmp_path, georef):
        catalog = _write_landsat_fixture(tmp_path, georef)
        sample = build_sample(catalog.find("landsat8", "demo"),
                              catalog.by_source("era5")[0],
                              catalog.by_source("lulc")[0],
                              CatalogConfig())
        red = sample.inputs.band("red")
        expected = 2.75e-5 * 20000.0 - 0.2
        assert np.allclose(red.values[~red.nodata_mask], expected, atol=1e-7)

    def test_label_from_split_window(self, tmp_path, georef):
        catalog = _write_landsat_fixture(tmp_path, georef)
        coeffs = SplitWindowCoeffs(b1=1.0, b4=1.0, epsilon=1.0, delta_epsilon=0.0)
        config = CatalogConfig(coeffs=coeffs)
        sample = build_sample(catalog.find("landsat8", "demo"),
                              catalog.by_source("era5")[0],
                              catalog.by_source("lulc")[0], config)
        # mean 300 K + diff term 2 K -> 302 K -> 28.85 degC
        label = sample.label
        assert np.allclose(label.values[~label.nodata_mask], 28.85, atol=1e-9)

    def test_missing_band_raises(self, tmp_path, georef):
        catalog = _write_landsat_fixture(tmp_path, georef)
        record = catalog.find("landsat8", "demo")
        del record.band_paths["swir1"]
        with pytest.raises(MissingBand, match="swir1"):
            build_sample(record, catalog.by_source("era5")[0],
                         catalog.by_source("lulc")[0], CatalogConfig())

    def test_date_mismatch_raises(self, tmp_path, georef):
        catalog = _write_landsat_fixture(tmp_path, georef)
        era5 = catalog.by_source("era5")[0]
        era5.date = "2020-07-16"
        with pytest.raises(DateMismatch):
            build_sample(catalog.find("landsat8", "demo"), era5,
                         catalog.by_source("lulc")[0], CatalogConfig())

    def test_label_nodata_follows_tb10(self, tmp_path, georef):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 2] = True
        catalog = _write_landsat_fixture(tmp_path, georef, tb10_mask=mask)
        sample = build_sample(catalog.find("landsat8", "demo"),
                              catalog.by_source("era5")[0],
                              catalog.by_source("lulc")[0], CatalogConfig())
        assert sample.label.nodata_mask[1, 2]
        sample.validate()

    def test_deterministic_assembly(self, tmp_path, georef):
        catalog = _write_landsat_fixture(tmp_path, georef)
        args = (catalog.find("landsat8", "demo"), catalog.by_source("era5")[0],
                catalog.by_source("lulc")[0], CatalogConfig())
        a = build_sample(*args)
        b = build_sample(*args)
        assert a.inputs == b.inputs and a.label == b.label


class TestEra5HourSelection:
    def test_hourly_files_get_distinct_records(self, tmp_path):
        from uhisim.catalog import pick_era5_record

        for hour in ("06", "09", "12"):
            (tmp_path / f"ERA5_T2M_20200715T{hour}.tif").write_bytes(b"x")
        catalog = catalog_scan(tmp_path, CatalogConfig())
        era5 = catalog.by_source("era5")
        assert sorted(r.hour for r in era5) == [6, 9, 12]
        picked = pick_era5_record(era5, "2020-07-15", overpass_hour=10)
        assert picked.hour == 9  # nearest to the overpass

    def test_daily_file_used_when_no_hourly(self, tmp_path):
        from uhisim.catalog import pick_era5_record

        (tmp_path / "ERA5_T2M_20200715.tif").write_bytes(b"x")
        catalog = catalog_scan(tmp_path, CatalogConfig())
        picked = pick_era5_record(catalog.by_source("era5"), "2020-07-15", 10)
        assert picked is not None and picked.hour is None

    def test_missing_date_returns_none(self, tmp_path):
        from uhisim.catalog import pick_era5_record

        assert pick_era5_record([], "2020-07-15", 10) is None


class TestFormatDispatch:
    def test_write_raster_both_formats(self, tmp_path, georef):
        from uhisim.formats import read_raster, write_raster

        grid = Grid(np.linspace(0, 1, 12).reshape(3, 4), georef, "reflectance")
        write_raster(grid, tmp_path / "a.tif", "geotiff")
        back = read_raster(tmp_path / "a.tif", roles=["red"], units="reflectance")
        assert np.allclose(back.band("red").values, grid.values, atol=1e-7)

        write_raster(grid, tmp_path / "b", "sidecar")
        side = read_raster(tmp_path / "b")
        assert np.allclose(side.values, grid.values, atol=1e-7)

    def test_unknown_format_rejected(self, tmp_path, georef):
        from uhisim.formats import write_raster

        grid = Grid(np.zeros((2, 2)), georef, "celsius")
        with pytest.raises(ValueError):
            write_raster(grid, tmp_path / "x", "netcdf")
