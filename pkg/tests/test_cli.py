import json
from pathlib import Path

import numpy as np
import pytest

from uhisim.cli import cli_dispatch
from uhisim.store import Store


@pytest.fixture(scope="module")
def demo_store(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    store_dir = str(root / "store")
    rc = cli_dispatch(["demo-data", "--store", store_dir, "--samples", "16",
                       "--seed", "2", "--cool-vegetation"])
    assert rc == 0
    return store_dir


class TestDispatchContract:
    def test_unknown_subcommand_exit_2(self, capsys):
        assert cli_dispatch(["frobnicate"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_required_arg_exit_2(self):
        assert cli_dispatch(["finetune"]) == 2

    def test_runtime_error_exit_1(self, tmp_path, capsys):
        rc = cli_dispatch(["finetune", "--store", str(tmp_path / "empty"),
                           "--epochs", "1"])
        assert rc == 1
        assert "error" in capsys.readouterr().err.lower()

    def test_help_exit_0(self):
        assert cli_dispatch(["--help"]) == 0


class TestPipeline:
    def test_demo_data_populates_store(self, demo_store):
        store = Store(demo_store)
        assert len(store.list_scenes()) == 16
        assert store.load_forcing("cordex_rcp85") is not None

    def test_finetune_records_manifest_and_split(self, demo_store):
        rc = cli_dispatch(["finetune", "--store", demo_store, "--split",
                           "high-heat", "--percentile", "90", "--seed", "1",
                           "--epochs", "2", "--out", "hh"])
        assert rc == 0
        store = Store(demo_store)
        manifest = store.fetch("runs", "hh")
        assert manifest["split"]["protocol"] == "high_heat"
        assert manifest["split"]["threshold_celsius"] is not None
        plan = store.load_split("hh")
        assert plan.protocol == "high_heat"
        log_path = Path(demo_store) / "logs" / "hh.csv"
        assert log_path.read_text().startswith("epoch,phase,loss,val_mae")

    def test_random_split_protocol_recorded(self, demo_store):
        rc = cli_dispatch(["finetune", "--store", demo_store, "--split",
                           "random", "--seed", "3", "--epochs", "1",
                           "--out", "rnd"])
        assert rc == 0
        assert Store(demo_store).load_split("rnd").protocol == "random"

    def test_evaluate_per_lulc_emits_table_csv(self, demo_store):
        cli_dispatch(["finetune", "--store", demo_store, "--split", "random",
                      "--seed", "4", "--epochs", "1", "--out", "ev"])
        rc = cli_dispatch(["evaluate", "--store", demo_store, "--checkpoint",
                           "ev", "--per-lulc"])
        assert rc == 0
        csv_path = Path(demo_store) / "eval" / "ev-test-lulc.csv"
        header = csv_path.read_text().splitlines()[0]
        assert header == "LULC Class,MAE,RMSE,MSE,LULC Distribution (%)"

    def test_pretrain_saves_checkpoint(self, demo_store):
        rc = cli_dispatch(["pretrain", "--store", demo_store, "--epochs", "1",
                           "--out", "pre"])
        assert rc == 0
        assert Store(demo_store).has_checkpoint("pre")

    def test_simulate_and_exports(self, demo_store, tmp_path, capsys):
        cli_dispatch(["finetune", "--store", demo_store, "--split", "random",
                      "--seed", "5", "--epochs", "1", "--out", "model"])
        capsys.readouterr()  # drain the finetune progress line
        scenario = {"scenario_id": "scn-cli", "base_sample_id": "synth-0000",
                    "kind": "pixel_swap",
                    "bbox": {"row0": 8, "col0": 8, "row1": 23, "col1": 27},
                    "donor": "forest"}
        scn_path = tmp_path / "scn.json"
        scn_path.write_text(json.dumps(scenario))
        rc = cli_dispatch(["simulate", "--store", demo_store, "--scenario",
                           str(scn_path)])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["scenario_id"] == "scn-cli"
        assert "mean_delta_inside" in out["stats"]

        png = tmp_path / "map.png"
        rc = cli_dispatch(["export", "--store", demo_store, "--map",
                           "result:scn-cli:predicted", "--out", str(png)])
        assert rc == 0 and png.read_bytes()[:4] == b"\x89PNG"

        ppm = tmp_path / "map.ppm"
        rc = cli_dispatch(["export", "--store", demo_store, "--map",
                           "result:scn-cli:diff", "--out", str(ppm),
                           "--image-format", "ppm"])
        assert rc == 0 and ppm.read_bytes()[:2] == b"P6"

        csv_out = tmp_path / "profile.csv"
        rc = cli_dispatch(["export", "--store", demo_store, "--profile",
                           "result:scn-cli", "--out", str(csv_out)])
        assert rc == 0
        assert csv_out.read_text().startswith("row,value_celsius,inside_bbox")

    def test_export_usage_errors(self, demo_store, tmp_path):
        rc = cli_dispatch(["export", "--store", demo_store, "--out",
                           str(tmp_path / "x.png")])
        assert rc == 2
        rc = cli_dispatch(["export", "--store", demo_store, "--map",
                           "bogus-ref", "--out", str(tmp_path / "x.png")])
        assert rc == 2


class TestIngest:
    def test_ingest_geotiff_directory(self, tmp_path):
        from uhisim.raster import GeoRef, Grid
        from uhisim.tiff import write_geotiff

        data_dir = tmp_path / "data"
        data_dir.mkdir()
        georef = GeoRef(0.0, 0.0, 30.0, 30.0, "EPSG:32635")
        dn = np.full((16, 16), 20000.0)
        for band in ("1", "2", "3", "4", "5", "6"):
            write_geotiff(Grid(dn, georef, "reflectance"),
                          data_dir / f"LC08_demo_20200715_B{band}.tif")
        write_geotiff(Grid(np.full((16, 16), 302.0), georef, "kelvin"),
                      data_dir / "LC08_demo_20200715_B10.tif")
        write_geotiff(Grid(np.full((16, 16), 298.0), georef, "kelvin"),
                      data_dir / "LC08_demo_20200715_B11.tif")
        coarse = GeoRef(-120.0, 120.0, 240.0, 240.0, "EPSG:32635")
        write_geotiff(Grid(np.full((4, 4), 293.15), coarse, "kelvin"),
                      data_dir / "ERA5_T2M_20200715.tif")
        write_geotiff(Grid(np.full((16, 16), 5.0), georef, "class_id"),
                      data_dir / "LULC_2020.tif")
        write_geotiff(Grid(np.full((4, 4), 295.15), coarse, "kelvin"),
                      data_dir / "CORDEX_RCP85_21000715.tif")

        store_dir = str(tmp_path / "store")
        rc = cli_dispatch(["ingest", str(data_dir), "--store", store_dir])
        assert rc == 0
        store = Store(store_dir)
        assert [s["scene_id"] for s in store.list_scenes()] == ["demo"]
        sample = store.load_sample("demo")
        t2m = sample.inputs.band("t2m")
        assert np.allclose(t2m.values[~t2m.nodata_mask], 20.0, atol=1e-6)
        forcing = store.load_forcing("cordex_rcp85")
        assert 2100 in forcing.grids
