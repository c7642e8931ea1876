"""Acceptance suite: every shipping criterion at its stated tolerance.

Each test prints one `ACCEPTANCE <name>: PASS|FAIL` line (unbuffered, past
pytest's capture) so the gate is auditable from the raw log. The two training
runs are module-scoped fixtures; everything else is self-contained.
"""

import json
import sys
import threading
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from uhisim.config import EngineConfig
from uhisim.evalsplit import (
    extrapolation_capacity,
    heat_split,
    per_lulc_metrics,
    random_split,
)
from uhisim.indices import DEFAULT_COEFFS, SplitWindowCoeffs, split_window_lst
from uhisim.model import TinyViTConfig, backward, init_params, sample_mask
from uhisim.model.train import TrainSchedule, _val_mae, samples_to_dataset, train
from uhisim.model.vit import NormStats
from uhisim.raster import GeoRef, Grid
from uhisim.scenario import Bbox, ForcingRecord, ScenarioDef, index_retarget, run_scenario
from uhisim.service import make_server
from uhisim.store import Store
from uhisim.synthetic import SyntheticSpec, synthetic_dataset, synthetic_forcing
from uhisim.tiff import read_geotiff, read_tiff_arrays, write_geotiff

from test_tiff import EXPECTED as HEX_FIXTURE_VALUES
from test_tiff import build_fixture_tiff


@pytest.fixture
def report(capsys):
    """One always-visible PASS/FAIL line per criterion, past pytest capture."""

    def _report(name: str, ok: bool, detail: str = ""):
        line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  ({detail})"
        with capsys.disabled():
            print(line, flush=True)

    return _report


def _train_synthetic(coef: float, seed: int):
    spec = SyntheticSpec(ndvi_coef=coef)
    samples = synthetic_dataset(500, seed=7, spec=spec)
    ids = [s.scene_id for s in samples]
    plan = random_split(ids, seed=42)
    by_id = {s.scene_id: s for s in samples}
    train_data = samples_to_dataset([by_id[i] for i in plan.ids("train")])
    val_data = samples_to_dataset([by_id[i] for i in plan.ids("val")])
    config = TinyViTConfig()
    schedule = TrainSchedule(epochs=100, batch_size=16, lr=6e-5, seed=seed,
                             early_stop_val_mae=0.40)
    t0 = time.monotonic()
    params, log = train(train_data, val_data, config, schedule)
    elapsed = time.monotonic() - t0
    baseline = init_params(config, seed)
    baseline.norm = NormStats.fit(train_data.images, train_data.labels,
                                  train_data.weights)
    baseline_mae = _val_mae(baseline, val_data, 16)
    return {
        "samples": samples, "by_id": by_id, "plan": plan,
        "params": params, "log": log, "elapsed": elapsed,
        "baseline_mae": baseline_mae, "val_data": val_data,
    }


@pytest.fixture(scope="module")
def warm_veg_run():
    """The stated generator: LST = 10 + 20 * NDVI + noise."""
    return _train_synthetic(coef=20.0, seed=1)


@pytest.fixture(scope="module")
def cool_veg_run():
    """Inverted sign convention (vegetation cools), for direction criteria."""
    return _train_synthetic(coef=-20.0, seed=1)


def test_geotiff_round_trip(report):
    t0 = time.monotonic()
    failures = []
    rng = np.random.default_rng(20260810)
    for i in range(50):
        h = int(rng.integers(1, 68))
        w = int(rng.integers(1, 54))
        values = rng.standard_normal((h, w)).astype(np.float32).astype(np.float64)
        mask = rng.random((h, w)) < 0.2
        georef = GeoRef(float(rng.uniform(-1e6, 1e6)),
                        float(rng.uniform(-1e6, 1e6)),
                        float(rng.uniform(0.1, 120.0)),
                        float(rng.uniform(0.1, 120.0)), "EPSG:32635")
        grid = Grid(np.where(mask, 0.0, values), georef, "celsius", mask)
        import tempfile, os
        fd, path = tempfile.mkstemp(suffix=".tif")
        os.close(fd)
        try:
            write_geotiff(grid, path)
            back = read_geotiff(path, ["lst"], "celsius").band("lst")
        finally:
            os.unlink(path)
        if not np.array_equal(back.nodata_mask, mask):
            failures.append(f"grid {i}: mask differs")
        elif not np.array_equal(back.values[~mask], grid.values[~mask]):
            failures.append(f"grid {i}: values differ")
        elif back.georef != georef:
            failures.append(f"grid {i}: georef differs")

    import tempfile, os
    fd, path = tempfile.mkstemp(suffix=".tif")
    os.close(fd)
    try:
        with open(path, "wb") as fh:
            fh.write(build_fixture_tiff())
        arrays, _, _ = read_tiff_arrays(path)
    finally:
        os.unlink(path)
    if not np.array_equal(arrays[0], HEX_FIXTURE_VALUES):
        failures.append("hex fixture decode mismatch")

    elapsed = time.monotonic() - t0
    if elapsed >= 5.0:
        failures.append(f"runtime {elapsed:.2f}s >= 5s")
    report("geotiff-round-trip", not failures,
           f"50 grids + hex fixture in {elapsed:.2f}s")
    assert not failures, failures


def test_index_correctness(report):
    rng = np.random.default_rng(77)
    a = rng.uniform(0.0, 1.0, 10_000)
    b = rng.uniform(0.0, 1.0, 10_000)
    keep = (a + b) > 0
    a, b = a[keep], b[keep]
    georef = GeoRef(0, 0, 30, 30, "local")
    ga = Grid(a.reshape(1, -1), georef, "reflectance")
    gb = Grid(b.reshape(1, -1), georef, "reflectance")
    from uhisim.indices import normalized_difference

    forward = normalized_difference(ga, gb).values.ravel()
    backward_ = normalized_difference(gb, ga).values.ravel()
    direct = (a - b) / (a + b)
    failures = []
    if not np.all((forward >= -1.0) & (forward <= 1.0)):
        failures.append("range violated")
    if not np.array_equal(backward_, -forward):
        failures.append("antisymmetry not exact")
    if not np.allclose(forward, direct, rtol=0, atol=1e-9):
        failures.append("direct arithmetic disagreement > 1e-9")
    ndvi = (0.5 - 0.1) / (0.5 + 0.1)
    if abs(ndvi - 0.666667) > 1e-6:
        failures.append("NDVI(0.5, 0.1) spot value")
    report("index-correctness", not failures, f"{a.size} random pairs")
    assert not failures, failures


def test_split_window_degenerate_and_monotone(report):
    failures = []
    georef = GeoRef(0, 0, 30, 30, "local")
    coeffs = SplitWindowCoeffs(b1=1.0, epsilon=1.0, delta_epsilon=0.0)
    t10 = Grid(np.full((2, 2), 302.0), georef, "kelvin")
    t11 = Grid(np.full((2, 2), 298.0), georef, "kelvin")
    out = split_window_lst(t10, t11, coeffs)
    if not np.allclose(out.values, 26.85, atol=1e-12):
        failures.append("degenerate mean case not exact")

    sweep = np.arange(250.0, 330.0 + 1e-9, 0.25)
    lst = []
    for t in sweep:
        g10 = Grid(np.full((1, 1), t), georef, "kelvin")
        g11 = Grid(np.full((1, 1), t - 1.0), georef, "kelvin")
        lst.append(split_window_lst(g10, g11, DEFAULT_COEFFS).values[0, 0])
    if not np.all(np.diff(lst) > 0):
        failures.append("default coefficients not monotone over 250..330 K")
    report("split-window", not failures, f"sweep of {len(sweep)} points")
    assert not failures, failures


def test_gradient_check_five_seeds(report):
    t0 = time.monotonic()
    config = TinyViTConfig(image_size=8, token_size=4, embed_dim=16,
                           num_heads=2, encoder_depth=1, decoder_depth=1,
                           mlp_ratio=2.0, in_channels=2, mask_ratio=0.5)
    h = 1e-3
    worst_overall = 0.0
    for seed in range(5):
        params = init_params(config, seed)
        rng = np.random.default_rng(1000 + seed)
        images = rng.standard_normal((2, 2, 8, 8))
        if seed % 2 == 0:
            batch = (images, sample_mask(rng, config.num_tokens, 0.5))
            objective = "mae"
        else:
            batch = (images, rng.standard_normal((2, 8, 8)))
            objective = "regress"
        _, grads = backward(params, batch, objective)
        for name, tensor in params.tensors.items():
            flat = tensor.ravel()
            g = grads[name].ravel()
            picks = rng.choice(flat.size, size=min(flat.size, 5), replace=False)
            for idx in picks:
                orig = flat[idx]

                def loss_at(step):
                    flat[idx] = orig + step
                    loss, _ = backward(params, batch, objective)
                    flat[idx] = orig
                    return loss

                coarse = (loss_at(h) - loss_at(-h)) / (2 * h)
                fine = (loss_at(h / 2) - loss_at(-h / 2)) / h
                fd = (4.0 * fine - coarse) / 3.0
                rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6)
                worst_overall = max(worst_overall, rel)
    elapsed = time.monotonic() - t0
    ok = worst_overall < 1e-4 and elapsed < 60.0
    report("gradient-check", ok,
           f"max rel err {worst_overall:.2e} in {elapsed:.1f}s")
    assert worst_overall < 1e-4
    assert elapsed < 60.0


def test_masked_loss_locality(report):
    config = TinyViTConfig(image_size=8, token_size=4, embed_dim=16,
                           num_heads=2, encoder_depth=1, decoder_depth=1,
                           in_channels=2, mask_ratio=0.5)
    params = init_params(config, 0)
    rng = np.random.default_rng(5)
    images = rng.standard_normal((2, 2, 8, 8))
    mask = np.array([0, 3])
    loss_a, grads_a = backward(params, (images, mask, images), "mae")
    targets = images.copy()
    targets[:, :, 0:4, 4:8] += 9.0   # token 1 (unmasked)
    targets[:, :, 4:8, 0:4] -= 4.0   # token 2 (unmasked)
    loss_b, grads_b = backward(params, (images, mask, targets), "mae")
    same_loss = loss_b == loss_a
    same_grads = all(np.array_equal(grads_b[k], grads_a[k]) for k in grads_a)
    report("masked-loss-locality", same_loss and same_grads,
           "exact zeros on loss and every gradient")
    assert same_loss and same_grads


def test_synthetic_learning(warm_veg_run, report):
    run = warm_veg_run
    best = run["log"].best_val_mae()
    ratio = run["baseline_mae"] / best if best > 0 else float("inf")
    ok = (best < 0.5 and ratio >= 10.0 and run["elapsed"] < 900.0
          and len(run["log"].rows) <= 100)
    report("synthetic-learning", ok,
           f"val MAE {best:.3f} degC in {len(run['log'].rows)} epochs / "
           f"{run['elapsed']:.0f}s; baseline {run['baseline_mae']:.2f} "
           f"({ratio:.1f}x)")
    assert best < 0.5
    assert ratio >= 10.0
    assert run["elapsed"] < 900.0


def test_high_heat_protocol(report):
    failures = []
    stats = {f"s{i}": float(i) for i in range(1, 101)}
    plan = heat_split(stats, percentile=90, seed=0)
    if plan.threshold_celsius != 90.0:
        failures.append(f"threshold {plan.threshold_celsius} != 90")
    if sorted(plan.ids("test")) != sorted(f"s{i}" for i in range(91, 101)):
        failures.append("test set is not {91..100}")
    trainval = plan.ids("train") + plan.ids("val")
    if max(stats[s] for s in trainval) > plan.threshold_celsius:
        failures.append("train/val statistic exceeds the threshold")
    cap = extrapolation_capacity(
        [Grid(np.array([[26.91]]), GeoRef(0, 0, 30, 30, "local"), "celsius")],
        23.29)
    if abs(cap - 3.62) > 1e-12:
        failures.append(f"extrapolation arithmetic {cap!r}")
    report("high-heat-protocol", not failures,
           f"threshold 90, capacity {cap:.2f}")
    assert not failures, failures


def test_metrics_oracle(report):
    rng = np.random.default_rng(12)
    georef = GeoRef(0, 0, 30, 30, "local")
    failures = []
    for i in range(100):
        h, w = int(rng.integers(4, 24)), int(rng.integers(4, 24))
        pred_v = rng.normal(20, 5, (h, w))
        truth_v = rng.normal(20, 5, (h, w))
        mask = rng.random((h, w)) < 0.15
        if mask.all():
            mask[0, 0] = False
        classes = rng.choice([1, 2, 4, 5, 7, 8, 10, 11], size=(h, w))
        pred = Grid(np.where(mask, 0, pred_v), georef, "celsius", mask)
        truth = Grid(truth_v, georef, "celsius")
        lulc = Grid(classes.astype(float), georef, "class_id")
        report_ = per_lulc_metrics(pred, truth, lulc)

        # brute-force loop oracle
        sums = {}
        for r in range(h):
            for c in range(w):
                if mask[r, c]:
                    continue
                d = pred_v[r, c] - truth_v[r, c]
                entry = sums.setdefault(int(classes[r, c]), [0.0, 0.0, 0])
                entry[0] += abs(d)
                entry[1] += d * d
                entry[2] += 1
        n_total = sum(e[2] for e in sums.values())
        if report_.n_pixels != n_total:
            failures.append(f"fixture {i}: pixel count")
            continue
        for cm in report_.per_class:
            ref = sums[cm.class_id]
            if abs(cm.mae - ref[0] / ref[2]) > 1e-9 \
                    or abs(cm.mse - ref[1] / ref[2]) > 1e-9 \
                    or abs(cm.rmse - np.sqrt(ref[1] / ref[2])) > 1e-9:
                failures.append(f"fixture {i}: class {cm.class_id} metrics")
        pooled_mae = sum(e[0] for e in sums.values()) / n_total
        pooled_mse = sum(e[1] for e in sums.values()) / n_total
        if abs(report_.mae - pooled_mae) > 1e-9 or abs(report_.mse - pooled_mse) > 1e-9:
            failures.append(f"fixture {i}: pooled metrics")
        weighted_mse = sum(cm.mse * cm.n_pixels for cm in report_.per_class) / n_total
        weighted_mae = sum(cm.mae * cm.n_pixels for cm in report_.per_class) / n_total
        if not (abs(weighted_mse - report_.mse) < 1e-12 * max(1, abs(report_.mse))
                and abs(weighted_mae - report_.mae) < 1e-12 * max(1, abs(report_.mae))):
            failures.append(f"fixture {i}: pooled-vs-per-class identity")
        share_sum = sum(cm.share_percent for cm in report_.per_class)
        if abs(share_sum - 100.0) > 0.01:
            failures.append(f"fixture {i}: shares sum {share_sum}")
    report("metrics-oracle", not failures, "100 random fixtures")
    assert not failures, failures


def test_scenario_invariants(cool_veg_run, report):
    run = cool_veg_run
    params = run["params"]
    failures = []
    bbox = Bbox(20, 24, 35, 43)

    flat = synthetic_dataset(1, seed=9,
                             spec=SyntheticSpec(size=64, field_amp=0.0))[0]
    donor = {role: float(flat.inputs.band(role).values[0, 0])
             for role in ("coastal", "blue", "green", "red", "nir", "swir1")}
    noop = run_scenario(
        ScenarioDef("acc-noop", flat.scene_id, "pixel_swap", bbox=bbox,
                    donor=donor), flat, params)
    if not np.all(noop.diff.values == 0.0):
        failures.append("no-op swap diff not identically zero")

    sample = run["samples"][0]
    modified, clamp = index_retarget(sample, bbox, "NDVI", 0.3, "nir",
                                     allow_clamp=True)
    from uhisim.indices import compute_index
    ndvi = compute_index(modified.inputs, "NDVI")
    rs, cs = bbox.slices()
    window = ndvi.values[rs, cs]
    ok_pixels = np.abs(window[~clamp] - 0.3) <= 1e-6
    if not np.all(ok_pixels):
        failures.append("retarget misses target on non-clamped pixels")

    t2m = sample.inputs.band("t2m")
    identity = ForcingRecord("cordex_rcp45", {2050: t2m.copy()})
    forced = run_scenario(
        ScenarioDef("acc-id", sample.scene_id, "forcing",
                    forcing_source="cordex_rcp45", horizon_year=2050),
        sample, params, forcing=identity)
    if not np.array_equal(forced.predicted_lst.values,
                          forced.baseline_lst.values):
        failures.append("identity forcing does not reproduce baseline bit-exactly")

    forest = run_scenario(
        ScenarioDef("acc-f", sample.scene_id, "pixel_swap", bbox=bbox,
                    donor="forest"), sample, params)
    urban = run_scenario(
        ScenarioDef("acc-u", sample.scene_id, "pixel_swap", bbox=bbox,
                    donor="urban"), sample, params)
    if not forest.stats["mean_delta_inside"] < 0.0:
        failures.append("forest swap does not cool")
    if not urban.stats["mean_delta_inside"] > 0.0:
        failures.append("urban swap does not warm")
    report("scenario-invariants", not failures,
           f"forest {forest.stats['mean_delta_inside']:+.2f}, "
           f"urban {urban.stats['mean_delta_inside']:+.2f} degC inside")
    assert not failures, failures


def _http(base, method, path, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=60) as resp:
            raw = resp.read()
            ctype = resp.headers.get("Content-Type", "")
            return resp.status, json.loads(raw) if raw and "json" in ctype else raw
    except urllib.error.HTTPError as exc:
        raw = exc.read()
        try:
            return exc.code, json.loads(raw)
        except Exception:
            return exc.code, raw


def test_service_contract(cool_veg_run, tmp_path, report):
    run = cool_veg_run
    failures = []
    store = Store(tmp_path / "store")
    fixture_samples = run["samples"][:4]
    for sample in fixture_samples:
        store.save_sample(sample)
    store.save_params(run["params"], "model")
    store.save_forcing(synthetic_forcing(fixture_samples, "cordex_rcp85",
                                         {2030: 1.2, 2050: 2.6, 2100: 4.3}))
    config = EngineConfig(store_dir=str(tmp_path / "store"), port=0, workers=2)
    server, service = make_server(store, config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        body = {"base_sample_id": fixture_samples[0].scene_id,
                "kind": "pixel_swap",
                "bbox": {"row0": 16, "col0": 16, "row1": 31, "col1": 39},
                "donor": "urban"}
        code, doc = _http(base, "POST", "/api/scenarios", body)
        if code != 201:
            failures.append(f"create returned {code}")
        sid = doc["scenario_id"]
        code, doc = _http(base, "POST", f"/api/scenarios/{sid}/run")
        if code != 202:
            failures.append(f"run returned {code}")
        deadline = time.time() + 120
        job = None
        while time.time() < deadline:
            _, job = _http(base, "GET", f"/api/jobs/{doc['job_id']}")
            if job["status"] in ("done", "failed"):
                break
            time.sleep(0.1)
        if job is None or job["status"] != "done":
            failures.append(f"job did not complete: {job}")
        else:
            pred = store.load_result_grid(sid, "predicted")
            basegrid = store.load_result_grid(sid, "baseline")
            diff = store.load_result_grid(sid, "diff")
            if not np.allclose(diff.values, pred.values - basegrid.values,
                               rtol=0, atol=1e-5):
                failures.append("diff != predicted - baseline from artifacts")
            code, _ = _http(base, "GET", f"/api/results/{sid}/map.png")
            if code != 200:
                failures.append("map.png not served")

        if _http(base, "POST", "/api/scenarios/ghost/run")[0] != 404:
            failures.append("404 check failed")
        bad = dict(body)
        bad["bbox"] = {"row0": 0, "col0": 0, "row1": 99, "col1": 99}
        if _http(base, "POST", "/api/scenarios", bad)[0] != 422:
            failures.append("422 check failed")

        # 409: hold a run open with a slowed executor
        import uhisim.service as service_mod

        original = service_mod.run_scenario
        release = threading.Event()

        def slow_run(*args, **kwargs):
            release.wait(timeout=60)
            return original(*args, **kwargs)

        service_mod.run_scenario = slow_run
        try:
            body2 = dict(body)
            body2["base_sample_id"] = fixture_samples[1].scene_id
            _, doc2 = _http(base, "POST", "/api/scenarios", body2)
            sid2 = doc2["scenario_id"]
            code, run_doc = _http(base, "POST", f"/api/scenarios/{sid2}/run")
            if code != 202:
                failures.append(f"second run queue returned {code}")
            code, _ = _http(base, "POST", f"/api/scenarios/{sid2}/run")
            if code != 409:
                failures.append(f"409 check failed (got {code})")
            release.set()
            deadline = time.time() + 120
            while time.time() < deadline:
                _, job2 = _http(base, "GET", f"/api/jobs/{run_doc['job_id']}")
                if job2["status"] in ("done", "failed"):
                    break
                time.sleep(0.1)
        finally:
            service_mod.run_scenario = original
    finally:
        server.shutdown()
        service.shutdown()
    report("service-contract", not failures, "end-to-end against fixture store")
    assert not failures, failures
