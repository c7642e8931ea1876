"""Command-line pipeline driver.

    uhisim demo-data  --store DIR [--samples N] [--seed S]
    uhisim ingest DIR --store DIR [--config FILE]
    uhisim pretrain   --store DIR [--epochs N] [--seed S] [--out NAME]
    uhisim finetune   --store DIR --split {random,high-heat} [--seed S]
                      [--percentile P] [--epochs N] [--pretrain-epochs N]
                      [--out NAME] [--early-stop MAE]
    uhisim evaluate   --store DIR [--checkpoint NAME] [--split NAME]
                      [--part test] [--per-lulc] [--out DIR]
    uhisim simulate   --store DIR --scenario FILE [--checkpoint NAME]
    uhisim serve      --store DIR [--port P] [--ui DIR] [--workers N]
    uhisim export     --store DIR (--map REF | --profile REF) --out FILE
                      [--image-format {png,ppm}] [--min-c V] [--max-c V]

Exit codes: 0 success, 2 usage error, 1 runtime error. File outputs are
written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .catalog import build_sample, catalog_scan, pick_era5_record
from .config import EngineConfig
from .errors import UhisimError
from .evalsplit import heat_split, metrics, per_lulc_metrics, random_split
from .model.train import TrainSchedule, samples_to_dataset, train
from .model.vit import TinyViTConfig, forward_regress
from .render import ColorMapSpec, diff_spec, render_map
from .scenario import ForcingRecord, ScenarioDef, profile_csv, run_scenario
from .store import Store
from .synthetic import SyntheticSpec, synthetic_dataset, synthetic_forcing


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uhisim",
                                     description="urban heat island simulation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo-data", help="generate a synthetic scene store")
    p.add_argument("--store", required=True)
    p.add_argument("--samples", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cool-vegetation", action="store_true",
                   help="use the vegetation-cools label convention")

    p = sub.add_parser("ingest", help="scan a raster directory into the store")
    p.add_argument("data_dir")
    p.add_argument("--store", required=True)
    p.add_argument("--config", help="engine config JSON")

    p = sub.add_parser("pretrain", help="masked-autoencoder pretraining only")
    p.add_argument("--store", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=6e-5)
    p.add_argument("--out", default="pretrained")

    p = sub.add_parser("finetune", help="train the regression model")
    p.add_argument("--store", required=True)
    p.add_argument("--split", choices=["random", "high-heat"], default="random")
    p.add_argument("--percentile", type=float, default=90.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--pretrain-epochs", type=int, default=0)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=6e-5)
    p.add_argument("--early-stop", type=float, default=None)
    p.add_argument("--out", default="model")
    p.add_argument("--from-checkpoint", default=None,
                   help="warm start from a stored checkpoint name")

    p = sub.add_parser("evaluate", help="score a checkpoint over a split part")
    p.add_argument("--store", required=True)
    p.add_argument("--checkpoint", default="model")
    p.add_argument("--split", default=None,
                   help="stored split name (default: the checkpoint name)")
    p.add_argument("--part", default="test", choices=["train", "val", "test"])
    p.add_argument("--per-lulc", action="store_true")
    p.add_argument("--out", default=None, help="output directory (default store/eval)")

    p = sub.add_parser("simulate", help="run one scenario definition")
    p.add_argument("--store", required=True)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--checkpoint", default="model")

    p = sub.add_parser("serve", help="start the HTTP scenario service")
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--ui", default=None, help="built frontend directory")
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("export", help="render a map or dump a profile")
    p.add_argument("--store", required=True)
    p.add_argument("--map", dest="map_ref", default=None,
                   help="scene:<id> | result:<id>:<predicted|baseline|diff>")
    p.add_argument("--profile", dest="profile_ref", default=None,
                   help="result:<id>")
    p.add_argument("--out", required=True)
    p.add_argument("--image-format", choices=["png", "ppm"], default="png")
    p.add_argument("--min-c", type=float, default=None)
    p.add_argument("--max-c", type=float, default=None)
    return parser


def _load_config(args) -> EngineConfig:
    if getattr(args, "config", None):
        return EngineConfig.from_json(args.config)
    return EngineConfig()


def _cmd_demo_data(args) -> int:
    store = Store(args.store)
    spec = SyntheticSpec(ndvi_coef=-20.0 if args.cool_vegetation else 20.0)
    samples = synthetic_dataset(args.samples, seed=args.seed, spec=spec)
    for sample in samples:
        store.save_sample(sample)
    offsets = {"cordex_rcp26": {2030: 0.6, 2050: 0.9, 2100: 1.2},
               "cordex_rcp45": {2030: 0.9, 2050: 1.6, 2100: 2.4},
               "cordex_rcp85": {2030: 1.2, 2050: 2.6, 2100: 4.3}}
    for source, deltas in offsets.items():
        store.save_forcing(synthetic_forcing(samples, source, deltas))
    print(f"wrote {len(samples)} scenes and 3 forcing records to {args.store}")
    return 0


def _cmd_ingest(args) -> int:
    config = _load_config(args)
    store = Store(args.store)
    catalog = catalog_scan(args.data_dir, config.catalog)
    lulc_by_year = {r.year: r for r in catalog.by_source("lulc")}
    era5_records = catalog.by_source("era5")
    built = 0
    for landsat in catalog.by_source("landsat8"):
        era5 = pick_era5_record(era5_records, landsat.date,
                                config.catalog.overpass_hour)
        lulc = lulc_by_year.get(landsat.year)
        if era5 is None or lulc is None:
            print(f"skipping {landsat.scene_id}: no matching era5/lulc",
                  file=sys.stderr)
            continue
        sample = build_sample(landsat, era5, lulc, config.catalog)
        store.save_sample(sample)
        built += 1
    for source in ("cordex_rcp26", "cordex_rcp45", "cordex_rcp85"):
        records = catalog.by_source(source)
        if not records:
            continue
        grids = {}
        for record in records:
            from .catalog import _read_band
            grid = _read_band(record.band_paths["t2m"], "t2m", config.catalog.t2m_units)
            grids[record.year] = grid
        store.save_forcing(ForcingRecord(source=source, grids=grids))
    print(f"built {built} samples; ignored {len(catalog.ignored)} files")
    return 0


def _load_store_dataset(store: Store):
    scenes = store.list_scenes()
    if not scenes:
        raise UhisimError("store has no scenes")
    ids = [s["scene_id"] for s in scenes]
    samples = [store.load_sample(sid) for sid in ids]
    return ids, samples


def _cmd_pretrain(args) -> int:
    store = Store(args.store)
    _, samples = _load_store_dataset(store)
    data = samples_to_dataset(samples)
    schedule = TrainSchedule(epochs=0, pretrain_epochs=args.epochs,
                             batch_size=args.batch, lr=args.lr, seed=args.seed)
    params, log = train(data, data.subset(np.arange(0)), TinyViTConfig(), schedule)
    store.save_params(params, args.out)
    _atomic_write_bytes(Path(args.store) / "logs" / f"{args.out}.csv",
                        log.to_csv().encode("utf-8"))
    print(f"pretrained {args.epochs} epochs -> checkpoint {args.out!r}")
    return 0


def _split_statistics(samples) -> dict[str, float]:
    stats = {}
    for sample in samples:
        vals = sample.label.values[~sample.label.nodata_mask]
        stats[sample.scene_id] = float(vals.mean())
    return stats


def _cmd_finetune(args) -> int:
    store = Store(args.store)
    ids, samples = _load_store_dataset(store)
    by_id = {s.scene_id: s for s in samples}
    if args.split == "random":
        plan = random_split(ids, seed=args.seed)
    else:
        plan = heat_split(_split_statistics(samples), percentile=args.percentile,
                          seed=args.seed)
    train_samples = [by_id[sid] for sid in plan.ids("train")]
    val_samples = [by_id[sid] for sid in plan.ids("val")]
    schedule = TrainSchedule(
        epochs=args.epochs, pretrain_epochs=args.pretrain_epochs,
        batch_size=args.batch, lr=args.lr, seed=args.seed,
        early_stop_val_mae=args.early_stop)
    initial = store.load_params(args.from_checkpoint) if args.from_checkpoint else None
    params, log = train(samples_to_dataset(train_samples),
                        samples_to_dataset(val_samples),
                        TinyViTConfig(), schedule, initial=initial)
    store.save_params(params, args.out)
    store.save_split(plan, args.out)
    manifest = {
        "checkpoint": args.out,
        "split": plan.to_json(),
        "schedule": {
            "epochs": args.epochs, "pretrain_epochs": args.pretrain_epochs,
            "batch_size": args.batch, "lr": args.lr, "seed": args.seed,
        },
        "best_val_mae": log.best_val_mae(),
    }
    store.persist("runs", args.out, manifest)
    _atomic_write_bytes(Path(args.store) / "logs" / f"{args.out}.csv",
                        log.to_csv().encode("utf-8"))
    print(f"finetuned {len(log.rows)} epochs; best val MAE "
          f"{log.best_val_mae():.3f} degC -> checkpoint {args.out!r}")
    return 0


def _cmd_evaluate(args) -> int:
    store = Store(args.store)
    params = store.load_params(args.checkpoint)
    split_name = args.split or args.checkpoint
    plan = store.load_split(split_name)
    if plan is None:
        raise UhisimError(f"no stored split {split_name!r}")
    part_ids = plan.ids(args.part)
    if not part_ids:
        raise UhisimError(f"split has no {args.part!r} samples")
    reports = []
    for sid in part_ids:
        sample = store.load_sample(sid)
        pred = forward_regress(params, sample.inputs)
        if args.per_lulc:
            reports.append(per_lulc_metrics(pred, sample.label, sample.lulc))
        else:
            reports.append(metrics(pred, sample.label))
    pooled_mae = float(np.mean([r.mae for r in reports]))
    out_dir = Path(args.out) if args.out else Path(args.store) / "eval"
    doc = {
        "checkpoint": args.checkpoint,
        "part": args.part,
        "mean_scene_mae": pooled_mae,
        "scenes": {sid: r.to_json() for sid, r in zip(part_ids, reports)},
    }
    _atomic_write_bytes(out_dir / f"{args.checkpoint}-{args.part}.json",
                        json.dumps(doc, indent=2).encode("utf-8"))
    if args.per_lulc:
        csv_text = reports[0].to_csv() if len(reports) == 1 else \
            _pooled_lulc_csv(part_ids, store, params)
        _atomic_write_bytes(out_dir / f"{args.checkpoint}-{args.part}-lulc.csv",
                            csv_text.encode("utf-8"))
    print(f"evaluated {len(part_ids)} scenes; mean scene MAE {pooled_mae:.3f} degC")
    return 0


def _pooled_lulc_csv(part_ids, store: Store, params) -> str:
    """Per-class table pooled over all scenes of the split part."""
    import numpy as _np
    from .raster import Grid

    preds, truths, lulcs = [], [], []
    for sid in part_ids:
        sample = store.load_sample(sid)
        preds.append(forward_regress(params, sample.inputs))
        truths.append(sample.label)
        lulcs.append(sample.lulc)
    georef = preds[0].georef
    stack = lambda grids: Grid(
        _np.concatenate([g.values for g in grids], axis=0), georef,
        grids[0].units, _np.concatenate([g.nodata_mask for g in grids], axis=0))
    report = per_lulc_metrics(stack(preds), stack(truths), stack(lulcs))
    return report.to_csv()


def _cmd_simulate(args) -> int:
    store = Store(args.store)
    doc = json.loads(Path(args.scenario).read_text())
    if "scenario_id" not in doc:
        doc["scenario_id"] = store.new_id("scn")
    definition = ScenarioDef.from_json(doc)
    sample = store.load_sample(definition.base_sample_id)
    params = store.load_params(args.checkpoint)
    forcing = None
    if definition.kind == "forcing":
        forcing = store.load_forcing(definition.forcing_source)
    result = run_scenario(definition, sample, params, forcing)
    store.save_scenario(definition)
    store.save_result(result)
    print(json.dumps({"scenario_id": definition.scenario_id,
                      "stats": result.stats}, indent=2))
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    store = Store(args.store)
    config = EngineConfig(store_dir=args.store, port=args.port,
                          workers=args.workers)
    print(f"serving store {args.store} on http://{args.host}:{args.port}/",
          file=sys.stderr)
    serve(store, config, ui_dir=args.ui, host=args.host)
    return 0


def _cmd_export(args) -> int:
    store = Store(args.store)
    if (args.map_ref is None) == (args.profile_ref is None):
        print("export needs exactly one of --map or --profile", file=sys.stderr)
        return 2
    out = Path(args.out)
    if args.profile_ref:
        kind, _, scenario_id = args.profile_ref.partition(":")
        if kind != "result":
            print("--profile expects result:<id>", file=sys.stderr)
            return 2
        doc = store.load_result_doc(scenario_id)
        if doc is None:
            raise UhisimError(f"no result {scenario_id!r}")
        _atomic_write_bytes(out, profile_csv(doc["profile"]).encode("utf-8"))
        print(f"wrote {out}")
        return 0

    parts = args.map_ref.split(":")
    if parts[0] == "scene" and len(parts) == 2:
        grid = store.load_sample(parts[1]).label
        spec = None
    elif parts[0] == "result" and len(parts) == 3:
        grid = store.load_result_grid(parts[1], parts[2])
        spec = diff_spec(grid) if parts[2] == "diff" else None
    else:
        print("--map expects scene:<id> or result:<id>:<grid>", file=sys.stderr)
        return 2
    if spec is None:
        vals = grid.values[~grid.nodata_mask]
        lo = args.min_c if args.min_c is not None else float(vals.min())
        hi = args.max_c if args.max_c is not None else float(vals.max())
        if hi <= lo:
            hi = lo + 1.0
        spec = ColorMapSpec("thermal", lo, hi)
    _atomic_write_bytes(out, render_map(grid, spec, args.image_format))
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "demo-data": _cmd_demo_data,
    "ingest": _cmd_ingest,
    "pretrain": _cmd_pretrain,
    "finetune": _cmd_finetune,
    "evaluate": _cmd_evaluate,
    "simulate": _cmd_simulate,
    "serve": _cmd_serve,
    "export": _cmd_export,
}


def cli_dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _COMMANDS[args.command](args)
    except UhisimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
