"""File-backed store: scenes, checkpoints, scenarios, jobs, results, forcings.

One JSON document per record under {kind}/{id}.json, written atomically
(temp file + rename); raster payloads ride the sidecar format. No database.
"""

from __future__ import annotations

import json
import os
import re
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .catalog import Sample
from .errors import StoreError, UnknownCheckpoint, UnknownSample
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.vit import ModelParams
from .raster import Grid
from .scenario import ForcingRecord, ScenarioDef, ScenarioResult
from .sidecar import read_sidecar, write_sidecar
from .evalsplit import SplitPlan

_ID_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

JOB_TRANSITIONS = {
    "queued": {"running", "failed"},
    "running": {"done", "failed"},
    "done": set(),
    "failed": set(),
}


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class JobRecord:
    job_id: str
    kind: str                    # train | evaluate | scenario
    status: str = "queued"
    created_at: str = ""
    result_ref: str = ""
    error_message: str = ""

    def __post_init__(self):
        if not self.created_at:
            self.created_at = _utcnow()

    def transition(self, new_status: str) -> None:
        if new_status not in JOB_TRANSITIONS.get(self.status, set()):
            raise StoreError(
                f"job {self.job_id}: illegal transition {self.status} -> {new_status}"
            )
        self.status = new_status

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "status": self.status,
            "created_at": self.created_at,
            "result_ref": self.result_ref,
            "error_message": self.error_message,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "JobRecord":
        return cls(**doc)


def _check_id(record_id: str) -> str:
    if not _ID_RE.match(record_id):
        raise StoreError(f"invalid record id {record_id!r}")
    return record_id


class Store:
    """Directory-backed persistence with atomic JSON writes."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # -- generic records ----------------------------------------------------

    def _dir(self, kind: str) -> Path:
        d = self.root / kind
        d.mkdir(parents=True, exist_ok=True)
        return d

    def persist(self, kind: str, record_id: str, doc: dict) -> None:
        path = self._dir(kind) / f"{_check_id(record_id)}.json"
        _atomic_write(path, json.dumps(doc, indent=2).encode("utf-8"))

    def fetch(self, kind: str, record_id: str) -> dict | None:
        path = self.root / kind / f"{_check_id(record_id)}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def delete(self, kind: str, record_id: str) -> bool:
        path = self.root / kind / f"{_check_id(record_id)}.json"
        if not path.exists():
            return False
        path.unlink()
        return True

    def list_ids(self, kind: str) -> list[str]:
        d = self.root / kind
        if not d.exists():
            return []
        return sorted(p.stem for p in d.glob("*.json"))

    # -- scenes --------------------------------------------------------------

    def save_sample(self, sample: Sample) -> None:
        d = self._dir("scenes") / _check_id(sample.scene_id)
        d.mkdir(parents=True, exist_ok=True)
        write_sidecar(sample.inputs, d / "inputs")
        write_sidecar(sample.label, d / "label")
        write_sidecar(sample.lulc, d / "lulc")
        _atomic_write(d / "meta.json", json.dumps(
            {"scene_id": sample.scene_id, "date": sample.date}).encode("utf-8"))

    def load_sample(self, scene_id: str) -> Sample:
        d = self.root / "scenes" / _check_id(scene_id)
        if not (d / "meta.json").exists():
            raise UnknownSample(f"no scene {scene_id!r} in store")
        meta = json.loads((d / "meta.json").read_text())
        return Sample(
            scene_id=meta["scene_id"],
            date=meta["date"],
            inputs=read_sidecar(d / "inputs"),
            label=read_sidecar(d / "label"),
            lulc=read_sidecar(d / "lulc"),
        )

    def list_scenes(self) -> list[dict]:
        d = self.root / "scenes"
        if not d.exists():
            return []
        out = []
        for meta_path in sorted(d.glob("*/meta.json")):
            out.append(json.loads(meta_path.read_text()))
        return out

    # -- checkpoints ----------------------------------------------------------

    def save_params(self, params: ModelParams, name: str = "model") -> None:
        save_checkpoint(params, self._dir("checkpoints") / _check_id(name))

    def load_params(self, name: str = "model") -> ModelParams:
        base = self.root / "checkpoints" / _check_id(name)
        if not base.with_suffix(".json").exists():
            raise UnknownCheckpoint(f"no checkpoint {name!r} in store")
        return load_checkpoint(base)

    def has_checkpoint(self, name: str = "model") -> bool:
        return (self.root / "checkpoints" / f"{_check_id(name)}.json").exists()

    # -- scenarios / jobs ------------------------------------------------------

    def new_id(self, prefix: str) -> str:
        return f"{prefix}-{uuid.uuid4().hex[:12]}"

    def save_scenario(self, definition: ScenarioDef) -> None:
        self.persist("scenarios", definition.scenario_id, definition.to_json())

    def load_scenario(self, scenario_id: str) -> ScenarioDef | None:
        doc = self.fetch("scenarios", scenario_id)
        return ScenarioDef.from_json(doc) if doc else None

    def save_job(self, job: JobRecord) -> None:
        self.persist("jobs", job.job_id, job.to_json())

    def load_job(self, job_id: str) -> JobRecord | None:
        doc = self.fetch("jobs", job_id)
        return JobRecord.from_json(doc) if doc else None

    # -- results ----------------------------------------------------------------

    def save_result(self, result: ScenarioResult) -> None:
        d = self._dir("results") / _check_id(result.scenario_id)
        d.mkdir(parents=True, exist_ok=True)
        write_sidecar(result.predicted_lst, d / "predicted")
        write_sidecar(result.baseline_lst, d / "baseline")
        write_sidecar(result.diff, d / "diff")
        _atomic_write(d / "result.json",
                      json.dumps(result.to_json(), indent=2).encode("utf-8"))

    def has_result(self, scenario_id: str) -> bool:
        return (self.root / "results" / _check_id(scenario_id) / "result.json").exists()

    def load_result_doc(self, scenario_id: str) -> dict | None:
        path = self.root / "results" / _check_id(scenario_id) / "result.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def load_result_grid(self, scenario_id: str, which: str) -> Grid:
        if which not in ("predicted", "baseline", "diff"):
            raise StoreError(f"unknown result grid {which!r}")
        path = self.root / "results" / _check_id(scenario_id) / which
        if not path.with_suffix(".json").exists():
            raise StoreError(f"result grid missing: {scenario_id}/{which}")
        return read_sidecar(path)

    def delete_result(self, scenario_id: str) -> None:
        d = self.root / "results" / _check_id(scenario_id)
        if d.exists():
            for p in d.iterdir():
                p.unlink()
            d.rmdir()

    # -- forcings ----------------------------------------------------------------

    def save_forcing(self, record: ForcingRecord) -> None:
        d = self._dir("forcings") / _check_id(record.source)
        d.mkdir(parents=True, exist_ok=True)
        for year, grid in record.grids.items():
            write_sidecar(grid, d / str(year))
        _atomic_write(d / "meta.json", json.dumps(
            {"source": record.source, "metadata": record.metadata,
             "years": sorted(record.grids)}).encode("utf-8"))

    def load_forcing(self, source: str) -> ForcingRecord | None:
        d = self.root / "forcings" / _check_id(source)
        if not (d / "meta.json").exists():
            return None
        meta = json.loads((d / "meta.json").read_text())
        grids = {int(y): read_sidecar(d / str(y)) for y in meta["years"]}
        return ForcingRecord(source=meta["source"], grids=grids,
                             metadata=meta.get("metadata", ""))

    # -- splits -----------------------------------------------------------------

    def save_split(self, plan: SplitPlan, name: str = "split") -> None:
        self.persist("splits", name, plan.to_json())

    def load_split(self, name: str = "split") -> SplitPlan | None:
        doc = self.fetch("splits", name)
        return SplitPlan.from_json(doc) if doc else None


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}-{threading.get_ident()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            if tmp.exists():
                tmp.unlink()
        finally:
            pass
        raise StoreError(f"cannot write {path}: {exc}") from exc
