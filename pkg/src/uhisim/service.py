"""JSON-over-HTTP scenario service with a bounded worker pool.

Endpoints (UTF-8 JSON bodies unless noted):

    GET    /api/scenes                     list stored scenes
    GET    /api/scenes/{id}/lst.png        label map render
    POST   /api/scenarios                  create scenario       -> 201
    GET    /api/scenarios/{id}             stored definition
    POST   /api/scenarios/{id}/run         queue a run           -> 202 (200 cached)
    GET    /api/jobs/{id}                  job record
    GET    /api/results/{id}               stats + profile JSON
    GET    /api/results/{id}/map.png       predicted LST render
    GET    /api/results/{id}/diff.png      diff render (diverging, zero-centred)
    GET    /api/results/{id}/profile.csv   vertical profile
    DELETE /api/scenarios/{id}             remove definition     -> 204
    GET    /ui/...                         static frontend assets

Status codes: 404 unknown id, 409 run while already running, 422 invalid
body. Scene and checkpoint files are never mutated."""

from __future__ import annotations

import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .config import EngineConfig
from .errors import BboxOutOfBounds, UhisimError, UnknownSample
from .render import diff_spec, render_map
from .scenario import ScenarioDef, profile_csv, run_scenario
from .store import JobRecord, Store

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".map": "application/json",
    ".ico": "image/x-icon",
}


class ScenarioService:
    """Application state shared across request threads."""

    def __init__(self, store: Store, config: EngineConfig, ui_dir: str | Path | None = None):
        self.store = store
        self.config = config
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.pool = ThreadPoolExecutor(max_workers=config.workers)
        self._active: dict[str, str] = {}       # scenario_id -> job_id
        self._lock = threading.Lock()

    # -- scenario lifecycle ---------------------------------------------------

    def create_scenario(self, body: dict) -> ScenarioDef:
        doc = dict(body)
        doc["scenario_id"] = self.store.new_id("scn")
        definition = ScenarioDef.from_json(doc)
        sample = self.store.load_sample(definition.base_sample_id)
        if definition.bbox is not None:
            definition.bbox.check_within(sample.label.shape)
        if definition.kind == "pixel_swap" and definition.donor is None:
            raise ValueError("pixel_swap needs a donor")
        if definition.kind == "index_retarget" and definition.index_kind is None:
            raise ValueError("index_retarget needs index_kind")
        if definition.kind == "forcing":
            if self.store.load_forcing(definition.forcing_source) is None:
                raise ValueError(
                    f"no forcing data stored for {definition.forcing_source!r}"
                )
        self.store.save_scenario(definition)
        return definition

    def queue_run(self, scenario_id: str):
        """Returns (status_code, payload)."""
        definition = self.store.load_scenario(scenario_id)
        if definition is None:
            return 404, {"error": f"unknown scenario {scenario_id!r}"}
        with self._lock:
            active_job = self._active.get(scenario_id)
            if active_job is not None:
                return 409, {"error": "scenario is already running",
                             "job_id": active_job}
            if self.store.has_result(scenario_id):
                doc = self.store.load_result_doc(scenario_id)
                return 200, {"scenario_id": scenario_id, "cached": True,
                             "result": doc}
            job = JobRecord(job_id=self.store.new_id("job"), kind="scenario",
                            result_ref=scenario_id)
            self.store.save_job(job)
            self._active[scenario_id] = job.job_id
        self.pool.submit(self._execute, job, definition)
        return 202, {"job_id": job.job_id}

    def _execute(self, job: JobRecord, definition: ScenarioDef) -> None:
        try:
            job.transition("running")
            self.store.save_job(job)
            sample = self.store.load_sample(definition.base_sample_id)
            params = self.store.load_params(self.config.checkpoint)
            forcing = None
            if definition.kind == "forcing":
                forcing = self.store.load_forcing(definition.forcing_source)
            result = run_scenario(definition, sample, params, forcing,
                                  patch_size=self.config.patch_size)
            self.store.save_result(result)
            job.transition("done")
            self.store.save_job(job)
        except Exception as exc:  # failure lands in the job record
            job.error_message = f"{type(exc).__name__}: {exc}"
            try:
                job.transition("failed")
            except UhisimError:
                job.status = "failed"
            self.store.save_job(job)
        finally:
            with self._lock:
                self._active.pop(definition.scenario_id, None)

    def delete_scenario(self, scenario_id: str) -> bool:
        with self._lock:
            if scenario_id in self._active:
                return False
        removed = self.store.delete("scenarios", scenario_id)
        if removed:
            self.store.delete_result(scenario_id)
        return removed

    def shutdown(self):
        self.pool.shutdown(wait=True)


class _Handler(BaseHTTPRequestHandler):
    service: ScenarioService = None  # patched in by make_server
    protocol_version = "HTTP/1.1"

    # -- plumbing ---------------------------------------------------------------

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, payload: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _json(self, code: int, doc) -> None:
        self._send(code, json.dumps(doc).encode("utf-8"), "application/json")

    def _not_found(self, what: str = "resource") -> None:
        self._json(404, {"error": f"unknown {what}"})

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise ValueError("empty request body")
        return json.loads(raw)

    # -- routing ------------------------------------------------------------------

    def do_GET(self):
        try:
            self._route_get()
        except UhisimError as exc:
            self._json(404, {"error": str(exc)})
        except Exception as exc:
            self._json(500, {"error": f"{type(exc).__name__}: {exc}"})

    def do_POST(self):
        try:
            self._route_post()
        except (ValueError, KeyError, TypeError, json.JSONDecodeError,
                UnknownSample, BboxOutOfBounds) as exc:
            # anything wrong with the request body itself
            self._json(422, {"error": str(exc)})
        except UhisimError as exc:
            self._json(500, {"error": str(exc)})
        except Exception as exc:
            self._json(500, {"error": f"{type(exc).__name__}: {exc}"})

    def do_DELETE(self):
        svc = self.service
        m = re.fullmatch(r"/api/scenarios/([A-Za-z0-9_.-]+)", self.path)
        if not m:
            self._not_found("endpoint")
            return
        scenario_id = m.group(1)
        if svc.store.load_scenario(scenario_id) is None:
            self._not_found("scenario")
            return
        if svc.delete_scenario(scenario_id):
            self._send(204, b"", "application/json")
        else:
            self._json(409, {"error": "scenario is running"})

    def _route_post(self):
        svc = self.service
        if self.path == "/api/scenarios":
            body = self._read_body()
            definition = svc.create_scenario(body)
            self._json(201, {"scenario_id": definition.scenario_id})
            return
        m = re.fullmatch(r"/api/scenarios/([A-Za-z0-9_.-]+)/run", self.path)
        if m:
            code, payload = svc.queue_run(m.group(1))
            self._json(code, payload)
            return
        self._not_found("endpoint")

    def _route_get(self):
        svc = self.service
        path = self.path.split("?", 1)[0]
        if path == "/api/scenes":
            self._json(200, svc.store.list_scenes())
            return
        m = re.fullmatch(r"/api/scenes/([A-Za-z0-9_.-]+)/lst\.png", path)
        if m:
            try:
                sample = svc.store.load_sample(m.group(1))
            except UnknownSample:
                self._not_found("scene")
                return
            png = render_map(sample.label, svc.config.colormap, "png")
            self._send(200, png, "image/png")
            return
        m = re.fullmatch(r"/api/scenarios/([A-Za-z0-9_.-]+)", path)
        if m:
            definition = svc.store.load_scenario(m.group(1))
            if definition is None:
                self._not_found("scenario")
            else:
                self._json(200, definition.to_json())
            return
        m = re.fullmatch(r"/api/jobs/([A-Za-z0-9_.-]+)", path)
        if m:
            job = svc.store.load_job(m.group(1))
            if job is None:
                self._not_found("job")
            else:
                self._json(200, job.to_json())
            return
        m = re.fullmatch(r"/api/results/([A-Za-z0-9_.-]+)(/.*)?", path)
        if m:
            self._serve_result(m.group(1), m.group(2) or "")
            return
        if path == "/" or path == "/ui":
            self.send_response(302)
            self.send_header("Location", "/ui/")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if path.startswith("/ui/"):
            self._serve_static(path[len("/ui/"):])
            return
        self._not_found("endpoint")

    def _serve_result(self, scenario_id: str, tail: str):
        svc = self.service
        doc = svc.store.load_result_doc(scenario_id)
        if doc is None:
            self._not_found("result")
            return
        if tail in ("", "/"):
            self._json(200, doc)
        elif tail == "/map.png":
            grid = svc.store.load_result_grid(scenario_id, "predicted")
            self._send(200, render_map(grid, svc.config.colormap, "png"), "image/png")
        elif tail == "/baseline.png":
            grid = svc.store.load_result_grid(scenario_id, "baseline")
            self._send(200, render_map(grid, svc.config.colormap, "png"), "image/png")
        elif tail == "/diff.png":
            grid = svc.store.load_result_grid(scenario_id, "diff")
            self._send(200, render_map(grid, diff_spec(grid), "png"), "image/png")
        elif tail == "/profile.csv":
            payload = profile_csv(doc["profile"]).encode("utf-8")
            self._send(200, payload, "text/csv; charset=utf-8")
        else:
            self._not_found("result artifact")

    def _serve_static(self, rel: str):
        svc = self.service
        if svc.ui_dir is None:
            self._not_found("ui (no ui directory configured)")
            return
        rel = rel or "index.html"
        target = (svc.ui_dir / rel).resolve()
        try:
            target.relative_to(svc.ui_dir.resolve())
        except ValueError:
            self._not_found("file")
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._not_found("file")
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)


def make_server(store: Store, config: EngineConfig,
                ui_dir: str | Path | None = None,
                host: str = "127.0.0.1") -> tuple[ThreadingHTTPServer, ScenarioService]:
    """Build (but do not start) the HTTP server bound to config.port."""
    service = ScenarioService(store, config, ui_dir)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, config.port), handler)
    return server, service


def serve(store: Store, config: EngineConfig, ui_dir: str | Path | None = None,
          host: str = "127.0.0.1") -> None:
    """Run the service until interrupted."""
    server, service = make_server(store, config, ui_dir, host)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.shutdown()
        server.server_close()
