"""HTTP review service: serve pre-annotations, accept corrections, retrain.

Plain-JSON FastAPI app.  Request bodies are validated by the same rules the
pipeline enforces, so client and server agree on what a well-formed
pre-annotation is.  Error codes: 400 invalid payload, 404 unknown document,
409 illegal transition or concurrent retrain, 422 schema mismatch.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..extractor import Model, save_checkpoint
from ..pipeline import PipelineError, PreAnnotation
from ..trainer import TrainConfig
from .retrain import DEFAULT_RETRAIN_EPOCHS, retrain
from .store import IllegalTransition, ReviewStore, StoreError

logger = logging.getLogger(__name__)


class ModelRegistry:
    """Versioned checkpoints on disk with an atomically swapped live model."""

    def __init__(self, directory: str | Path, model: Model,
                 metrics: dict | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._current = model
        self._meta: dict[int, dict] = {}
        meta_path = self.directory / "registry.json"
        if meta_path.exists():
            raw = json.loads(meta_path.read_text(encoding="utf-8"))
            self._meta = {int(k): v for k, v in raw.get("versions", {}).items()}
        if model.version not in self._meta:
            self._record(model, metrics or {})

    def _record(self, model: Model, metrics: dict) -> None:
        path = self.directory / f"model-v{model.version}.ckpt"
        if not path.exists():
            save_checkpoint(model, path)
        self._meta[model.version] = {
            "version": model.version,
            "metrics": metrics,
            "created_at": time.time(),
            "path": path.name,
        }
        self._flush_meta()

    def _flush_meta(self) -> None:
        meta_path = self.directory / "registry.json"
        tmp = meta_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(
            {"current": self._current.version,
             "versions": {str(k): v for k, v in sorted(self._meta.items())}},
            indent=2) + "\n", encoding="utf-8")
        tmp.replace(meta_path)

    @property
    def current(self) -> Model:
        with self._lock:
            return self._current

    @property
    def current_version(self) -> int:
        with self._lock:
            return self._current.version

    def publish(self, model: Model, metrics: dict) -> None:
        with self._lock:
            if model.version <= self._current.version:
                raise StoreError(
                    f"new version {model.version} must exceed {self._current.version}")
            self._record(model, metrics)
            self._current = model  # atomic swap: readers see old or new
            self._flush_meta()

    def versions(self) -> list[dict]:
        with self._lock:
            current = self._current.version
            return [
                {**meta, "active": v == current}
                for v, meta in sorted(self._meta.items())
            ]


@dataclass
class RetrainJob:
    job_id: int
    base_version: int
    record_count: int
    state: str = "queued"  # queued | running | done | failed
    produced_version: int | None = None
    error: str = ""
    base_metric: float | None = None
    new_metric: float | None = None

    def to_obj(self) -> dict:
        return {
            "job_id": self.job_id,
            "base_version": self.base_version,
            "record_count": self.record_count,
            "state": self.state,
            "produced_version": self.produced_version,
            "error": self.error,
            "base_metric": self.base_metric,
            "new_metric": self.new_metric,
        }


class RetrainManager:
    """At most one retrain job runs at a time; jobs are observable by id."""

    def __init__(self, store: ReviewStore, registry: ModelRegistry):
        self.store = store
        self.registry = registry
        self._lock = threading.Lock()
        self._jobs: dict[int, RetrainJob] = {}
        self._running: RetrainJob | None = None
        self._ids = itertools.count(1)

    def start(self, config: TrainConfig) -> RetrainJob:
        with self._lock:
            if self._running is not None:
                raise ConcurrentRetrain(f"job {self._running.job_id} is already running")
            verified = self.store.list(status="verified")
            if not verified:
                raise NothingVerified("no verified records to retrain on")
            job = RetrainJob(
                job_id=next(self._ids),
                base_version=self.registry.current_version,
                record_count=len(verified),
                state="running",
            )
            self._jobs[job.job_id] = job
            self._running = job
        thread = threading.Thread(
            target=self._run, args=(job, verified, config), daemon=True)
        thread.start()
        return job

    def _run(self, job: RetrainJob, verified, config: TrainConfig) -> None:
        try:
            outcome = retrain(verified, self.registry.current, config)
            job.base_metric = outcome.base_metric
            job.new_metric = outcome.new_metric
            if outcome.published and outcome.model is not None:
                self.registry.publish(outcome.model, {
                    "gate_macro_f1": outcome.new_metric,
                    "records": outcome.record_count,
                    "sentences": outcome.sentence_count,
                    "quarantined": outcome.quarantined,
                })
                job.produced_version = outcome.model.version
                job.state = "done"
            else:
                job.state = "failed"
                job.error = outcome.reason
        except Exception as exc:  # surfaced through the job, not the server log only
            logger.exception("retrain job %d failed", job.job_id)
            job.state = "failed"
            job.error = str(exc)
        finally:
            with self._lock:
                self._running = None

    def get(self, job_id: int) -> RetrainJob | None:
        with self._lock:
            return self._jobs.get(job_id)

    def latest(self) -> RetrainJob | None:
        with self._lock:
            if not self._jobs:
                return None
            return self._jobs[max(self._jobs)]


class ConcurrentRetrain(RuntimeError):
    pass


class NothingVerified(RuntimeError):
    pass


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(store: ReviewStore, registry: ModelRegistry,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="litmine review service")
    manager = RetrainManager(store, registry)
    app.state.store = store
    app.state.registry = registry
    app.state.retrain_manager = manager

    @app.get("/api/schema")
    def get_schema():
        return registry.current.schema.to_obj()

    @app.get("/api/docs")
    def list_docs(status: str | None = None, offset: int = 0, limit: int = 50):
        records = store.list(status=status)
        page = records[offset:offset + limit]
        return {
            "total": len(records),
            "offset": offset,
            "records": [r.summary() for r in page],
        }

    @app.post("/api/docs")
    async def create_doc(request: Request):
        try:
            obj = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        try:
            pre = PreAnnotation.from_obj(obj)
            pre.validate(registry.current.schema)
        except PipelineError as exc:
            status = 422 if "not in schema" in str(exc) else 400
            return _error(status, str(exc))
        try:
            record = store.create(pre, model_version=pre.model_version)
        except StoreError as exc:
            return _error(409, str(exc))
        return JSONResponse(status_code=201, content=record.to_obj())

    @app.get("/api/docs/{doc_id}")
    def get_doc(doc_id: str):
        try:
            return store.get(doc_id).to_obj()
        except KeyError:
            return _error(404, f"unknown document {doc_id!r}")

    @app.put("/api/docs/{doc_id}/annotations")
    async def put_annotations(doc_id: str, request: Request):
        try:
            record = store.get(doc_id)
        except KeyError:
            return _error(404, f"unknown document {doc_id!r}")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        status = body.get("status")
        if status not in ("in_review", "verified", "rejected"):
            return _error(400, f"unsupported target status {status!r}")
        corrected = None
        if body.get("corrected") is not None:
            try:
                corrected = PreAnnotation.from_obj(body["corrected"])
                corrected.validate(registry.current.schema)
            except PipelineError as exc:
                code = 422 if "not in schema" in str(exc) else 400
                return _error(code, str(exc))
            if corrected.doc_id != doc_id:
                return _error(400, "corrected.doc_id does not match the record")
        if status in ("verified", "rejected") and corrected is None:
            return _error(400, f"status {status!r} requires a corrected pre-annotation")
        if status == "in_review" and corrected is not None:
            return _error(400, "claiming a record must not carry corrections")
        reviewer = request.headers.get("X-Reviewer", "anonymous")
        try:
            updated = store.transition(doc_id, status, corrected=corrected, reviewer=reviewer)
        except IllegalTransition as exc:
            return _error(409, str(exc))
        return updated.to_obj()

    @app.post("/api/retrain")
    async def post_retrain(request: Request):
        overrides = {}
        body = await request.body()
        if body:
            try:
                overrides = json.loads(body)
            except json.JSONDecodeError:
                return _error(400, "request body is not valid JSON")
        try:
            config = TrainConfig.from_obj({"epochs": DEFAULT_RETRAIN_EPOCHS, **overrides})
        except (TypeError, ValueError) as exc:
            return _error(400, f"bad retrain config: {exc}")
        try:
            job = manager.start(config)
        except ConcurrentRetrain as exc:
            return _error(409, str(exc))
        except NothingVerified as exc:
            return _error(409, str(exc))
        return JSONResponse(status_code=202, content=job.to_obj())

    @app.get("/api/retrain")
    def get_retrain():
        job = manager.latest()
        return {"job": job.to_obj() if job else None}

    @app.get("/api/retrain/jobs/{job_id}")
    def get_retrain_job(job_id: int):
        job = manager.get(job_id)
        if job is None:
            return _error(404, f"unknown retrain job {job_id}")
        return job.to_obj()

    @app.get("/api/models")
    def get_models():
        return {"models": registry.versions(), "current": registry.current_version}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
