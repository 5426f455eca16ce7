"""HTTP job API for interactive removal: submit an (image, mask) pair, poll the
job, fetch the finished PNG.

Inference runs on a single worker thread against a read-only model snapshot;
the submission queue is bounded (429 once full) and job states move strictly
queued -> running -> done|failed.
"""

from __future__ import annotations

import io
import queue
import threading
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from tempfile import mkdtemp
from typing import Callable, Optional

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import FileResponse, JSONResponse
from PIL import Image

from .checkpoint import checkpoint_id, load_checkpoint
from .removal import REMOVAL_MODES, RemovalRequest, remove

JOB_STATES = ("queued", "running", "done", "failed")
_TRANSITIONS = {"queued": {"running"}, "running": {"done", "failed"}}


@dataclass
class Job:
    id: str
    state: str = "queued"
    progress: float = 0.0
    result_ref: Optional[str] = None
    error: Optional[str] = None


class JobStore:
    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create(self) -> Job:
        job = Job(id=uuid.uuid4().hex[:12])
        with self._lock:
            self._jobs[job.id] = job
        return job

    def get(self, job_id: str) -> Optional[Job]:
        with self._lock:
            return self._jobs.get(job_id)

    def transition(self, job_id: str, state: str, **fields):
        with self._lock:
            job = self._jobs[job_id]
            if state not in _TRANSITIONS.get(job.state, set()):
                raise RuntimeError(f"illegal transition {job.state} -> {state}")
            job.state = state
            for k, v in fields.items():
                setattr(job, k, v)

    def set_progress(self, job_id: str, progress: float):
        with self._lock:
            self._jobs[job_id].progress = min(max(progress, 0.0), 1.0)


def _decode_image(data: bytes, what: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"malformed {what} upload: {exc}") from exc


def _decode_mask(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float32)
        return (arr > 127.0).astype(np.float32)
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"malformed mask upload: {exc}") from exc


def create_app(
    checkpoint_path,
    queue_size: int = 8,
    results_dir=None,
    static_dir=None,
    remove_fn: Optional[Callable] = None,
) -> FastAPI:
    """Build the service around one loaded checkpoint.

    remove_fn(req, model, schedule, quick_resolution, progress_cb) may be
    injected for testing; it defaults to the real removal pipeline.
    """
    model, schedule, manifest = load_checkpoint(checkpoint_path)
    model.eval()
    ckpt_id = checkpoint_id(checkpoint_path)
    results_dir = Path(results_dir or mkdtemp(prefix="deshadow_results_"))
    results_dir.mkdir(parents=True, exist_ok=True)
    from .removal import default_quick_resolution

    quick_resolution = default_quick_resolution(model, schedule)
    runner = remove_fn or remove

    app = FastAPI(title="deshadow removal service")
    store = JobStore()
    work: "queue.Queue[tuple[str, RemovalRequest]]" = queue.Queue(maxsize=queue_size)
    app.state.jobs = store
    app.state.checkpoint_id = ckpt_id
    app.state.results_dir = results_dir

    def worker():
        while True:
            job_id, req = work.get()
            store.transition(job_id, "running")
            try:
                out = runner(
                    req,
                    model,
                    schedule,
                    quick_resolution=quick_resolution,
                    progress_cb=lambda p: store.set_progress(job_id, p),
                )
                path = results_dir / f"{job_id}.png"
                arr = np.clip(out * 255.0, 0, 255).round().astype(np.uint8)
                Image.fromarray(arr).save(path)
                store.transition(job_id, "done", progress=1.0, result_ref=f"/api/results/{job_id}.png")
            except Exception as exc:  # failures are reported, never crash the worker
                store.transition(job_id, "failed", error=str(exc))
            finally:
                work.task_done()

    threading.Thread(target=worker, daemon=True, name="removal-worker").start()

    @app.post("/api/remove")
    async def submit(
        image: UploadFile = File(...),
        mask: UploadFile = File(...),
        mode: str = Form("full"),
        dilation: int = Form(21),
        steps: int = Form(50),
        seed: int = Form(0),
        eta: float = Form(0.0),
        composite_only_mask: bool = Form(True),
    ):
        if mode not in REMOVAL_MODES:
            raise HTTPException(status_code=400, detail=f"mode must be one of {REMOVAL_MODES}")
        if dilation < 1 or dilation % 2 == 0:
            raise HTTPException(status_code=400, detail="dilation must be odd and >= 1")
        img = _decode_image(await image.read(), "image")
        msk = _decode_mask(await mask.read())
        if img.shape[:2] != msk.shape:
            raise HTTPException(
                status_code=400,
                detail=f"image {img.shape[:2]} and mask {msk.shape} are not co-registered",
            )
        try:
            req = RemovalRequest(
                image=img, mask=msk, mode=mode, dilation_k=dilation,
                steps=steps, seed=seed, eta=eta, composite_only_mask=composite_only_mask,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        job = store.create()
        try:
            work.put_nowait((job.id, req))
        except queue.Full:
            raise HTTPException(status_code=429, detail="job queue is full, retry later") from None
        return {"job_id": job.id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = store.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return asdict(job)

    @app.get("/api/results/{job_id}.png")
    def job_result(job_id: str):
        job = store.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        if job.state != "done":
            raise HTTPException(status_code=404, detail=f"job {job_id} is {job.state}, not done")
        return FileResponse(results_dir / f"{job_id}.png", media_type="image/png")

    @app.get("/api/health")
    def health():
        return {"status": "ok", "checkpoint_id": ckpt_id}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="studio")

    return app


def serve(checkpoint_path, host: str = "127.0.0.1", port: int = 8765, queue_size: int = 8, static_dir=None):
    import uvicorn

    app = create_app(checkpoint_path, queue_size=queue_size, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
