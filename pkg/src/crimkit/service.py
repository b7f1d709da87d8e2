"""Local HTTP JSON service backing the editor UI.

Jobs run on a bounded FIFO worker pool against a read-only model; the job
store is a single-writer map guarded by one lock. Health never blocks on a
running job.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import re
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from queue import Full, Queue

import numpy as np

from . import scenes as sc
from .configs import ConfigError, validate_config
from .guidance import GuidanceConfig, GuidanceError
from .logutil import get_logger
from .metrics import shadow_metrics
from .sampler import (EditRequest, RequestError, SamplerConfig,
                      SamplingCancelled, sample)

MAX_PAYLOAD_BYTES = 8 * 1024 * 1024


def encode_png_b64(img: np.ndarray) -> str:
    from PIL import Image
    if img.ndim == 3:
        arr = np.clip(np.rint(img * 255), 0, 255).astype(np.uint8).transpose(1, 2, 0)
        pil = Image.fromarray(arr)
    else:
        pil = Image.fromarray((img.astype(np.uint8) * 255))
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_b64(b64: str, as_mask: bool = False) -> np.ndarray:
    from PIL import Image
    raw = base64.b64decode(b64.encode("ascii"), validate=True)
    arr = np.asarray(Image.open(io.BytesIO(raw)).convert("L" if as_mask else "RGB"))
    if as_mask:
        return arr >= 128
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)


def mask_hash(mask: np.ndarray) -> str:
    """Stable digest of a binary mask: 'HxW:' prefix + row-major 0/1 bytes."""
    h, w = mask.shape
    payload = f"{h}x{w}:".encode() + mask.astype(np.uint8).tobytes()
    return hashlib.sha256(payload).hexdigest()


class JobRecord:
    def __init__(self, job_id: str, request_summary: dict):
        self.id = job_id
        self.status = "queued"
        self.request = request_summary
        self.result: dict | None = None
        self.error: str | None = None
        self.timings = {"queued_at": time.time(), "started_at": None,
                        "finished_at": None}
        self.cancel_event = threading.Event()

    def to_json_dict(self) -> dict:
        out = {"id": self.id, "status": self.status, "request": self.request,
               "timings": self.timings}
        if self.result is not None:
            out["result"] = self.result
        if self.error is not None:
            out["error"] = self.error
        return out


class EditorService:
    """Owns the model, the scene store, and the job queue."""

    def __init__(self, model_loader, queue_depth: int = 8, workers: int = 1,
                 default_steps: int = 50, log_level: str = "info"):
        self._loader = model_loader
        self.model = None
        self.schedule = None
        self.ckpt_hash = None
        self.default_steps = default_steps
        self.log = get_logger("service", log_level)
        self._scenes: dict[str, sc.CounterfactualTriplet] = {}
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()
        self._queue: Queue = Queue(maxsize=queue_depth)
        self._workers = [threading.Thread(target=self._worker, daemon=True)
                         for _ in range(workers)]
        self._httpd = None
        self._load_thread = None

    # -- lifecycle ---------------------------------------------------------

    def load_model(self, block: bool = True):
        def run():
            model, schedule, ckpt_hash = self._loader()
            with self._lock:
                self.model = model
                self.schedule = schedule
                self.ckpt_hash = ckpt_hash
            self.log.info("model-loaded", ckpt_hash=ckpt_hash)

        self._load_thread = threading.Thread(target=run, daemon=True)
        self._load_thread.start()
        if block:
            self._load_thread.join()

    def start(self, port: int, static_dir=None, block: bool = False) -> int:
        for w in self._workers:
            w.start()
        handler = _make_handler(self, static_dir)
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        actual_port = self._httpd.server_address[1]
        self.log.info("listening", port=actual_port)
        if block:
            self._httpd.serve_forever()
        else:
            threading.Thread(target=self._httpd.serve_forever, daemon=True).start()
        return actual_port

    def stop(self):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()

    # -- handlers ----------------------------------------------------------

    def health(self) -> tuple:
        with self._lock:
            if self.model is None:
                return 503, {"status": "loading"}
            return 200, {"status": "ok", "ckpt_hash": self.ckpt_hash}

    def create_scene(self, body: dict) -> tuple:
        validate_config(body, "scene_api")
        size = int(body.get("size", 32))
        trip = sc.generate_triplet(sc.sample_scene_spec(
            int(body["seed"]), sc.GeneratorConfig(image_size=size)))
        scene_id = f"scene-{uuid.uuid4().hex[:12]}"
        with self._lock:
            self._scenes[scene_id] = trip
        return 200, {"scene_id": scene_id, "images": {
            "with_object": encode_png_b64(trip.with_object),
            "background": encode_png_b64(trip.background),
            "mask": encode_png_b64(trip.mask)}}

    def submit_edit(self, body: dict) -> tuple:
        validate_config(body, "edit_api")
        with self._lock:
            model_ready = self.model is not None
        if not model_ready:
            return 503, {"error": "model still loading"}

        mask = decode_png_b64(body["mask_png_b64"], as_mask=True)
        scene = None
        if "scene_id" in body:
            with self._lock:
                scene = self._scenes.get(body["scene_id"])
            if scene is None:
                return 404, {"error": f"unknown scene {body['scene_id']}"}
            x_i = scene.with_object
        elif "images" in body:
            x_i = decode_png_b64(body["images"]["x_i_png_b64"])
        else:
            return 400, {"error": "need scene_id or images"}
        if mask.shape != x_i.shape[1:]:
            return 400, {"error": f"mask {mask.shape} does not match image "
                                  f"{x_i.shape[1:]}"}
        if not mask.any():
            return 400, {"error": "mask is empty"}

        task = body["task"]
        guidance = GuidanceConfig.from_json_dict(
            body.get("guidance") or {"mode": "none"})
        steps = int(body.get("steps", self.default_steps))
        seed = int(body.get("seed", 0))
        p_r = p_i = None
        if task == "move":
            off = body.get("offset")
            if not off:
                return 400, {"error": "move needs an offset"}
            if int(off[0]) == 0 and int(off[1]) == 0:
                return 400, {"error": "degenerate move offset (0,0)"}
            p_r = mask
            p_i = sc.translate_mask(mask, (int(off[0]), int(off[1])))
            mask = p_r | p_i
        req = EditRequest(x_i=x_i, m=mask, task=task, p_r=p_r, p_i=p_i,
                          sampler=SamplerConfig(steps=steps, seed=seed,
                                                guidance=guidance))
        try:
            req.validate()
            if steps > self.schedule.T:
                raise RequestError(f"steps {steps} exceeds schedule {self.schedule.T}")
        except (RequestError, GuidanceError) as e:
            return 400, {"error": str(e)}

        job = JobRecord(f"job-{uuid.uuid4().hex[:12]}", {
            "task": task, "steps": steps, "seed": seed,
            "guidance": guidance.to_json_dict(), "mask_hash": mask_hash(
                decode_png_b64(body["mask_png_b64"], as_mask=True)),
            "scene_id": body.get("scene_id")})
        with self._lock:
            self._jobs[job.id] = job
        try:
            self._queue.put_nowait((job, req, scene))
        except Full:
            with self._lock:
                del self._jobs[job.id]
            return 503, {"error": "job queue full"}
        self.log.info("job-queued", job_id=job.id, task=task, seed=seed)
        return 200, {"job_id": job.id}

    def job_status(self, job_id: str) -> tuple:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            return 404, {"error": f"unknown job {job_id}"}
        return 200, job.to_json_dict()

    def cancel_job(self, job_id: str) -> tuple:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            return 404, {"error": f"unknown job {job_id}"}
        if job.status in ("done", "failed"):
            return 409, {"error": f"job already {job.status}"}
        job.cancel_event.set()
        return 200, {"status": "cancelling"}

    # -- worker ------------------------------------------------------------

    def _worker(self):
        while True:
            job, req, scene = self._queue.get()
            if job.cancel_event.is_set():
                job.status = "failed"
                job.error = "cancelled before start"
                job.timings["finished_at"] = time.time()
                continue
            job.status = "running"
            job.timings["started_at"] = time.time()
            try:
                res = sample(self.model, req, self.schedule,
                             cancel=job.cancel_event)
                result = {"result_png_b64": encode_png_b64(res.image),
                          "evals": res.evals, "steps": res.steps,
                          "mask_hash": job.request["mask_hash"]}
                if scene is not None and req.task in ("insert", "move"):
                    sm = shadow_metrics(res.image, scene)
                    result["shadow_metrics"] = sm
                job.result = result
                job.status = "done"
                self.log.info("job-done", job_id=job.id)
            except SamplingCancelled as e:
                job.status = "failed"
                job.error = f"cancelled: {e}"
                self.log.info("job-cancelled", job_id=job.id)
            except Exception as e:  # surfaced to the client, service stays up
                job.status = "failed"
                job.error = f"{type(e).__name__}: {e}"
                self.log.error("job-failed", job_id=job.id, error=str(e))
            finally:
                job.timings["finished_at"] = time.time()


# ---------------------------------------------------------------------------
# HTTP plumbing


def _make_handler(service: EditorService, static_dir):
    static_root = Path(static_dir).resolve() if static_dir else None

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass  # structured logging happens in the service

        def _send(self, code: int, payload: dict):
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self):
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_PAYLOAD_BYTES:
                self._send(400, {"error": f"payload exceeds {MAX_PAYLOAD_BYTES} bytes"})
                return None
            ctype = (self.headers.get("Content-Type") or "").split(";")[0].strip()
            if ctype != "application/json":
                self._send(400, {"error": "content-type must be application/json"})
                return None
            try:
                return json.loads(self.rfile.read(length))
            except json.JSONDecodeError as e:
                self._send(400, {"error": f"bad JSON: {e}"})
                return None

        def do_GET(self):
            if self.path == "/api/health":
                return self._send(*service.health())
            m = re.fullmatch(r"/api/job/([\w-]+)", self.path)
            if m:
                return self._send(*service.job_status(m.group(1)))
            if static_root is not None:
                return self._serve_static()
            self._send(404, {"error": f"no route for {self.path}"})

        def do_POST(self):
            try:
                if self.path == "/api/scene":
                    body = self._read_json()
                    if body is None:
                        return
                    return self._send(*service.create_scene(body))
                if self.path == "/api/edit":
                    body = self._read_json()
                    if body is None:
                        return
                    return self._send(*service.submit_edit(body))
                m = re.fullmatch(r"/api/cancel/([\w-]+)", self.path)
                if m:
                    return self._send(*service.cancel_job(m.group(1)))
                self._send(404, {"error": f"no route for {self.path}"})
            except ConfigError as e:
                self._send(400, {"error": str(e)})
            except Exception as e:
                self._send(500, {"error": f"{type(e).__name__}: {e}"})

        def _serve_static(self):
            rel = self.path.split("?")[0].lstrip("/") or "index.html"
            target = (static_root / rel).resolve()
            if not str(target).startswith(str(static_root)) or not target.is_file():
                return self._send(404, {"error": f"no such file {rel}"})
            body = target.read_bytes()
            ctypes = {".html": "text/html", ".js": "text/javascript",
                      ".css": "text/css", ".svg": "image/svg+xml",
                      ".png": "image/png", ".json": "application/json",
                      ".map": "application/json"}
            self.send_response(200)
            self.send_header("Content-Type",
                             ctypes.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler
