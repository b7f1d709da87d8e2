"""HTTP service: lifecycle, job queue semantics, determinism end to end."""

import base64
import threading
import time

import numpy as np
import pytest
import requests

from crimkit.diffusion import make_schedule
from crimkit.oracle import default_oracle
from crimkit.service import (EditorService, decode_png_b64, encode_png_b64,
                             mask_hash)

SCHED = make_schedule(1000, "cosine")


def oracle_loader():
    model = default_oracle(size=32)
    return model, SCHED, "oracle-test"


class SlowOracle:
    data_space = "raw"

    def __init__(self, inner, delay=0.03):
        self.inner = inner
        self.delay = delay
        self.image_size = inner.image_size

    def predict_with_schedule(self, x, t, task, schedule):
        time.sleep(self.delay)
        return self.inner.predict_with_schedule(x, t, task, schedule)


@pytest.fixture()
def svc():
    service = EditorService(oracle_loader, queue_depth=8, workers=1,
                            default_steps=8, log_level="error")
    service.load_model(block=True)
    port = service.start(0)
    yield service, f"http://127.0.0.1:{port}"
    service.stop()


def submit_and_wait(base, body, timeout=30.0):
    r = requests.post(f"{base}/api/edit", json=body)
    assert r.status_code == 200, r.text
    job_id = r.json()["job_id"]
    deadline = time.time() + timeout
    while time.time() < deadline:
        j = requests.get(f"{base}/api/job/{job_id}").json()
        if j["status"] in ("done", "failed"):
            return j
        time.sleep(0.02)
    raise TimeoutError(job_id)


def make_mask_b64(size=32):
    m = np.zeros((size, size), bool)
    m[8:16, 8:16] = True
    return base64.b64encode(png_bytes(m)).decode(), m


def png_bytes(mask):
    import io

    from PIL import Image
    buf = io.BytesIO()
    Image.fromarray(mask.astype(np.uint8) * 255).save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------


def test_health_503_before_load_then_ok():
    waiter = threading.Event()

    def slow_loader():
        waiter.wait(5)
        return oracle_loader()

    service = EditorService(slow_loader, log_level="error")
    port = service.start(0)
    base = f"http://127.0.0.1:{port}"
    try:
        service.load_model(block=False)
        r = requests.get(f"{base}/api/health")
        assert r.status_code == 503
        assert r.json()["status"] == "loading"
        waiter.set()
        service._load_thread.join()
        r = requests.get(f"{base}/api/health")
        assert r.status_code == 200
        assert r.json()["ckpt_hash"] == "oracle-test"
    finally:
        service.stop()


def test_scene_endpoint_roundtrip(svc):
    _, base = svc
    r = requests.post(f"{base}/api/scene", json={"seed": 3, "size": 32})
    assert r.status_code == 200
    body = r.json()
    img = decode_png_b64(body["images"]["with_object"])
    assert img.shape == (3, 32, 32)
    mask = decode_png_b64(body["images"]["mask"], as_mask=True)
    assert mask.any()
    assert body["scene_id"].startswith("scene-")


def test_edit_happy_path_and_metrics(svc):
    _, base = svc
    scene = requests.post(f"{base}/api/scene", json={"seed": 1, "size": 32}).json()
    job = submit_and_wait(base, {
        "scene_id": scene["scene_id"],
        "mask_png_b64": scene["images"]["mask"],
        "task": "insert",
        "guidance": {"mode": "ctg-insertion", "w": 1.0},
        "steps": 8, "seed": 4})
    assert job["status"] == "done", job
    out = decode_png_b64(job["result"]["result_png_b64"])
    assert out.shape == (3, 32, 32)
    assert job["result"]["evals"] == 16
    assert "shadow_metrics" in job["result"]


def test_identical_submissions_byte_identical(svc):
    _, base = svc
    scene = requests.post(f"{base}/api/scene", json={"seed": 2, "size": 32}).json()
    body = {"scene_id": scene["scene_id"], "mask_png_b64": scene["images"]["mask"],
            "task": "remove", "guidance": {"mode": "ctg-removal", "w": 1.5},
            "steps": 8, "seed": 9}
    a = submit_and_wait(base, body)
    b = submit_and_wait(base, body)
    assert a["status"] == b["status"] == "done"
    assert a["result"]["result_png_b64"] == b["result"]["result_png_b64"]


def test_mask_hash_echo(svc):
    _, base = svc
    b64, mask = make_mask_b64()
    job = submit_and_wait(base, {
        "images": {"x_i_png_b64": encode_png_b64(np.full((3, 32, 32), 0.5, np.float32))},
        "mask_png_b64": b64, "task": "remove", "steps": 6, "seed": 0})
    assert job["status"] == "done"
    assert job["result"]["mask_hash"] == mask_hash(mask)


def test_move_flow(svc):
    _, base = svc
    b64, mask = make_mask_b64()
    job = submit_and_wait(base, {
        "images": {"x_i_png_b64": encode_png_b64(np.full((3, 32, 32), 0.5, np.float32))},
        "mask_png_b64": b64, "task": "move", "offset": [4, 10],
        "guidance": {"mode": "sctg", "spatial": {"w_r": 1.5, "w_i": -2.5,
                                                 "t_s_frac": 0.6}},
        "steps": 6, "seed": 0})
    assert job["status"] == "done", job


def test_unknown_job_404(svc):
    _, base = svc
    assert requests.get(f"{base}/api/job/nope").status_code == 404
    assert requests.post(f"{base}/api/cancel/nope").status_code == 404


def test_cancel_after_done_409(svc):
    _, base = svc
    scene = requests.post(f"{base}/api/scene", json={"seed": 5}).json()
    job = submit_and_wait(base, {
        "scene_id": scene["scene_id"], "mask_png_b64": scene["images"]["mask"],
        "task": "remove", "steps": 4, "seed": 0})
    r = requests.post(f"{base}/api/cancel/{job['id']}")
    assert r.status_code == 409


def test_schema_violations_400(svc):
    _, base = svc
    r = requests.post(f"{base}/api/edit", json={"task": "remove"})
    assert r.status_code == 400  # missing mask
    r = requests.post(f"{base}/api/edit",
                      json={"task": "remove", "mask_png_b64": "aaaa", "bogus": 1})
    assert r.status_code == 400  # unknown key
    r = requests.post(f"{base}/api/scene", json={"seed": 1, "size": 48})
    assert r.status_code == 400  # unsupported size
    r = requests.post(f"{base}/api/scene", data="not json",
                      headers={"Content-Type": "application/json"})
    assert r.status_code == 400


def test_content_type_enforced(svc):
    _, base = svc
    r = requests.post(f"{base}/api/scene", data=b"{}",
                      headers={"Content-Type": "text/plain"})
    assert r.status_code == 400


def test_queue_full_503():
    def slow_loader():
        model = SlowOracle(default_oracle(size=32), delay=0.05)
        return model, SCHED, "slow"

    service = EditorService(slow_loader, queue_depth=1, workers=1,
                            default_steps=10, log_level="error")
    service.load_model(block=True)
    port = service.start(0)
    base = f"http://127.0.0.1:{port}"
    try:
        b64, _ = make_mask_b64()
        body = {"images": {"x_i_png_b64": encode_png_b64(
            np.full((3, 32, 32), 0.5, np.float32))},
            "mask_png_b64": b64, "task": "remove", "steps": 10, "seed": 0}
        codes = [requests.post(f"{base}/api/edit", json=body).status_code
                 for _ in range(4)]
        assert 503 in codes
        assert codes[0] == 200
    finally:
        service.stop()


def test_cancel_running_job():
    def slow_loader():
        return SlowOracle(default_oracle(size=32), delay=0.1), SCHED, "slow"

    service = EditorService(slow_loader, queue_depth=4, workers=1,
                            log_level="error")
    service.load_model(block=True)
    port = service.start(0)
    base = f"http://127.0.0.1:{port}"
    try:
        b64, _ = make_mask_b64()
        r = requests.post(f"{base}/api/edit", json={
            "images": {"x_i_png_b64": encode_png_b64(
                np.full((3, 32, 32), 0.5, np.float32))},
            "mask_png_b64": b64, "task": "remove", "steps": 40, "seed": 0})
        job_id = r.json()["job_id"]
        time.sleep(0.3)  # let it start
        rc = requests.post(f"{base}/api/cancel/{job_id}")
        assert rc.status_code == 200
        deadline = time.time() + 20
        while time.time() < deadline:
            j = requests.get(f"{base}/api/job/{job_id}").json()
            if j["status"] in ("done", "failed"):
                break
            time.sleep(0.05)
        assert j["status"] == "failed"
        assert "cancel" in j["error"]
    finally:
        service.stop()


def test_health_liveness_during_job():
    def slow_loader():
        return SlowOracle(default_oracle(size=32), delay=0.1), SCHED, "slow"

    service = EditorService(slow_loader, queue_depth=4, workers=1,
                            log_level="error")
    service.load_model(block=True)
    port = service.start(0)
    base = f"http://127.0.0.1:{port}"
    try:
        b64, _ = make_mask_b64()
        requests.post(f"{base}/api/edit", json={
            "images": {"x_i_png_b64": encode_png_b64(
                np.full((3, 32, 32), 0.5, np.float32))},
            "mask_png_b64": b64, "task": "remove", "steps": 30, "seed": 0})
        t0 = time.time()
        r = requests.get(f"{base}/api/health", timeout=2)
        assert r.status_code == 200
        assert time.time() - t0 < 1.0
    finally:
        service.stop()
