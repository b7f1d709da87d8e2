"""CLI: flag contracts, error protocol, end-to-end smoke flows."""

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from crimkit.cli import main


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    code = main(["gen-data", "--out", str(root), "--count", "4"])
    assert code == 0
    return root


def test_conflicting_model_flags(corpus, tmp_path, capsys):
    code, _, err = run_cli([
        "edit", "--ckpt", "somewhere", "--model", "oracle", "--task", "remove",
        "--input", str(corpus / "000000"), "--out", str(tmp_path / "o.png")],
        capsys)
    assert code == 2
    assert err.startswith("ERR:conflicting-model:")


def test_unknown_flag_usage_error(capsys):
    code, _, err = run_cli(["edit", "--frobnicate"], capsys)
    assert code == 2
    assert err.startswith("ERR:usage:")


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run_cli(["gen-data", "--config", str(tmp_path / "none.json"),
                            "--out", str(tmp_path / "d"), "--count", "1"], capsys)
    assert code == 2
    assert err.startswith("ERR:")


def test_bad_config_schema(capsys, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"image_size": 48}))
    code, _, err = run_cli(["gen-data", "--config", str(cfg),
                            "--out", str(tmp_path / "d"), "--count", "1"], capsys)
    assert code == 2
    assert err.startswith("ERR:bad-config:")


def test_gen_data_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run_cli(["gen-data", "--out", str(tmp_path / name),
                              "--count", "3"], capsys)
        assert code == 0

    def tree_hash(root):
        digest = hashlib.sha256()
        for p in sorted(Path(root).rglob("*")):
            if p.is_file():
                digest.update(p.relative_to(root).as_posix().encode())
                digest.update(p.read_bytes())
        return digest.hexdigest()

    assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")


def test_edit_oracle_writes_png(corpus, tmp_path, capsys):
    out = tmp_path / "edit.png"
    trace = tmp_path / "trace.csv"
    code, msg, _ = run_cli([
        "edit", "--model", "oracle", "--task", "remove",
        "--input", str(corpus / "000001"), "--steps", "10", "--seed", "3",
        "--out", str(out), "--trace", str(trace)], capsys)
    assert code == 0
    from crimkit.scenes import load_png
    img = load_png(out)
    assert img.shape[0] == 3
    header = trace.read_text().splitlines()[0]
    assert header.startswith("t,mode")
    assert "model evaluations" in msg


def test_edit_move_via_files(tmp_path, capsys):
    import numpy as np

    from crimkit.scenes import save_png
    x = np.full((3, 16, 16), 0.4, dtype=np.float32)
    m = np.zeros((16, 16), bool)
    m[2:6, 2:6] = True
    save_png(tmp_path / "x.png", x)
    save_png(tmp_path / "m.png", m)
    g = tmp_path / "g.json"
    g.write_text(json.dumps({"mode": "sctg",
                             "spatial": {"w_r": 1.5, "w_i": -2.5, "t_s_frac": 0.5}}))
    code, _, err = run_cli([
        "edit", "--model", "oracle", "--task", "move",
        "--input", f"{tmp_path / 'x.png'},{tmp_path / 'm.png'}",
        "--offset", "3,5", "--guidance", str(g), "--steps", "8",
        "--out", str(tmp_path / "moved.png")], capsys)
    assert code == 0, err


def test_bench_seed_columns(corpus, tmp_path, capsys):
    out = tmp_path / "bench"
    code, _, err = run_cli([
        "bench", "--model", "oracle", "--data", str(corpus), "--task", "remove",
        "--seeds", "10", "--dilation", "10", "--steps", "4", "--scenes", "2",
        "--out", str(out)], capsys)
    assert code == 0, err
    header = (out / "report.csv").read_text().splitlines()[0].split(",")
    assert sum(1 for c in header if c.startswith("psnr_seed")) == 10


def test_bench_rerun_bit_exact(corpus, tmp_path, capsys):
    args = ["bench", "--model", "oracle", "--data", str(corpus), "--task", "remove",
            "--seeds", "2", "--steps", "4", "--scenes", "2"]
    code, _, _ = run_cli(args + ["--out", str(tmp_path / "r1")], capsys)
    assert code == 0
    code, _, _ = run_cli(args + ["--out", str(tmp_path / "r2")], capsys)
    assert code == 0
    a = (tmp_path / "r1" / "report.csv").read_bytes()
    b = (tmp_path / "r2" / "report.csv").read_bytes()
    assert a == b


def test_sweep_cli(corpus, tmp_path, capsys):
    code, _, err = run_cli([
        "sweep", "--model", "oracle", "--data", str(corpus), "--task", "insert",
        "--scales", "0,1.0", "--seeds", "1", "--steps", "4", "--scenes", "2",
        "--out", str(tmp_path / "sweep")], capsys)
    assert code == 0, err
    assert (tmp_path / "sweep" / "sweep.csv").exists()
    assert (tmp_path / "sweep" / "sweep_shadow_area_pct_mean.svg").exists()


def test_data_dir_env_fallback(corpus, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CRIMKIT_DATA_DIR", str(corpus))
    code, _, err = run_cli([
        "bench", "--model", "oracle", "--task", "remove", "--seeds", "1",
        "--steps", "4", "--scenes", "1", "--out", str(tmp_path / "env")], capsys)
    assert code == 0, err
    monkeypatch.delenv("CRIMKIT_DATA_DIR")
    code, _, err = run_cli([
        "bench", "--model", "oracle", "--task", "remove", "--seeds", "1",
        "--steps", "4", "--out", str(tmp_path / "noenv")], capsys)
    assert code == 2
    assert err.startswith("ERR:missing-file:")


def test_train_cli_smoke(corpus, tmp_path, capsys):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"steps": 2, "batch_size": 2,
                               "channels": [8, 12, 16], "log_every": 1}))
    code, _, err = run_cli(["train", "--config", str(cfg), "--data", str(corpus),
                            "--out", str(tmp_path / "ckpt")], capsys)
    assert code == 0, err
    assert (tmp_path / "ckpt" / "weights.crtf").exists()
    meta = json.loads((tmp_path / "ckpt" / "meta.json").read_text())
    assert meta["steps_done"] == 2
    # round trip through edit
    code, _, err = run_cli([
        "edit", "--ckpt", str(tmp_path / "ckpt"), "--task", "remove",
        "--input", str(corpus / "000002"), "--steps", "5",
        "--out", str(tmp_path / "trained.png")], capsys)
    assert code == 0, err


def test_oracle_check_exits_zero(tmp_path, capsys):
    code, out, _ = run_cli(["oracle-check", "--out", str(tmp_path / "oc")], capsys)
    assert code == 0
    assert "5/5 oracle checks passed" in out
    report = json.loads((tmp_path / "oc" / "oracle_check.json").read_text())
    assert report["passed"] is True


def test_console_script_subprocess(corpus, tmp_path):
    # one end-to-end subprocess run through the installed entry point
    proc = subprocess.run(
        [sys.executable, "-m", "crimkit.cli", "oracle-check"],
        capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert "oracle checks passed" in proc.stdout
