"""Benchmark harness: seeded evaluation protocol, reports, sweeps, and the
movement ablation.

Protocol defaults follow the evaluation recipe: metrics averaged over 10
random seeds per image, with the model-facing mask dilated by 10 px at
full-resolution scale (proportionally scaled down for small images).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scenes as sc
from .diffusion import NoiseSchedule
from .guidance import GuidanceConfig
from .metrics import dilate_mask, psnr, scaled_dilation_radius, shadow_metrics, ssim
from .sampler import (EditRequest, SamplerConfig, move_single_pass,
                      move_two_phase, sample_batch)
from .svgplot import line_plot_svg

DEFAULT_SEEDS = tuple(range(10))

CSV_FLOAT = "{:.6f}"


@dataclass
class MetricReport:
    task: str
    per_image: list            # one dict per scene
    aggregates: dict
    seeds: tuple
    config: dict
    hashes: dict
    runtime_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        return {"task": self.task, "aggregates": self.aggregates,
                "seeds": list(self.seeds), "config": self.config,
                "hashes": self.hashes, "runtime_seconds": round(self.runtime_seconds, 3),
                "per_image": self.per_image,
                # reserved for external tools that merge learned-metric columns
                "external_metrics": {"lpips": None, "clip": None, "dino": None,
                                     "fid": None}}


@dataclass
class SweepResult:
    task: str
    scales: list
    reports: list = field(default_factory=list)

    def metric_series(self, key: str) -> list:
        return [r.aggregates[key] for r in self.reports]


def _hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _hash_file(path) -> str:
    return _hash_bytes(Path(path).read_bytes())


def model_fingerprint(model, checkpoint_dir=None) -> str:
    if checkpoint_dir is not None:
        return _hash_file(Path(checkpoint_dir) / "weights.crtf")
    if hasattr(model, "removal"):  # analytic oracle
        payload = (model.removal.mu.tobytes() + model.insertion.mu.tobytes()
                   + repr((model.removal.s, model.insertion.s)).encode())
        return "oracle-" + _hash_bytes(payload)[:32]
    payload = b"".join(p.data.tobytes() for _, p in sorted(model.params.items()))
    return "inline-" + _hash_bytes(payload)[:32]


def corpus_fingerprint(manifest: dict) -> str:
    return _hash_bytes(json.dumps(manifest, sort_keys=True).encode())[:32]


def _insertion_condition(trip: sc.CounterfactualTriplet, scene_idx: int,
                         degrade_seed: int) -> np.ndarray:
    """Paste the object onto the clean background with a color transform."""
    deg = sc.random_degrade_spec(degrade_seed + scene_idx)
    m = trip.mask.astype(np.float32)[None]
    return (m * sc.degrade(trip.with_object, deg)
            + (1.0 - m) * trip.background).astype(np.float32)


def run_benchmark(model, schedule: NoiseSchedule, trips: list, task: str,
                  guidance: GuidanceConfig, seeds=DEFAULT_SEEDS, steps: int = 50,
                  dilation_base_px: int = 10, algorithm: str = "ddim",
                  eta: float = 0.0, batch: int = 64, degrade_seed: int = 77_000,
                  manifest: dict | None = None, checkpoint_dir=None) -> MetricReport:
    """Evaluate removal or insertion over a corpus; deterministic per inputs."""
    if not trips:
        raise ValueError("run_benchmark: empty corpus")
    if task not in ("remove", "insert"):
        raise ValueError(f"run_benchmark handles remove/insert, got {task!r}")
    size = trips[0].mask.shape[0]
    if size != schedule_image_size(model, size):
        raise ValueError(f"corpus image size {size} does not match the model")
    t0 = time.time()
    radius = scaled_dilation_radius(size, base_px=dilation_base_px)

    # per-scene conditions, then one request per (scene, seed)
    conds = []
    for i, trip in enumerate(trips):
        if task == "remove":
            x_i, target = trip.with_object, trip.background
        else:
            x_i = _insertion_condition(trip, i, degrade_seed)
            target = trip.with_object
        conds.append((x_i, target, dilate_mask(trip.mask, radius)))

    jobs = []
    for i, (x_i, _, mask) in enumerate(conds):
        for s in seeds:
            jobs.append((i, s, EditRequest(
                x_i=x_i, m=mask, task=task,
                sampler=SamplerConfig(algorithm=algorithm, steps=steps, eta=eta,
                                      seed=int(s), guidance=guidance))))

    outputs = {}
    for k in range(0, len(jobs), batch):
        chunk = jobs[k:k + batch]
        results = sample_batch(model, [j[2] for j in chunk], schedule)
        for (i, s, _), res in zip(chunk, results):
            outputs[(i, s)] = res.image

    per_image = []
    for i, trip in enumerate(trips):
        x_i, target, dil = conds[i]
        row = {"scene": i,
               "baseline_psnr": psnr(x_i, target),
               "gt_shadow_area_pct": 100.0 * float(trip.shadow_gt.mean())}
        ps, ss_, sh_area, sh_iou, oom, inm, det = [], [], [], [], [], [], []
        for s in seeds:
            out = outputs[(i, s)]
            ps.append(psnr(out, target))
            ss_.append(ssim(out, target))
            sm = shadow_metrics(out, trip)
            sh_area.append(sm["area_ratio"])
            sh_iou.append(sm["iou"])
            det.append(float(sm["detected"]))
            oom.append(psnr(out, x_i, region=~dil))
            inm.append(psnr(out, x_i, region=dil))
            row[f"psnr_seed{s}"] = ps[-1]
        row.update(psnr_mean=float(np.mean(ps)), ssim_mean=float(np.mean(ss_)),
                   shadow_area_pct_mean=float(np.mean(sh_area)),
                   shadow_iou_mean=float(np.mean(sh_iou)),
                   shadow_detected_rate=float(np.mean(det)),
                   out_of_mask_psnr_mean=float(np.mean(oom)),
                   in_mask_psnr_mean=float(np.mean(inm)))
        per_image.append(row)

    agg_keys = ["baseline_psnr", "psnr_mean", "ssim_mean", "shadow_area_pct_mean",
                "shadow_iou_mean", "shadow_detected_rate", "out_of_mask_psnr_mean",
                "in_mask_psnr_mean", "gt_shadow_area_pct"]
    aggregates = {k: float(np.mean([r[k] for r in per_image])) for k in agg_keys}

    config = {"task": task, "guidance": guidance.to_json_dict(), "steps": steps,
              "algorithm": algorithm, "eta": eta, "dilation_base_px": dilation_base_px,
              "dilation_radius_px": radius, "degrade_seed": degrade_seed,
              "image_size": size, "scenes": len(trips)}
    hashes = {"model": model_fingerprint(model, checkpoint_dir),
              "corpus": corpus_fingerprint(manifest) if manifest else "inline",
              "config": _hash_bytes(json.dumps(config, sort_keys=True).encode())[:32]}
    return MetricReport(task=task, per_image=per_image, aggregates=aggregates,
                        seeds=tuple(int(s) for s in seeds), config=config,
                        hashes=hashes, runtime_seconds=time.time() - t0)


def schedule_image_size(model, fallback: int) -> int:
    cfg = getattr(model, "config", None)
    if cfg is not None and hasattr(cfg, "image_size"):
        return cfg.image_size
    return getattr(model, "image_size", fallback)


def report_csv(report: MetricReport) -> str:
    seed_cols = [f"psnr_seed{s}" for s in report.seeds]
    cols = (["scene", "baseline_psnr"] + seed_cols +
            ["psnr_mean", "ssim_mean", "shadow_area_pct_mean", "shadow_iou_mean",
             "shadow_detected_rate", "out_of_mask_psnr_mean", "in_mask_psnr_mean",
             "gt_shadow_area_pct"])
    rows = [",".join(cols)]
    for r in report.per_image:
        rows.append(",".join(
            str(r[c]) if c == "scene" else CSV_FLOAT.format(r[c]) for c in cols))
    mean_row = ["MEAN", CSV_FLOAT.format(report.aggregates["baseline_psnr"])]
    mean_row += [""] * len(seed_cols)
    for c in cols[2 + len(seed_cols):]:
        mean_row.append(CSV_FLOAT.format(report.aggregates[c]))
    rows.append(",".join(mean_row))
    return "\n".join(rows) + "\n"


def write_report(report: MetricReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(report))
    (out / "report.json").write_text(json.dumps(report.to_json_dict(), indent=1))
    return out


def sweep_guidance(model, schedule: NoiseSchedule, trips: list, scales: list,
                   task: str, seeds=DEFAULT_SEEDS, steps: int = 50,
                   out_dir=None, **bench_kw) -> SweepResult:
    """One benchmark per guidance scale; scales must strictly increase."""
    scales = [float(s) for s in scales]
    if len(scales) < 2:
        raise ValueError("sweep needs at least 2 scales")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError(f"scales must be strictly increasing, got {scales}")
    mode = "ctg-removal" if task == "remove" else "ctg-insertion"
    sweep = SweepResult(task=task, scales=scales)
    for w in scales:
        g = GuidanceConfig(mode=mode, w=w) if w > 0 else GuidanceConfig(mode="none")
        sweep.reports.append(run_benchmark(model, schedule, trips, task, g,
                                           seeds=seeds, steps=steps, **bench_kw))
    if out_dir is not None:
        write_sweep(sweep, out_dir)
    return sweep


SWEEP_METRICS = ("psnr_mean", "ssim_mean", "shadow_area_pct_mean",
                 "shadow_detected_rate")


def write_sweep(sweep: SweepResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["scale"] + list(SWEEP_METRICS)
    rows = [",".join(cols)]
    for w, rep in zip(sweep.scales, sweep.reports):
        rows.append(",".join([CSV_FLOAT.format(w)] +
                             [CSV_FLOAT.format(rep.aggregates[m]) for m in SWEEP_METRICS]))
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    for m in SWEEP_METRICS:
        svg = line_plot_svg(sweep.scales, sweep.metric_series(m),
                            title=f"{sweep.task}: {m} vs guidance scale",
                            xlabel="guidance scale", ylabel=m)
        (out / f"sweep_{m}.svg").write_text(svg)
    return out


@dataclass
class MovementComparison:
    per_case: list
    psnr_single_mean: float
    psnr_two_phase_mean: float
    evals_single: int
    evals_two_phase: int
    eval_ratio: float
    config: dict


def movement_compare(model, schedule: NoiseSchedule, cases: list,
                     n_r: int = 50, n_i: int = 50, w_r: float = 1.5,
                     w_i: float = -2.5, t_s_frac: float = 0.6,
                     w_scalar: float = 1.5, seed: int = 0,
                     dilation_base_px: int = 10) -> MovementComparison:
    """Single-pass S-CTG vs the two-phase baseline on movement cases.

    Each case is (triplet, offset); the ground truth is the re-rendered
    scene with the object at the destination.
    """
    per_case = []
    ev_single = ev_two = 0
    for k, (trip, offset) in enumerate(cases):
        x_i, m, p_r, p_i = sc.build_movement_input(trip, offset)
        gt = sc.generate_triplet(sc.move_scene_spec(trip.spec, offset)).with_object
        radius = scaled_dilation_radius(trip.mask.shape[0], base_px=dilation_base_px)
        p_r_d = dilate_mask(p_r, radius)
        p_i_d = dilate_mask(p_i, radius)
        req = EditRequest(
            x_i=x_i, m=p_r_d | p_i_d, task="move", p_r=p_r_d, p_i=p_i_d,
            sampler=SamplerConfig(steps=max(n_r, n_i), seed=seed + k,
                                  guidance=GuidanceConfig(mode="sctg", w_r=w_r,
                                                          w_i=w_i, t_s_frac=t_s_frac)))
        single = move_single_pass(model, req, schedule)
        two = move_two_phase(model, req, schedule, n_r=n_r, n_i=n_i, w=w_scalar)
        ev_single += single.evals
        ev_two += two.evals
        per_case.append({"case": k,
                         "psnr_single": psnr(single.image, gt),
                         "psnr_two_phase": psnr(two.image, gt),
                         "evals_single": single.evals,
                         "evals_two_phase": two.evals})
    return MovementComparison(
        per_case=per_case,
        psnr_single_mean=float(np.mean([c["psnr_single"] for c in per_case])),
        psnr_two_phase_mean=float(np.mean([c["psnr_two_phase"] for c in per_case])),
        evals_single=ev_single, evals_two_phase=ev_two,
        eval_ratio=ev_single / max(ev_two, 1),
        config={"n_r": n_r, "n_i": n_i, "w_r": w_r, "w_i": w_i,
                "t_s_frac": t_s_frac, "w_scalar": w_scalar, "cases": len(cases)})
