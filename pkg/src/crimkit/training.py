"""Denoising training loop: 2:1 removal/insertion mixing, Adam, checkpoints.

Images live in [0,1] on disk and in [-1,1] inside the diffusion state; the
conversion happens here and in the sampler, never in the operators.
"""

from __future__ import annotations

import json
import subprocess
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import scenes as sc
from . import tensor as tt
from . import tensor_io as tio
from .diffusion import (DenoiserModel, ModelConfig, NoiseSchedule, add_noise,
                        init_model, make_schedule)
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    image_size: int = 32
    channels: tuple = (16, 32, 64)
    d_c: int = 16
    d_t: int = 32
    cond_hidden: int = 64
    schedule_kind: str = "cosine"
    T: int = 1000
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    batch_size: int = 16
    steps: int = 6000
    seed: int = 0
    snapshot_every: int = 1000
    log_every: int = 25
    train_embeddings: bool = False  # kept frozen by default

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    def model_config(self) -> ModelConfig:
        return ModelConfig(channels=tuple(self.channels), d_c=self.d_c, d_t=self.d_t,
                           cond_hidden=self.cond_hidden, image_size=self.image_size)


@dataclass
class TrainingSample:
    x_i: np.ndarray   # conditional image, (3,H,W) in [0,1]
    i_gt: np.ndarray  # target image
    m: np.ndarray     # (H,W) bool
    task: str


def build_epoch(n_triplets: int, epoch: int, seed: int) -> list:
    """Sample order for one epoch: every triplet twice as removal and once
    as insertion, shuffled. The 2:1 task ratio is exact."""
    order = [(i, "removal") for i in range(n_triplets)] * 2
    order += [(i, "insertion") for i in range(n_triplets)]
    rng = np.random.default_rng(np.random.SeedSequence([0xE60C, seed, epoch]))
    rng.shuffle(order)
    return order


def make_training_sample(trip: sc.CounterfactualTriplet, task: str,
                         aug_seed: int, cfg: sc.GeneratorConfig | None = None) -> TrainingSample:
    if task == "removal":
        x_i, i_gt, m = sc.build_removal_sample(trip)
    else:
        gcfg = cfg or sc.GeneratorConfig(image_size=trip.mask.shape[0])
        deg = sc.random_degrade_spec(aug_seed, gcfg)
        light = sc.random_light_adjust(aug_seed, trip.mask.shape[0], gcfg)
        x_i, i_gt, m = sc.build_insertion_sample(trip, deg, light)
    return TrainingSample(x_i=x_i, i_gt=i_gt, m=m, task=task)


def training_loss(model: DenoiserModel, batch: list, schedule: NoiseSchedule,
                  rng: np.random.Generator) -> Tensor:
    """Mean squared noise-prediction error over a batch.

    Timesteps are uniform over [0, T] and the noise is standard normal; the
    mean is per element, so a zero predictor scores about 1.0.
    """
    if not batch:
        raise ValueError("training_loss: empty batch")
    x_gt = np.stack([2.0 * s.i_gt - 1.0 for s in batch]).astype(np.float32)
    x_cond = np.stack([2.0 * s.x_i - 1.0 for s in batch]).astype(np.float32)
    m = np.stack([s.m for s in batch]).astype(np.float32)[:, None]
    n = len(batch)
    t = rng.integers(0, schedule.T + 1, size=n)
    eps = rng.standard_normal(x_gt.shape).astype(np.float32)
    x_tilde = add_noise(x_gt, t, eps, schedule)
    cvec = np.stack([model.task_vector(s.task) for s in batch])
    eps_hat = model.eps(Tensor(x_tilde), t, Tensor(x_cond), Tensor(m), cvec)
    diff = tt.sub(eps_hat, Tensor(eps))
    return tt.tmean(tt.mul(diff, diff))


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def save_checkpoint(out_dir, model: DenoiserModel, train_cfg: TrainingConfig,
                    extra_meta: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensors = {name: p.data for name, p in model.params.items()}
    tensors["task.c_r"] = model.c_r
    tensors["task.c_i"] = model.c_i
    tio.save_archive(out / "weights.crtf", tensors)
    meta = {
        "schedule_kind": train_cfg.schedule_kind,
        "T": train_cfg.T,
        "d_c": train_cfg.d_c,
        "image_size": train_cfg.image_size,
        "model": model.config.to_dict(),
        "training": train_cfg.to_dict(),
        "git": _git_describe(),
    }
    meta.update(extra_meta or {})
    (out / "meta.json").write_text(json.dumps(meta, indent=1))
    return out


def load_checkpoint(path) -> tuple:
    """Returns (model, meta, schedule)."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    tensors = tio.load_archive(path / "weights.crtf")
    c_r = tensors.pop("task.c_r")
    c_i = tensors.pop("task.c_i")
    params = {k: Tensor(v, requires_grad=True) for k, v in tensors.items()}
    cfg = ModelConfig.from_dict(meta["model"])
    model = DenoiserModel(params=params, config=cfg, c_r=c_r, c_i=c_i)
    schedule = make_schedule(meta["T"], meta["schedule_kind"])
    return model, meta, schedule


def train(config: TrainingConfig, data_dir, out_dir, progress=None) -> Path:
    """Train from a triplet directory; returns the checkpoint path.

    Deterministic in the master seed: initialization, epoch order, noise
    draws, and augmentation parameters all derive from it.
    """
    trips, manifest = sc.load_corpus(data_dir)
    if not trips:
        raise TrainingError(f"empty triplet corpus at {data_dir}")
    gen_cfg = sc.GeneratorConfig.from_dict(manifest["config"])
    if gen_cfg.image_size != config.image_size:
        raise TrainingError(f"corpus size {gen_cfg.image_size} != configured "
                            f"{config.image_size}")

    schedule = make_schedule(config.T, config.schedule_kind)
    model = init_model(config.seed, config.model_config())
    if config.train_embeddings:
        model.params["task.c_r_train"] = Tensor(model.c_r.copy(), requires_grad=True)
        model.params["task.c_i_train"] = Tensor(model.c_i.copy(), requires_grad=True)
    state = AdamState.init(model.params, lr=config.lr, beta1=config.beta1,
                           beta2=config.beta2, eps=config.eps_opt)
    noise_rng = np.random.default_rng(np.random.SeedSequence([0x7A41, config.seed]))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_rows = ["step,loss,ema"]
    ema = None
    step = 0
    epoch = 0
    t0 = time.time()
    prev_validate = tt.set_validation(False)
    try:
        save_checkpoint(out, model, config, {"steps_done": 0, "train_seconds": 0.0})
        while step < config.steps:
            order = build_epoch(len(trips), epoch, config.seed)
            for pos in range(0, len(order) - config.batch_size + 1, config.batch_size):
                if step >= config.steps:
                    break
                batch = []
                for j, (idx, task) in enumerate(order[pos:pos + config.batch_size]):
                    aug_seed = (config.seed * 1_000_003 + epoch * 8191 + (pos + j)) & 0x7FFFFFFF
                    batch.append(make_training_sample(trips[idx], task, aug_seed, gen_cfg))
                with Tape() as tape:
                    loss = training_loss(model, batch, schedule, noise_rng)
                loss_val = float(loss.data[0])
                if not np.isfinite(loss_val):
                    raise TrainingError(
                        f"non-finite loss at step {step}; last snapshot retained in {out}")
                grads = tape.backward(loss)
                named = {name: grads[p] for name, p in model.params.items() if p in grads}
                adam_step(model.params, named, state)
                step += 1
                ema = loss_val if ema is None else 0.98 * ema + 0.02 * loss_val
                if step % config.log_every == 0 or step == 1:
                    log_rows.append(f"{step},{loss_val:.6f},{ema:.6f}")
                if progress is not None and step % config.log_every == 0:
                    progress(step, loss_val, ema)
                if step % config.snapshot_every == 0:
                    save_checkpoint(out, model, config, {
                        "steps_done": step, "train_seconds": time.time() - t0,
                        "loss_ema": ema})
            epoch += 1
    finally:
        tt.set_validation(prev_validate)
        (out / "loss.csv").write_text("\n".join(log_rows) + "\n")

    save_checkpoint(out, model, config, {
        "steps_done": step, "train_seconds": time.time() - t0, "loss_ema": ema,
        "corpus_count": len(trips)})
    return out
