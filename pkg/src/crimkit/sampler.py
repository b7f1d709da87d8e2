"""Reverse-process loops (DDIM / DDPM) with guidance between model calls,
plus the single-pass and two-phase movement pipelines.

Sampling always starts from pure noise and generates the full image; the
unmasked region is never composited back from the conditional image, because
object effects are expected to change outside the mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import NoiseSchedule
from .guidance import GuidanceConfig, GuidanceError, SpatialGuidance, _combine, build_weight_matrix

ALGORITHMS = ("ddim", "ddpm")
TASK_TO_CONDITION = {"remove": "removal", "insert": "insertion"}


class RequestError(ValueError):
    pass


class SamplingCancelled(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    algorithm: str = "ddim"
    steps: int = 50
    eta: float = 0.0
    seed: int = 0
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise RequestError(f"unknown sampler algorithm {self.algorithm!r}")
        if self.steps < 1:
            raise RequestError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.eta <= 1.0:
            raise RequestError(f"eta must be in [0,1], got {self.eta}")
        self.guidance.validate()

    @property
    def effective_eta(self) -> float:
        return 1.0 if self.algorithm == "ddpm" else self.eta


@dataclass
class EditRequest:
    x_i: np.ndarray          # conditional image, (3,H,W) float32 in [0,1]
    m: np.ndarray            # (H,W) bool
    task: str                # remove | insert | move
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    p_r: np.ndarray = None   # movement only
    p_i: np.ndarray = None

    def validate(self):
        if self.x_i.ndim != 3 or self.x_i.shape[0] != 3:
            raise RequestError(f"conditional image must be (3,H,W), got {self.x_i.shape}")
        if self.m.shape != self.x_i.shape[1:]:
            raise RequestError(f"mask {self.m.shape} vs image {self.x_i.shape}")
        self.sampler.validate()
        mode = self.sampler.guidance.mode
        if self.task == "move":
            if self.p_r is None or self.p_i is None:
                raise RequestError("movement request needs both pixel sets P_r and P_i")
            if not np.array_equal(self.m, self.p_r | self.p_i):
                raise RequestError("movement mask must equal P_r | P_i exactly")
            if mode != "sctg":
                raise RequestError(f"movement requires sctg guidance, got mode {mode!r}")
        elif self.task == "remove":
            if mode not in ("none", "ctg-removal"):
                raise RequestError(f"removal cannot use guidance mode {mode!r}")
        elif self.task == "insert":
            if mode not in ("none", "ctg-insertion"):
                raise RequestError(f"insertion cannot use guidance mode {mode!r}")
        else:
            raise RequestError(f"unknown task {self.task!r}")


@dataclass
class SampleResult:
    raw: np.ndarray     # final diffusion state, unclamped
    image: np.ndarray   # [0,1] image view of the state
    evals: int          # model evaluations attributed to this request
    steps: int
    seed: int
    trace: list


def timestep_sequence(T: int, steps: int) -> np.ndarray:
    """Strictly decreasing timesteps from T down to 0."""
    if steps < 1:
        raise RequestError(f"steps must be >= 1, got {steps}")
    if steps > T:
        raise RequestError(f"steps {steps} exceeds schedule length {T}")
    return np.unique(np.round(np.linspace(0, T, steps + 1)).astype(np.int64))[::-1]


def _make_eval(model, schedule: NoiseSchedule, x_cond_state, m_in):
    if hasattr(model, "predict_with_schedule"):
        def ev(x, t, task):
            return model.predict_with_schedule(x, int(t), task, schedule)
    else:
        def ev(x, t, task):
            return model.predict(x, int(t), x_cond_state, m_in, task)
    return ev


def _to_state(model, img: np.ndarray) -> np.ndarray:
    if getattr(model, "data_space", "raw") == "image-scaled":
        return (2.0 * img - 1.0).astype(np.float32)
    return img.astype(np.float32)


def _to_image(model, state: np.ndarray) -> np.ndarray:
    if getattr(model, "data_space", "raw") == "image-scaled":
        return np.clip((state + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)
    return np.clip(state, 0.0, 1.0).astype(np.float32)


def sample_batch(model, requests: list, schedule: NoiseSchedule,
                 cancel=None) -> list:
    """Run one reverse process over a batch of compatible requests.

    Requests must share task, sampler settings, and image size; seeds (and
    movement regions) may differ per request. Per-request noise comes from
    per-request generators, so results do not depend on batch composition
    beyond floating-point reduction order.
    """
    if not requests:
        return []
    for r in requests:
        r.validate()
    cfg = requests[0].sampler
    g = cfg.guidance
    for r in requests[1:]:
        if (r.sampler.algorithm, r.sampler.steps, r.sampler.eta, r.task) != \
                (cfg.algorithm, cfg.steps, cfg.eta, requests[0].task):
            raise RequestError("batched requests must share sampler settings and task")

    task = requests[0].task
    seq = timestep_sequence(schedule.T, cfg.steps)
    nsteps = len(seq) - 1
    h, w = requests[0].m.shape
    b = len(requests)

    x_cond = np.stack([_to_state(model, r.x_i) for r in requests])
    m_in = np.stack([r.m for r in requests]).astype(np.float32)[:, None]
    ev = _make_eval(model, schedule, x_cond, m_in)

    rngs = [np.random.default_rng(np.random.SeedSequence([0x5A311E, r.sampler.seed]))
            for r in requests]
    x = np.stack([rng.standard_normal((3, h, w)).astype(np.float32) for rng in rngs])

    # sctg: the switching step is a schedule timestep located a fraction of
    # the way through the step sequence.
    spatials = None
    if g.mode == "sctg":
        t_s = int(seq[int(round(g.t_s_frac * nsteps))])
        spatials = [SpatialGuidance(w_r=g.w_r, w_i=g.w_i, t_s=t_s,
                                    p_r=r.p_r if r.p_r is not None else np.zeros((h, w), bool),
                                    p_i=r.p_i if r.p_i is not None else np.zeros((h, w), bool),
                                    tie=g.tie, overlap=g.overlap)
                    for r in requests]
        for s in spatials:
            s.validate()

    eta = cfg.effective_eta
    evals_per_req = 0
    trace = []
    alpha = schedule.alpha
    sigma = schedule.sigma

    for k in range(nsteps):
        if cancel is not None and cancel.is_set():
            raise SamplingCancelled(f"cancelled at step {k}/{nsteps}")
        t = int(seq[k])
        s_next = int(seq[k + 1])

        row = {"t": t}
        if g.mode == "none" or (g.mode in ("ctg-removal", "ctg-insertion")
                                and not g.active_at(t)):
            eps = ev(x, t, TASK_TO_CONDITION[task])
            evals_per_req += 1
            row["mode"] = "conditional"
        elif g.mode == "ctg-removal":
            e_r = ev(x, t, "removal")
            e_i = ev(x, t, "insertion")
            evals_per_req += 2
            eps = _combine(e_r, e_i, np.float32(g.w))
            row["mode"] = "ctg-removal"
            row["mean_abs_diff"] = float(np.mean(np.abs(e_r - e_i)))
        elif g.mode == "ctg-insertion":
            e_i = ev(x, t, "insertion")
            e_r = ev(x, t, "removal")
            evals_per_req += 2
            eps = _combine(e_i, e_r, np.float32(g.w))
            row["mode"] = "ctg-insertion"
            row["mean_abs_diff"] = float(np.mean(np.abs(e_r - e_i)))
        else:  # sctg
            e_r = ev(x, t, "removal")
            e_i = ev(x, t, "insertion")
            evals_per_req += 2
            Wb = np.stack([build_weight_matrix(s, t, (h, w)) for s in spatials])[:, None]
            eps = _combine(e_r, e_i, Wb)
            row["mode"] = "sctg"
            row["gray"] = "removal" if t > spatials[0].t_s else (
                "insertion" if t < spatials[0].t_s else spatials[0].tie)
            row["w_trace"] = float(np.trace(Wb[0, 0]))
            row["mean_abs_diff"] = float(np.mean(np.abs(e_r - e_i)))
        trace.append(row)

        a_t, s_t = np.float32(alpha[t]), np.float32(sigma[t])
        a_s, s_s = np.float32(alpha[s_next]), np.float32(sigma[s_next])
        x0 = (x - s_t * eps) / a_t
        if eta > 0:
            inner = max(1.0 - float(a_t * a_t) / float(a_s * a_s), 0.0)
            eta_t = np.float32(eta * (float(s_s) / max(float(s_t), 1e-12)) * np.sqrt(inner))
            dir_c = np.float32(np.sqrt(max(float(s_s) ** 2 - float(eta_t) ** 2, 0.0)))
            z = np.stack([rng.standard_normal((3, h, w)).astype(np.float32) for rng in rngs])
            x = a_s * x0 + dir_c * eps + eta_t * z
        else:
            x = a_s * x0 + s_s * eps

    return [SampleResult(raw=x[i].copy(), image=_to_image(model, x[i]),
                         evals=evals_per_req, steps=nsteps,
                         seed=requests[i].sampler.seed, trace=trace)
            for i in range(b)]


def sample(model, request: EditRequest, schedule: NoiseSchedule,
           cancel=None) -> SampleResult:
    return sample_batch(model, [request], schedule, cancel=cancel)[0]


def write_trace(path, trace: list) -> None:
    cols = ["t", "mode", "gray", "w_trace", "mean_abs_diff"]
    rows = [",".join(cols)]
    for r in trace:
        rows.append(",".join(str(r.get(c, "")) for c in cols))
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")


def move_single_pass(model, request: EditRequest, schedule: NoiseSchedule,
                     n_r: int = None, n_i: int = None, cancel=None) -> SampleResult:
    """Movement in one reverse pass of max(N_r, N_i) steps under sctg."""
    if request.task != "move":
        raise RequestError(f"move_single_pass needs a move request, got {request.task!r}")
    if n_r is not None or n_i is not None:
        request.sampler.steps = max(int(n_r or 0), int(n_i or 0))
    return sample(model, request, schedule, cancel=cancel)


@dataclass
class TwoPhaseResult:
    image: np.ndarray
    raw: np.ndarray
    evals: int
    intermediate: np.ndarray
    removal: SampleResult
    insertion: SampleResult


def move_two_phase(model, request: EditRequest, schedule: NoiseSchedule,
                   n_r: int = 50, n_i: int = 50, w: float = 1.5,
                   cancel=None) -> TwoPhaseResult:
    """Movement as removal then insertion, costing N_r + N_i steps.

    Phase 1 removes the object (and effects) over P_r; phase 2 re-pastes the
    object pixels onto the intermediate at P_i and harmonizes. Phase 2 noise
    is freshly seeded (seed+1) to avoid trajectory coupling.
    """
    if request.task != "move":
        raise RequestError(f"move_two_phase needs a move request, got {request.task!r}")
    if request.p_r is None or request.p_i is None:
        raise RequestError("movement request needs both pixel sets P_r and P_i")

    phase1 = EditRequest(
        x_i=request.x_i, m=request.p_r, task="remove",
        sampler=SamplerConfig(algorithm=request.sampler.algorithm, steps=n_r,
                              eta=request.sampler.eta, seed=request.sampler.seed,
                              guidance=GuidanceConfig(mode="ctg-removal", w=w)))
    r1 = sample(model, phase1, schedule, cancel=cancel)

    x_mid = r1.image.copy()
    x_mid[:, request.p_i] = request.x_i[:, request.p_i]
    phase2 = EditRequest(
        x_i=x_mid, m=request.p_i, task="insert",
        sampler=SamplerConfig(algorithm=request.sampler.algorithm, steps=n_i,
                              eta=request.sampler.eta, seed=request.sampler.seed + 1,
                              guidance=GuidanceConfig(mode="ctg-insertion", w=w)))
    r2 = sample(model, phase2, schedule, cancel=cancel)

    return TwoPhaseResult(image=r2.image, raw=r2.raw, evals=r1.evals + r2.evals,
                          intermediate=r1.image, removal=r1, insertion=r2)
