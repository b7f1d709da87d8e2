"""Command-line entry points for data generation, training, editing,
benchmarks, the oracle verification suite, and the HTTP service.

Failures print one machine-parsable line `ERR:<code>: message` on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _data_dir(args) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    env = os.environ.get("CRIMKIT_DATA_DIR")
    if env:
        return Path(env)
    raise CliError("missing-file", "no --data given and CRIMKIT_DATA_DIR unset")


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError("missing-file", f"{what} not found: {p}")
    return p


def _load_model(args, image_size: int | None = None):
    """Resolve --ckpt | --model oracle into (model, schedule, fingerprint).

    Oracle fields are synthetic, so their size follows the working images
    unless the oracle spec pins one.
    """
    from .bench import model_fingerprint
    from .diffusion import make_schedule
    from .oracle import default_oracle
    from .training import load_checkpoint

    ckpt = getattr(args, "ckpt", None)
    oracle = getattr(args, "model", None) == "oracle"
    if ckpt and oracle:
        raise CliError("conflicting-model", "--ckpt and --model oracle are exclusive")
    if not ckpt and not oracle:
        raise CliError("usage", "need --ckpt <dir> or --model oracle")
    if oracle:
        spec = {}
        if getattr(args, "oracle_spec", None):
            from .configs import load_json_config
            spec = load_json_config(_require_file(args.oracle_spec, "oracle spec"),
                                    "oracle")
        spec.setdefault("size", image_size or 32)
        model = default_oracle(**spec)
        schedule = make_schedule(1000, "cosine")
        return model, schedule, model_fingerprint(model), None
    ckpt = _require_file(ckpt, "checkpoint")
    model, meta, schedule = load_checkpoint(ckpt)
    return model, schedule, model_fingerprint(model, ckpt), meta


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args):
    from . import scenes as sc
    from .configs import load_json_config

    cfg = sc.GeneratorConfig()
    if args.config:
        cfg = sc.GeneratorConfig.from_dict(
            load_json_config(_require_file(args.config, "generator config"),
                             "generator"))
    ids = sc.generate_corpus(args.out, args.count, cfg, seed_start=args.seed_start)
    print(f"wrote {len(ids)} triplets to {args.out}")
    return 0


def cmd_train(args):
    from .configs import load_json_config
    from .training import TrainingConfig, train

    cfg = TrainingConfig()
    if args.config:
        cfg = TrainingConfig.from_dict(
            load_json_config(_require_file(args.config, "training config"), "train"))
    data = _data_dir(args)
    _require_file(data / "index.json", "triplet manifest")
    out = train(cfg, data, args.out,
                progress=lambda s, l, e: print(f"step {s}: loss {l:.4f} ema {e:.4f}"))
    print(f"checkpoint written to {out}")
    return 0


def _parse_offset(text: str) -> tuple:
    try:
        dy, dx = (int(v) for v in text.split(","))
        return dy, dx
    except ValueError:
        raise CliError("usage", f"bad --offset {text!r}, expected dy,dx") from None


def cmd_edit(args):
    from . import scenes as sc
    from .guidance import GuidanceConfig
    from .sampler import EditRequest, SamplerConfig, sample, write_trace
    from .service import encode_png_b64  # noqa: F401  (shared helpers)
    from .tensor_io import save_archive

    guidance = GuidanceConfig.from_json_dict({"mode": "none"})
    if args.guidance:
        from .configs import load_json_config
        guidance = GuidanceConfig.from_json_dict(
            load_json_config(_require_file(args.guidance, "guidance config"),
                             "guidance"))

    p_r = p_i = None
    inp = args.input
    if "," in inp:
        img_path, mask_path = inp.split(",", 1)
        x_i = sc.load_png(_require_file(img_path, "input image"))
        mask = sc.load_png(_require_file(mask_path, "input mask"))
    else:
        trip = sc.load_triplet(Path(inp).parent, Path(inp).name) \
            if (Path(inp) / "object.png").exists() else None
        if trip is None:
            raise CliError("missing-file", f"no triplet at {inp}")
        if args.task == "move":
            if not args.offset:
                raise CliError("usage", "move needs --offset dy,dx")
            x_i, mask, p_r, p_i = sc.build_movement_input(trip, _parse_offset(args.offset))
        elif args.task == "insert":
            m = trip.mask.astype(np.float32)[None]
            x_i = m * trip.with_object + (1 - m) * trip.background
            mask = trip.mask
        else:
            x_i, _, mask = sc.build_removal_sample(trip)
    if args.task == "move" and p_r is None:
        if not args.offset:
            raise CliError("usage", "move needs --offset dy,dx")
        p_r = mask
        p_i = sc.translate_mask(mask, _parse_offset(args.offset))
        mask = p_r | p_i

    model, schedule, _, _ = _load_model(args, image_size=x_i.shape[-1])
    req = EditRequest(x_i=x_i.astype(np.float32), m=mask, task=args.task,
                      p_r=p_r, p_i=p_i,
                      sampler=SamplerConfig(steps=args.steps, seed=args.seed,
                                            guidance=guidance))
    res = sample(model, req, schedule)
    sc.save_png(args.out, res.image)
    if args.raw_out:
        save_archive(args.raw_out, {"raw": res.raw})
    if args.trace:
        write_trace(args.trace, res.trace)
    print(f"wrote {args.out} ({res.evals} model evaluations over {res.steps} steps)")
    return 0


def cmd_sweep(args):
    from . import scenes as sc
    from .bench import sweep_guidance

    data = _data_dir(args)
    trips, manifest = sc.load_corpus(data)
    if args.scenes:
        trips = trips[:args.scenes]
    model, schedule, _, _ = _load_model(args, image_size=trips[0].mask.shape[0])
    scales = [float(s) for s in args.scales.split(",")]
    task = {"remove": "remove", "insert": "insert"}[args.task]
    sweep_guidance(model, schedule, trips, scales, task,
                   seeds=tuple(range(args.seeds)), steps=args.steps,
                   out_dir=args.out, manifest=manifest)
    print(f"sweep over {scales} written to {args.out}")
    return 0


def cmd_bench(args):
    from . import scenes as sc
    from .bench import run_benchmark, write_report
    from .guidance import GuidanceConfig

    data = _data_dir(args)
    trips, manifest = sc.load_corpus(data)
    if args.scenes:
        trips = trips[:args.scenes]
    model, schedule, _, _ = _load_model(args, image_size=trips[0].mask.shape[0])
    guidance = GuidanceConfig(mode="none")
    if args.guidance:
        from .configs import load_json_config
        guidance = GuidanceConfig.from_json_dict(
            load_json_config(_require_file(args.guidance, "guidance config"),
                             "guidance"))
    report = run_benchmark(model, schedule, trips, args.task, guidance,
                           seeds=tuple(range(args.seeds)), steps=args.steps,
                           dilation_base_px=args.dilation, manifest=manifest,
                           checkpoint_dir=getattr(args, "ckpt", None))
    write_report(report, args.out)
    print(f"report for {len(trips)} scenes x {args.seeds} seeds written to {args.out}")
    return 0


def cmd_oracle_check(args):
    from .oracle_check import run_oracle_checks

    passed, _, summary = run_oracle_checks(args.out)
    print(summary, end="")
    return 0 if passed else 1


def cmd_serve(args):
    from .service import EditorService

    def loader():
        model, schedule, fp, _ = _load_model(args)
        return model, schedule, fp

    svc = EditorService(loader, queue_depth=args.queue_depth, workers=args.workers,
                        log_level=args.log_level)
    svc.load_model(block=False)
    static = None
    if args.static:
        static = _require_file(args.static, "static dir")
    port = svc.start(args.port, static_dir=static, block=False)
    print(f"serving on http://127.0.0.1:{port}", flush=True)
    try:
        svc._httpd.serve_forever()
    except KeyboardInterrupt:
        svc.stop()
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="crimkit",
                description="counterfactual object removal / insertion / movement")
    p.add_argument("--log-level", default="info",
                   choices=["debug", "info", "warning", "error"])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a procedural triplet corpus")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed-start", type=int, default=0)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train the denoiser on a triplet corpus")
    t.add_argument("--config")
    t.add_argument("--data")
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("edit", help="run one edit")
    e.add_argument("--ckpt")
    e.add_argument("--model", choices=["oracle"])
    e.add_argument("--oracle-spec")
    e.add_argument("--task", required=True, choices=["remove", "insert", "move"])
    e.add_argument("--input", required=True,
                   help="triplet dir, or xI.png,mask.png")
    e.add_argument("--offset", help="dy,dx for move")
    e.add_argument("--guidance", help="guidance config JSON file")
    e.add_argument("--steps", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--raw-out", help="also write the raw float state as CRTF")
    e.add_argument("--trace", help="write the per-step sampling trace CSV here")
    e.set_defaults(fn=cmd_edit)

    s = sub.add_parser("sweep", help="benchmark across guidance scales")
    s.add_argument("--ckpt")
    s.add_argument("--model", choices=["oracle"])
    s.add_argument("--scales", required=True)
    s.add_argument("--task", required=True, choices=["remove", "insert"])
    s.add_argument("--data")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--scenes", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sweep)

    b = sub.add_parser("bench", help="run the evaluation protocol")
    b.add_argument("--ckpt")
    b.add_argument("--model", choices=["oracle"])
    b.add_argument("--data")
    b.add_argument("--task", default="remove", choices=["remove", "insert"])
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--dilation", type=int, default=10)
    b.add_argument("--steps", type=int, default=50)
    b.add_argument("--scenes", type=int)
    b.add_argument("--guidance")
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_bench)

    o = sub.add_parser("oracle-check", help="verify guidance math on the oracle")
    o.add_argument("--out")
    o.set_defaults(fn=cmd_oracle_check)

    v = sub.add_parser("serve", help="run the editor HTTP service")
    v.add_argument("--ckpt")
    v.add_argument("--model", choices=["oracle"])
    v.add_argument("--oracle-spec")
    v.add_argument("--port", type=int, default=8321)
    v.add_argument("--static", help="directory with the editor UI")
    v.add_argument("--queue-depth", type=int, default=8)
    v.add_argument("--workers", type=int, default=1)
    v.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except CliError as e:
        print(f"ERR:{e.code}: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        from .configs import ConfigError
        from .guidance import GuidanceError
        from .sampler import RequestError
        code = {ConfigError: "bad-config", GuidanceError: "bad-config",
                RequestError: "bad-request", FileNotFoundError: "missing-file"}.get(
            type(e), "runtime")
        print(f"ERR:{code}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
