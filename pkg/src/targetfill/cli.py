"""Command-line surface: run, grid, mask-tool, denoiser-check, schedule-dump.

Exit codes are part of the contract: 0 success, 2 input validation,
3 backend (denoiser) failure, 4 every grid cell failed, 5 wire-protocol
violation in denoiser-check. TARGETFILL_LOG=debug|info|warning|error
controls log verbosity on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import imgio, masks
from .core import SeededRng, make_linear_schedule
from .denoise import Capability, DenoiserError, external_handshake
from .gridsearch import execute_run, run_grid
from .pipeline import MASK_MODES, RING_SOURCES, SamplerConfig
from .schedules import jump_plan

log = logging.getLogger("targetfill.cli")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_ALL_CELLS_FAILED = 4
EXIT_PROTOCOL = 5


def _setup_logging() -> None:
    level = os.environ.get("TARGETFILL_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(name)s %(levelname)s: %(message)s",
    )


def _add_hyperparam_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timesteps", type=int, default=200, help="T, diffusion steps")
    p.add_argument("--jump-len", type=int, default=40, help="j, steps between resample anchors")
    p.add_argument("--resample", type=int, default=40, help="r, passes per anchor window")
    p.add_argument("--lambda", dest="lambda0", type=float, default=None,
                   help="constant blend weight; implies --lambda-schedule const")
    p.add_argument("--lambda-schedule", choices=("const", "linear-p"), default=None)
    p.add_argument("--p", type=float, default=0.5, help="knee of the piecewise schedule")
    p.add_argument("--mask-mode", choices=MASK_MODES, default="binary")
    p.add_argument("--b", type=int, default=4, help="heat buffer size (heated mode)")
    p.add_argument("--ring-width", type=int, default=4, help="w, scene-buffer border width")
    p.add_argument("--c", type=float, default=0.993, help="hole blend constant (scene-buffer)")
    p.add_argument("--ring-source", choices=RING_SOURCES, default="ddpm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--denoiser", default="gaussian=0:1",
                   help="oracle=PATH | gaussian=MU:SIGMA2 | external=CMD")


def _config_from_args(args) -> SamplerConfig:
    schedule = args.lambda_schedule
    if schedule is None:
        schedule = "const" if args.lambda0 is not None else "linear-p"
    return SamplerConfig(
        timesteps=args.timesteps,
        jump_len=args.jump_len,
        resample=args.resample,
        lambda_schedule=schedule,
        lambda0=1.0 if args.lambda0 is None else args.lambda0,
        p=args.p,
        mask_mode=args.mask_mode,
        heat_buffer=args.b,
        ring_width=args.ring_width,
        ring_blend=args.c,
        ring_source=args.ring_source,
        seed=args.seed,
        candidates=getattr(args, "candidates", 1),
    ).validate()


def cmd_run(args) -> int:
    try:
        cfg = _config_from_args(args)
        summary = execute_run(args.scene, args.target, args.mask, args.out,
                              cfg, args.denoiser)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DenoiserError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    summary.update(
        {
            "status": "ok",
            "timesteps": cfg.timesteps,
            "jump_len": cfg.jump_len,
            "resample": cfg.resample,
            "lambda_schedule": cfg.lambda_schedule,
            "mask_mode": cfg.mask_mode,
        }
    )
    print(json.dumps(summary))
    return EXIT_OK


def cmd_grid(args) -> int:
    try:
        grid_doc = json.loads(open(args.grid, "r", encoding="utf-8").read())
        base = _config_from_args(args)
        manifest = run_grid(
            grid_doc, args.scene, args.target, args.mask, args.out_dir,
            args.denoiser, master_seed=args.seed, jobs=args.jobs,
            columns=args.columns, base_cfg=base,
        )
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    ok = sum(1 for r in manifest["cells"] if r["status"] == "ok")
    print(json.dumps({"cells": len(manifest["cells"]), "ok": ok,
                      "out_dir": args.out_dir}))
    return EXIT_OK if ok else EXIT_ALL_CELLS_FAILED


def cmd_mask_tool(args) -> int:
    try:
        mask = imgio.load_mask_png(args.mask)
        if args.tool == "heat":
            heat = masks.heated_mask(mask, args.b)
            u8 = np.floor(heat * 255.0 + 0.5).astype(np.uint8)
            imgio.save_gray_png(u8, args.out)
        elif args.tool == "dilate":
            dilated = masks.dilate_hole(mask, args.w)
            imgio.save_gray_png(dilated * 255, args.out)
        else:
            ring_ind = masks.ring(mask, args.w)
            # Mask polarity: ring band is the region of interest, so it is
            # written black on a white field; w=0 gives an all-white PNG.
            imgio.save_gray_png((1 - ring_ind) * 255, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def cmd_denoiser_check(args) -> int:
    sched = make_linear_schedule(args.timesteps)
    capability = Capability(args.channels, args.height, args.width)
    rng = SeededRng(args.seed)
    report = {"worker": args.worker, "timesteps": args.timesteps,
              "shape": list(capability.shape), "probes": []}
    try:
        session = external_handshake(args.worker, sched, capability,
                                     timeout=args.timeout)
    except DenoiserError as exc:
        report["status"] = f"handshake failed: {exc}"
        print(json.dumps(report))
        return EXIT_PROTOCOL
    try:
        probe_ts = 1 + (np.arange(3) * max(1, args.timesteps // 3)) % args.timesteps
        for i, t in enumerate(probe_ts):
            x = rng.normal("probe", int(t), capability.shape)
            eps = session.predict_epsilon(x, int(t))
            report["probes"].append(
                {"t": int(t), "finite": bool(np.all(np.isfinite(eps))),
                 "shape_ok": eps.shape == capability.shape}
            )
    except DenoiserError as exc:
        report["status"] = f"probe failed: {exc}"
        print(json.dumps(report))
        return EXIT_PROTOCOL
    finally:
        session.close()
    report["status"] = "ok"
    print(json.dumps(report))
    return EXIT_OK


def cmd_schedule_dump(args) -> int:
    try:
        plan = jump_plan(args.timesteps, args.jump_len, args.resample)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(plan.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="targetfill",
        description="Insert a target object into a masked scene region with "
                    "diffusion inpainting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="inpaint one scene/target/mask triple")
    p_run.add_argument("--scene", required=True)
    p_run.add_argument("--target", required=True)
    p_run.add_argument("--mask", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--candidates", type=int, default=1,
                       help="emit N candidates as out.0.png .. out.N-1.png")
    _add_hyperparam_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_grid = sub.add_parser("grid", help="run a JSON grid spec")
    p_grid.add_argument("--grid", required=True, help="grid spec JSON file")
    p_grid.add_argument("--scene", required=True)
    p_grid.add_argument("--target", required=True)
    p_grid.add_argument("--mask", required=True)
    p_grid.add_argument("--out-dir", required=True)
    p_grid.add_argument("--jobs", type=int, default=1)
    p_grid.add_argument("--columns", type=int, default=None,
                        help="montage columns (default: ceil(sqrt(cells)))")
    _add_hyperparam_flags(p_grid)
    p_grid.set_defaults(func=cmd_grid)

    p_mask = sub.add_parser("mask-tool", help="heat/dilate/ring transforms")
    mask_sub = p_mask.add_subparsers(dest="tool", required=True)
    for tool in ("heat", "dilate", "ring"):
        p_tool = mask_sub.add_parser(tool)
        p_tool.add_argument("--mask", required=True)
        p_tool.add_argument("--out", required=True)
        if tool == "heat":
            p_tool.add_argument("--b", type=int, required=True)
        else:
            p_tool.add_argument("--w", type=int, required=True)
        p_tool.set_defaults(func=cmd_mask_tool)

    p_check = sub.add_parser("denoiser-check", help="probe an external worker")
    p_check.add_argument("--worker", required=True)
    p_check.add_argument("--timesteps", type=int, default=10)
    p_check.add_argument("--channels", type=int, default=3)
    p_check.add_argument("--height", type=int, default=8)
    p_check.add_argument("--width", type=int, default=8)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--timeout", type=float, default=30.0)
    p_check.set_defaults(func=cmd_denoiser_check)

    p_dump = sub.add_parser("schedule-dump", help="print a timestep plan as JSON")
    p_dump.add_argument("--timesteps", type=int, required=True)
    p_dump.add_argument("--jump-len", type=int, default=1)
    p_dump.add_argument("--resample", type=int, default=1)
    p_dump.set_defaults(func=cmd_schedule_dump)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
