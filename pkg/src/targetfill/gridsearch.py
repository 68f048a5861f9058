"""Hyperparameter grid harness: cross-product enumeration, manifest, montage.

A grid spec is a JSON object mapping knob names to non-empty value lists;
cells are enumerated in document order, row-major (the last listed knob
varies fastest). Knobs: lambda0 (constant schedule) or p (piecewise),
timesteps, jump_len, resample, jump (sets jump_len and resample
together, the way the original sweep tied them), mask_mode, b, w, c.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import imgio
from .core import make_linear_schedule
from .denoise import (
    AnalyticGaussianDenoiser,
    Capability,
    DenoiserError,
    ExternalDenoiser,
    OracleDenoiser,
    external_handshake,
)
from .pipeline import SamplerConfig, run_candidates
from .schedules import denoiser_call_count

log = logging.getLogger("targetfill.grid")

GRID_KEYS = ("lambda0", "p", "timesteps", "jump_len", "resample", "jump",
             "mask_mode", "b", "w", "c")

_FIELD_FOR_KEY = {
    "timesteps": "timesteps",
    "jump_len": "jump_len",
    "resample": "resample",
    "mask_mode": "mask_mode",
    "b": "heat_buffer",
    "w": "ring_width",
    "c": "ring_blend",
}


def parse_grid_spec(doc: dict) -> tuple[list[str], list[dict]]:
    """Validate a grid-spec object and enumerate its cells.

    Returns the knob names in document order and one params dict per cell.
    """
    if not isinstance(doc, dict) or not doc:
        raise ValueError("grid spec must be a non-empty JSON object")
    unknown = [k for k in doc if k not in GRID_KEYS]
    if unknown:
        raise ValueError(f"unknown grid keys {unknown}; allowed: {list(GRID_KEYS)}")
    if "lambda0" in doc and "p" in doc:
        raise ValueError("grid spec may sweep lambda0 or p, not both")
    if "jump" in doc and ("jump_len" in doc or "resample" in doc):
        raise ValueError("tied 'jump' cannot be combined with jump_len/resample")
    keys = list(doc.keys())
    values = []
    for k in keys:
        v = doc[k]
        if not isinstance(v, list) or not v:
            raise ValueError(f"grid key {k!r} must map to a non-empty list")
        values.append(v)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*values)]
    return keys, cells


def config_for_cell(params: dict, base: SamplerConfig | None = None) -> SamplerConfig:
    """Materialize one grid cell into a SamplerConfig."""
    cfg = base or SamplerConfig()
    updates = {}
    for key, value in params.items():
        if key == "lambda0":
            updates["lambda_schedule"] = "const"
            updates["lambda0"] = float(value)
        elif key == "p":
            updates["lambda_schedule"] = "linear-p"
            updates["p"] = float(value)
        elif key == "jump":
            updates["jump_len"] = int(value)
            updates["resample"] = int(value)
        else:
            field = _FIELD_FOR_KEY[key]
            updates[field] = type(getattr(cfg, field))(value)
    return replace(cfg, **updates).validate()


def denoiser_from_spec(spec: str, sched, capability: Capability):
    """Build a denoiser backend from a CLI spec string.

    oracle=PATH | gaussian=MU:SIGMA2 | external=CMD
    """
    kind, sep, arg = spec.partition("=")
    if not sep:
        raise ValueError(f"denoiser spec {spec!r} needs kind=argument")
    if kind == "oracle":
        ref = imgio.load_png(arg)
        if ref.shape != capability.shape:
            raise ValueError(
                f"oracle reference shape {ref.shape} != run shape {capability.shape}"
            )
        return OracleDenoiser(ref, sched)
    if kind == "gaussian":
        mu_s, sep2, var_s = arg.partition(":")
        if not sep2:
            raise ValueError("gaussian spec must be gaussian=MU:SIGMA2")
        return AnalyticGaussianDenoiser(float(mu_s), float(var_s), sched, capability)
    if kind == "external":
        return external_handshake(arg, sched, capability)
    raise ValueError(f"unknown denoiser kind {kind!r}")


def execute_run(scene_path, target_path, mask_path, out_path,
                cfg: SamplerConfig, denoiser_spec: str) -> dict:
    """Load inputs, run cfg.candidates runs, write PNGs, return a summary.

    With candidates == 1 the single output lands at out_path; otherwise at
    out.0.png, out.1.png, ... siblings.
    """
    scene = imgio.load_png(scene_path)
    target = imgio.load_png(target_path)
    mask = imgio.load_mask_png(mask_path)
    if target.shape != scene.shape:
        raise ValueError(f"target shape {target.shape} != scene shape {scene.shape}")
    if mask.shape != scene.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} != scene plane {scene.shape[1:]}")
    sched = make_linear_schedule(cfg.timesteps)
    capability = Capability(*scene.shape)
    denoiser = denoiser_from_spec(denoiser_spec, sched, capability)
    start = time.perf_counter()
    try:
        outputs = run_candidates(scene, target, mask, cfg, denoiser)
    finally:
        if isinstance(denoiser, ExternalDenoiser):
            denoiser.close()
    elapsed = time.perf_counter() - start
    out_path = Path(out_path)
    if cfg.candidates == 1:
        paths = [out_path]
    else:
        paths = [
            out_path.with_name(f"{out_path.stem}.{i}{out_path.suffix}")
            for i in range(cfg.candidates)
        ]
    for p, img in zip(paths, outputs):
        imgio.save_png(img, p)
    calls = denoiser_call_count(cfg.timesteps, cfg.jump_len, cfg.resample)
    return {
        "outputs": [str(p) for p in paths],
        "seed": cfg.seed,
        "denoiser_calls": calls * cfg.candidates,
        "wall_time_s": round(elapsed, 6),
    }


def _run_cell(args: dict) -> dict:
    """One grid cell, isolated enough to run in a worker process."""
    cfg = config_for_cell(args["params"], SamplerConfig(**args["base_cfg"]))
    cfg = replace(cfg, seed=args["seed"], candidates=1)
    record = {
        "index": args["index"],
        "params": args["params"],
        "seed": args["seed"],
        "output": args["out_name"],
        "denoiser_calls": None,
        "wall_time_s": None,
        "status": "ok",
    }
    try:
        summary = execute_run(
            args["scene"], args["target"], args["mask"],
            Path(args["out_dir"]) / args["out_name"], cfg, args["denoiser"],
        )
        record["denoiser_calls"] = summary["denoiser_calls"]
        record["wall_time_s"] = summary["wall_time_s"]
    except (ValueError, OSError, DenoiserError) as exc:
        record["status"] = f"error: {exc}"
    return record


def run_grid(grid_doc: dict, scene, target, mask, out_dir, denoiser_spec: str,
             master_seed: int = 0, jobs: int = 1, columns: int | None = None,
             base_cfg: SamplerConfig | None = None) -> dict:
    """Run every grid cell, write per-cell PNGs, a manifest, and a montage.

    Cell i gets seed master_seed + i. Returns the manifest dict; the
    manifest's cell order is exactly the cross-product order.
    """
    keys, cells = parse_grid_spec(grid_doc)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = base_cfg or SamplerConfig()
    width = max(3, len(str(len(cells) - 1)))
    jobs_args = [
        {
            "index": i,
            "params": params,
            "seed": master_seed + i,
            "out_name": f"cell_{i:0{width}d}.png",
            "out_dir": str(out_dir),
            "scene": str(scene),
            "target": str(target),
            "mask": str(mask),
            "denoiser": denoiser_spec,
            "base_cfg": base.__dict__,
        }
        for i, params in enumerate(cells)
    ]
    log.info("grid: %d cells over %s with %d job(s)", len(cells), keys, jobs)
    if jobs <= 1:
        records = [_run_cell(a) for a in jobs_args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, jobs_args))

    manifest = {
        "master_seed": master_seed,
        "grid_keys": keys,
        "denoiser": denoiser_spec,
        "cells": records,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    ok = [r for r in records if r["status"] == "ok"]
    if ok:
        cols = columns or math.ceil(math.sqrt(len(records)))
        tiles, index_cells = [], []
        sample = imgio.load_png(out_dir / ok[0]["output"])
        for r in records:
            if r["status"] == "ok":
                tiles.append(imgio.load_png(out_dir / r["output"]))
            else:
                tiles.append(np.full(sample.shape, imgio.SEPARATOR_VALUE))
            index_cells.append(
                {
                    "row": r["index"] // cols,
                    "col": r["index"] % cols,
                    "params": r["params"],
                    "output": r["output"],
                }
            )
        imgio.save_png(imgio.montage(tiles, cols), out_dir / "montage.png")
        imgio.write_montage_index(out_dir / "montage.json", index_cells)
    return manifest
