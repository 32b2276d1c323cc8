"""Command-line interface: batch rendering, ablation sweeps, scene
conversion, headless session replay, and the interactive service.

Exit codes: 0 success, 3 I/O, 4 file parse, 5 validation, 6 compute.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import warp
from .cage import CageError, HexCage, cage_pair_from_dict
from .fields import FieldError, convert_voxel_list, load_scene
from .render import (
    Camera,
    RenderError,
    RenderSettings,
    discontinuity_energy,
    image_metrics,
    load_cameras,
    render,
)
from .session import Session, SessionError
from .warp import (
    AdjustmentMode,
    EditSpec,
    WarpError,
    action_from_dict,
    bake_warp_grid,
    query_deformed_batch,
)

EXIT_OK = 0
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_VALIDATION = 5
EXIT_COMPUTE = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as e:
        raise CliError(f"file not found: {path}", EXIT_IO) from e
    except json.JSONDecodeError as e:
        raise CliError(f"malformed JSON in {path}: {e}", EXIT_PARSE) from e


def _load_scene_checked(path):
    try:
        return load_scene(path)
    except FileNotFoundError as e:
        raise CliError(f"scene file not found: {path}", EXIT_IO) from e
    except FieldError as e:
        raise CliError(f"bad scene file {path}: {e}", EXIT_PARSE) from e


def _build_edit(cages_path, script_path, mode: AdjustmentMode) -> EditSpec:
    pair = cage_pair_from_dict(_load_json(cages_path))
    edit = EditSpec(pair=pair, mode=mode)
    if script_path:
        script = _load_json(script_path)
        actions = script["actions"] if isinstance(script, dict) else script
        for a in actions:
            edit = edit.apply(action_from_dict(a))
    return edit


def _settings(args) -> RenderSettings:
    return RenderSettings(
        samples_per_ray=args.samples,
        near=args.near,
        far=args.far,
        seed=args.seed,
        stratified_jitter=not args.no_jitter,
        background=tuple(float(v) for v in args.background.split(",")),
    )


def _oracle_report(field, edit: EditSpec, grid, seed: int) -> dict:
    """Grid-vs-exact field error plus straddle-pair discontinuity energies."""
    rng = np.random.default_rng(seed)
    mn, mx = warp.bake_region(edit)
    probes = rng.uniform(mn, mx, (10_000, 3))
    _, d_grid = query_deformed_batch(field, edit, probes, grid=grid)
    _, d_exact = query_deformed_batch(field, edit, probes, grid=None)
    eps = 1e-4 * edit.pair.outer.diameter

    def fq(p, d=None):
        return query_deformed_batch(field, edit, p, d, grid=None)

    inner_faces = [(edit.pair.inner_deformed, i) for i in range(6)]
    outer_faces = [(edit.pair.outer, i) for i in range(6)]
    return {
        "grid_vs_exact_max_density_error": float(np.abs(d_grid - d_exact).max()),
        "grid_vs_exact_mean_density_error": float(np.abs(d_grid - d_exact).mean()),
        "discontinuity_energy_inner": discontinuity_energy(fq, inner_faces, eps, seed=seed),
        "discontinuity_energy_outer": discontinuity_energy(fq, outer_faces, eps, seed=seed),
    }


def cmd_convert(args) -> int:
    try:
        convert_voxel_list(args.input, args.output)
    except FileNotFoundError as e:
        raise CliError(f"file not found: {args.input}", EXIT_IO) from e
    except FieldError as e:
        raise CliError(f"bad voxel list: {e}", EXIT_PARSE) from e
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_render(args) -> int:
    field = _load_scene_checked(args.scene)
    mode = AdjustmentMode(args.mode)
    edit = _build_edit(args.cages, args.script, mode)
    cameras = load_cameras(args.camera) if args.camera else [
        Camera.look_at(eye=(0.0, -3.0, 0.8), target=(0.0, 0.0, 0.0),
                       fov_x=np.pi / 4, width=args.default_size, height=args.default_size)
    ]
    settings = _settings(args)
    grid = None
    if not args.exact and not edit.is_identity:
        grid = bake_warp_grid(edit, args.warp_resolution)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics: dict = {"frames": []}

    def fq(p, d=None):
        return query_deformed_batch(field, edit, p, d, grid=grid)

    for i, cam in enumerate(cameras):
        img = render(fq, cam, settings)
        plain = render(lambda p, d=None: field.query(p, d), cam, settings)
        img.save_png(out / f"frame_{i:03d}.png")
        img.save_raw(out / f"frame_{i:03d}.raw")
        metrics["frames"].append({
            "index": i,
            "vs_unedited": image_metrics(img, plain),
        })
    if args.oracle:
        metrics["oracle"] = _oracle_report(field, edit, grid, args.seed)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(cameras)} frame(s) to {out}")
    return EXIT_OK


def _scaled_outer(inner: HexCage, scale: float) -> HexCage:
    c = inner.vertices.mean(axis=0)
    return HexCage(c + scale * (inner.vertices - c))


def cmd_ablate(args) -> int:
    field = _load_scene_checked(args.scene)
    mode = AdjustmentMode(args.mode)
    pair = cage_pair_from_dict(_load_json(args.cages))
    script = _load_json(args.script)
    actions = [action_from_dict(a) for a in (script["actions"] if isinstance(script, dict) else script)]

    rows = []
    if args.sweep_outer:
        scales = [float(v) for v in args.sweep_outer.split(",")]
        if not scales:
            raise CliError("empty outer sweep", EXIT_VALIDATION)
        for s in scales:
            outer = _scaled_outer(pair.inner_canonical, s)
            edit = EditSpec.from_setting(outer, pair.inner_canonical, mode)
            for a in actions:
                edit = edit.apply(a)
            t0 = time.perf_counter()
            grid = bake_warp_grid(edit, args.warp_resolution)
            bake_t = time.perf_counter() - t0
            t0 = time.perf_counter()
            rep = _oracle_report(field, edit, grid, args.seed)
            probe_t = time.perf_counter() - t0
            rows.append({
                "sweep": "outer_scale", "value": s,
                "discontinuity_energy": rep["discontinuity_energy_inner"],
                "grid_vs_exact_max_density_error": rep["grid_vs_exact_max_density_error"],
                "bake_seconds": round(bake_t, 4), "probe_seconds": round(probe_t, 4),
            })
    elif args.sweep_resolution:
        resolutions = [int(v) for v in args.sweep_resolution.split(",")]
        if not resolutions:
            raise CliError("empty resolution sweep", EXIT_VALIDATION)
        edit = EditSpec(pair=pair, mode=mode)
        for a in actions:
            edit = edit.apply(a)
        for r in resolutions:
            t0 = time.perf_counter()
            grid = bake_warp_grid(edit, r)
            bake_t = time.perf_counter() - t0
            t0 = time.perf_counter()
            rep = _oracle_report(field, edit, grid, args.seed)
            probe_t = time.perf_counter() - t0
            rows.append({
                "sweep": "resolution", "value": r,
                "discontinuity_energy": rep["discontinuity_energy_inner"],
                "grid_vs_exact_max_density_error": rep["grid_vs_exact_max_density_error"],
                "bake_seconds": round(bake_t, 4), "probe_seconds": round(probe_t, 4),
            })
    else:
        raise CliError("ablate needs --sweep-outer or --sweep-resolution", EXIT_VALIDATION)

    fieldnames = list(rows[0].keys())
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} row(s) to {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    log = _load_json(args.log)
    commands = log["commands"] if isinstance(log, dict) else log
    session = Session(scene_root=args.scene_root)
    last_render = None
    for entry in commands:
        kind = entry["kind"]
        payload = entry.get("payload") or {}
        if kind in ("render_request", "bake_status"):
            if kind == "render_request":
                last_render = payload
            continue
        session.execute(kind, payload)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    session.save(out / "session.json")
    if last_render is not None or args.camera:
        if args.camera:
            cam = load_cameras(args.camera)[0]
        else:
            cam = Camera.from_dict(last_render["camera"])
        settings = _settings(args)
        resolution = None if args.exact else args.warp_resolution
        img = render(session.field_query(resolution), cam, settings)
        img.save_png(out / "final.png")
        img.save_raw(out / "final.raw")
    print(f"replayed {len(commands)} command(s) into {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(scene_root=args.scene_root)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return EXIT_OK


def _add_render_flags(p, warp_default=256):
    p.add_argument("--mode", default="continuous",
                   choices=[m.value for m in AdjustmentMode])
    p.add_argument("--warp-resolution", type=int, default=warp_default)
    p.add_argument("--samples", type=int, default=128)
    p.add_argument("--near", type=float, default=0.05)
    p.add_argument("--far", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--background", default="1,1,1")
    p.add_argument("--no-jitter", action="store_true")
    p.add_argument("--exact", action="store_true",
                   help="per-sample exact mapping instead of a baked grid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cagewarp")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="voxel list text file -> binary grid field")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("render", help="render an edited scene headlessly")
    p.add_argument("--scene", required=True)
    p.add_argument("--cages", required=True)
    p.add_argument("--script", default=None)
    p.add_argument("--camera", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--default-size", type=int, default=200)
    _add_render_flags(p)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("ablate", help="outer-size or resolution sweep -> CSV")
    p.add_argument("--scene", required=True)
    p.add_argument("--cages", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--sweep-outer", default=None)
    p.add_argument("--sweep-resolution", default=None)
    p.add_argument("--out", required=True)
    _add_render_flags(p, warp_default=64)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("replay", help="re-run a recorded command log")
    p.add_argument("--log", required=True)
    p.add_argument("--scene-root", default=None)
    p.add_argument("--camera", default=None)
    p.add_argument("--out", required=True)
    _add_render_flags(p, warp_default=64)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("serve", help="run the interactive editing service")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--scene-root", default=".")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (FieldError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (CageError, WarpError, SessionError, RenderError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ArithmeticError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
