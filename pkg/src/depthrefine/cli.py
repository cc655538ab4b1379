"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image

from .config import Config, config_to_dict, dump_config, load_config
from .core_depth import DepthMap, apply_affine, difference_map, fit_scale_shift
from .errors import DataError, NumericalError
from .geom3d import CameraIntrinsics, Pose, TsdfVolume, tsdf_extract_points, tsdf_integrate, unproject, write_ply
from .io import format_for_path, read_depth, write_depth, write_edges_png, write_raw
from .metrics import canny, depth_metrics, pdbe
from .refine import gen_scene, refine, scene_from_maps
from .report import EvalReport, ReportEntry

log = logging.getLogger("depthrefine")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _fmt(args, path):
    return format_for_path(path, args.format, args.png_scale, args.width, args.height)


def _read(args, path, kind="metric"):
    return read_depth(path, _fmt(args, path), kind)


def _emit(args, text: str):
    if args.output and args.output != "-":
        with open(args.output, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _effective_config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg.refine.seed = args.seed
    if args.png_scale is None:
        args.png_scale = cfg.png_scale
    return cfg


def cmd_align(args, cfg):
    src = _read(args, args.source, "affine_invariant")
    tgt = _read(args, args.target)
    a = fit_scale_shift(src, tgt)
    aligned = apply_affine(src, a, "affine_invariant")
    if args.output:
        write_depth(aligned, args.output, _fmt(args, args.output))
    print(json.dumps({"scale": a.scale, "shift": a.shift}, sort_keys=True))


def cmd_diffmap(args, cfg):
    rel = _read(args, args.relative, "affine_invariant")
    met = _read(args, args.metric)
    e = difference_map(rel, met, cfg.refine.diff_quantile, cfg.refine.diff_eps)
    out = args.output or "diffmap.png"
    if out.lower().endswith(".png"):
        Image.fromarray(np.rint(e.values * 65535).astype(np.uint16)).save(out)
    else:
        write_raw(DepthMap(e.values, e.valid, "affine_invariant"), out)
    print(json.dumps({"mean": float(e.values[e.valid].mean()) if e.valid.any() else None, "output": out}))


def cmd_refine(args, cfg):
    if args.synthetic is not None:
        scene = gen_scene(args.synthetic, args.size, args.size)
    elif args.metric and args.relative:
        scene = scene_from_maps(_read(args, args.metric), _read(args, args.relative, "affine_invariant"))
    else:
        raise _Usage("refine needs --synthetic SEED or both --metric and --relative")
    result = refine(scene, cfg.refine)
    out = args.output or "refined.pfm"
    notes = write_depth(result.refined, out, _fmt(args, out))
    summary = {
        "output": out,
        "rounds": len(result.rounds),
        "mean_difference": [float(e.values[e.valid].mean()) for e in result.difference_maps],
        "final_loss": result.loss_trace[-1],
        "notes": notes,
    }
    if scene.gt is not None:
        summary["metrics"] = depth_metrics(result.refined, scene.gt).to_dict()
    print(json.dumps(summary, indent=2, sort_keys=True))


def _eval_one(pair, args, cfg):
    name, pred_path, gt_path = pair
    pred = _read(args, pred_path)
    gt = _read(args, gt_path)
    return ReportEntry(name, depth_metrics(pred, gt), pdbe(pred, gt, cfg.canny, cfg.dbe_truncation))


def _manifest(path):
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
    return records


def cmd_eval(args, cfg):
    if args.manifest:
        pairs = []
        for i, rec in enumerate(_manifest(args.manifest)):
            if "pred" not in rec or "gt" not in rec:
                raise DataError(f"{args.manifest}: record {i + 1} needs 'pred' and 'gt'")
            pairs.append((rec.get("name", str(i)), rec["pred"], rec["gt"]))
    elif args.pred and args.gt:
        pairs = [("0", args.pred, args.gt)]
    else:
        raise _Usage("eval needs --pred and --gt, or --manifest")
    threads = max(1, args.threads or 1)
    if threads == 1:
        entries = [_eval_one(p, args, cfg) for p in pairs]
    else:
        with ThreadPoolExecutor(threads) as pool:
            entries = list(pool.map(lambda p: _eval_one(p, args, cfg), pairs))
    report = EvalReport(entries, config_to_dict(cfg))
    _emit(args, report.to_json())


def cmd_edges(args, cfg):
    d = _read(args, args.input)
    filled = np.where(d.valid, d.values, d.values[d.valid].mean() if d.valid.any() else 0.0)
    edges = canny(filled, cfg.canny).edges
    out = args.output or "edges.png"
    write_edges_png(edges, out)
    print(json.dumps({"edge_pixels": int(edges.sum()), "output": out}))


def cmd_unproject(args, cfg):
    d = _read(args, args.depth)
    cloud = unproject(d, CameraIntrinsics.from_list(args.intrinsics))
    out = args.output or "cloud.ply"
    write_ply(cloud, out)
    print(json.dumps({"points": len(cloud), "output": out}))


def cmd_fuse(args, cfg):
    frames = []
    for i, rec in enumerate(_manifest(args.manifest)):
        if "depth" not in rec or "intrinsics" not in rec:
            raise DataError(f"{args.manifest}: record {i + 1} needs 'depth' and 'intrinsics'")
        fmt = format_for_path(rec["depth"], rec.get("format"), rec.get("scale", args.png_scale),
                              rec.get("width", args.width), rec.get("height", args.height))
        d = read_depth(rec["depth"], fmt)
        k = CameraIntrinsics.from_list(rec["intrinsics"])
        pose = Pose.from_row_major(rec["pose"]) if "pose" in rec else Pose()
        frames.append((d, k, pose))
    if not frames:
        raise DataError(f"{args.manifest}: no frames")
    tc = cfg.tsdf
    if args.bounds:
        lower, upper = np.array(args.bounds[:3]), np.array(args.bounds[3:])
    else:
        pts = np.concatenate([unproject(d, k).points @ p.rotation.T + p.translation for d, k, p in frames])
        if len(pts) == 0:
            raise DataError("frames contain no valid depth")
        lower = pts.min(axis=0) - tc.truncation
        upper = pts.max(axis=0) + tc.truncation
    vol = TsdfVolume.from_bounds(lower, upper, tc.voxel_size, tc.truncation)
    if np.prod(vol.dims) > 64_000_000:
        raise DataError(f"TSDF volume {vol.dims} too large; pass --bounds or a larger voxel size")
    for d, k, p in frames:
        tsdf_integrate(vol, d, k, p)
    cloud = tsdf_extract_points(vol, tc.surface_band)
    out = args.output or "fused.ply"
    write_ply(cloud, out)
    print(json.dumps({"frames": len(frames), "dims": list(vol.dims), "points": len(cloud), "output": out}))


def run_demo(seed: int, cfg: Config, size: int = 128) -> dict:
    scene = gen_scene(seed, size, size)
    result = refine(scene, cfg.refine)
    rows = {}
    for name, d in (("input", scene.metric_input), ("refined", result.refined)):
        row = depth_metrics(d, scene.gt).to_dict()
        row.update(pdbe(d, scene.gt, cfg.canny, cfg.dbe_truncation).to_dict())
        rows[name] = {k: round(v, 6) for k, v in row.items()}
    return {"seed": seed, "size": size, "metrics": rows}


def cmd_demo(args, cfg):
    seed = cfg.refine.seed
    summary = run_demo(seed, cfg, args.size)
    keys = ("delta1", "a_rel", "rmse", "si_log", "dbe_acc", "dbe_compl")
    lines = [f"{'metric':<10}{'input':>12}{'refined':>12}"]
    for k in keys:
        lines.append(f"{k:<10}{summary['metrics']['input'][k]:>12.6f}{summary['metrics']['refined'][k]:>12.6f}")
    print("\n".join(lines))
    if args.output:
        with open(args.output, "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)


def cmd_config(args, cfg):
    _emit(args, dump_config(cfg).rstrip())


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file overriding defaults")
    common.add_argument("--seed", type=int, help="random seed for refinement")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--output", "-o", help="output path")
    common.add_argument("--format", choices=["pfm", "png16", "raw"], help="depth file format (default: from extension)")
    common.add_argument("--png-scale", type=float, help="meters per PNG16 unit (default 0.001)")
    common.add_argument("--width", type=int, help="width for raw float32 files")
    common.add_argument("--height", type=int, help="height for raw float32 files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="depthrefine", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("align", parents=[common], help="fit and apply scale/shift of source onto target")
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("diffmap", parents=[common], help="difference map between relative and metric depth")
    s.add_argument("--relative", required=True)
    s.add_argument("--metric", required=True)
    s.set_defaults(func=cmd_diffmap)

    s = sub.add_parser("refine", parents=[common], help="refine a metric depth map")
    s.add_argument("--metric")
    s.add_argument("--relative")
    s.add_argument("--synthetic", type=int, metavar="SEED")
    s.add_argument("--size", type=int, default=128)
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("eval", parents=[common], help="depth and boundary metrics as JSON")
    s.add_argument("--pred")
    s.add_argument("--gt")
    s.add_argument("--manifest", help="JSON-lines file with pred/gt records")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("edges", parents=[common], help="Canny edges of a depth map as PNG")
    s.add_argument("--input", required=True)
    s.set_defaults(func=cmd_edges)

    s = sub.add_parser("unproject", parents=[common], help="depth map to PLY point cloud")
    s.add_argument("--depth", required=True)
    s.add_argument("--intrinsics", required=True, nargs=4, type=float, metavar=("FX", "FY", "CX", "CY"))
    s.set_defaults(func=cmd_unproject)

    s = sub.add_parser("fuse", parents=[common], help="TSDF-fuse a manifest of depth frames to PLY")
    s.add_argument("--manifest", required=True)
    s.add_argument("--bounds", nargs=6, type=float, metavar="B")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("demo", parents=[common], help="synthetic scene -> refine -> evaluate")
    s.add_argument("--size", type=int, default=128)
    s.set_defaults(func=cmd_demo)

    s = sub.add_parser("config", parents=[common], help="print the effective configuration")
    s.set_defaults(func=cmd_config)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _effective_config(args)
        log.debug("effective config: %s", config_to_dict(cfg))
        args.func(args, cfg)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
