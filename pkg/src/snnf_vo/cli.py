"""Command-line surface: synthesis, registration, tracking, evaluation.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error (including missing files), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io_formats as iof
from .config import apply_overrides, describe, parse_config_file
from .edgemap import classify_edges, fuse_edge_semantics, sample_edge_cloud
from .errors import ConfigError, FormatError, NumericError, SnnfVoError
from .geometry import CameraIntrinsics, Pose
from .metrics import ate, basin_width, convergence_basin, repeatability
from .nnf import backend_name, build_snnf
from .registration import FrameData, register_pyramid
from .synthetic import build_scene, generate_trajectory, render_view
from .tracker import TrackerConfig, Trajectory, recover_scale, track_sequence

log = logging.getLogger("snnf_vo.cli")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="snnf-vo",
        description="semantic-edge visual odometry on nearest-neighbor fields")
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--seed", type=int, help="override sampling seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads for per-class field builds")
    ap.add_argument("--log-level", default=None,
                    help="logging level (or env SNNF_LOG)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a labeled scene sequence")
    p.add_argument("outdir")
    p.add_argument("--scene", default="cube_grid",
                   choices=["cube_grid", "ambiguity_grating", "corridor"])
    p.add_argument("--traj", default="dolly",
                   choices=["dolly", "lateral", "arc"])
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--step", type=float, default=0.2)
    p.add_argument("--angle", type=float, default=20.0,
                   help="total arc angle, degrees")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--focal", type=float, default=260.0)
    p.add_argument("--scene-param", action="append", default=[],
                   metavar="KEY=VALUE", help="scene parameter override")

    p = sub.add_parser("register", help="register one frame pair")
    p.add_argument("dataset")
    p.add_argument("ref_id", type=int)
    p.add_argument("cur_id", type=int)
    p.add_argument("--annf", action="store_true",
                   help="class-blind matching instead of per-class")

    p = sub.add_parser("track", help="track a sequence into a pose file")
    p.add_argument("dataset")
    p.add_argument("out")
    p.add_argument("--annf", action="store_true")
    p.add_argument("--recover-scale", action="store_true",
                   help="rescale against gt.txt every scale_interval frames")

    p = sub.add_parser("eval-ate", help="absolute trajectory error")
    p.add_argument("est")
    p.add_argument("gt")
    p.add_argument("--align", action="store_true")
    p.add_argument("--discard", type=int, default=10)

    p = sub.add_parser("eval-repeat", help="edge repeatability under GT warp")
    p.add_argument("dataset")
    p.add_argument("ref_id", type=int)
    p.add_argument("cur_id", type=int)
    p.add_argument("--tol", type=float, default=2.0)

    p = sub.add_parser("bench-basin", help="convergence basin sweep to CSV")
    p.add_argument("out_csv")
    p.add_argument("--scene", default="ambiguity_grating",
                   choices=["cube_grid", "ambiguity_grating", "corridor"])
    p.add_argument("--dmax", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--offset", type=float, default=0.2,
                   help="true relative lateral motion, meters")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--focal", type=float, default=260.0)
    p.add_argument("--scene-param", action="append", default=[],
                   metavar="KEY=VALUE")

    p = sub.add_parser("fuse", help="fuse edge probabilities with "
                                    "segmentation into a container")
    p.add_argument("edge_pgm")
    p.add_argument("seg_semg")
    p.add_argument("out_semg")

    p = sub.add_parser("nnf-dump", help="dump per-class distance planes")
    p.add_argument("in_semg")
    p.add_argument("out_prefix")
    p.add_argument("--tau", type=float, default=0.5)
    return ap


def _tracker_config(args) -> TrackerConfig:
    cfg = TrackerConfig()
    if args.config:
        cfg = apply_overrides(cfg, parse_config_file(args.config))
    flags = {}
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.threads is not None:
        flags["threads"] = args.threads
    if getattr(args, "annf", False):
        flags["semantic"] = False
    if flags:
        cfg = apply_overrides(cfg, flags)
    log.info("resolved config: %s", describe(cfg))
    log.info("distance-transform backend: %s", backend_name())
    return cfg


def _scene_params(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--scene-param needs KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--scene-param {key}: not a number: {value!r}")
    return out


def _intrinsics(args) -> CameraIntrinsics:
    return CameraIntrinsics(fx=args.focal, fy=args.focal,
                            cx=(args.width - 1) / 2, cy=(args.height - 1) / 2)


def _cmd_synth(args) -> int:
    cfg = _tracker_config(args)
    scene = build_scene(args.scene, seed=cfg.seed,
                        **_scene_params(args.scene_param))
    poses = generate_trajectory(args.traj, args.frames, step=args.step,
                                angle=np.radians(args.angle))
    K = _intrinsics(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    iof.write_intrinsics(K, args.width, args.height, outdir / "intrinsics.txt")
    for fid, pose in enumerate(poses):
        view = render_view(scene, pose, K, args.width, args.height)
        iof.write_frame(outdir, fid, view.edges, view.inv_depth, view.gray)
    iof.write_poses(Trajectory(frame_ids=tuple(range(len(poses))),
                               poses=tuple(poses)), outdir / "gt.txt")
    log.info("wrote %d frames to %s", len(poses), outdir)
    return 0


def _load_pair(args):
    K, width, height, frames, gt = iof.load_dataset(args.dataset)
    by_id = {f.frame_id: f for f in frames}
    try:
        return K, width, height, by_id[args.ref_id], by_id[args.cur_id], gt
    except KeyError as exc:
        raise FormatError(f"frame {exc} not in {args.dataset}") from None


def _cmd_register(args) -> int:
    cfg = _tracker_config(args)
    K, _, _, ref, cur, _ = _load_pair(args)
    cloud = sample_edge_cloud(ref.edges, ref.inv_depth, ref.gray,
                              budget=cfg.edge_budget, tau=cfg.tau,
                              seed=cfg.seed, frame_id=ref.frame_id)
    planes = classify_edges(cur.edges, cfg.tau)
    res = register_pyramid(cloud, FrameData(planes, cur.gray),
                           Pose.identity(), K, cfg.registration,
                           ref_gray=ref.gray, semantic=cfg.semantic,
                           threads=cfg.threads)
    np.set_printoptions(suppress=True)
    print(f"converged: {res.converged}")
    print(f"iterations: {res.iterations_used}")
    print(f"final energy: {res.final_energy:.6g}")
    print(f"inlier fraction: {res.inlier_fraction:.4f}")
    print(f"mean edge flow: {res.mean_edge_flow:.2f} px")
    print("pose [R|t]:")
    print(res.pose.matrix34())
    return 0


def _cmd_track(args) -> int:
    cfg = _tracker_config(args)
    K, _, _, frames, gt = iof.load_dataset(args.dataset)
    traj = track_sequence(frames, K, cfg)
    if args.recover_scale:
        if gt is None:
            raise FormatError(f"--recover-scale needs gt.txt in {args.dataset}")
        traj = recover_scale(traj, gt, cfg.scale_interval)
    iof.write_poses(traj, args.out)
    lost = sum(traj.lost)
    log.info("tracked %d frames (%d lost) -> %s", len(traj), lost, args.out)
    print(f"{len(traj)} poses written to {args.out}")
    return 0


def _cmd_eval_ate(args) -> int:
    _tracker_config(args)
    report = ate(iof.read_poses(args.est), iof.read_poses(args.gt),
                 discard=args.discard, align=args.align)
    print(f"{report.rmse:.6g}")
    return 0


def _cmd_eval_repeat(args) -> int:
    cfg = _tracker_config(args)
    K, width, height, ref, cur, gt = _load_pair(args)
    if gt is None:
        raise FormatError(f"eval-repeat needs gt.txt in {args.dataset}")
    gt_by_id = dict(zip(gt.frame_ids, gt.poses))
    try:
        rel = gt_by_id[args.cur_id].inverse() @ gt_by_id[args.ref_id]
    except KeyError as exc:
        raise FormatError(f"gt.txt misses frame {exc}") from None
    ref_mask = classify_edges(ref.edges, cfg.tau).any(axis=0)
    ref_mask &= np.isfinite(ref.inv_depth) & (ref.inv_depth > 0)
    vs, us = np.nonzero(ref_mask)
    cvs, cus = np.nonzero(classify_edges(cur.edges, cfg.tau).any(axis=0))
    ratio = repeatability(np.stack([us, vs], 1), ref.inv_depth[vs, us],
                          np.stack([cus, cvs], 1), rel, K, width, height,
                          tol=args.tol)
    print(f"{ratio:.6g}")
    return 0


def _cmd_bench_basin(args) -> int:
    cfg = _tracker_config(args)
    scene = build_scene(args.scene, seed=cfg.seed,
                        **_scene_params(args.scene_param))
    K = _intrinsics(args)
    ref_pose = Pose.identity()
    cur_pose = Pose(translation=np.array([args.offset, 0.0, 0.0]))
    disp = np.linspace(0.0, args.dmax, args.steps)
    curves = convergence_basin(scene, ref_pose, cur_pose, K, args.width,
                               args.height, disp, seed=cfg.seed)
    lines = ["variant,displacement_m,mean_error_m,converged"]
    for name, curve in sorted(curves.items()):
        for d, e, c in zip(curve.displacements, curve.mean_errors,
                           curve.converged):
            lines.append(f"{name},{d:.6g},{e:.6g},{int(c)}")
    Path(args.out_csv).write_text("\n".join(lines) + "\n")
    for name, curve in sorted(curves.items()):
        print(f"basin width {name}: {basin_width(curve):.6g} m")
    return 0


def _cmd_fuse(args) -> int:
    _tracker_config(args)
    edge_prob = iof.read_pgm(args.edge_pgm)
    seg = iof.read_semantic_edges(args.seg_semg)
    fused = fuse_edge_semantics(edge_prob, seg.planes, seg.class_names)
    iof.write_semantic_edges(fused, args.out_semg)
    print(f"wrote {fused.class_count}-class container to {args.out_semg}")
    return 0


def _cmd_nnf_dump(args) -> int:
    cfg = _tracker_config(args)
    emap = iof.read_semantic_edges(args.in_semg)
    planes = classify_edges(emap, args.tau)
    fset = build_snnf(planes, threads=cfg.threads)
    for c, fld in enumerate(fset.fields):
        out = f"{args.out_prefix}_class{c}.idep"
        iof.write_depth_plane(fld.dist, out)
        print(f"class {c}: {fld.n_seeds} seeds -> {out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "register": _cmd_register,
    "track": _cmd_track,
    "eval-ate": _cmd_eval_ate,
    "eval-repeat": _cmd_eval_repeat,
    "bench-basin": _cmd_bench_basin,
    "fuse": _cmd_fuse,
    "nnf-dump": _cmd_nnf_dump,
}


def run_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    level = args.log_level or os.environ.get("SNNF_LOG", "WARNING")
    try:
        logging.basicConfig(
            level=getattr(logging, str(level).upper(), logging.WARNING),
            format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 1
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return 3
    except (SnnfVoError, FileNotFoundError, OSError) as exc:
        log.error("data error: %s", exc)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
