"""Frame-to-keyframe tracking over a sequence of semantic edge frames.

Poses are camera-to-world. Each frame registers against the current
keyframe's edge cloud with constant-motion initialization; keyframes are
promoted when warped-edge flow or the matched fraction degrades. A failed
registration marks the frame lost, copies the last good pose, and
re-initializes tracking with the current frame as the new keyframe.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .edgemap import (EdgeCloud, SemanticEdgeMap, classify_edges,
                      sample_edge_cloud, sample_support_pixels)
from .errors import ConfigError, MetricError, SnnfVoError
from .geometry import CameraIntrinsics, Pose
from .image import gradient_magnitude
from .registration import (FrameData, RegistrationConfig, RegistrationResult,
                           register_pyramid)

__all__ = ["FrameInput", "Trajectory", "TrackerConfig", "track_sequence",
           "keyframe_decision", "recover_scale"]

log = logging.getLogger("snnf_vo.tracker")


@dataclass(frozen=True)
class FrameInput:
    """One input frame: id, grayscale, edge map, inverse-depth plane."""

    frame_id: int
    gray: np.ndarray
    edges: SemanticEdgeMap
    inv_depth: np.ndarray
    gt_pose: Pose | None = None

    def __post_init__(self):
        shape = (self.edges.height, self.edges.width)
        if self.gray.shape != shape or self.inv_depth.shape != shape:
            raise ConfigError(
                f"frame {self.frame_id}: image {self.gray.shape}, depth "
                f"{self.inv_depth.shape} and edges {shape} must agree")


@dataclass(frozen=True)
class Trajectory:
    """Ordered (frame id, camera-to-world pose) pairs plus lost flags."""

    frame_ids: tuple
    poses: tuple
    lost: tuple = ()

    def __post_init__(self):
        if len(self.frame_ids) != len(self.poses):
            raise ConfigError("one pose per frame id required")
        if self.lost and len(self.lost) != len(self.poses):
            raise ConfigError("one lost flag per frame required")

    def __len__(self) -> int:
        return len(self.frame_ids)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)


@dataclass(frozen=True)
class TrackerConfig:
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    keyframe_flow_px: float = 20.0
    keyframe_min_inliers: float = 0.6
    edge_budget: int = 3000
    support_target: int = 4000
    min_support: int = 1000
    scale_interval: int = 200
    tau: float = 0.5
    seed: int = 0
    semantic: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.keyframe_flow_px <= 0 or not 0 < self.keyframe_min_inliers <= 1:
            raise ConfigError("keyframe thresholds must be positive")
        if self.edge_budget < 1 or self.support_target < self.min_support:
            raise ConfigError("invalid sampling budgets")
        if self.scale_interval < 1:
            raise ConfigError("scale_interval must be >= 1")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must be inside (0, 1)")


def keyframe_decision(result: RegistrationResult, mean_edge_flow: float,
                      cfg: TrackerConfig) -> bool:
    """Promote when flow exceeds or inliers undercut their thresholds.

    Both comparisons are strict, so sitting exactly at a threshold does
    not promote.
    """
    return (mean_edge_flow > cfg.keyframe_flow_px
            or result.inlier_fraction < cfg.keyframe_min_inliers)


def _frame_seed(cfg_seed: int, frame_id: int) -> int:
    return int(np.random.SeedSequence((cfg_seed, frame_id)).generate_state(1)[0])


def _build_keyframe(frame: FrameInput, cfg: TrackerConfig) -> EdgeCloud:
    seed = _frame_seed(cfg.seed, frame.frame_id)
    cloud = sample_edge_cloud(frame.edges, frame.inv_depth, frame.gray,
                              budget=cfg.edge_budget, tau=cfg.tau, seed=seed,
                              frame_id=frame.frame_id)
    edge_mask = classify_edges(frame.edges, cfg.tau).any(axis=0)
    support = sample_support_pixels(
        gradient_magnitude(frame.gray), len(cloud), cfg.support_target,
        cfg.min_support, seed, depth=frame.inv_depth, exclude=edge_mask)
    if not support:
        return cloud
    sup = EdgeCloud.from_points(support, frame_id=frame.frame_id,
                                class_count=cloud.class_count)
    return EdgeCloud(
        uv=np.concatenate([cloud.uv, sup.uv]),
        inv_depth=np.concatenate([cloud.inv_depth, sup.inv_depth]),
        class_mask=np.concatenate([cloud.class_mask, sup.class_mask]),
        weight=np.concatenate([cloud.weight, sup.weight]),
        tangent=np.concatenate([cloud.tangent, sup.tangent]),
        frame_id=frame.frame_id, class_count=cloud.class_count)


def track_sequence(frames, K: CameraIntrinsics, cfg: TrackerConfig) -> Trajectory:
    """Track a frame sequence; returns one camera-to-world pose per frame.

    The first frame anchors the world origin and the first keyframe.
    A registration error marks the frame lost: its pose copies the last
    good one and the frame restarts tracking as a new keyframe.  A result
    that merely stalled short of the update tolerance is still a valid
    sub-pixel pose and is kept.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise ConfigError(f"need at least 2 frames, got {len(frames)}")
    ids = [f.frame_id for f in frames]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise ConfigError("frame ids must be strictly increasing")

    first = frames[0]
    T_w_kf = Pose.identity()
    kf_cloud = _build_keyframe(first, cfg)
    kf_gray = first.gray
    rel_prev = Pose.identity()       # keyframe -> previous frame
    delta = Pose.identity()          # previous -> current prediction
    out_ids = [first.frame_id]
    out_poses = [Pose.identity()]
    out_lost = [False]

    for frame in frames[1:]:
        init = delta @ rel_prev
        planes = classify_edges(frame.edges, cfg.tau)
        data = FrameData(class_planes=planes, gray=frame.gray)
        result = None
        try:
            result = register_pyramid(
                kf_cloud, data, init, K, cfg.registration, ref_gray=kf_gray,
                semantic=cfg.semantic, threads=cfg.threads)
        except SnnfVoError as exc:
            log.warning("frame %d: registration failed: %s", frame.frame_id, exc)
        if result is None:
            # lost: hold the last good pose and restart from this frame
            T_w_cur = out_poses[-1]
            out_ids.append(frame.frame_id)
            out_poses.append(T_w_cur)
            out_lost.append(True)
            try:
                kf_cloud = _build_keyframe(frame, cfg)
                T_w_kf = T_w_cur
                kf_gray = frame.gray
                rel_prev = Pose.identity()
            except SnnfVoError as exc:
                # frame unusable as a keyframe: keep tracking off the old one
                log.warning("frame %d: cannot rebuild keyframe: %s",
                            frame.frame_id, exc)
            delta = Pose.identity()
            continue
        rel = result.pose            # keyframe -> current frame
        T_w_cur = T_w_kf @ rel.inverse()
        delta = rel @ rel_prev.inverse()
        rel_prev = rel
        out_ids.append(frame.frame_id)
        out_poses.append(T_w_cur)
        out_lost.append(False)
        if keyframe_decision(result, result.mean_edge_flow, cfg):
            try:
                kf_cloud = _build_keyframe(frame, cfg)
                T_w_kf = T_w_cur
                kf_gray = frame.gray
                rel_prev = Pose.identity()
            except SnnfVoError as exc:
                log.warning("frame %d: keyframe promotion skipped: %s",
                            frame.frame_id, exc)
    return Trajectory(frame_ids=tuple(out_ids), poses=tuple(out_poses),
                      lost=tuple(out_lost))


def recover_scale(traj: Trajectory, gt: Trajectory, interval: int) -> Trajectory:
    """Rescale estimated translations against ground-truth path length.

    Every `interval` frames, positions are rescaled about the window start
    by the ratio of ground-truth to estimated path length over the window;
    windows chain so the trajectory stays continuous. Rotations are
    untouched. Windows with zero estimated path length are passed through
    rigidly with a warning.
    """
    if interval < 1:
        raise ConfigError("interval must be >= 1")
    gt_by_id = {fid: p for fid, p in zip(gt.frame_ids, gt.poses)}
    missing = [fid for fid in traj.frame_ids if fid not in gt_by_id]
    if missing:
        raise MetricError(f"ground truth missing frame ids {missing[:5]}")
    n = len(traj)
    pos = traj.positions()
    gt_pos = np.array([gt_by_id[fid].translation for fid in traj.frame_ids])
    new_pos = pos.copy()
    start = 0
    anchor = pos[0].copy()
    while start < n - 1:
        end = min(start + interval, n - 1)
        est_len = float(np.linalg.norm(np.diff(pos[start:end + 1], axis=0),
                                       axis=1).sum())
        gt_len = float(np.linalg.norm(np.diff(gt_pos[start:end + 1], axis=0),
                                      axis=1).sum())
        if est_len <= 0:
            log.warning("scale window at frame %s has zero estimated length; "
                        "skipped", traj.frame_ids[start])
            ratio = 1.0
        else:
            ratio = gt_len / est_len
        for i in range(start, end + 1):
            new_pos[i] = anchor + ratio * (pos[i] - pos[start])
        anchor = new_pos[end].copy()
        start = end
    poses = [Pose(p.rotation, t) for p, t in zip(traj.poses, new_pos)]
    return Trajectory(frame_ids=traj.frame_ids, poses=tuple(poses),
                      lost=traj.lost)
