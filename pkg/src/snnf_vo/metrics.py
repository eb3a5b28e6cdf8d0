"""Trajectory and registration quality metrics.

Covers absolute trajectory error with optional closed-form similarity
alignment, edge repeatability under ground-truth warps, and convergence
basin sweeps comparing class-blind against per-class matching.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .edgemap import sample_edge_cloud
from .errors import ConfigError, MetricError, SnnfVoError
from .geometry import CameraIntrinsics, Pose, back_project, project_batch
from .nnf import build_annf, build_snnf, lookup_batch
from .registration import RegistrationConfig, register
from .synthetic import SceneModel, render_view

__all__ = ["AteReport", "BasinCurve", "ate", "repeatability",
           "convergence_basin", "basin_width"]

log = logging.getLogger("snnf_vo.metrics")

BASIN_CONVERGENCE_M = 0.05
BASIN_QUORUM = 0.9


@dataclass(frozen=True)
class AteReport:
    rmse: float
    errors: np.ndarray        # per-frame position errors, meters
    frame_ids: np.ndarray
    discarded: int
    aligned: bool


@dataclass(frozen=True)
class BasinCurve:
    """Convergence sweep for one matching variant."""

    variant: str
    displacements: np.ndarray
    mean_errors: np.ndarray   # mean final translation error over directions
    converged: np.ndarray     # bool, >= quorum of directions under threshold

    def __post_init__(self):
        d = np.asarray(self.displacements, dtype=np.float64)
        if d.size > 1 and not np.all(np.diff(d) > 0):
            raise ConfigError("displacements must be strictly increasing")


def _matched_positions(est, gt):
    gt_by_id = {fid: pose for fid, pose in zip(gt.frame_ids, gt.poses)}
    ids, pe, pg = [], [], []
    for fid, pose in zip(est.frame_ids, est.poses):
        if fid in gt_by_id:
            ids.append(fid)
            pe.append(pose.translation)
            pg.append(gt_by_id[fid].translation)
    return np.array(ids), np.array(pe).reshape(-1, 3), np.array(pg).reshape(-1, 3)


def _umeyama(src: np.ndarray, dst: np.ndarray):
    """Closed-form similarity (s, R, t) minimizing ||s R src + t - dst||."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var = (xs * xs).sum() / len(src)
    s = float(np.trace(np.diag(D) @ S) / var) if var > 0 else 1.0
    t = mu_d - s * R @ mu_s
    return s, R, t


def ate(est, gt, discard: int = 10, align: bool = False) -> AteReport:
    """Position RMSE between trajectories matched by frame id.

    The first `discard` matched frames are excluded. With `align`, a
    closed-form similarity (rotation, translation, scale) is fit on the
    retained positions first; default is off.
    """
    ids, pe, pg = _matched_positions(est, gt)
    ids, pe, pg = ids[discard:], pe[discard:], pg[discard:]
    if len(ids) < 2:
        raise MetricError(f"only {len(ids)} common frames after discarding {discard}")
    if align:
        s, R, t = _umeyama(pe, pg)
        pe = (s * (R @ pe.T)).T + t
    errors = np.linalg.norm(pe - pg, axis=1)
    return AteReport(rmse=float(np.sqrt(np.mean(errors ** 2))), errors=errors,
                     frame_ids=ids, discarded=discard, aligned=align)


def repeatability(uv_ref: np.ndarray, inv_depth_ref: np.ndarray,
                  uv_cur: np.ndarray, rel_pose: Pose, K: CameraIntrinsics,
                  width: int, height: int, tol: float = 2.0) -> float:
    """Fraction of re-detected edge pixels under a ground-truth warp.

    Reference pixels warp with their ground-truth depth and `rel_pose`
    (reference-to-current). The denominator counts warps landing inside
    the grid; the numerator those within `tol` pixels of some current
    edge pixel.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    uv_ref = np.asarray(uv_ref, dtype=np.float64).reshape(-1, 2)
    P = back_project(uv_ref, np.asarray(inv_depth_ref, dtype=np.float64), K)
    uv_w, in_front = project_batch(rel_pose.apply(P), K)
    ui = np.round(uv_w[:, 0])
    vi = np.round(uv_w[:, 1])
    inb = in_front & (ui >= 0) & (ui < width) & (vi >= 0) & (vi < height)
    denom = int(np.count_nonzero(inb))
    if denom == 0:
        raise MetricError("no warped pixels land in bounds")
    uv_cur = np.asarray(uv_cur).reshape(-1, 2)
    if uv_cur.shape[0] == 0:
        return 0.0
    field = build_annf(np.round(uv_cur).astype(np.int64), width, height)
    _, dist, valid = lookup_batch(field, uv_w[inb])
    return float(np.count_nonzero(valid & (dist <= tol)) / denom)


def _basin_config(cfg: RegistrationConfig | None) -> RegistrationConfig:
    if cfg is not None:
        return cfg
    # single level, edge-only, ungated matching: the sweep itself controls
    # how far the initialization strays
    return RegistrationConfig(pyramid_levels=1, lambda_photo=0.0,
                              max_correspondence_dist=1e9)


def convergence_basin(scene: SceneModel, ref_pose: Pose, cur_pose: Pose,
                      K: CameraIntrinsics, width: int, height: int,
                      displacements, cfg: RegistrationConfig | None = None,
                      variants=("annf", "snnf"), *, n_directions: int = 8,
                      budget: int = 2000, seed: int = 0) -> dict:
    """Convergence sweep over initial-translation displacements.

    Renders the two views, builds one reference cloud, then for every
    displacement perturbs the ground-truth relative pose along
    `n_directions` horizontal-plane azimuths and registers without a
    pyramid. A displacement counts as converged when at least 90% of
    directions finish within 0.05 m of the true translation. Returns
    {variant: BasinCurve}.
    """
    displacements = np.asarray(sorted(float(d) for d in displacements))
    cfg = _basin_config(cfg)
    ref = render_view(scene, ref_pose, K, width, height)
    cur = render_view(scene, cur_pose, K, width, height)
    cloud = sample_edge_cloud(ref.edges, ref.inv_depth, ref.gray,
                              budget=budget, tau=0.5, seed=seed)
    planes = cur.edges.planes != 0
    gt_rel = cur_pose.inverse() @ ref_pose
    azimuths = np.arange(n_directions) * (2 * np.pi / n_directions)
    dirs = np.stack([np.cos(azimuths), np.zeros(n_directions),
                     np.sin(azimuths)], axis=1)
    out = {}
    for variant in variants:
        if variant == "snnf":
            fields = build_snnf(planes)
        elif variant == "annf":
            vs, us = np.nonzero(planes.any(axis=0))
            fields = build_annf(np.stack([us, vs], axis=1), width, height)
        else:
            raise ConfigError(f"unknown variant {variant!r}")
        mean_errs = np.zeros(len(displacements))
        conv = np.zeros(len(displacements), dtype=bool)
        for i, delta in enumerate(displacements):
            errs = np.zeros(len(dirs))
            for j, d in enumerate(dirs):
                init = Pose(translation=delta * d) @ gt_rel
                try:
                    res = register(cloud, fields, None, init, K, cfg)
                    errs[j] = float(np.linalg.norm(
                        res.pose.translation - gt_rel.translation))
                except SnnfVoError:
                    errs[j] = np.inf
            mean_errs[i] = float(np.mean(errs))
            conv[i] = np.mean(errs < BASIN_CONVERGENCE_M) >= BASIN_QUORUM
        out[variant] = BasinCurve(variant=variant, displacements=displacements,
                                  mean_errors=mean_errs, converged=conv)
        log.info("basin sweep %s: width %.3g m", variant,
                 basin_width(out[variant]))
    return out


def basin_width(curve: BasinCurve) -> float:
    """Largest swept displacement whose direction quorum converged."""
    hits = curve.displacements[curve.converged]
    return float(hits.max()) if len(hits) else 0.0
