"""Edge-cloud alignment over SE(3) against per-class nearest-neighbor fields.

The energy is a Huber-robustified sum of edge terms (distance from each
warped reference edge pixel to its nearest same-class current edge pixel,
one term per set class bit) plus an optional gradient-magnitude
photometric term, combined as lambda_edge * E_edge + lambda_photo *
E_photo. Conventions, stated once:

- Energy uses the squared-distance Huber cost: r**2 inside gamma,
  gamma * (2|r| - gamma) outside. The Huber norm applies to the residual
  magnitude (the 2-vector norm in point-to-point mode).
- Minimization alternates correspondence refresh with one damped
  Gauss-Newton step on the frozen problem; a step is accepted only if it
  strictly decreases the frozen-correspondence energy, otherwise damping
  grows tenfold up to 1e7.
- Updates are left-multiplicative: pose <- se3_exp(delta) @ pose.
- Edge terms whose warp leaves the grid, or whose match exceeds
  max_correspondence_dist, contribute the constant saturated cost
  huber_cost(max_correspondence_dist) so the energy stays comparable
  across poses; the same constant is charged for photometric terms that
  leave the bilinear interior. Points with no valid reference gradient
  sample never enter the photometric term.
- Tangent directions for point-to-tangent residuals come from the matched
  current-frame edge pixel; matches without a defined tangent fall back
  to point-to-point.
- The photometric term runs over every cloud point with a valid reference
  gradient sample, labeled or supportive alike.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .edgemap import EdgeCloud
from .errors import (ConfigError, EmptyCloudError, NumericError,
                     RankDeficiencyError)
from .geometry import (CameraIntrinsics, Pose, back_project, project_batch,
                       se3_exp, warp_jacobian_batch)
from .image import (bilinear_sample, bilinear_slope, downsample2x,
                    edge_normal_map, gradient_magnitude, in_interior)
from .nnf import SemanticFieldSet, build_annf, build_snnf, lookup_batch

__all__ = [
    "RegistrationConfig", "RegistrationResult", "LevelDiagnostics",
    "FrameData", "huber_weight", "huber_cost", "edge_residual",
    "photo_residual", "evaluate_energy", "register", "register_pyramid",
]

_DAMPING_MAX = 1e7
_MIN_ROWS = 6


@dataclass(frozen=True)
class RegistrationConfig:
    huber_gamma: float = 3.0
    max_iterations: int = 50
    update_tolerance: float = 1e-6
    pyramid_levels: int = 3
    lambda_edge: float = 1.0
    lambda_photo: float = 0.25
    point_to_tangent: bool = True
    damping_init: float = 1e-6
    max_correspondence_dist: float = 30.0

    def __post_init__(self):
        if not self.huber_gamma > 0:
            raise ConfigError("huber_gamma must be positive")
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be at least 1")
        if self.lambda_edge < 0 or self.lambda_photo < 0:
            raise ConfigError("energy weights must be non-negative")
        if not self.lambda_edge + self.lambda_photo > 0:
            raise ConfigError("at least one energy weight must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if not self.update_tolerance > 0:
            raise ConfigError("update_tolerance must be positive")
        if self.damping_init < 0:
            raise ConfigError("damping_init must be non-negative")
        if not self.max_correspondence_dist > 0:
            raise ConfigError("max_correspondence_dist must be positive")


@dataclass(frozen=True)
class LevelDiagnostics:
    """Per-pyramid-level solve record."""

    level: int
    iterations: int
    converged: bool
    final_energy: float
    inlier_fraction: float
    mean_edge_flow: float
    n_rows: int
    n_dropped: int
    # (before, after) frozen-correspondence energy per iteration; after <= before
    energy_steps: tuple = ()


@dataclass(frozen=True)
class RegistrationResult:
    pose: Pose
    final_energy: float
    iterations_used: int
    inlier_fraction: float
    converged: bool
    mean_edge_flow: float
    levels: tuple = ()


@dataclass(frozen=True)
class FrameData:
    """Current-frame inputs for pyramid registration."""

    class_planes: np.ndarray          # (C, H, W) binary edge planes
    gray: np.ndarray | None = None    # (H, W) grayscale in [0, 1]


def huber_weight(r, gamma: float):
    """IRLS weight of the Huber cost: 1 inside gamma, gamma/|r| outside."""
    a = np.abs(r)
    return np.where(a <= gamma, 1.0, gamma / np.maximum(a, 1e-300))


def huber_cost(r, gamma: float):
    """Huber cost under the squared-distance convention (r**2 inside gamma)."""
    a = np.abs(r)
    return np.where(a <= gamma, a * a, gamma * (2.0 * a - gamma))


def _field_terms(fields):
    """Uniform view of semantic or global matching: (class id, field, bit)."""
    if isinstance(fields, SemanticFieldSet):
        return [(c, fields.fields[c], np.uint64(1 << c))
                for c in range(fields.class_count)]
    return [("global", fields, None)]


def _union_seed_mask(fields) -> np.ndarray:
    per = fields.fields if isinstance(fields, SemanticFieldSet) else (fields,)
    mask = np.zeros((per[0].height, per[0].width), dtype=bool)
    for f in per:
        if not f.empty:
            mask |= f.dist == 0
    return mask


class _FrozenProblem:
    """Correspondences frozen at one pose: energies and GN normal equations."""

    def __init__(self, P_ref, weight, cfg, K, grad_cur,
                 pp_idx, pp_seed, tn_idx, tn_seed, tn_n,
                 ph_idx, ph_gref, dropped_weight, n_edge_terms,
                 n_edge_usable, n_dropped):
        self.P_ref = P_ref
        self.weight = weight
        self.cfg = cfg
        self.K = K
        self.grad_cur = grad_cur
        self.pp_idx = pp_idx
        self.pp_seed = pp_seed
        self.tn_idx = tn_idx
        self.tn_seed = tn_seed
        self.tn_n = tn_n
        self.ph_idx = ph_idx
        self.ph_gref = ph_gref
        self.n_edge_terms = n_edge_terms
        self.n_edge_usable = n_edge_usable
        self.n_dropped = n_dropped
        sat = float(huber_cost(cfg.max_correspondence_dist, cfg.huber_gamma))
        self.const_cost = dropped_weight * sat
        self._sat = sat

    @property
    def n_rows(self) -> int:
        return 2 * len(self.pp_idx) + len(self.tn_idx) + len(self.ph_idx)

    def _project(self, pose: Pose):
        uv, in_front = project_batch(pose.apply(self.P_ref), self.K)
        return uv, in_front

    def energy(self, pose: Pose) -> float:
        cfg = self.cfg
        uv, ok = self._project(pose)
        total = self.const_cost
        if len(self.pp_idx):
            r = np.linalg.norm(uv[self.pp_idx] - self.pp_seed, axis=1)
            c = np.where(ok[self.pp_idx], huber_cost(r, cfg.huber_gamma), self._sat)
            total += cfg.lambda_edge * float(np.dot(self.weight[self.pp_idx], c))
        if len(self.tn_idx):
            r = np.einsum("ni,ni->n", self.tn_n, uv[self.tn_idx] - self.tn_seed)
            c = np.where(ok[self.tn_idx], huber_cost(r, cfg.huber_gamma), self._sat)
            total += cfg.lambda_edge * float(np.dot(self.weight[self.tn_idx], c))
        if len(self.ph_idx):
            h, w = self.grad_cur.shape
            inside = ok[self.ph_idx] & in_interior(uv[self.ph_idx], w, h)
            r = bilinear_sample(self.grad_cur, uv[self.ph_idx]) - self.ph_gref
            c = np.where(inside, huber_cost(r, cfg.huber_gamma), self._sat)
            total += cfg.lambda_photo * float(np.dot(self.weight[self.ph_idx], c))
        return total

    def normal_equations(self, pose: Pose):
        """Accumulate H, g in a fixed term order so results are bit-stable."""
        cfg = self.cfg
        P_w = pose.apply(self.P_ref)
        uv, ok = project_batch(P_w, self.K)
        # rows of points behind the camera are never indexed; keep them finite
        Jw = warp_jacobian_batch(np.where(ok[:, None], P_w, (0.0, 0.0, 1.0)),
                                 self.K)
        H = np.zeros((6, 6))
        g = np.zeros(6)
        if len(self.pp_idx):
            r = uv[self.pp_idx] - self.pp_seed
            w = (cfg.lambda_edge * self.weight[self.pp_idx]
                 * huber_weight(np.linalg.norm(r, axis=1), cfg.huber_gamma))
            J = Jw[self.pp_idx]
            H += np.einsum("n,nri,nrj->ij", w, J, J)
            g += np.einsum("n,nri,nr->i", w, J, r)
        if len(self.tn_idx):
            r = np.einsum("ni,ni->n", self.tn_n, uv[self.tn_idx] - self.tn_seed)
            J = np.einsum("ni,nij->nj", self.tn_n, Jw[self.tn_idx])
            w = (cfg.lambda_edge * self.weight[self.tn_idx]
                 * huber_weight(r, cfg.huber_gamma))
            H += np.einsum("n,ni,nj->ij", w, J, J)
            g += np.einsum("n,ni,n->i", w, J, r)
        if len(self.ph_idx):
            p = uv[self.ph_idx]
            r = bilinear_sample(self.grad_cur, p) - self.ph_gref
            J = np.einsum("ni,nij->nj", bilinear_slope(self.grad_cur, p),
                          Jw[self.ph_idx])
            w = (cfg.lambda_photo * self.weight[self.ph_idx]
                 * huber_weight(r, cfg.huber_gamma))
            H += np.einsum("n,ni,nj->ij", w, J, J)
            g += np.einsum("n,ni,n->i", w, J, r)
        return H, g

    def edge_flow(self, pose: Pose, uv_ref) -> float:
        idx = np.concatenate([self.pp_idx, self.tn_idx])
        if len(idx) == 0:
            return 0.0
        uv, _ = self._project(pose)
        return float(np.mean(np.linalg.norm(uv[idx] - uv_ref[idx], axis=1)))

    @property
    def inlier_fraction(self) -> float:
        if self.n_edge_terms == 0:
            return 0.0
        return self.n_edge_usable / self.n_edge_terms


def _associate(P_ref, uv_ref, class_mask, weight, fields, normals,
               grad_cur, g_ref, pose, K, cfg) -> _FrozenProblem:
    """Freeze correspondences at `pose` into a solvable problem."""
    uv, in_front = project_batch(pose.apply(P_ref), K)
    pp_idx, pp_seed = [], []
    tn_idx, tn_seed, tn_n = [], [], []
    dropped_weight = 0.0
    n_terms = 0
    n_usable = 0
    n_dropped = 0
    for _, fld, bit in _field_terms(fields):
        member = class_mask != 0 if bit is None else (class_mask & bit) != 0
        sel = np.nonzero(member)[0]
        if len(sel) == 0:
            continue
        n_terms += len(sel)
        if fld.empty:
            n_dropped += len(sel)
            dropped_weight += cfg.lambda_edge * float(weight[sel].sum())
            continue
        seeds, dist, valid = lookup_batch(fld, uv[sel])
        good = in_front[sel] & valid & (dist <= cfg.max_correspondence_dist)
        bad = sel[~good]
        n_dropped += len(bad)
        dropped_weight += cfg.lambda_edge * float(weight[bad].sum())
        keep = sel[good]
        skeep = seeds[good].astype(np.float64)
        n_usable += len(keep)
        if cfg.point_to_tangent and normals is not None and len(keep):
            nrm = normals[seeds[good, 1], seeds[good, 0]]
            has_n = np.isfinite(nrm).all(axis=1)
            tn_idx.append(keep[has_n])
            tn_seed.append(skeep[has_n])
            tn_n.append(nrm[has_n])
            pp_idx.append(keep[~has_n])
            pp_seed.append(skeep[~has_n])
        else:
            pp_idx.append(keep)
            pp_seed.append(skeep)
    if g_ref is not None and grad_cur is not None and cfg.lambda_photo > 0:
        cand = np.nonzero(np.isfinite(g_ref))[0]
        h, w = grad_cur.shape
        inside = in_front[cand] & in_interior(uv[cand], w, h)
        ph_idx = cand[inside]
        ph_gref = g_ref[ph_idx]
        out = cand[~inside]
        n_dropped += len(out)
        dropped_weight += cfg.lambda_photo * float(weight[out].sum())
    else:
        ph_idx = np.zeros(0, dtype=np.intp)
        ph_gref = np.zeros(0)

    def cat(parts, width=None):
        if not parts:
            if width is None:
                return np.zeros(0, dtype=np.intp)
            return np.zeros((0, width))
        return np.concatenate(parts)

    return _FrozenProblem(
        P_ref, weight, cfg, K, grad_cur,
        cat(pp_idx), cat(pp_seed, 2), cat(tn_idx), cat(tn_seed, 2),
        cat(tn_n, 2), ph_idx, ph_gref, dropped_weight,
        n_terms, n_usable, n_dropped)


def _prepare_photo(grads, uv_ref, cfg):
    if grads is None or cfg.lambda_photo <= 0:
        return None, None
    grad_ref, grad_cur = grads
    h, w = grad_ref.shape
    g_ref = bilinear_sample(grad_ref, uv_ref)
    g_ref = np.where(in_interior(uv_ref, w, h), g_ref, np.nan)
    return g_ref, np.asarray(grad_cur, dtype=np.float64)


def _register_arrays(uv_ref, inv_depth, class_mask, weight, fields, grads,
                     init_pose, K, cfg, normals, level) -> tuple:
    if uv_ref.shape[0] == 0:
        raise EmptyCloudError("cannot register an empty cloud")
    P_ref = back_project(uv_ref, inv_depth, K)
    g_ref, grad_cur = _prepare_photo(grads, uv_ref, cfg)
    if cfg.point_to_tangent and normals is None:
        normals = edge_normal_map(_union_seed_mask(fields))
    pose = init_pose
    damping = cfg.damping_init
    steps = []
    converged = False
    iterations = 0
    prob = None
    for _ in range(cfg.max_iterations):
        prob = _associate(P_ref, uv_ref, class_mask, weight, fields, normals,
                          grad_cur, g_ref, pose, K, cfg)
        if prob.n_rows < _MIN_ROWS:
            raise RankDeficiencyError(
                f"{prob.n_rows} usable residual rows (< {_MIN_ROWS})")
        e0 = prob.energy(pose)
        if not np.isfinite(e0):
            raise NumericError(f"non-finite energy {e0!r}")
        H, g = prob.normal_equations(pose)
        if not (np.isfinite(H).all() and np.isfinite(g).all()):
            raise NumericError("non-finite normal equations")
        iterations += 1
        accepted = False
        while True:
            try:
                delta = np.linalg.solve(H + damping * np.eye(6), -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and not np.isfinite(delta).all():
                delta = None
            if delta is not None and np.linalg.norm(delta) < cfg.update_tolerance:
                converged = True
                steps.append((e0, e0))
                break
            if delta is not None:
                trial = se3_exp(delta) @ pose
                e1 = prob.energy(trial)
                if np.isfinite(e1) and e1 < e0:
                    # frozen-correspondence energy never increases on accept
                    assert e1 <= e0
                    steps.append((e0, e1))
                    pose = trial
                    damping = max(damping / 10.0, cfg.damping_init)
                    accepted = True
                    break
            if damping >= _DAMPING_MAX:
                break
            damping = damping * 10.0 if damping > 0 else 1e-8
        if converged or not accepted:
            break
    diag = LevelDiagnostics(
        level=level, iterations=iterations, converged=converged,
        final_energy=prob.energy(pose),
        inlier_fraction=prob.inlier_fraction,
        mean_edge_flow=prob.edge_flow(pose, uv_ref),
        n_rows=prob.n_rows, n_dropped=prob.n_dropped,
        energy_steps=tuple(steps))
    return pose, diag


def _result_from_levels(pose, levels) -> RegistrationResult:
    last = levels[-1]
    return RegistrationResult(
        pose=pose, final_energy=last.final_energy,
        iterations_used=sum(d.iterations for d in levels),
        inlier_fraction=last.inlier_fraction, converged=last.converged,
        mean_edge_flow=last.mean_edge_flow, levels=tuple(levels))


def register(cloud: EdgeCloud, fields, grads, init_pose: Pose,
             K: CameraIntrinsics, cfg: RegistrationConfig, *,
             normals=None) -> RegistrationResult:
    """Align a reference edge cloud to current-frame fields, single level.

    `fields` is a SemanticFieldSet (per-class matching) or a single
    NearestNeighborField (class-blind matching over all labeled points).
    `grads` is an optional (grad_ref, grad_cur) pair of gradient-magnitude
    images enabling the photometric term. `normals` overrides the
    current-frame tangent map, otherwise it is derived from field seeds.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot register an empty cloud")
    pose, diag = _register_arrays(
        cloud.uv, cloud.inv_depth, cloud.class_mask, cloud.weight,
        fields, grads, init_pose, K, cfg, normals, level=0)
    return _result_from_levels(pose, [diag])


def evaluate_energy(cloud: EdgeCloud, fields, grads, pose: Pose,
                    K: CameraIntrinsics, cfg: RegistrationConfig, *,
                    normals=None):
    """Total energy at `pose` with correspondences taken at `pose`.

    Returns (total, breakdown) where the breakdown reports edge and
    photometric subtotals, the constant cost charged for dropped terms,
    and term counts.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot evaluate an empty cloud")
    P_ref = back_project(cloud.uv, cloud.inv_depth, K)
    g_ref, grad_cur = _prepare_photo(grads, cloud.uv, cfg)
    if cfg.point_to_tangent and normals is None:
        normals = edge_normal_map(_union_seed_mask(fields))
    prob = _associate(P_ref, cloud.uv, cloud.class_mask, cloud.weight,
                      fields, normals, grad_cur, g_ref, pose, K, cfg)
    total = prob.energy(pose)
    photo_only = replace(cfg, lambda_edge=0.0) if cfg.lambda_photo > 0 else None
    edge_only = replace(cfg, lambda_photo=0.0) if cfg.lambda_edge > 0 else None

    def subtotal(sub_cfg):
        if sub_cfg is None:
            return 0.0
        p = _associate(P_ref, cloud.uv, cloud.class_mask, cloud.weight,
                       fields, normals, grad_cur, g_ref, pose, K, sub_cfg)
        return p.energy(pose)

    breakdown = {
        "total": total,
        "edge": subtotal(edge_only),
        "photo": subtotal(photo_only),
        "dropped_cost": prob.const_cost,
        "n_edge_terms": prob.n_edge_terms,
        "n_photo_terms": int(len(prob.ph_idx)),
        "n_dropped": prob.n_dropped,
    }
    return total, breakdown


def edge_residual(point, pose: Pose, K: CameraIntrinsics, fields,
                  cfg: RegistrationConfig, *, normals=None):
    """Residual terms for one edge point: list of (residual, jacobian, class).

    Point-to-point terms carry a 2-vector residual with a (2, 6) Jacobian;
    point-to-tangent terms carry a scalar with a (6,) Jacobian. Terms whose
    warp leaves the grid or whose match exceeds the gate are omitted.
    Jacobians are for the frozen matched seed.
    """
    if cfg.point_to_tangent and normals is None:
        normals = edge_normal_map(_union_seed_mask(fields))
    uv_ref = np.array([[point.u, point.v]])
    P_ref = back_project(uv_ref, np.array([point.inverse_depth]), K)
    P_w = pose.apply(P_ref)
    uv, in_front = project_batch(P_w, K)
    if not in_front[0]:
        return []
    Jw = warp_jacobian_batch(P_w, K)[0]
    out = []
    for cls, fld, bit in _field_terms(fields):
        labeled = point.class_mask != 0 if bit is None else bool(
            np.uint64(point.class_mask) & bit)
        if not labeled or fld.empty:
            continue
        seeds, dist, valid = lookup_batch(fld, uv)
        if not valid[0] or dist[0] > cfg.max_correspondence_dist:
            continue
        seed = seeds[0].astype(np.float64)
        r = uv[0] - seed
        n = None
        if cfg.point_to_tangent and normals is not None:
            cand = normals[seeds[0, 1], seeds[0, 0]]
            if np.isfinite(cand).all():
                n = cand
        if n is None:
            out.append((r.copy(), Jw.copy(), cls))
        else:
            out.append((float(n @ r), n @ Jw, cls))
    return out


def photo_residual(grad_ref: np.ndarray, grad_cur: np.ndarray, point,
                   pose: Pose, K: CameraIntrinsics):
    """Gradient-magnitude residual and (6,) Jacobian for one point.

    Returns None when the warp leaves the bilinear interior or the
    reference position has no valid gradient sample.
    """
    uv_ref = np.array([[point.u, point.v]])
    hr, wr = grad_ref.shape
    if not in_interior(uv_ref, wr, hr)[0]:
        return None
    P_ref = back_project(uv_ref, np.array([point.inverse_depth]), K)
    P_w = pose.apply(P_ref)
    uv, in_front = project_batch(P_w, K)
    h, w = grad_cur.shape
    if not in_front[0] or not in_interior(uv, w, h)[0]:
        return None
    r = float(bilinear_sample(grad_cur, uv)[0] - bilinear_sample(grad_ref, uv_ref)[0])
    J = bilinear_slope(grad_cur, uv)[0] @ warp_jacobian_batch(P_w, K)[0]
    return r, J


def _scale_seed_planes(planes: np.ndarray, stride: int) -> np.ndarray:
    """Map edge seeds onto the coarser pixel-center grid."""
    if stride == 1:
        return planes
    c, h, w = planes.shape
    hs, ws = h // stride, w // stride
    out = np.zeros((c, hs, ws), dtype=bool)
    for i in range(c):
        vs, us = np.nonzero(planes[i])
        u2 = np.round((us + 0.5) / stride - 0.5).astype(np.intp)
        v2 = np.round((vs + 0.5) / stride - 0.5).astype(np.intp)
        ok = (u2 >= 0) & (u2 < ws) & (v2 >= 0) & (v2 < hs)
        out[i, v2[ok], u2[ok]] = True
    return out


def _downsample_levels(img: np.ndarray, n: int):
    """Pyramid of n images, index L downsampled by 2**L."""
    out = [np.asarray(img, dtype=np.float64)]
    for _ in range(n - 1):
        out.append(downsample2x(out[-1]))
    return out


def register_pyramid(cloud: EdgeCloud, frame: FrameData, init_pose: Pose,
                     K: CameraIntrinsics, cfg: RegistrationConfig, *,
                     ref_gray: np.ndarray | None = None, semantic: bool = True,
                     threads: int = 1) -> RegistrationResult:
    """Coarse-to-fine registration over factor-2 levels.

    Level L rebuilds fields from seeds mapped onto the 2**L-strided grid
    and scales images, cloud pixels and intrinsics to match; each level's
    solution initializes the next. With pyramid_levels=1 this reduces
    exactly to `register` on the full-resolution inputs. The photometric
    term needs both `frame.gray` and `ref_gray`.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot register an empty cloud")
    planes = np.asarray(frame.class_planes) != 0
    use_photo = (cfg.lambda_photo > 0 and frame.gray is not None
                 and ref_gray is not None)
    if use_photo:
        grays_cur = _downsample_levels(frame.gray, cfg.pyramid_levels)
        grays_ref = _downsample_levels(ref_gray, cfg.pyramid_levels)
    pose = init_pose
    levels = []
    for lv in range(cfg.pyramid_levels - 1, -1, -1):
        s = 2 ** lv
        planes_l = _scale_seed_planes(planes, s)
        if semantic:
            fields = build_snnf(planes_l, threads=threads)
        else:
            vs, us = np.nonzero(planes_l.any(axis=0))
            fields = build_annf(np.stack([us, vs], axis=1),
                                planes_l.shape[2], planes_l.shape[1])
        grads = None
        if use_photo:
            grads = (gradient_magnitude(grays_ref[lv]),
                     gradient_magnitude(grays_cur[lv]))
        uv = cloud.uv if s == 1 else (cloud.uv + 0.5) / s - 0.5
        pose, diag = _register_arrays(
            uv, cloud.inv_depth, cloud.class_mask, cloud.weight, fields,
            grads, pose, K.scaled(s), cfg, None, level=lv)
        levels.append(diag)
    return _result_from_levels(pose, levels)
