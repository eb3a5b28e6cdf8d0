"""Procedural wireframe scenes with exact per-pixel ground truth.

Scenes are sparse 3D line segments with class labels, rendered without
occlusion handling at 1 px width, so edge sets are unambiguous and every
rendered pixel carries an analytically exact inverse depth. The grayscale
channel is a smooth radial ramp with one intensity band per class, which
keeps gradient-magnitude residuals informative.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .edgemap import SemanticEdgeMap
from .errors import ConfigError
from .geometry import CameraIntrinsics, Pose

__all__ = ["SceneModel", "RenderOutput", "build_scene", "render_view",
           "generate_trajectory"]

log = logging.getLogger("snnf_vo.synthetic")

_Z_NEAR = 0.05


@dataclass(frozen=True)
class SceneModel:
    """3D line segments (M, 2, 3) in meters with per-segment class ids."""

    segments: np.ndarray
    classes: np.ndarray
    class_count: int

    def __post_init__(self):
        seg = np.asarray(self.segments, dtype=np.float64)
        cls = np.asarray(self.classes, dtype=np.int64)
        if seg.ndim != 3 or seg.shape[1:] != (2, 3) or cls.shape != (seg.shape[0],):
            raise ConfigError(
                f"bad scene arrays: segments {seg.shape}, classes {cls.shape}")
        if not np.isfinite(seg).all():
            raise ConfigError("scene endpoints must be finite")
        if seg.shape[0] and (cls.min() < 0 or cls.max() >= self.class_count):
            raise ConfigError("class id outside [0, class_count)")
        object.__setattr__(self, "segments", seg)
        object.__setattr__(self, "classes", cls)

    @property
    def n_segments(self) -> int:
        return self.segments.shape[0]


@dataclass(frozen=True)
class RenderOutput:
    """One rendered view: binary class planes, exact inverse depth, gray."""

    edges: SemanticEdgeMap
    inv_depth: np.ndarray     # (H, W), NaN on non-edge cells
    gray: np.ndarray          # (H, W) in [0, 1]
    pose: Pose                # camera-to-world


def _cube_edges(center, half):
    corners = center + half * (np.array(
        [[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)],
        dtype=np.float64))
    segs = []
    for a in range(8):
        for b in range(a + 1, 8):
            if sum(corners[a] != corners[b]) == 1:
                segs.append((corners[a], corners[b]))
    return segs


_SCENE_DEFAULTS = {
    "cube_grid": dict(nx=3, ny=2, nz=3, size=1.0, spacing_x=3.0,
                      spacing_y=2.4, spacing_z=5.0, z0=6.0, classes=2,
                      jitter=0.15),
    "ambiguity_grating": dict(n_lines=9, spacing=1.2, z0=10.0, length=4.0,
                              n_anchors=3, anchor_gap=1.8),
    "corridor": dict(length=40.0, width=4.0, height=3.0, hoop_every=5.0,
                     classes=3),
}


def build_scene(kind: str, seed: int = 0, **params) -> SceneModel:
    """Deterministic labeled wireframe for (kind, seed, params).

    Kinds: cube_grid (jittered lattice of labeled cubes), ambiguity_grating
    (two classes of interleaved parallel vertical lines closer than typical
    initial reprojection error, plus a few horizontal anchor lines), and
    corridor (longitudinal rails with labeled hoops).
    """
    if kind not in _SCENE_DEFAULTS:
        raise ConfigError(f"unknown scene kind {kind!r}")
    p = dict(_SCENE_DEFAULTS[kind])
    unknown = set(params) - set(p)
    if unknown:
        raise ConfigError(f"unknown {kind} params: {sorted(unknown)}")
    for key, value in params.items():
        # count-like params keep their integer type; 3.0 is fine, 3.5 is not
        try:
            if isinstance(p[key], int) and float(value) != int(value):
                raise ConfigError(f"{kind} param {key} must be an integer, "
                                  f"got {value!r}")
            p[key] = type(p[key])(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{kind} param {key}: bad value {value!r}") from None
    kind_tag = sum(kind.encode())
    rng = np.random.default_rng(np.random.SeedSequence((kind_tag, seed)))
    segs, cls = [], []

    if kind == "cube_grid":
        if min(p["nx"], p["ny"], p["nz"]) < 1 or p["size"] <= 0 or p["z0"] <= 0:
            raise ConfigError("cube_grid counts, size and z0 must be positive")
        if p["classes"] < 1:
            raise ConfigError("cube_grid needs at least one class")
        idx = 0
        for iz in range(p["nz"]):
            for iy in range(p["ny"]):
                for ix in range(p["nx"]):
                    c = np.array([
                        (ix - (p["nx"] - 1) / 2) * p["spacing_x"],
                        (iy - (p["ny"] - 1) / 2) * p["spacing_y"],
                        p["z0"] + iz * p["spacing_z"]])
                    c += rng.uniform(-p["jitter"], p["jitter"], 3)
                    for a, b in _cube_edges(c, p["size"] / 2):
                        segs.append((a, b))
                        cls.append(idx % p["classes"])
                    idx += 1
        n_classes = min(p["classes"], idx)

    elif kind == "ambiguity_grating":
        if p["n_lines"] < 2 or p["spacing"] <= 0 or p["z0"] <= 0 or p["length"] <= 0:
            raise ConfigError("grating needs >= 2 lines and positive dimensions")
        n = p["n_lines"]
        half = p["length"] / 2
        x0 = float(rng.uniform(-0.1, 0.1)) - (n - 1) / 2 * p["spacing"]
        z = p["z0"]
        for k in range(n):
            x = x0 + k * p["spacing"]
            segs.append(((x, -half, z), (x, half, z)))
            cls.append(k % 2)
        xl, xr = x0, x0 + (n - 1) * p["spacing"]
        for k in range(p["n_anchors"]):
            y = (k - (p["n_anchors"] - 1) / 2) * p["anchor_gap"]
            segs.append(((xl, y, z), (xr, y, z)))
            cls.append(k % 2)
        n_classes = 2

    else:  # corridor
        if min(p["length"], p["width"], p["height"], p["hoop_every"]) <= 0:
            raise ConfigError("corridor dimensions must be positive")
        if p["classes"] < 2:
            raise ConfigError("corridor needs at least two classes")
        hw, hh, ln = p["width"] / 2, p["height"] / 2, p["length"]
        for sx in (-hw, hw):
            for sy in (-hh, hh):
                segs.append(((sx, sy, 0.0), (sx, sy, ln)))
                cls.append(0)
        k = 0
        z = p["hoop_every"]
        while z <= ln:
            quad = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
            for i in range(4):
                a, b = quad[i], quad[(i + 1) % 4]
                segs.append(((a[0], a[1], z), (b[0], b[1], z)))
                cls.append(1 + k % (p["classes"] - 1))
            k += 1
            z += p["hoop_every"]
        n_classes = p["classes"]

    arr = np.array([(a, b) for a, b in segs], dtype=np.float64)
    return SceneModel(segments=arr, classes=np.array(cls), class_count=n_classes)


def _project_point(P, K):
    return np.array([K.fx * P[0] / P[2] + K.cx, K.fy * P[1] / P[2] + K.cy])


def _clip_to_image(pa, pb, width, height):
    """Parameter window [t0, t1] of the 2D segment inside the padded image."""
    t0, t1 = 0.0, 1.0
    d = pb - pa
    for ax, lim in ((0, width), (1, height)):
        lo, hi = -1.0, float(lim)
        if abs(d[ax]) < 1e-12:
            if not (lo <= pa[ax] <= hi):
                return None
            continue
        ta = (lo - pa[ax]) / d[ax]
        tb = (hi - pa[ax]) / d[ax]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def render_view(scene: SceneModel, pose: Pose, K: CameraIntrinsics,
                width: int, height: int) -> RenderOutput:
    """Rasterize a view from a camera-to-world pose.

    Segments are clipped in 3D to the near plane, drawn with an integer
    DDA at 1 px width, and every touched pixel stores the inverse depth of
    the segment point whose projection is closest to that pixel center
    (inverse depth is affine along the projected segment, so this is
    exact). Overlaps keep the nearest surface; no hidden-line removal.
    """
    if width < 2 or height < 2:
        raise ConfigError(f"image size {width}x{height} too small")
    C = scene.class_count
    planes = np.zeros((C, height, width), dtype=bool)
    invd = np.zeros((height, width))
    T_c_w = pose.inverse()
    for seg, c in zip(scene.segments, scene.classes):
        a = T_c_w.apply(seg[0])
        b = T_c_w.apply(seg[1])
        za, zb = a[2], b[2]
        if za < _Z_NEAR and zb < _Z_NEAR:
            continue
        # 3D clip against the near plane
        if za < _Z_NEAR or zb < _Z_NEAR:
            t = (_Z_NEAR - za) / (zb - za)
            mid = a + t * (b - a)
            if za < _Z_NEAR:
                a = mid
            else:
                b = mid
        pa = _project_point(a, K)
        pb = _project_point(b, K)
        win = _clip_to_image(pa, pb, width, height)
        if win is None:
            continue
        t0, t1 = win
        span = (pb - pa) * (t1 - t0)
        n = int(np.ceil(max(abs(span[0]), abs(span[1])))) + 1
        t = t0 + (t1 - t0) * np.linspace(0.0, 1.0, n)
        pts = pa[None, :] + t[:, None] * (pb - pa)[None, :]
        ui = np.round(pts[:, 0]).astype(np.intp)
        vi = np.round(pts[:, 1]).astype(np.intp)
        ok = (ui >= 0) & (ui < width) & (vi >= 0) & (vi < height)
        if not ok.any():
            continue
        ui, vi = ui[ok], vi[ok]
        d2 = pb - pa
        den = float(d2 @ d2)
        centers = np.stack([ui, vi], axis=1).astype(np.float64)
        if den < 1e-12:
            ts = np.zeros(len(ui))
        else:
            ts = np.clip(((centers - pa) @ d2) / den, 0.0, 1.0)
        di = (1.0 - ts) / a[2] + ts / b[2]
        planes[c, vi, ui] = True
        np.maximum.at(invd, (vi, ui), di)
    edge_any = planes.any(axis=0)
    if not edge_any.any():
        log.warning("empty render: no scene geometry projects into the image")
    invd = np.where(edge_any, invd, np.nan)
    uu, vv = np.meshgrid(np.arange(width), np.arange(height))
    r = np.hypot((uu - K.cx) / width, (vv - K.cy) / height)
    gray = 0.2 + 0.3 * r / max(float(r.max()), 1e-12)
    for c in range(C):
        gray[planes[c]] = 0.6 + 0.4 * (c + 1) / C
    emap = SemanticEdgeMap(planes=planes.astype(np.float64))
    return RenderOutput(edges=emap, inv_depth=invd, gray=gray, pose=pose)


def _yaw(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def generate_trajectory(kind: str, n: int, *, step: float = 0.2,
                        angle: float = math.radians(20.0)) -> list:
    """Deterministic camera-to-world pose sequence starting at identity.

    dolly translates along +z, lateral along +x, arc follows a constant
    curvature turn of `angle` radians total with `step` meters of arc per
    frame; heading stays tangent to the circle.
    """
    if n < 1:
        raise ConfigError("need at least one pose")
    if kind == "dolly":
        return [Pose(translation=np.array([0.0, 0.0, k * step])) for k in range(n)]
    if kind == "lateral":
        return [Pose(translation=np.array([k * step, 0.0, 0.0])) for k in range(n)]
    if kind != "arc":
        raise ConfigError(f"unknown trajectory kind {kind!r}")
    if n == 1:
        return [Pose.identity()]
    dtheta = angle / (n - 1)
    radius = step * (n - 1) / angle if angle != 0 else math.inf
    poses = []
    for k in range(n):
        th = k * dtheta
        if math.isinf(radius):
            t = np.array([0.0, 0.0, k * step])
        else:
            t = radius * np.array([1.0 - math.cos(th), 0.0, math.sin(th)])
        poses.append(Pose(rotation=_yaw(th), translation=t))
    return poses
