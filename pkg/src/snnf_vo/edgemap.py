"""Multi-class edge probability maps and registration-ready edge clouds.

A :class:`SemanticEdgeMap` holds one probability plane per semantic class.
Classification thresholds the planes into per-class binary planes (a pixel
may carry several labels), and the samplers turn classified maps plus an
inverse-depth plane into an :class:`EdgeCloud` of well-distributed points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from . import image as im
from .errors import ConfigError, DimensionError, DomainError, EmptyCloudError

MAX_CLASSES = 64  # class membership is stored as a uint64 bitmask


@dataclass(frozen=True)
class SemanticEdgeMap:
    """Per-class edge probability planes over one image grid."""

    planes: np.ndarray                      # (C, H, W), values in [0, 1]
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] < 1:
            raise DimensionError(f"expected (C, H, W) planes, got shape {p.shape}")
        if p.shape[0] > MAX_CLASSES:
            raise ConfigError(f"at most {MAX_CLASSES} classes supported, got {p.shape[0]}")
        if not np.isfinite(p).all() or p.min() < 0.0 or p.max() > 1.0:
            raise DomainError("probabilities must be finite and within [0, 1]")
        if self.class_names is not None and len(self.class_names) != p.shape[0]:
            raise DimensionError("class-name table length does not match class count")
        object.__setattr__(self, "planes", p)

    @property
    def class_count(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


@dataclass(frozen=True)
class EdgePoint:
    """One sampled pixel; class_mask == 0 marks a supportive (unlabeled) point."""

    u: float
    v: float
    inverse_depth: float
    class_mask: int = 0
    weight: float = 1.0
    tangent_normal: tuple[float, float] | None = None  # unit gradient direction

    def __post_init__(self):
        if self.weight < 0:
            raise DomainError("negative point weight")
        if self.tangent_normal is not None:
            n = np.hypot(*self.tangent_normal)
            if abs(n - 1.0) > 1e-6:
                raise DomainError(f"tangent_normal must be unit length, got |n| = {n}")


@dataclass
class EdgeCloud:
    """Struct-of-arrays point cloud for one reference frame."""

    uv: np.ndarray            # (N, 2) float64 pixel coordinates
    inv_depth: np.ndarray     # (N,) float64, > 0
    class_mask: np.ndarray    # (N,) uint64; 0 for supportive points
    weight: np.ndarray        # (N,) float64, >= 0
    tangent: np.ndarray       # (N, 2) float64 unit vectors, NaN when absent
    frame_id: int = 0
    class_count: int = 1

    def __post_init__(self):
        n = self.uv.shape[0]
        shapes = (self.uv.shape, self.inv_depth.shape, self.class_mask.shape,
                  self.weight.shape, self.tangent.shape)
        if shapes != ((n, 2), (n,), (n,), (n,), (n, 2)):
            raise DimensionError(f"inconsistent cloud array shapes: {shapes}")
        if n and (np.any(self.inv_depth <= 0) or not np.isfinite(self.inv_depth).all()):
            raise DomainError("cloud inverse depths must be positive and finite")
        if n and np.any(self.weight < 0):
            raise DomainError("cloud weights must be non-negative")
        key = np.round(self.uv)
        if n and len(np.unique(key[:, 1] * (key[:, 0].max() + 1) + key[:, 0])) != n:
            raise DomainError("duplicate pixel coordinates in cloud")

    def __len__(self) -> int:
        return self.uv.shape[0]

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(self.class_mask))

    def point(self, i: int) -> EdgePoint:
        t = self.tangent[i]
        return EdgePoint(
            u=float(self.uv[i, 0]), v=float(self.uv[i, 1]),
            inverse_depth=float(self.inv_depth[i]),
            class_mask=int(self.class_mask[i]), weight=float(self.weight[i]),
            tangent_normal=None if np.isnan(t).any() else (float(t[0]), float(t[1])),
        )

    @staticmethod
    def from_points(points: list[EdgePoint], frame_id: int = 0,
                    class_count: int = 1) -> "EdgeCloud":
        n = len(points)
        uv = np.array([[p.u, p.v] for p in points]).reshape(n, 2)
        tan = np.full((n, 2), np.nan)
        for i, p in enumerate(points):
            if p.tangent_normal is not None:
                tan[i] = p.tangent_normal
        return EdgeCloud(
            uv=uv,
            inv_depth=np.array([p.inverse_depth for p in points], dtype=np.float64),
            class_mask=np.array([p.class_mask for p in points], dtype=np.uint64),
            weight=np.array([p.weight for p in points], dtype=np.float64),
            tangent=tan, frame_id=frame_id, class_count=class_count,
        )


def fuse_edge_semantics(edge_prob: np.ndarray, seg_probs: np.ndarray,
                        class_names: tuple[str, ...] | None = None) -> SemanticEdgeMap:
    """Combine a class-agnostic edge plane with per-class segmentation planes.

    Treats the two probabilities as independent, so the fused per-class
    plane is their pointwise product.
    """
    edge_prob = np.asarray(edge_prob, dtype=np.float64)
    seg_probs = np.asarray(seg_probs, dtype=np.float64)
    if seg_probs.ndim != 3 or edge_prob.ndim != 2 or seg_probs.shape[1:] != edge_prob.shape:
        raise DimensionError(
            f"plane dimensions mismatch: edge {edge_prob.shape}, seg {seg_probs.shape}")
    for name, a in (("edge", edge_prob), ("segmentation", seg_probs)):
        if not np.isfinite(a).all() or a.min() < 0 or a.max() > 1:
            raise DomainError(f"{name} probabilities must be in [0, 1]")
    return SemanticEdgeMap(planes=edge_prob[None, :, :] * seg_probs, class_names=class_names)


def classify_edges(emap: SemanticEdgeMap, tau: float) -> np.ndarray:
    """Per-class binary planes (C, H, W): plane i is True where prob_i >= tau.

    Soft association: a pixel may carry any number of labels.
    """
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"classification threshold must be in (0, 1), got {tau}")
    return emap.planes >= tau


def class_bitmask(planes: np.ndarray) -> np.ndarray:
    """Collapse (C, H, W) binary planes into a (H, W) uint64 bitmask."""
    c = planes.shape[0]
    if c > MAX_CLASSES:
        raise ConfigError(f"at most {MAX_CLASSES} classes supported")
    bits = np.zeros(planes.shape[1:], dtype=np.uint64)
    for i in range(c):
        bits |= planes[i].astype(np.uint64) << np.uint64(i)
    return bits


def detect_edges_builtin(img: np.ndarray, low: float, high: float) -> np.ndarray:
    """Fallback edge detector: gradient magnitude, thin, hysteresis-link.

    Non-maximum suppression compares each pixel with its two neighbors
    along the quantized gradient axis; the tie on equal neighbors is broken
    asymmetrically (strict against the lower-index neighbor) so ideal step
    edges thin to 1-px chains. Returns a boolean (H, W) plane.
    """
    img = im.check_image(img, min_size=3)
    if not (0 <= low <= high):
        raise ConfigError(f"thresholds must satisfy 0 <= low <= high, got {low}, {high}")
    gu, gv = im.central_gradients(img)
    mag = np.hypot(gu, gv)
    if mag.max() == 0:
        return np.zeros_like(mag, dtype=bool)

    # Quantize gradient direction into 4 axes: 0 deg, 45, 90, 135.
    angle = np.mod(np.arctan2(gv, gu), np.pi)
    sector = np.floor((angle + np.pi / 8) / (np.pi / 4)).astype(int) % 4
    pad = np.pad(mag, 1)
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}  # (dv, du) per sector
    keep = np.zeros_like(mag, dtype=bool)
    h, w = mag.shape
    vs, us = np.mgrid[0:h, 0:w]
    for s, (dv, du) in offsets.items():
        sel = sector == s
        fwd = pad[1 + vs + dv, 1 + us + du]
        bwd = pad[1 + vs - dv, 1 + us - du]
        keep |= sel & (mag > bwd) & (mag >= fwd)
    keep &= mag > 0

    weak = keep & (mag >= low)
    strong = weak & (mag >= high)
    if not strong.any():
        return np.zeros_like(weak)
    labels, _ = ndi.label(weak, structure=np.ones((3, 3), dtype=int))
    kept_labels = np.unique(labels[strong])
    return np.isin(labels, kept_labels[kept_labels > 0])


def _block_slices(width: int, height: int, grid: int):
    """Row-major (v-slice, u-slice) tiles of an approximately grid x grid split."""
    us = np.linspace(0, width, grid + 1).astype(int)
    vs = np.linspace(0, height, grid + 1).astype(int)
    for bi in range(grid):
        for bj in range(grid):
            if vs[bi + 1] > vs[bi] and us[bj + 1] > us[bj]:
                yield slice(vs[bi], vs[bi + 1]), slice(us[bj], us[bj + 1])


def _round_robin(per_block: list[np.ndarray], budget: int) -> np.ndarray:
    """Take indices one block at a time until the budget is met."""
    picked = []
    cursor = 0
    while len(picked) < budget:
        progressed = False
        for cand in per_block:
            if cursor < len(cand):
                picked.append(cand[cursor])
                progressed = True
                if len(picked) == budget:
                    break
        if not progressed:
            break
        cursor += 1
    return np.array(picked, dtype=np.int64)


def sample_edge_cloud(emap: SemanticEdgeMap, depth: np.ndarray, gray: np.ndarray,
                      budget: int, tau: float, seed: int, *,
                      frame_id: int = 0, grid: int = 8,
                      weighting: str = "uniform") -> EdgeCloud:
    """Sample up to ``budget`` classified edge pixels into a cloud.

    Pixels must carry at least one class label at threshold ``tau`` and a
    valid (positive, finite) inverse depth. Sampling is stratified over a
    ``grid`` x ``grid`` block partition and fully determined by ``seed``.
    ``gray`` provides gradient directions and optional gradient weights.
    """
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    if weighting not in ("uniform", "gradient"):
        raise ConfigError(f"unknown weighting mode {weighting!r}")
    depth = np.asarray(depth, dtype=np.float64)
    gray = im.check_image(gray, min_size=3)
    if depth.shape != (emap.height, emap.width) or gray.shape != depth.shape:
        raise DimensionError("map, depth, and image dimensions must match")

    planes = classify_edges(emap, tau)
    bits = class_bitmask(planes)
    valid = (bits != 0) & np.isfinite(depth) & (depth > 0)
    if not valid.any():
        raise EmptyCloudError("no classified edge pixels with valid inverse depth")

    rng = np.random.default_rng(seed)
    flat_idx_blocks = []
    w = emap.width
    for vsl, usl in _block_slices(emap.width, emap.height, grid):
        sub = np.argwhere(valid[vsl, usl])
        if len(sub) == 0:
            flat_idx_blocks.append(np.empty(0, dtype=np.int64))
            continue
        sub[:, 0] += vsl.start
        sub[:, 1] += usl.start
        flat = sub[:, 0] * w + sub[:, 1]
        flat_idx_blocks.append(rng.permutation(flat))
    chosen = _round_robin(flat_idx_blocks, budget)

    vs = chosen // w
    us = chosen % w
    gu, gv = im.central_gradients(gray)
    tang = np.stack([gu[vs, us], gv[vs, us]], axis=1)
    norms = np.hypot(tang[:, 0], tang[:, 1])
    ok = norms > 1e-12
    tang[ok] /= norms[ok, None]
    tang[~ok] = np.nan

    if weighting == "gradient":
        mag = np.hypot(gu[vs, us], gv[vs, us])
        weight = mag / mag.mean() if mag.mean() > 0 else np.ones_like(mag)
    else:
        weight = np.ones(len(chosen))

    return EdgeCloud(
        uv=np.stack([us, vs], axis=1).astype(np.float64),
        inv_depth=depth[vs, us],
        class_mask=bits[vs, us],
        weight=weight,
        tangent=tang,
        frame_id=frame_id,
        class_count=emap.class_count,
    )


def sample_support_pixels(grad: np.ndarray, n_edges: int, target_total: int,
                          min_support: int, seed: int, *,
                          depth: np.ndarray | None = None,
                          exclude: np.ndarray | None = None,
                          block: int = 16, margin_scale: float = 0.5) -> list[EdgePoint]:
    """Pick unlabeled high-gradient pixels to stabilize pose estimation.

    Returns max(min_support, target_total - n_edges) points (fewer only if
    the image runs out of candidates). Candidates are pixels above their
    block's median gradient plus a margin, visited block-by-block in
    descending gradient order; the seeded rng breaks ties in visiting order.
    When ``depth`` is given, pixels without a valid inverse depth are
    excluded and the returned points carry their depth values. ``exclude``
    masks out pixels already claimed (typically the classified edges).
    """
    if target_total < min_support:
        raise ConfigError("target_total must be >= min_support")
    grad = im.check_image(grad, min_size=3)
    h, w = grad.shape
    n_support = max(min_support, target_total - n_edges)
    if n_support == 0:
        return []

    usable = np.isfinite(grad)
    if exclude is not None:
        if exclude.shape != grad.shape:
            raise DimensionError("exclude mask dimensions must match the image")
        usable &= ~(np.asarray(exclude) != 0)
    if depth is not None:
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != grad.shape:
            raise DimensionError("depth plane dimensions must match the image")
        usable &= np.isfinite(depth) & (depth > 0)

    rng = np.random.default_rng(seed)
    per_block = []
    for vsl, usl in _block_slices(w, h, max(2, min(h, w) // block)):
        g = grad[vsl, usl]
        ok = usable[vsl, usl]
        if not ok.any():
            per_block.append(np.empty(0, dtype=np.int64))
            continue
        med = np.median(g[ok])
        thr = med + margin_scale * (g[ok].max() - med)
        cand = np.argwhere(ok & (g >= thr))
        cand[:, 0] += vsl.start
        cand[:, 1] += usl.start
        flat = cand[:, 0] * w + cand[:, 1]
        # Highest gradient first; rng jitters equal-gradient orderings.
        order = np.lexsort((rng.random(len(flat)), -grad.reshape(-1)[flat]))
        per_block.append(flat[order])
    chosen = _round_robin(per_block, n_support)

    if len(chosen) < n_support:
        # Flat image or heavy depth masking: top up from remaining usable
        # pixels in descending gradient order.
        mask = usable.copy().reshape(-1)
        mask[chosen] = False
        rest = np.nonzero(mask)[0]
        order = np.lexsort((rest, -grad.reshape(-1)[rest]))
        extra = rest[order][: n_support - len(chosen)]
        chosen = np.concatenate([chosen, extra])

    points = []
    for flat in chosen:
        v, u = int(flat // w), int(flat % w)
        d = float(depth[v, u]) if depth is not None else float("nan")
        points.append(EdgePoint(u=float(u), v=float(v), inverse_depth=d, class_mask=0))
    return points
