"""Exact Euclidean nearest-neighbor fields over edge-pixel seed sets.

One field per semantic class (the per-class field set) restricts matching
to same-class edges; a single global field over the union of all seeds is
the class-blind baseline. Construction runs on a compiled kernel when the
``snnf_vo._edt`` extension is available and falls back to a pure-numpy
implementation otherwise; both produce bit-identical fields. Set
``SNNF_VO_EDT=python`` or ``=cython`` to force a backend.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import (ConfigError, DimensionError, EmptySeedsError,
                      NoMatchError, OutOfBoundsError)

__all__ = [
    "NearestNeighborField", "SemanticFieldSet", "build_annf", "build_snnf",
    "lookup", "lookup_batch", "backend_name",
]


def _load_backend():
    forced = os.environ.get("SNNF_VO_EDT", "auto").lower()
    if forced in ("auto", "cython", ""):
        try:
            from .. import _edt  # compiled extension

            return _edt.nearest_field, "cython"
        except ImportError:
            if forced == "cython":
                raise ConfigError("SNNF_VO_EDT=cython but the compiled kernel is not built")
    elif forced not in ("python", "numpy"):
        raise ConfigError(f"unknown SNNF_VO_EDT value {forced!r}")
    from . import _edt_numpy

    return _edt_numpy.nearest_field, "python"


_NEAREST_FIELD, _BACKEND = _load_backend()


def backend_name() -> str:
    """Name of the distance-transform backend selected at import."""
    return _BACKEND


@dataclass(frozen=True)
class NearestNeighborField:
    """Per-cell nearest seed and exact Euclidean distance for one seed set."""

    width: int
    height: int
    seed_u: np.ndarray        # (H, W) int32
    seed_v: np.ndarray        # (H, W) int32
    dist: np.ndarray          # (H, W) float64, exact cell-center distances
    label: int | str = "global"
    n_seeds: int = 0

    @property
    def empty(self) -> bool:
        return self.n_seeds == 0


@dataclass(frozen=True)
class SemanticFieldSet:
    """One field per class over a shared grid; empty classes are flagged."""

    fields: tuple[NearestNeighborField, ...]
    width: int
    height: int

    @property
    def class_count(self) -> int:
        return len(self.fields)

    @property
    def seed_counts(self) -> tuple[int, ...]:
        return tuple(f.n_seeds for f in self.fields)


def _build_field(mask: np.ndarray, label) -> NearestNeighborField:
    h, w = mask.shape
    n = int(np.count_nonzero(mask))
    if n == 0:
        zero = np.zeros((h, w), dtype=np.int32)
        return NearestNeighborField(width=w, height=h, seed_u=zero, seed_v=zero,
                                    dist=np.full((h, w), np.inf), label=label, n_seeds=0)
    seed_u, seed_v, dist2 = _NEAREST_FIELD(np.ascontiguousarray(mask, dtype=np.uint8))
    dist = np.sqrt(dist2.astype(np.float64))
    return NearestNeighborField(width=w, height=h, seed_u=seed_u, seed_v=seed_v,
                                dist=dist, label=label, n_seeds=n)


def build_annf(seeds: np.ndarray, width: int, height: int) -> NearestNeighborField:
    """Global field from an (N, 2) array of integer (u, v) seed pixels."""
    seeds = np.asarray(seeds)
    if seeds.size == 0:
        raise EmptySeedsError("cannot build a field from an empty seed set")
    if seeds.ndim != 2 or seeds.shape[1] != 2:
        raise DimensionError(f"expected (N, 2) seeds, got shape {seeds.shape}")
    u, v = seeds[:, 0].astype(np.int64), seeds[:, 1].astype(np.int64)
    if np.any((u < 0) | (u >= width) | (v < 0) | (v >= height)):
        raise OutOfBoundsError("seed outside the grid")
    mask = np.zeros((height, width), dtype=np.uint8)
    mask[v, u] = 1
    return _build_field(mask, "global")


def build_snnf(class_planes: np.ndarray, *, threads: int = 1) -> SemanticFieldSet:
    """Per-class fields from (C, H, W) binary planes.

    Classes without seeds yield a flagged empty field whose lookups raise;
    at least one class must be non-empty. Per-class builds are independent
    and run on ``threads`` workers when asked.
    """
    planes = np.asarray(class_planes) != 0
    if planes.ndim != 3 or planes.shape[0] < 1:
        raise DimensionError(f"expected (C, H, W) planes, got shape {planes.shape}")
    if not planes.any():
        raise EmptySeedsError("all classes have empty seed sets")
    c, h, w = planes.shape
    masks = [np.ascontiguousarray(planes[i], dtype=np.uint8) for i in range(c)]
    if threads > 1 and c > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fields = list(pool.map(lambda i: _build_field(masks[i], i), range(c)))
    else:
        fields = [_build_field(masks[i], i) for i in range(c)]
    return SemanticFieldSet(fields=tuple(fields), width=w, height=h)


def lookup(field: NearestNeighborField, p) -> tuple[tuple[int, int], float]:
    """Nearest seed for one subpixel query.

    The query rounds to the closest cell for seed retrieval; the reported
    distance is exact from the subpixel position to that seed.
    """
    if field.empty:
        raise NoMatchError(f"field {field.label!r} has no seeds")
    u, v = float(p[0]), float(p[1])
    ui, vi = int(round(u)), int(round(v))
    if not (0 <= ui < field.width and 0 <= vi < field.height):
        raise OutOfBoundsError(f"query ({u}, {v}) outside {field.width}x{field.height} grid")
    su = int(field.seed_u[vi, ui])
    sv = int(field.seed_v[vi, ui])
    return (su, sv), float(np.hypot(u - su, v - sv))


def lookup_batch(field: NearestNeighborField, uv: np.ndarray):
    """Vectorized lookup that masks out-of-grid queries instead of raising.

    Returns (seeds (N, 2) int32, dist (N,) float64, valid (N,) bool); rows
    with ``valid`` False have undefined seed/distance content.
    """
    if field.empty:
        n = uv.shape[0]
        return (np.zeros((n, 2), dtype=np.int32), np.full(n, np.inf),
                np.zeros(n, dtype=bool))
    uv = np.asarray(uv, dtype=np.float64)
    ui = np.round(uv[:, 0]).astype(np.int64)
    vi = np.round(uv[:, 1]).astype(np.int64)
    valid = (ui >= 0) & (ui < field.width) & (vi >= 0) & (vi < field.height)
    uis = np.where(valid, ui, 0)
    vis = np.where(valid, vi, 0)
    su = field.seed_u[vis, uis]
    sv = field.seed_v[vis, uis]
    dist = np.hypot(uv[:, 0] - su, uv[:, 1] - sv)
    return np.stack([su, sv], axis=1).astype(np.int32), dist, valid
