"""Shared fixtures and brute-force oracles.

The nearest-field oracle here is deliberately dumb: for every pixel it scans
every seed and keeps the smallest squared distance, breaking ties by row-major
seed order.  O(H*W*N), trustworthy, and completely independent of the scan
tricks used by the production kernels.
"""

import numpy as np
import pytest

from snnf_vo import CameraIntrinsics, Pose, se3_exp


def brute_force_nnf(mask):
    """Exact nearest-seed field by exhaustive scan.

    Returns (seed_u, seed_v, dist2) matching the kernel contract: int32
    coordinates, int64 squared distances, -1 seeds and max int64 where the
    mask is empty.
    """
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    seed_u = np.full((h, w), -1, dtype=np.int32)
    seed_v = np.full((h, w), -1, dtype=np.int32)
    dist2 = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
    vs, us = np.nonzero(mask)
    if vs.size == 0:
        return seed_u, seed_v, dist2
    # Row-major order guarantees the first argmin hit is the tie winner.
    order = np.argsort(vs.astype(np.int64) * w + us.astype(np.int64))
    vs = vs[order].astype(np.int64)
    us = us[order].astype(np.int64)
    vv, uu = np.mgrid[0:h, 0:w]
    d2 = (uu[..., None] - us) ** 2 + (vv[..., None] - vs) ** 2
    best = np.argmin(d2, axis=-1)
    seed_u[:] = us[best].astype(np.int32)
    seed_v[:] = vs[best].astype(np.int32)
    dist2[:] = np.take_along_axis(d2, best[..., None], axis=-1)[..., 0]
    return seed_u, seed_v, dist2


def random_mask(rng, h, w, density):
    return (rng.random((h, w)) < density).astype(np.uint8)


def random_pose(rng, max_angle=np.pi * 0.9, max_trans=2.0):
    """Uniform-direction random pose with rotation angle below max_angle."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    omega = axis * rng.uniform(0.0, max_angle)
    t = rng.uniform(-max_trans, max_trans, size=3)
    return se3_exp(np.concatenate([t, omega]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cam():
    return CameraIntrinsics(fx=300.0, fy=310.0, cx=160.0, cy=120.0)


@pytest.fixture
def identity_pose():
    return Pose.identity()
