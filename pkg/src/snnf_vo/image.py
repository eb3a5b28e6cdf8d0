"""Grayscale image helpers: sampling, gradients, pyramids, edge normals.

Images are float64 arrays of shape (height, width) indexed [v, u]; sample
positions are subpixel (u, v) with the cell (i, j) centered at u = i, v = j.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def check_image(img: np.ndarray, min_size: int = 2) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < min_size or img.shape[1] < min_size:
        raise DimensionError(f"expected image of at least {min_size}x{min_size}, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise DimensionError("image contains non-finite values")
    return img


def in_interior(uv: np.ndarray, width: int, height: int) -> np.ndarray:
    """Mask of positions where a full bilinear footprint exists."""
    u, v = uv[..., 0], uv[..., 1]
    return (u >= 0) & (u <= width - 1 - 1e-9) & (v >= 0) & (v <= height - 1 - 1e-9)


def bilinear_sample(img: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at (N, 2) positions; caller keeps uv in the interior."""
    uv = np.asarray(uv, dtype=np.float64)
    u, v = uv[..., 0], uv[..., 1]
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    u0 = np.clip(u0, 0, img.shape[1] - 2)
    v0 = np.clip(v0, 0, img.shape[0] - 2)
    fu = u - u0
    fv = v - v0
    i00 = img[v0, u0]
    i01 = img[v0, u0 + 1]
    i10 = img[v0 + 1, u0]
    i11 = img[v0 + 1, u0 + 1]
    return (i00 * (1 - fu) + i01 * fu) * (1 - fv) + (i10 * (1 - fu) + i11 * fu) * fv


def bilinear_slope(img: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Exact (du, dv) derivative of the bilinear interpolant at (N, 2) positions.

    This is the derivative of the surface :func:`bilinear_sample` evaluates,
    so finite differences of the sampled values reproduce it to rounding
    error away from cell boundaries.
    """
    uv = np.asarray(uv, dtype=np.float64)
    u, v = uv[..., 0], uv[..., 1]
    u0 = np.clip(np.floor(u).astype(np.intp), 0, img.shape[1] - 2)
    v0 = np.clip(np.floor(v).astype(np.intp), 0, img.shape[0] - 2)
    fu = u - u0
    fv = v - v0
    i00 = img[v0, u0]
    i01 = img[v0, u0 + 1]
    i10 = img[v0 + 1, u0]
    i11 = img[v0 + 1, u0 + 1]
    gu = (i01 - i00) * (1 - fv) + (i11 - i10) * fv
    gv = (i10 - i00) * (1 - fu) + (i11 - i01) * fu
    return np.stack([gu, gv], axis=-1)


def central_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (d/du, d/dv): central differences inside, one-sided at borders."""
    img = check_image(img)
    gu = np.empty_like(img)
    gv = np.empty_like(img)
    gu[:, 1:-1] = (img[:, 2:] - img[:, :-2]) / 2.0
    gu[:, 0] = img[:, 1] - img[:, 0]
    gu[:, -1] = img[:, -1] - img[:, -2]
    gv[1:-1, :] = (img[2:, :] - img[:-2, :]) / 2.0
    gv[0, :] = img[1, :] - img[0, :]
    gv[-1, :] = img[-1, :] - img[-2, :]
    return gu, gv


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Gradient-magnitude image from central differences."""
    img = check_image(img, min_size=3)
    gu, gv = central_gradients(img)
    return np.hypot(gu, gv)


def downsample2x(img: np.ndarray) -> np.ndarray:
    """Halve resolution by 2x2 block averaging; odd trailing rows/cols are dropped."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return (img[0::2, 0::2] + img[0::2, 1::2] + img[1::2, 0::2] + img[1::2, 1::2]) / 4.0


def edge_normal_map(edge_mask: np.ndarray) -> np.ndarray:
    """Unit normals of edge structures, shape (H, W, 2); NaN where undefined.

    Uses the dominant eigenvector of a 3x3-aggregated structure tensor of
    the edge indicator. Unlike the raw intensity gradient, this stays
    well-defined on 1-px-wide chains, where the center pixel of a ridge has
    a near-zero central difference. Normals are defined up to sign.
    """
    ind = np.asarray(edge_mask, dtype=np.float64)
    if ind.ndim != 2:
        raise DimensionError(f"expected 2-D mask, got shape {ind.shape}")
    gu, gv = central_gradients(ind) if min(ind.shape) >= 2 else (ind * 0, ind * 0)
    # Structure tensor entries, box-filtered over 3x3.
    a = _box3(gu * gu)
    b = _box3(gu * gv)
    c = _box3(gv * gv)
    # Dominant eigenvector of [[a, b], [b, c]].
    disc = np.sqrt(np.maximum((a - c) ** 2 + 4 * b * b, 0.0))
    lam = (a + c + disc) / 2.0
    # b == 0 means the tensor is already diagonal and the eigenvector is an
    # axis; picking it explicitly avoids the degenerate (lam - c, b) = (0, 0).
    diag = np.abs(b) <= 1e-15
    axis_x = diag & (a >= c)
    axis_y = diag & (a < c)
    nx = np.where(diag, np.where(axis_x, 1.0, 0.0), b)
    ny = np.where(diag, np.where(axis_y, 1.0, 0.0), lam - a)
    norm = np.hypot(nx, ny)
    good = (lam > 1e-12) & (norm > 1e-12)
    out = np.full(ind.shape + (2,), np.nan)
    out[..., 0] = np.where(good, nx / np.where(good, norm, 1.0), np.nan)
    out[..., 1] = np.where(good, ny / np.where(good, norm, 1.0), np.nan)
    return out


def _box3(img: np.ndarray) -> np.ndarray:
    """3x3 box filter with zero padding."""
    p = np.pad(img, 1)
    return (
        p[:-2, :-2] + p[:-2, 1:-1] + p[:-2, 2:]
        + p[1:-1, :-2] + p[1:-1, 1:-1] + p[1:-1, 2:]
        + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:]
    )
