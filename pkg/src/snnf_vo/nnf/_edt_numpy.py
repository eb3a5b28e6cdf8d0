"""Pure-numpy exact nearest-seed transform.

Same contract as the compiled kernel in ``snnf_vo._edt``: for every cell,
the exact nearest seed under Euclidean distance with ties broken toward
the smallest row-major seed index (v * width + u). Runs in O(H^2 W); the
compiled kernel is O(H W).
"""

from __future__ import annotations

import numpy as np


def nearest_field(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact nearest seed per cell.

    ``mask`` is (H, W), nonzero entries are seeds; at least one required.
    Returns (seed_u int32, seed_v int32, dist2 int64) arrays of shape (H, W).
    """
    m = np.asarray(mask) != 0
    h, w = m.shape
    big = w + h + 2  # farther than any in-grid distance

    # Pass 1, per row: nearest seed column within the row (ties -> smaller u).
    cols = np.arange(w, dtype=np.int64)
    left = np.where(m, cols, -1)
    left = np.maximum.accumulate(left, axis=1)
    dl = np.where(left >= 0, cols - left, big)
    right = np.where(m, cols, w + big)
    right = np.minimum.accumulate(right[:, ::-1], axis=1)[:, ::-1]
    dr = np.where(right < w + big, right - cols, big)
    take_left = dl <= dr
    row_dist = np.where(take_left, dl, dr)
    row_seed_u = np.where(take_left, left, right).astype(np.int64)
    row_dist2 = row_dist * row_dist

    # Pass 2, per column: minimize (v - v')^2 + row_dist2[v'] over source
    # rows v'. Ascending v' with strict improvement keeps the smallest v'
    # on ties, which combined with pass 1 realizes the row-major tie-break.
    v_targets = np.arange(h, dtype=np.int64)[:, None]
    best = np.full((h, w), np.int64(big) * big * 4, dtype=np.int64)
    best_row = np.zeros((h, w), dtype=np.int64)
    for vp in range(h):
        cand = (v_targets - vp) ** 2 + row_dist2[vp][None, :]
        upd = cand < best
        best[upd] = cand[upd]
        best_row[upd] = vp

    seed_v = best_row.astype(np.int32)
    seed_u = row_seed_u[best_row, cols[None, :]].astype(np.int32)
    return seed_u, seed_v, best
