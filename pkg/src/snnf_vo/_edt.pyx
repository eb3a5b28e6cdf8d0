# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Exact nearest-seed transform, two-pass lower-envelope form.

Row pass finds the nearest seed column per row (ties keep the smaller
column); column pass minimizes squared distance over source rows with a
lower envelope of parabolas. Envelope boundaries are exact integer
rationals compared by cross-multiplication, so results, including the
smallest row-major-index tie-break, match brute force bit for bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def nearest_field(cnp.uint8_t[:, ::1] mask):
    """Per-cell nearest seed of a binary mask.

    Returns (seed_u, seed_v) int32 grids and int64 squared distances. On
    distance ties the seed with the smallest v * W + u wins.
    """
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef long long big = <long long> (w + h + 2)

    seed_u_arr = np.empty((h, w), dtype=np.int32)
    seed_v_arr = np.empty((h, w), dtype=np.int32)
    dist2_arr = np.full((h, w), big * big * 4, dtype=np.int64)
    row_near_arr = np.empty((h, w), dtype=np.int32)
    row_d2_arr = np.empty((h, w), dtype=np.int64)
    has_seed_arr = np.zeros(h, dtype=np.uint8)

    cdef cnp.int32_t[:, ::1] seed_u = seed_u_arr
    cdef cnp.int32_t[:, ::1] seed_v = seed_v_arr
    cdef cnp.int64_t[:, ::1] dist2 = dist2_arr
    cdef cnp.int32_t[:, ::1] row_near = row_near_arr
    cdef cnp.int64_t[:, ::1] row_d2 = row_d2_arr
    cdef cnp.uint8_t[::1] has_seed = has_seed_arr

    cdef Py_ssize_t v, u, q, j, k, n_rows
    cdef long long last, nxt, dl, dr, d

    # row pass: nearest seed column per (row, u), ties to the left
    for v in range(h):
        last = -1
        for u in range(w):
            if mask[v, u]:
                last = u
                has_seed[v] = 1
            row_near[v, u] = <cnp.int32_t> last
        nxt = 2 * big
        for u in range(w - 1, -1, -1):
            if mask[v, u]:
                nxt = u
            last = row_near[v, u]
            dl = (u - last) if last >= 0 else big
            dr = (nxt - u) if nxt <= u + big else big
            if dl <= dr:
                d = dl
            else:
                d = dr
                row_near[v, u] = <cnp.int32_t> nxt
            row_d2[v, u] = d * d

    rows_arr = np.empty(h, dtype=np.int64)
    cdef cnp.int64_t[::1] rows = rows_arr
    n_rows = 0
    for v in range(h):
        if has_seed[v]:
            rows[n_rows] = v
            n_rows += 1
    if n_rows == 0:
        seed_u_arr.fill(-1)
        seed_v_arr.fill(-1)
        return seed_u_arr, seed_v_arr, dist2_arr

    vbuf_arr = np.empty(n_rows, dtype=np.int64)
    znum_arr = np.empty(n_rows + 1, dtype=np.int64)
    zden_arr = np.empty(n_rows + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] vbuf = vbuf_arr
    cdef cnp.int64_t[::1] znum = znum_arr
    cdef cnp.int64_t[::1] zden = zden_arr

    cdef long long p, qq, fq, num, den, best
    cdef Py_ssize_t win

    # column pass: lower envelope of y(v) = (v - v')^2 + row_d2[v', u]
    for u in range(w):
        k = 0
        vbuf[0] = rows[0]
        for j in range(1, n_rows):
            qq = rows[j]
            fq = row_d2[qq, u]
            while True:
                p = vbuf[k]
                num = fq + qq * qq - row_d2[p, u] - p * p
                den = 2 * (qq - p)
                # pop while the new boundary is at or left of the top one
                if k > 0 and num * zden[k] <= znum[k] * den:
                    k -= 1
                else:
                    break
            k += 1
            vbuf[k] = qq
            znum[k] = num
            zden[k] = den
        j = 0
        for v in range(h):
            # boundary ties stay on the smaller source row
            while j < k and znum[j + 1] < v * zden[j + 1]:
                j += 1
            win = <Py_ssize_t> vbuf[j]
            d = <long long> v - win
            dist2[v, u] = d * d + row_d2[win, u]
            seed_v[v, u] = <cnp.int32_t> win
            seed_u[v, u] = row_near[win, u]
    return seed_u_arr, seed_v_arr, dist2_arr
