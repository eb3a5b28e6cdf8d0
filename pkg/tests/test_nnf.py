"""Nearest-neighbor field tests against a brute-force oracle.

The production kernels (compiled and numpy fallback) must agree with the
exhaustive scan bit for bit, including the row-major tie rule.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnf_vo import (
    DimensionError,
    EmptySeedsError,
    NoMatchError,
    OutOfBoundsError,
    backend_name,
    build_annf,
    build_snnf,
    lookup,
    lookup_batch,
)
from snnf_vo.nnf import _edt_numpy
from conftest import brute_force_nnf, random_mask

try:
    from snnf_vo import _edt as _edt_cython
except ImportError:
    _edt_cython = None


def _check_against_oracle(mask, kernel):
    su, sv, d2 = kernel(np.ascontiguousarray(mask, dtype=np.uint8))
    osu, osv, od2 = brute_force_nnf(mask)
    assert np.array_equal(d2, od2)
    assert np.array_equal(su, osu)
    assert np.array_equal(sv, osv)


class TestKernelExactness:
    @pytest.mark.parametrize("shape,density", [
        ((1, 1), 1.0),
        ((1, 17), 0.2),
        ((23, 1), 0.3),
        ((16, 16), 0.05),
        ((31, 47), 0.01),
        ((31, 47), 0.5),
        ((64, 64), 0.002),
    ])
    def test_numpy_matches_brute_force(self, shape, density):
        rng = np.random.default_rng(hash(shape) % 2**32)
        for trial in range(6):
            mask = random_mask(rng, *shape, density)
            if not mask.any():
                mask[shape[0] // 2, shape[1] // 2] = 1
            _check_against_oracle(mask, _edt_numpy.nearest_field)

    def test_single_seed_field(self):
        mask = np.zeros((9, 13), dtype=np.uint8)
        mask[4, 7] = 1
        su, sv, d2 = _edt_numpy.nearest_field(mask)
        assert (su == 7).all() and (sv == 4).all()
        vv, uu = np.mgrid[0:9, 0:13]
        assert np.array_equal(d2, (uu - 7) ** 2 + (vv - 4) ** 2)

    def test_full_mask_zero_distance(self):
        mask = np.ones((6, 6), dtype=np.uint8)
        su, sv, d2 = _edt_numpy.nearest_field(mask)
        assert (d2 == 0).all()
        vv, uu = np.mgrid[0:6, 0:6]
        assert np.array_equal(su, uu) and np.array_equal(sv, vv)

    def test_tie_breaks_row_major(self):
        # Two seeds equidistant from the middle column: (v=0,u=0) and (v=0,u=2)
        # around query u=1 tie left; (0,1) and (2,1) around (1,1) tie up.
        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[0, 0] = mask[0, 2] = 1
        su, sv, _ = _edt_numpy.nearest_field(mask)
        assert su[0, 1] == 0 and sv[0, 1] == 0
        assert su[2, 1] == 0 and sv[2, 1] == 0

        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[0, 1] = mask[2, 1] = 1
        su, sv, _ = _edt_numpy.nearest_field(mask)
        assert sv[1, 1] == 0  # row 0 beats row 2 at equal distance

    def test_diagonal_tie(self):
        # Four corner seeds, center pixel ties all; row-major winner is (0,0).
        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[0, 0] = mask[0, 2] = mask[2, 0] = mask[2, 2] = 1
        su, sv, _ = _edt_numpy.nearest_field(mask)
        assert su[1, 1] == 0 and sv[1, 1] == 0

    @given(st.integers(min_value=0, max_value=10**9))
    @settings(max_examples=60, deadline=None)
    def test_property_random_masks(self, seed):
        rng = np.random.default_rng(seed)
        h = int(rng.integers(1, 24))
        w = int(rng.integers(1, 24))
        mask = random_mask(rng, h, w, float(rng.uniform(0.02, 0.6)))
        if not mask.any():
            mask[int(rng.integers(h)), int(rng.integers(w))] = 1
        _check_against_oracle(mask, _edt_numpy.nearest_field)


@pytest.mark.skipif(_edt_cython is None, reason="compiled kernel not built")
class TestBackendEquivalence:
    def test_bit_identical_outputs(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            h = int(rng.integers(1, 60))
            w = int(rng.integers(1, 60))
            mask = random_mask(rng, h, w, float(rng.uniform(0.01, 0.7)))
            if not mask.any():
                mask[0, 0] = 1
            a = _edt_cython.nearest_field(np.ascontiguousarray(mask))
            b = _edt_numpy.nearest_field(mask)
            for x, y in zip(a, b):
                assert np.array_equal(x, y)
                assert x.dtype == y.dtype

    def test_cython_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            mask = random_mask(rng, 32, 32, 0.08)
            if not mask.any():
                mask[3, 3] = 1
            _check_against_oracle(mask, _edt_cython.nearest_field)

    def test_backend_name_reports(self):
        assert backend_name() in ("cython", "python")


class TestBuildAnnf:
    def test_round_trip_distances(self, rng):
        seeds = np.array([[3, 4], [10, 2], [0, 0]])
        f = build_annf(seeds, 16, 8)
        assert f.n_seeds == 3 and not f.empty
        # Distance at a seed cell is zero; field dist is sqrt of oracle d2.
        _, _, od2 = brute_force_nnf(self._mask_from(seeds, 16, 8))
        assert np.allclose(f.dist, np.sqrt(od2))

    @staticmethod
    def _mask_from(seeds, w, h):
        m = np.zeros((h, w), dtype=np.uint8)
        m[seeds[:, 1], seeds[:, 0]] = 1
        return m

    def test_duplicate_seeds_collapse(self):
        f = build_annf(np.array([[2, 2], [2, 2]]), 5, 5)
        assert f.n_seeds == 1

    def test_empty_seeds(self):
        with pytest.raises(EmptySeedsError):
            build_annf(np.empty((0, 2)), 4, 4)

    def test_bad_shape(self):
        with pytest.raises(DimensionError):
            build_annf(np.array([[1, 2, 3]]), 4, 4)

    def test_out_of_bounds_seed(self):
        with pytest.raises(OutOfBoundsError):
            build_annf(np.array([[4, 0]]), 4, 4)
        with pytest.raises(OutOfBoundsError):
            build_annf(np.array([[-1, 0]]), 4, 4)


class TestBuildSnnf:
    def test_per_class_independence(self, rng):
        planes = np.zeros((3, 12, 12), dtype=bool)
        planes[0, 2, 2] = True
        planes[1, 9, 9] = True
        planes[2, 5, 5] = True
        s = build_snnf(planes)
        assert s.class_count == 3
        assert s.seed_counts == (1, 1, 1)
        for c, f in enumerate(s.fields):
            assert f.label == c
            assert (f.seed_u == np.nonzero(planes[c])[1][0]).all()

    def test_empty_class_flagged(self):
        planes = np.zeros((2, 6, 6), dtype=bool)
        planes[0, 1, 1] = True
        s = build_snnf(planes)
        assert not s.fields[0].empty
        assert s.fields[1].empty
        with pytest.raises(NoMatchError):
            lookup(s.fields[1], (2.0, 2.0))

    def test_all_empty_raises(self):
        with pytest.raises(EmptySeedsError):
            build_snnf(np.zeros((2, 6, 6), dtype=bool))

    def test_bad_rank(self):
        with pytest.raises(DimensionError):
            build_snnf(np.zeros((6, 6), dtype=bool))

    def test_threads_match_serial(self, rng):
        planes = rng.random((4, 40, 37)) < 0.05
        planes[:, 0, 0] = True
        a = build_snnf(planes, threads=1)
        b = build_snnf(planes, threads=4)
        for fa, fb in zip(a.fields, b.fields):
            assert np.array_equal(fa.seed_u, fb.seed_u)
            assert np.array_equal(fa.seed_v, fb.seed_v)
            assert np.array_equal(fa.dist, fb.dist)

    def test_semantic_distance_dominates_global(self, rng):
        # Restricting candidates to one class can only increase the distance.
        planes = rng.random((3, 32, 32)) < 0.04
        planes[0, 0, 0] = True
        planes[1, 16, 16] = True
        planes[2, 31, 31] = True
        s = build_snnf(planes)
        union = build_annf(np.argwhere(planes.any(axis=0))[:, ::-1], 32, 32)
        for f in s.fields:
            if f.empty:
                continue
            assert (f.dist >= union.dist - 1e-12).all()


class TestLookup:
    def test_subpixel_distance_exact(self):
        f = build_annf(np.array([[5, 5]]), 10, 10)
        (su, sv), d = lookup(f, (5.25, 5.5))
        assert (su, sv) == (5, 5)
        assert d == pytest.approx(np.hypot(0.25, 0.5), abs=1e-12)

    def test_query_rounds_to_cell(self):
        # Two seeds; query at u=6.6 rounds to cell 7 whose seed is the right one.
        f = build_annf(np.array([[0, 0], [9, 0]]), 10, 1)
        (su, sv), _ = lookup(f, (6.6, 0.0))
        assert su == 9

    def test_out_of_grid_raises(self):
        f = build_annf(np.array([[1, 1]]), 4, 4)
        with pytest.raises(OutOfBoundsError):
            lookup(f, (4.0, 0.0))
        with pytest.raises(OutOfBoundsError):
            lookup(f, (0.0, -0.51))

    def test_lookup_batch_masks(self):
        f = build_annf(np.array([[1, 1]]), 4, 4)
        uv = np.array([[1.0, 1.0], [9.0, 0.0], [-3.0, 0.0], [2.5, 1.5]])
        seeds, dist, valid = lookup_batch(f, uv)
        assert valid.tolist() == [True, False, False, True]
        assert seeds[0].tolist() == [1, 1]
        assert dist[0] == 0.0
        assert dist[3] == pytest.approx(np.hypot(1.5, 0.5))

    def test_lookup_batch_empty_field(self):
        planes = np.zeros((2, 4, 4), dtype=bool)
        planes[0, 0, 0] = True
        s = build_snnf(planes)
        seeds, dist, valid = lookup_batch(s.fields[1], np.array([[1.0, 1.0]]))
        assert not valid.any()
        assert np.isinf(dist).all()

    def test_batch_agrees_with_scalar(self, rng):
        mask = random_mask(rng, 20, 30, 0.1)
        mask[0, 0] = 1
        f = build_annf(np.argwhere(mask)[:, ::-1], 30, 20)
        uv = rng.uniform([0, 0], [29.49, 19.49], size=(50, 2))
        seeds, dist, valid = lookup_batch(f, uv)
        assert valid.all()
        for i in range(50):
            (su, sv), d = lookup(f, uv[i])
            assert (seeds[i] == [su, sv]).all()
            assert dist[i] == pytest.approx(d, abs=1e-12)
