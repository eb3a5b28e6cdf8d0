"""Benchmark the compiled distance-transform kernel against the numpy fallback.

Both backends must produce bit-identical fields; this script verifies that
on every timed input and reports per-size speedups.

    python3 benchmarks/bench_edt.py [--sizes 64,128,256,512] [--repeats 5]
"""

import argparse
import time

import numpy as np


def _best_of(fn, mask, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(mask)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _row(label, mask, kernels, repeats):
    results = {}
    times = {}
    for name, fn in kernels.items():
        times[name], results[name] = _best_of(fn, mask, repeats)
    if len(results) == 2:
        a, b = results.values()
        for x, y in zip(a, b):
            assert np.array_equal(x, y), f"backend mismatch on {label}"
    seeds = int(np.count_nonzero(mask))
    cols = [f"{label:22s}", f"{seeds:7d} seeds"]
    for name in kernels:
        cols.append(f"{name} {times[name] * 1e3:8.2f} ms")
    if len(times) == 2:
        py, cy = times["python"], times["cython"]
        cols.append(f"speedup {py / cy:5.1f}x")
    print("  ".join(cols))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128,256,512")
    ap.add_argument("--densities", default="0.01,0.05,0.2")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    from snnf_vo.nnf import _edt_numpy
    kernels = {"python": _edt_numpy.nearest_field}
    try:
        from snnf_vo import _edt
        kernels["cython"] = _edt.nearest_field
    except ImportError:
        print("compiled kernel not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    for size in (int(s) for s in args.sizes.split(",")):
        for density in (float(d) for d in args.densities.split(",")):
            mask = (rng.random((size, size)) < density).astype(np.uint8)
            _row(f"random {size}x{size} p={density}", mask, kernels,
                 args.repeats)

    # realistic seed geometry: rendered wireframe edge masks at VGA
    from snnf_vo import CameraIntrinsics, Pose, build_scene, render_view
    from snnf_vo.edgemap import classify_edges
    K = CameraIntrinsics(fx=520.0, fy=520.0, cx=319.5, cy=239.5)
    view = render_view(build_scene("cube_grid", seed=0), Pose.identity(),
                       K, 640, 480)
    planes = classify_edges(view.edges, 0.5)
    for c, plane in enumerate(planes):
        _row(f"cube_grid 640x480 c{c}", plane.astype(np.uint8), kernels,
             args.repeats)


if __name__ == "__main__":
    main()
