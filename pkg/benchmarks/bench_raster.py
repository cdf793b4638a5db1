"""Time the compiled and NumPy rasterization kernels on a posed vehicle mesh.

    python3 benchmarks/bench_raster.py [--size 256] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from silrefine.geom import CameraIntrinsics, Pose, UnitQuaternion
from silrefine.harness.corpus import default_vehicles
from silrefine.mesh import transform_to_screen
from silrefine.raster import available_backends


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--depth", type=float, default=10.0)
    ap.add_argument("--sigma", type=float, default=1.5)
    args = ap.parse_args(argv)

    n = args.size
    K = CameraIntrinsics(1.25 * n, 1.25 * n, n / 2, n / 2, n, n)
    mesh = default_vehicles()[0][0]
    sm = transform_to_screen(mesh, Pose(UnitQuaternion.from_yaw(0.7), (0.0, 0.0, args.depth)), K)
    xy, faces, s = sm.xy, sm.faces, args.sigma
    grad = np.random.default_rng(0).normal(size=(n, n))

    backends = available_backends()
    rows = []
    for name, k in backends.items():
        _, arg = k.soft_max_sd(xy, faces, n, n, s)
        cases = {
            "hard_mask": lambda: k.hard_mask(xy, faces, n, n),
            "soft_accumulate": lambda: k.soft_accumulate(xy, faces, n, n, s),
            "soft_backward": lambda: k.soft_backward(xy, faces, n, n, s, grad),
            "soft_max_sd": lambda: k.soft_max_sd(xy, faces, n, n, s),
            "soft_max_backward": lambda: k.soft_max_backward(xy, faces, n, n, s, grad, arg),
        }
        for case, fn in cases.items():
            rows.append((case, name, _best_of(fn, args.repeat)))

    print(f"{mesh.n_faces} faces, {n}x{n} px, sigma {s}, best of {args.repeat}")
    print(f"{'kernel':<18} {'backend':<8} {'ms':>9} {'speedup':>8}")
    ref = {case: t for case, name, t in rows if name == "python"}
    for case, name, t in rows:
        print(f"{case:<18} {name:<8} {1e3 * t:9.2f} {ref[case] / t:8.1f}x")
    if "cython" not in backends:
        print("compiled backend not built; only the NumPy kernels were timed")


if __name__ == "__main__":
    main()
