"""Compare the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--level 5] [--size 128]

Prints best-of-N wall time per kernel and backend, the speedup, and whether
both backends agree (fBm to 1e-12, rasterizer face ids exactly).
"""

import argparse
import time

import numpy as np

from shapeattr.geometry import StimulusSpec, build_stimulus
from shapeattr.noise import NoiseField, fbm_many
from shapeattr.raster import rasterize
from shapeattr.render import Camera


def best_of(fn, repeat):
    fn()  # warm-up (JIT compilation, caches)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--level", type=int, default=5, help="icosphere subdivision level")
    ap.add_argument("--size", type=int, default=128, help="image side in pixels")
    ap.add_argument("--points", type=int, default=200_000, help="fBm sample count")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, size=(args.points, 3))
    field = NoiseField(octaves=5, seed=3)

    mesh = build_stimulus(StimulusSpec("LpHigh", 8.0), args.level)
    cam = Camera.orbit(20, 15, 4.0, 40, (args.size, args.size))
    sx, sy, sz = cam.project(mesh.vertices)

    rows = []
    a = fbm_many(pts, field, "numba")
    b = fbm_many(pts, field, "numpy")
    t_nb = best_of(lambda: fbm_many(pts, field, "numba"), args.repeat)
    t_np = best_of(lambda: fbm_many(pts, field, "numpy"), args.repeat)
    rows.append((f"fbm ({args.points} pts)", t_nb, t_np, bool(np.max(np.abs(a - b)) < 1e-12)))

    fa = rasterize(sx, sy, sz, mesh.faces, args.size, args.size, "numba")[0]
    fb = rasterize(sx, sy, sz, mesh.faces, args.size, args.size, "numpy")[0]
    t_nb = best_of(lambda: rasterize(sx, sy, sz, mesh.faces, args.size, args.size, "numba"), args.repeat)
    t_np = best_of(lambda: rasterize(sx, sy, sz, mesh.faces, args.size, args.size, "numpy"), args.repeat)
    rows.append((f"rasterize ({len(mesh.faces)} faces, {args.size}px)", t_nb, t_np, bool(np.array_equal(fa, fb))))

    print(f"{'kernel':<38}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  agree")
    for name, tn, tp, ok in rows:
        print(f"{name:<38}{tn * 1e3:>10.2f}{tp * 1e3:>10.2f}{tp / tn:>8.1f}x  {ok}")


if __name__ == "__main__":
    main()
