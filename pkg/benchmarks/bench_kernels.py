"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--rays N] [--points N] [--samples N] [--repeat K]

Each workload runs once per available backend; the script checks that both
backends return identical results and prints the best-of-K wall time.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from openparts import fixtures, kernels
from openparts.geometry import build_bvh
from openparts.sampling import farthest_point_sample, sample_surface


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def ray_workload(n_rays: int, seed: int):
    mesh = fixtures.dresser(6, columns=2).mesh
    index = build_bvh(mesh)
    rng = np.random.default_rng(seed)
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2
    radius = float(np.linalg.norm(hi - lo))
    d = rng.normal(size=(n_rays, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    origins = center - radius * d + rng.uniform(-0.2, 0.2, (n_rays, 3)) * radius
    return mesh.n_triangles, lambda: index.ray_cast_many(origins, d)


def fps_workload(n_points: int, n_samples: int, seed: int):
    mesh = fixtures.dresser(4).mesh
    pts = sample_surface(mesh, n_points, seed=seed).positions
    return lambda: farthest_point_sample(pts, n_samples)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rays", type=int, default=20_000)
    ap.add_argument("--points", type=int, default=50_000)
    ap.add_argument("--samples", type=int, default=1_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    n_tris, rays = ray_workload(args.rays, args.seed)
    fps = fps_workload(args.points, args.samples, args.seed)
    workloads = [
        (f"ray cast ({args.rays} rays, {n_tris} triangles)", rays),
        (f"FPS ({args.samples} of {args.points} points)", fps),
    ]
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'workload':<44}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in workloads:
        times, results = [], []
        for b in backends:
            with kernels.use_backend(b):
                t, out = best_of(fn, args.repeat)
            times.append(t)
            results.append(out)
        for other in results[1:]:
            same = (all(np.array_equal(x, y) for x, y in zip(results[0], other))
                    if isinstance(other, tuple) else np.array_equal(results[0], other))
            if not same:
                raise SystemExit(f"{name}: backends disagree")
        speed = f"{times[-1] / times[0]:>9.1f}x" if len(times) > 1 else f"{'n/a':>10}"
        print(f"{name:<44}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
