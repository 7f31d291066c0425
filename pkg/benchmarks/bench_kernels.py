"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N wall time for each backend,
the speedup, and the largest absolute difference between their outputs.
"""

import argparse
import timeit

import numpy as np

from specgan import _fallback
from specgan.geometry import icosphere
from specgan.mesh_sampler import normalize_mesh
from specgan.sh_core import grid_directions

try:
    from specgan import _kernels
except ImportError:
    _kernels = None


def _cases(rng):
    x = np.cos(np.linspace(0.01, np.pi - 0.01, 4096))
    mesh = normalize_mesh(icosphere(4))
    dirs = grid_directions(32)
    a = rng.normal(size=(2000, 3))
    b = rng.normal(size=(2000, 3))
    p = rng.normal(size=(128, 3))
    q = rng.normal(size=(128, 3))
    cost = np.sqrt(((p[:, None] - q[None]) ** 2).sum(-1))
    return {
        "legendre_table l=64 n=4096": ("legendre_table", (64, x)),
        "raycast 1280 tri x 4096 rays": ("raycast", (mesh.vertices, mesh.faces, dirs)),
        "nn_sqdist 2000 x 2000": ("nn_sqdist", (a, b)),
        "auction_assign 128 x 128": ("auction_assign", (cost, 1e-4)),
    }


def _maxdiff(x, y):
    if isinstance(x, tuple):
        return max(_maxdiff(u, v) for u, v in zip(x, y))
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    both = np.isnan(x) & np.isnan(y)
    return float(np.abs(np.where(both, 0.0, x - y)).max())


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for label, (name, call_args) in cases.items():
        fb = getattr(_fallback, name)
        t_py = min(timeit.repeat(lambda: fb(*call_args), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{label:32s} {t_py:11.4f} {'n/a':>11s}")
            continue
        cy = getattr(_kernels, name)
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat))
        diff = _maxdiff(fb(*call_args), cy(*call_args))
        print(f"{label:32s} {t_py:11.4f} {t_cy:11.4f} {t_py / t_cy:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
