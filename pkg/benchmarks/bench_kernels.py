"""Compare the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Times both backends on the two hot loops (heightfield ray casting for one
LiDAR sweep, and a full-grid shortest-path search on a 50 m world), checks
that their outputs are bit-identical, and prints one row per kernel.
"""

import argparse
import timeit

import numpy as np

from semnav.kernels import _pykernels
from semnav.planning import PlannerConfig, planning_grid
from semnav.sim.scenarios import obstacle_course
from semnav.sim.world import WorldSpec, generate_world

try:
    from semnav.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases():
    course = obstacle_course()
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(4096, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ray_args = ((5.1, 15.2, 0.8), dirs, course.elevation, course.canopy, course.canopy_base, course.canopy_top,
                course.cell_size, 40.0)
    world = generate_world(WorldSpec(width_m=50.0, height_m=50.0, start=(5.0, 5.0), goal=(45.0, 45.0)), 0)
    grid = planning_grid(world, PlannerConfig())
    start = (int(5.0 / world.cell_size), int(5.0 / world.cell_size))
    return {
        "raycast_heightfield (4096 rays)": ("raycast_heightfield", ray_args),
        f"grid_dijkstra ({grid.shape[0]}x{grid.shape[1]} cells)": ("grid_dijkstra", (grid, start)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .` first")
        return
    print(f"{'kernel':40s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s}  identical")
    for label, (name, fargs) in cases().items():
        py_fn, c_fn = getattr(_pykernels, name), getattr(_ckernels, name)
        same = all(np.array_equal(a, b) for a, b in zip(py_fn(*fargs), c_fn(*fargs)))
        t_py = min(timeit.repeat(lambda: py_fn(*fargs), number=1, repeat=args.repeats))
        t_c = min(timeit.repeat(lambda: c_fn(*fargs), number=1, repeat=args.repeats))
        print(f"{label:40s} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:8.1f}x  {same}")


if __name__ == "__main__":
    main()
