"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat N]

Both variants are always importable, so one process measures both paths
regardless of SERVOBENCH_DISABLE_NUMBA. A closed-loop servo run is timed
last; that one uses whichever path the environment flag selects.
"""
import argparse
import timeit

import numpy as np

from servobench import _accel, kernels
from servobench.harness import canned_specs, run_servo
from servobench.world import load_world


def bench(label, fn, repeat):
    fn()  # warm-up / JIT compile
    t = min(timeit.repeat(fn, number=repeat, repeat=5)) / repeat
    print(f"  {label:8s} {t * 1e6:10.2f} us/call")
    return t


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    n = ap.parse_args().repeat

    world = load_world()
    dh, rot = world.model.dh, world.camera.rotation
    rng = np.random.default_rng(0)
    r = world.home + rng.uniform(-0.3, 0.3, 6)
    rs = world.home + rng.uniform(-0.3, 0.3, (2048, 6))
    centers = world.home + rng.uniform(-0.5, 0.5, (64, 6))
    widths = np.full(64, 0.8)

    cases = [
        ("dh_position", kernels._dh_position_nb, kernels._dh_position_np, (dh, r)),
        ("dh_position_batch[2048]", kernels._dh_position_batch_nb, kernels._dh_position_batch_np, (dh, rs)),
        ("observed_jacobian", kernels._observed_jacobian_nb, kernels._observed_jacobian_np, (dh, rot, r, 1e-6)),
        ("rbf_activations[64]", kernels._rbf_activations_nb, kernels._rbf_activations_np, (r, centers, widths)),
        ("rbf_activations_batch[2048x64]", kernels._rbf_activations_batch_nb, kernels._rbf_activations_batch_np, (rs, centers, widths)),
    ]
    for name, fast, slow, args in cases:
        print(name)
        tn = bench("numba", lambda: fast(*args), n)
        tp = bench("numpy", lambda: slow(*args), n)
        print(f"  speedup  {tp / tn:10.1f}x")

    spec = canned_specs(world, estimator={"kind": "analytic"})[0].with_changes(stop_on_success=False, duration=10.0)
    path = "numba" if _accel.USE_NUMBA else "numpy"
    print(f"servo run, 500 steps, analytic Jacobian ({path} path)")
    bench("run", lambda: run_servo(spec, world), 3)


if __name__ == "__main__":
    main()
