"""Time the compiled pursuit kernel against the numpy fallback.

Both backends run the same batch of support windows from a noisy zoneplate
frame; the script reports seconds per window and the largest coefficient
difference between them.

    python3 benchmarks/bench_pursuit.py --windows 64 --repeat 3
"""

import argparse
import time

import numpy as np

from nrhdr import kernels
from nrhdr.core import make_layout
from nrhdr.recon import ReconstructionConfig, _prepare_windows, _Solver
from nrhdr.sensor import CameraModel, simulate
from nrhdr.synth import ZoneplateSpec, zoneplate


def kernel_inputs(size, layout, n_windows, cfg):
    frame = simulate(zoneplate(ZoneplateSpec(size=size)), make_layout(layout, size, size, seed=0),
                     CameraModel(), noise_seed=0)
    solver = _Solver(frame, cfg)
    b = cfg.model_block
    blocks = [(r, c) for r in range(0, size, b) for c in range(0, size, b)]
    rng = np.random.default_rng(0)
    pick = rng.choice(len(blocks), size=min(n_windows, len(blocks)), replace=False)
    origins = [blocks[i] for i in sorted(pick)]
    N0, wph, wqh, e0 = _prepare_windows(solver.maps, solver.win, solver.wq, origins, cfg.transform_size)
    return (N0, wph, wqh, solver.H, e0, cfg.max_iterations, cfg.gamma, cfg.min_residual_gain, solver.prior)


def best_time(fn, args, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--layout", choices=("regular", "nonregular"), default="nonregular")
    ap.add_argument("--windows", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = ReconstructionConfig()
    inputs = kernel_inputs(args.size, args.layout, args.windows, cfg)
    n = inputs[0].shape[0]
    t_py, (c_py, it_py, _) = best_time(kernels.pursue_batch_python, inputs, args.repeat)
    print(f"windows: {n}, T = {cfg.transform_size}, mean iterations {it_py.mean():.1f}")
    print(f"python  {t_py / n * 1e3:9.3f} ms/window")
    if kernels.BACKEND != "cython":
        print("cython  not built (pip install -e . --no-build-isolation)")
        return
    t_cy, (c_cy, it_cy, _) = best_time(kernels.get_pursue("cython"), inputs, args.repeat)
    print(f"cython  {t_cy / n * 1e3:9.3f} ms/window   speedup x{t_py / t_cy:.1f}")
    print(f"max |coefficient difference| {np.abs(c_py - c_cy).max():.2e}, "
          f"iteration counts equal: {np.array_equal(it_py, it_cy)}")


if __name__ == "__main__":
    main()
