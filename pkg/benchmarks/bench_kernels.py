"""Compare the numba and numpy kernel backends.

Times im2col, col2im and relu_grad on the shapes of the default MNIST split
model (64-sample batch), then one full training round, under each backend.
Each backend runs in a fresh interpreter because the choice is fixed at import.

    python benchmarks/bench_kernels.py [--round-samples N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, time, sys
import numpy as np
from multivfl import kernels, protocol
from multivfl.dataio import synth_dataset

def best(fn, reps):
    fn()
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times) * 1000

rng = np.random.default_rng(0)
out = {"backend": kernels.BACKEND}
# data-owner conv: (64, 7, 28, 1) -> 32 channels; label-owner conv: (64, 28, 28, 32) stride 2
strip = rng.normal(size=(64, 7, 28, 1))
cut = rng.normal(size=(8, 28, 28, 32))
out["im2col data conv"] = best(lambda: kernels.im2col(strip, 3, 1, 1, 7, 28), 20)
out["im2col label conv (8 samples)"] = best(lambda: kernels.im2col(cut, 3, 2, 1, 14, 14), 20)
dcols = rng.normal(size=(8 * 14 * 14, 9 * 32))
out["col2im label conv (8 samples)"] = best(lambda: kernels.col2im(dcols, cut.shape, 3, 2, 1, 14, 14), 20)
act = rng.normal(size=(64, 28, 28, 32))[:, 7:14]
grad = rng.normal(size=act.shape)
out["relu_grad strip view"] = best(lambda: kernels.relu_grad(grad, act), 50)

n = int(sys.argv[1])
data = synth_dataset(0, 5 * n + 100)
world = protocol.build_world(data, None, D=4, K=5, rounds=2, samples_per_owner=n, local_lr=0.05)
protocol.run_round(world, 1)
t = time.perf_counter()
protocol.run_round(world, 2)
out[f"training round (K=5, {n} samples each)"] = (time.perf_counter() - t) * 1000
print(json.dumps(out))
"""


def run_backend(flag, samples):
    env = dict(os.environ, MULTIVFL_NUMBA=flag)
    proc = subprocess.run([sys.executable, "-c", WORKER, str(samples)], env=env, capture_output=True, text=True,
                          check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--round-samples", type=int, default=320, help="samples per label owner in the round timing")
    args = parser.parse_args()

    fast = run_backend("1", args.round_samples)
    slow = run_backend("0", args.round_samples)
    if fast["backend"] != "numba":
        print("numba is not installed; only the numpy backend is available")
    print(f"{'kernel':42s} {fast['backend']:>10s} {'numpy':>10s} {'speedup':>8s}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:42s} {fast[key]:9.2f}ms {slow[key]:9.2f}ms {slow[key] / fast[key]:7.1f}x")


if __name__ == "__main__":
    main()
