"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because DYNODE_JIT is read at
import time. Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

_CHILD = r"""
import json, sys, timeit
import numpy as np
from dynode import synthetic
from dynode.dynamics import forward_with_tape, init_params, vjp
from dynode.toy_decoder import ToyDecoder
from dynode.training import LossWeights, TrainConfig, full_window, grad_loss

repeat = int(sys.argv[1])
p = init_params(0, 8, (64, 64, 64))
z = np.random.default_rng(0).standard_normal(8)
_, tape = forward_with_tape(p, z, 0.3)
seq = synthetic.spiral8()
win = full_window(seq.observed())
dec = ToyDecoder("mlp", 0, 8)
cfg = TrainConfig()
cases = {
    "forward": lambda: forward_with_tape(p, z, 0.3),
    "vjp": lambda: vjp(p, tape, z),
    "train_step": lambda: grad_loss(p, win, dec, LossWeights(), cfg),
}
out = {}
for name, fn in cases.items():
    fn()  # warm-up, includes compilation
    n = 2000 if name != "train_step" else 5
    out[name] = min(timeit.repeat(fn, number=n, repeat=repeat)) / n
print(json.dumps(out))
"""


def run(jit: bool, repeat: int) -> dict:
    env = dict(os.environ, DYNODE_JIT="1" if jit else "0")
    res = subprocess.run([sys.executable, "-c", _CHILD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    t0 = timeit.default_timer()
    jit, ref = run(True, args.repeat), run(False, args.repeat)
    print(f"{'kernel':<12}{'numba':>14}{'numpy':>14}{'speedup':>10}")
    for name in jit:
        a, b = jit[name], ref[name]
        print(f"{name:<12}{a * 1e6:>12.1f}us{b * 1e6:>12.1f}us{b / a:>9.1f}x")
    print(f"total wall time {timeit.default_timer() - t0:.1f}s")


if __name__ == "__main__":
    main()
