"""Time the compiled conv2d kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from srecnn import kernels

CASES = [
    # (C_in, N, H, W, C_out, p)
    (2, 8, 64, 64, 32, 3),
    (32, 8, 64, 64, 8, 3),
    (32, 8, 64, 64, 32, 3),
    (8, 8, 64, 64, 8, 5),
    (2, 4, 16, 16, 4, 3),
]


def bench(case, repeat, rng):
    cin, n, h, w, cout, p = case
    x = rng.standard_normal((cin, n, h, w))
    k = rng.standard_normal((cout, cin, p, p))
    g = rng.standard_normal((cout, n, h, w))
    ops = {
        "forward": lambda: kernels.conv2d_forward(x, k),
        "grad_input": lambda: kernels.conv2d_grad_input(g, k),
        "grad_kernel": lambda: kernels.conv2d_grad_kernel(g, x, p),
    }
    rows = []
    for op, fn in ops.items():
        times = {}
        for backend in kernels.available_backends():
            prev = kernels.set_backend(backend)
            try:
                fn()
                times[backend] = min(timeit.repeat(fn, number=1, repeat=repeat))
            finally:
                kernels.set_backend(prev)
        rows.append((op, times))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available")
    print(f"{'case':28s} {'op':12s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for case in CASES:
        label = "x".join(map(str, case[:4])) + f" -> {case[4]} p{case[5]}"
        for op, times in bench(case, args.repeat, rng):
            cols = " ".join(f"{times[b] * 1e3:8.2f}ms" for b in backends)
            speed = (f"{times['python'] / times['compiled']:8.2f}x"
                     if "compiled" in times else "")
            print(f"{label:28s} {op:12s} {cols} {speed}")


if __name__ == "__main__":
    main()
