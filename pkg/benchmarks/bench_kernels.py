"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed first so numba compilation is excluded.
"""
import argparse
import timeit

import numpy as np

from sepkit import kernels


def cases(rng):
    x = rng.standard_normal(16000)
    autocorr = np.array([np.dot(x[: len(x) - k], x[k:]) for k in range(512)])
    return {
        "fft_batch 126x512": ("fft_batch", (rng.standard_normal((126, 512)) + 0j, False)),
        "overlap_add_frames 999x32": ("overlap_add_frames", (rng.standard_normal((999, 32)), 16, 16000)),
        "stack_history 2ch L_f=255": ("stack_history", (rng.standard_normal((2, 16000)), 255)),
        "truncated_delay_gram 512": ("truncated_delay_gram", (x, 512, autocorr)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if not kernels.HAS_NUMBA:
        print("numba is not installed; only the numpy kernels are available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, (name, call_args) in cases(rng).items():
        times = {}
        for backend, table in (("numpy", kernels.NUMPY_KERNELS), ("numba", kernels.NUMBA_KERNELS)):
            fn = table[name]
            fn(*call_args)
            times[backend] = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat))
        print(f"{label:32s} {1e3 * times['numpy']:10.2f} {1e3 * times['numba']:10.2f} "
              f"{times['numpy'] / times['numba']:7.1f}x")


if __name__ == "__main__":
    main()
