"""Time the compiled kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N] [--pipeline]

Kernel timings call both implementations directly in one process. With
``--pipeline`` a short ``otguide optimize`` run is also timed in two
subprocesses, one of them with OTGUIDE_DISABLE_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time
import timeit

import numpy as np

from otguide import _accel, kernels
from otguide.pipeline import PatchGeometry


def _best(fn, repeat):
    fn()  # compile / warm caches
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def sinkhorn_cases(rng):
    for n, m, eps in ((16, 2, 0.05), (64, 2, 0.05), (64, 8, 0.01), (256, 16, 0.05)):
        C = rng.uniform(0.0, 2.0, (n, m))
        yield f"sinkhorn_log {n}x{m} eps={eps}", C, np.full(n, -np.log(n)), np.full(m, -np.log(m)), eps


def bench(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for name, C, la, lb, eps in sinkhorn_cases(rng):
        impls = {"numpy": kernels.sinkhorn_log_numpy, "numba": kernels.sinkhorn_log_numba}
        times = {}
        for label, fn in impls.items():
            if fn is None:
                continue
            times[label] = _best(lambda: fn(C, la, lb, eps, 2000, 1e-9, np.zeros(len(la)), np.zeros(len(lb))), repeat)
        rows.append((name, times))
    img = rng.standard_normal((32, 32, 3))
    geom = PatchGeometry(3, 5, 20, 16)
    taps = geom.taps()
    cot = rng.standard_normal((16, 16, 3))
    for name, impls in (
        ("crop_resize 32x32 -> 16x16", {"numpy": lambda: kernels.crop_resize_numpy(img, *taps),
                                        "numba": lambda: kernels.crop_resize_numba(img, *taps)}),
        ("crop_resize_adjoint", {"numpy": lambda: kernels.crop_resize_adjoint_numpy(cot, *taps, np.zeros_like(img)),
                                 "numba": lambda: kernels.crop_resize_adjoint_numba(cot, *taps, np.zeros_like(img))}),
    ):
        if not _accel.HAVE_NUMBA:
            impls.pop("numba")
        rows.append((name, {k: _best(f, repeat) for k, f in impls.items()}))
    return rows


def pipeline(iterations=20):
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, OTGUIDE_DISABLE_NUMBA=flag)
        with tempfile.TemporaryDirectory() as tmp:
            t0 = time.perf_counter()
            subprocess.run([sys.executable, "-m", "otguide", "optimize", "--iterations", str(iterations), "--out", tmp],
                           env=env, check=True, stdout=subprocess.DEVNULL)
            out[label] = time.perf_counter() - t0
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pipeline", action="store_true")
    args = ap.parse_args(argv)
    print(f"numba available: {_accel.HAVE_NUMBA}")
    print(f"{'kernel':34s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for name, t in bench(args.repeat):
        nb = t.get("numba")
        speed = f"{t['numpy'] / nb:7.1f}x" if nb else "     n/a"
        nb_text = f"{nb * 1e6:9.1f} us" if nb else "         n/a"
        print(f"{name:34s} {t['numpy'] * 1e6:9.1f} us {nb_text} {speed}")
    if args.pipeline:
        for label, secs in pipeline().items():
            print(f"optimize, 20 iterations, {label:5s} backend: {secs:.2f} s (includes interpreter start)")


if __name__ == "__main__":
    main()
