"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own subprocess because the backend flag is read at
import time. The parent prints timings side by side and checks that both
backends produce the same numbers.

    python3 benchmarks/bench_kernels.py [--N 6] [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeat):
    fn()  # warm-up, includes compilation on the numba side
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(N, repeat):
    from borelns import _kernels, backend_name
    from borelns.borel_kernel import f_table
    from borelns.marcher import MarchConfig, Marcher
    from borelns.spectral_field import kida_initial

    rng = np.random.default_rng(20261016)
    L = 3 * N + 3
    npts = L**3
    tab = f_table(2)
    xs = np.linspace(0.2, 1.9, 60)
    lams = np.unique(np.arange(1, 3 * N * N + 1, dtype=float))
    left = rng.standard_normal((16, 3, npts))
    right = rng.standard_normal((16, 3, npts))
    phys = rng.standard_normal((40, 3, npts))
    nk = (2 * N + 1) ** 3
    hist = rng.standard_normal((40, 3, nk)) + 1j * rng.standard_normal((40, 3, nk))
    weights = rng.standard_normal((40, lams.size))
    lam_index = rng.integers(0, lams.size, nk).astype(np.int64)

    results, checks = {}, {}

    def kernel():
        return _kernels.kernel_matrix(2.0, xs, lams, 2, tab.h, tab.coeffs, tab.mu_max)

    def pairs():
        out = np.zeros((3, 3, npts))
        return _kernels.pair_sum(left, right, np.ones(16), out)

    def trapezoid():
        out = np.zeros((3, 3, npts))
        return _kernels.trapezoid_pairs(phys, 4, 35, 39, np.full(32, 0.05), out)

    def history():
        out = np.zeros((3, nk), dtype=complex)
        return _kernels.history_sum(weights, lam_index, hist, out)

    for name, fn in (("kernel_matrix", kernel), ("pair_sum", pairs),
                     ("trapezoid_pairs", trapezoid), ("history_sum", history)):
        results[name] = best_of(fn, repeat)
        checks[name] = float(np.sum(np.abs(fn())))

    cfg = MarchConfig(N=N, nu=0.5, delta=0.05, q0=1.0)
    v0 = kida_initial(cfg.grid())
    Marcher(cfg, v0).run(upto=cfg.m_s + 2)  # warm-up
    t0 = time.perf_counter()
    traj = Marcher(cfg, v0).run()
    results["march q0=1"] = time.perf_counter() - t0
    checks["march q0=1"] = float(traj.norms[cfg.M])
    json.dump({"backend": backend_name(), "times": results, "checks": checks}, sys.stdout)


def run_backend(pure, N, repeat):
    env = dict(os.environ)
    env.pop("BORELNS_PURE_NUMPY", None)
    if pure:
        env["BORELNS_PURE_NUMPY"] = "1"
    out = subprocess.run([sys.executable, __file__, "--worker", "--N", str(N),
                          "--repeat", str(repeat)], env=env, check=True,
                         capture_output=True, text=True).stdout
    return json.loads(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=6, help="Fourier cutoff")
    ap.add_argument("--repeat", type=int, default=5, help="timed repetitions per kernel")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.worker:
        worker(args.N, args.repeat)
        return 0
    fast = run_backend(False, args.N, args.repeat)
    slow = run_backend(True, args.N, args.repeat)
    print(f"N = {args.N}, best of {args.repeat}")
    print(f"{'kernel':<18}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}  agree")
    agree_all = True
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        a, b = fast["checks"][name], slow["checks"][name]
        agree = abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-300)
        agree_all &= agree
        print(f"{name:<18}{t_fast:>11.4f}s{t_slow:>11.4f}s{t_slow / t_fast:>9.1f}x  {agree}")
    return 0 if agree_all else 1


if __name__ == "__main__":
    sys.exit(main())
