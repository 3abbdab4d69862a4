"""Compare the numba kernels with their numpy fallbacks.

Kernel timings call the ``*_nb`` and ``*_np`` variants side by side; the
end-to-end timing runs a stationary solve in a child process for each
value of ``PQSINGULAR_DISABLE_NUMBA``.

    python benchmarks/bench_kernels.py [--n 4096] [--repeat 20]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pqsingular import _accel

SOLVE = """
import time
from pqsingular.mesh import build_interval_mesh
from pqsingular.params import ProblemParams
from pqsingular import elliptic, _accel
m = build_interval_mesh(0, 1, {n})
P = ProblemParams(2.5, 1.5, 1.5)
elliptic.solve_PS(build_interval_mesh(0, 1, 16), P)   # warm up / jit compile
t0 = time.perf_counter()
u = elliptic.solve_PS(m, P).u
print(_accel.BACKEND, time.perf_counter() - t0, repr(float(u.max())))
"""


def _data(n, seed=0):
    rng = np.random.default_rng(seed)
    u = np.abs(rng.standard_normal(n)) + 0.1
    u[[0, -1]] = 0.0
    h = 1.0 / (n - 1)
    w = np.full(n, h)
    w[[0, -1]] *= 0.5
    return u, h, w, rng.standard_normal(n)


def kernel_table(n, repeat):
    u, h, w, b = _data(n)
    args = (u, h, w, 1.0, 0.3, 2.5, 1.5, 1e-8, 1.0, 1.5, 0.0, b)
    diag, off, rhs = 4.0 + np.abs(b), -np.ones(n - 1), b
    cases = {
        "edge_flux_1d": (u, h, 2.5, 1e-8),
        "pq_energy_1d": (u, h, 2.5, 1.5, 1e-8),
        "grad_power_1d": (u, h, 3.0),
        "objective_1d": args,
        "newton_system_1d": args,
        "thomas": (off, diag, rhs),
    }
    rows = []
    for name, a in cases.items():
        f_np = getattr(_accel, name + "_np")
        f_nb = getattr(_accel, name + "_nb", None)
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=repeat))
        if f_nb is None:
            rows.append((name, t_np, float("nan")))
            continue
        f_nb(*a)  # compile
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=repeat))
        rows.append((name, t_np, t_nb))
    return rows


def solve_table(n):
    out = []
    for flag in ("0", "1"):
        env = dict(os.environ, PQSINGULAR_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", SOLVE.format(n=n)], env=env,
                             capture_output=True, text=True, check=True)
        backend, secs, umax = res.stdout.split()
        out.append((backend, float(secs), float(umax)))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4096, help="nodes for kernel timings")
    ap.add_argument("--solve-n", type=int, default=1024, help="intervals for the end-to-end solve")
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args(argv)

    if not _accel.NUMBA_AVAILABLE:
        print("numba unavailable or disabled; only numpy timings are shown")
    print(f"kernels, n={a.n} (best of {a.repeat})")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, t_np, t_nb in kernel_table(a.n, a.repeat):
        print(f"{name:<18}{1e3 * t_np:>12.4f}{1e3 * t_nb:>12.4f}{t_np / t_nb:>10.1f}")

    print(f"\nstationary solve p=2.5 q=1.5 delta=1.5, n={a.solve_n}")
    rows = solve_table(a.solve_n)
    for backend, secs, umax in rows:
        print(f"{backend:<8}{secs:>10.3f} s   max u = {umax:.15g}")
    print(f"relative difference in max u: {abs(rows[0][2] - rows[1][2]) / abs(rows[1][2]):.2e}")


if __name__ == "__main__":
    main()
