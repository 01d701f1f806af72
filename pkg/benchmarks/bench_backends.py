"""Compare the compiled and NumPy kernel backends on the hot paths.

Run:
    python3 benchmarks/bench_backends.py [--levels 4] [--n 8] [--repeat 200]

Reports per-call wall time for Babai rounding, Klein sampling, brute-force
search, and the message-passing forward, for every backend importable in
this environment, and checks the backends agree on each workload.
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np

from gd4mimo._kernels import available_backends


def _load(name):
    return importlib.import_module(f"gd4mimo._kernels._{'py' if name == 'numpy' else 'c'}kernels")


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--n", type=int, default=8, help="symbol count (2 N_t)")
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n, lev = args.n, args.levels
    A = rng.normal(size=(n, n))
    Q, R = np.linalg.qr(A)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1
    R = signs[:, None] * R
    ybar = rng.normal(size=n) * 3.0
    U = rng.random((16, n))
    Hb = rng.normal(size=(n, 6))
    yb = rng.normal(size=n)

    D, L = 32, 6
    V0 = rng.normal(size=(6, D))
    E0 = rng.normal(size=(6, 6, D))
    tproj = rng.normal(size=(L, D))
    Wr = rng.normal(size=(L, D, 3 * D)) * 0.1
    br = np.zeros((L, D))
    W3 = rng.normal(size=(L, D, D)) * 0.1
    b3 = np.zeros((L, D))
    W4 = rng.normal(size=(L, D, D)) * 0.1
    b4 = np.zeros((L, D))

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    results: dict[str, dict[str, float]] = {}
    outputs: dict[str, dict[str, np.ndarray]] = {}
    for name in backends:
        mod = _load(name)
        work = {
            "babai": lambda m=mod: m.babai_nearest(R, ybar, lev),
            "klein": lambda m=mod: m.klein_samples(R, ybar, lev, 0.5, U),
            "brute": lambda m=mod: m.brute_force(Hb, yb, lev)[0],
            "mp_forward": lambda m=mod: m.mp_forward(
                V0, E0, tproj, Wr, br, W3, b3, W4, b4, False
            ),
        }
        results[name] = {key: _time(fn, args.repeat) for key, fn in work.items()}
        outputs[name] = {key: np.asarray(fn()) for key, fn in work.items()}

    header = f"{'kernel':<12}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for key in ("babai", "klein", "brute", "mp_forward"):
        row = f"{key:<12}"
        times = [results[b][key] for b in backends]
        for t in times:
            row += f"{t * 1e6:>12.1f}us"
        if len(times) > 1:
            row += f"{times[-1] / times[0]:>9.1f}x" if times[0] < times[-1] else f"{times[0] / times[-1]:>9.1f}x"
        print(row)

    ref = backends[0]
    for other in backends[1:]:
        for key in ("babai", "klein", "brute"):
            if not np.array_equal(outputs[ref][key], outputs[other][key]):
                raise SystemExit(f"backend mismatch on {key}: {ref} vs {other}")
        if not np.allclose(outputs[ref]["mp_forward"], outputs[other]["mp_forward"], rtol=1e-10, atol=1e-12):
            raise SystemExit(f"backend mismatch on mp_forward: {ref} vs {other}")
    if len(backends) > 1:
        print("cross-backend agreement: OK")


if __name__ == "__main__":
    main()
