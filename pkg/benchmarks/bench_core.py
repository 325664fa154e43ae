"""Time the compiled core against the numpy fallback.

    python benchmarks/bench_core.py [--n 150] [--order 3] [--repeat 5]

Reports the median wall time of each hot kernel and of one full
likelihood-plus-gradient evaluation on toy-sized data, per backend.
"""
import argparse
import time

import numpy as np

from ncmogp import _backend
from ncmogp.inference import initial_params, log_marginal_and_grad
from ncmogp.model import ModelSpec
from ncmogp.toy import ToySpec, toy_generate


def timeit(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cases(n, order):
    rng = np.random.default_rng(0)
    K, p = 3, 1
    X = np.ascontiguousarray(rng.uniform(0, 1, (n, p)))
    o = rng.integers(0, K, n).astype(np.intp)
    amp = rng.uniform(0.5, 2, (K, K))
    inv2v = rng.uniform(1, 20, (K, K, p))
    G = rng.standard_normal((n, n))
    kappa = rng.uniform(-1, 1, (n, n))
    U = np.ascontiguousarray(rng.standard_normal((order, n)))
    dU = np.ascontiguousarray(rng.standard_normal((order, n)))

    toy = toy_generate(ToySpec(), seed=0)
    per = max(1, n // 3)
    train, _ = toy.split(seed=0, n_train=min(per, 199))
    spec = ModelSpec(order, "homogeneous", 3, 1)
    params = initial_params(train, spec)

    return {
        "eq_gram": lambda: _backend.core.eq_gram(X, o, X, o, amp, inv2v),
        "eq_moments": lambda: _backend.core.eq_moments(G, X, o, X, o, amp, inv2v),
        "volterra_cov": lambda: _backend.core.volterra_cov(kappa, U, U),
        "volterra_adjoint": lambda: _backend.core.volterra_adjoint(G, kappa, U, U, dU, dU),
        "lml+grad": lambda: log_marginal_and_grad(train, spec, params),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=150)
    ap.add_argument("--order", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled core not built; only the python backend is available")
    work = cases(args.n, args.order)
    results = {}
    old = _backend.core.NAME
    try:
        for name in backends:
            _backend.use(name)
            for fn in work.values():
                fn()  # warm-up
            results[name] = {k: timeit(fn, args.repeat) for k, fn in work.items()}
    finally:
        _backend.use(old)

    header = f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(f"n={args.n} order={args.order} (median of {args.repeat}, seconds)")
    print(header)
    for k in work:
        row = f"{k:<18}" + "".join(f"{results[b][k]:>12.2e}" for b in backends)
        if len(backends) == 2:
            row += f"{results['python'][k] / results['cython'][k]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
