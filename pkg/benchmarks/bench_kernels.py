"""Time the compiled Sherman-Morrison kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--sizes 100 300 1000] [--batch 8] [--repeat 20]

Every backend starts from the same SPD inverse and the same Jacobian rows; the
script also reports the largest entrywise difference between the backends.
"""

import argparse
import timeit

import numpy as np

from sgnlab import kernels


def _problem(p, B, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, p)) / np.sqrt(p)
    Hinv = np.linalg.inv(np.eye(p) + A @ A.T)
    G = rng.standard_normal((B, p))
    return np.ascontiguousarray(Hinv), np.ascontiguousarray(G)


def bench(p, B, repeat, alpha=0.1):
    Hinv0, G = _problem(p, B)
    rows = {}
    outs = {}
    for name, mod in kernels.backends().items():
        for kern in ("smw_batch_update", "smw_rank1_sequential", "gram_update"):
            fn = getattr(mod, kern)
            work = Hinv0.copy()
            # each call mutates its input; restoring it is part of the timed loop for every backend
            t = timeit.repeat(lambda: (np.copyto(work, Hinv0), fn(work, G, alpha)), number=1, repeat=repeat)
            rows[(kern, name)] = min(t)
            outs[(kern, name)] = work.copy()
    return rows, outs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    names = list(kernels.backends())
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(names)}")
    if "compiled" not in names:
        print("compiled core not importable; timing the fallback only")
    header = f"{'kernel':<22}{'p':>6}{'B':>4}" + "".join(f"{n + ' ms':>14}" for n in names)
    if len(names) > 1:
        header += f"{'speedup':>10}{'max |diff|':>13}"
    print(header)
    for p in args.sizes:
        rows, outs = bench(p, args.batch, args.repeat)
        for kern in ("smw_batch_update", "smw_rank1_sequential", "gram_update"):
            line = f"{kern:<22}{p:>6}{args.batch:>4}"
            line += "".join(f"{1e3 * rows[(kern, n)]:>14.3f}" for n in names)
            if len(names) > 1:
                speed = rows[(kern, "python")] / rows[(kern, "compiled")]
                diff = np.max(np.abs(outs[(kern, "python")] - outs[(kern, "compiled")]))
                line += f"{speed:>9.2f}x{diff:>13.1e}"
            print(line)


if __name__ == "__main__":
    main()
