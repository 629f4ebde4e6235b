"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time per call for each backend
and the speed-up. Exits with an error if the compiled extension is not built.
"""
import argparse
import sys
import timeit

import numpy as np

from tsseg._kernels import _fallback
from tsseg.metrics import segments_from_labels


def _segments(labels):
    arr = np.array(segments_from_labels(labels), dtype=np.int64)
    return arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()


def workloads(rng):
    """Sizes typical of a long video: ~100 segments, ~3000 frames, 20 classes."""
    a = rng.integers(0, 20, size=120)
    b = rng.integers(0, 20, size=100)
    T = 3000
    gt = np.repeat(rng.integers(0, 20, size=100), 30)[:T]
    pred = gt.copy()
    flips = rng.random(T) < 0.05
    pred[flips] = rng.integers(0, 20, size=int(flips.sum()))
    p, g = _segments(pred), _segments(gt)
    lp = np.log(rng.dirichlet(np.ones(20), size=T))
    frames = np.sort(rng.choice(T, size=100, replace=False)).astype(np.int64)
    classes = rng.integers(0, 20, size=100).astype(np.int64)
    return {
        "levenshtein": lambda m: m.levenshtein(a, b),
        "greedy_f1_counts": lambda m: m.greedy_f1_counts(*p, *g, 0.5),
        "conf_hinge": lambda m: m.conf_hinge(lp, frames, classes),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=3)
    args = parser.parse_args(argv)
    try:
        from tsseg._kernels import _core
    except ImportError:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<18} {'cython (ms)':>12} {'python (ms)':>12} {'speed-up':>9}")
    for name, call in workloads(np.random.default_rng(0)).items():
        times = {}
        for label, mod in (("cython", _core), ("python", _fallback)):
            t = timeit.repeat(lambda: call(mod), number=args.number, repeat=args.repeat)
            times[label] = 1e3 * min(t) / args.number
        print(f"{name:<18} {times['cython']:12.3f} {times['python']:12.3f} "
              f"{times['python'] / times['cython']:8.1f}x")


if __name__ == "__main__":
    main()
