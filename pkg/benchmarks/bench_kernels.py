"""Time the compiled kernels against the numpy fallback on rollout-shaped inputs.

    python benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from noiserl import _kernels_py

try:
    from noiserl import _kernels
except ImportError:
    _kernels = None


def episode_batch(rng, episodes, dim, max_steps=20, max_cands=12):
    steps = rng.integers(2, max_steps, episodes).sum()
    counts = rng.integers(1, max_cands, steps)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    feats = rng.normal(size=(offsets[-1], dim))
    chosen = np.array([rng.integers(c) for c in counts], dtype=np.int64)
    return feats, offsets, chosen, rng.normal(size=dim)


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--dim", type=int, default=48)
    opts = ap.parse_args()
    rng = np.random.default_rng(0)
    if _kernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':<20}{'shape':>14}{'fallback us':>14}{'compiled us':>14}{'speedup':>10}")
    for episodes in (1, 16, 128):
        feats, offsets, chosen, w = episode_batch(rng, episodes, opts.dim)
        cases = [
            ("log_softmax_scores", (feats[:offsets[1]], w), f"{offsets[1]}x{opts.dim}"),
            ("segment_replay", (feats, offsets, chosen, w), f"{len(chosen)} steps"),
        ]
        for name, args, shape in cases:
            slow = bench(getattr(_kernels_py, name), args, opts.repeat) * 1e6
            if _kernels is None:
                print(f"{name:<20}{shape:>14}{slow:>14.1f}{'-':>14}{'-':>10}")
                continue
            fast = bench(getattr(_kernels, name), args, opts.repeat) * 1e6
            print(f"{name:<20}{shape:>14}{slow:>14.1f}{fast:>14.1f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
