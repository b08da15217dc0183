"""Compare the compiled reverse-play kernel with its pure-Python reference.

    python benchmarks/bench_kernels.py --levels 50

Generates the same levels with both kernels, checks they agree, and prints
levels per second for each.
"""

import argparse
import sys
import time

from i2a_lab.sokoban import procgen
from i2a_lab.sokoban._reverse_play import reverse_play as python_kernel
from i2a_lab.sokoban.procgen import GenerationFailed, GenParams, generate_level


def run(kernel, params, seeds):
    out = []
    t0 = time.perf_counter()
    for s in seeds:
        try:
            cand = generate_level(params, s, kernel=kernel)
            out.append((cand.state, cand.score, tuple(cand.solution_trace)))
        except GenerationFailed:
            out.append(None)
    return out, time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=50)
    ap.add_argument("--boxes", type=int, default=4)
    ap.add_argument("--size", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not procgen.HAVE_COMPILED:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    params = GenParams(width=args.size, height=args.size, num_boxes=args.boxes)
    seeds = range(args.seed, args.seed + args.levels)
    fast, t_fast = run(procgen.reverse_play_kernel, params, seeds)
    slow, t_slow = run(python_kernel, params, seeds)
    if fast != slow:
        print("MISMATCH: kernels produced different levels", file=sys.stderr)
        return 3
    print(f"{args.levels} levels, {args.size}x{args.size}, {args.boxes} boxes (outputs identical)")
    print(f"  compiled: {t_fast:8.2f}s  {args.levels / t_fast:8.1f} levels/s")
    print(f"  python:   {t_slow:8.2f}s  {args.levels / t_slow:8.1f} levels/s")
    print(f"  speedup:  {t_slow / t_fast:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
