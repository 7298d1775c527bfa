"""Compare the compiled and pure-Python predictor-corrector kernels.

    python3 benchmarks/bench_kernels.py --sizes 5 20 80 --repeats 5
"""

import argparse
import sys

from penbar.cli import bench


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[2, 5, 10, 20, 40, 80, 160])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    return bench(args.sizes, args.repeats, args.seed)


if __name__ == "__main__":
    sys.exit(main())
