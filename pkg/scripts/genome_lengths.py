"""Tabulate genome lengths for every model at the published problem sizes.

Seven classes, filter order 3, 554 quaternion inputs (2216 reals).
"""

import argparse

from qnesn.readout import ModelDims, theta_length

SIZES = [(25, 200), (50, 400), (100, 400), (200, 500)]
MODELS = ["esn_ga", "nesn", "qesn", "qnesn"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--features", type=int, default=554, help="quaternion inputs; reals get four times this")
    ap.add_argument("--classes", type=int, default=7)
    ap.add_argument("--order", type=int, default=3)
    args = ap.parse_args()

    print(f"{'units':>6}  {'dim':>4}  " + "  ".join(f"{m:>8}" for m in MODELS))
    for n, dim in SIZES:
        row = []
        for m in MODELS:
            n_in = args.features if m.startswith("q") else 4 * args.features
            row.append(theta_length(m, ModelDims(n, n_in, args.classes, dim, args.order)))
        print(f"{n:>6}  {dim:>4}  " + "  ".join(f"{v:>8}" for v in row))


if __name__ == "__main__":
    main()
