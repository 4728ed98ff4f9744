"""Phase diagram of limit labels over Gaussian initial data (mean x variance)."""

import numpy as np

from _common import parser, reference, write_rows
from mkvlab.ergodicity import basin_sweep
from mkvlab.flow import FlowParams
from mkvlab.tilt import stationary_triple


def main():
    ap = parser(__doc__, "runs/phase_diagram.csv")
    ap.add_argument("--means", type=int, default=21, help="number of means in [-1, 1]")
    ap.add_argument("--vars", type=int, default=9, help="number of variances in [0.2, 1]")
    args = ap.parse_args()
    spec, grid = reference()
    triple = stationary_triple(spec, grid)
    pairs = [(float(m), float(v)) for m in np.linspace(-1, 1, args.means)
             for v in np.linspace(0.2, 1.0, args.vars)]
    rows = basin_sweep(spec, triple, pairs, FlowParams(), args.threads, max_escape=1e-2)
    write_rows(args.out, ["mean", "var", "label", "t_final", "F_final"],
               [(m, v, r.label, r.t_final, r.energy) for m, v, r in rows])
    labels = [r.label for *_, r in rows]
    print({k: labels.count(k) for k in sorted(set(labels))})


if __name__ == "__main__":
    main()
