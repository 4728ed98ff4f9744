"""Particle-versus-PDE W2 gap as the ensemble size grows."""

from _common import parser, reference, write_rows
from mkvlab.measure import gaussian_init
from mkvlab.particles import loglog_slope, propagation_gap


def main():
    ap = parser(__doc__, "runs/propagation.csv")
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000, 3000, 10000])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--t-end", type=float, default=2.0)
    args = ap.parse_args()
    spec, grid = reference()
    rows = propagation_gap(spec, gaussian_init(grid, 0.3, 0.5), args.sizes, args.t_end, 2e-3,
                           list(range(args.seeds)), threads=args.threads)
    write_rows(args.out, ["n", "median_w2"], [(r.n, r.median) for r in rows])
    print(f"log-log slope {loglog_slope(rows):.3f}")


if __name__ == "__main__":
    main()
