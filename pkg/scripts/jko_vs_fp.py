"""Distance between minimizing-movement and Fokker-Planck states as the outer step shrinks."""

from _common import parser, reference, write_rows
from mkvlab.flow import advance
from mkvlab.jko import jko_flow, quantile_gap
from mkvlab.measure import gaussian_init


def main():
    ap = parser(__doc__, "runs/jko_vs_fp.csv")
    ap.add_argument("--t", type=float, default=0.5)
    ap.add_argument("--taus", type=float, nargs="+", default=[0.05, 0.025, 0.0125, 0.00625])
    args = ap.parse_args()
    spec, grid = reference(1600)
    mu = gaussian_init(grid, 0.5, 0.3)
    ref = advance(spec, mu, args.t, 1e-4)
    rows = []
    for tau in args.taus:
        gap = quantile_gap(ref, jko_flow(spec, mu, tau, args.t, n_particles=1000)[-1])
        rows.append((tau, gap))
        print(f"tau={tau:g}: gap {gap:.3e}")
    write_rows(args.out, ["tau", "w2_gap"], rows)


if __name__ == "__main__":
    main()
