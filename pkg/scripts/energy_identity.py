"""Energy-identity residual under joint refinement of the time step and the grid."""

from _common import parser, reference, write_rows
from mkvlab.flow import check_energy_identity, record_path
from mkvlab.measure import gaussian_init


def main():
    ap = parser(__doc__, "runs/energy_identity.csv")
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()
    rows = []
    dt, n = 2e-3, 200
    for _ in range(args.levels):
        spec, grid = reference(n)
        traj = record_path(spec, gaussian_init(grid, 0.5, 0.3), 1.0, dt)
        res = check_energy_identity(spec, traj)
        rows.append((dt, n, res))
        print(f"dt={dt:g} n={n}: residual {res:.3e}")
        dt, n = dt / 2, n * 2
    write_rows(args.out, ["dt", "n", "residual"], rows)


if __name__ == "__main__":
    main()
