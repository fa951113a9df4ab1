"""Per-step minima of u (and s) for both schemes, Tests 1 and 2, mu_u in {0, 2}.

Writes one CSV per run into --out; these are the data behind the minima plots.

    python scripts/minima_series.py --n 50 --t-end 15 --out results/minima
"""
import argparse
from pathlib import Path

from haptofem.io import write_minima_csv
from haptofem.mesh import generate_unit_square_mesh
from haptofem.problems import get_problem
from haptofem.verification import simulate, track_minima


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--t-end", type=float, default=15.0)
    ap.add_argument("--out", default="results/minima")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh = generate_unit_square_mesh(args.n)
    steps = int(round(args.t_end / args.dt))
    for problem in ("test1", "test2"):
        for mu_u in (0.0, 2.0):
            for scheme in ("uvmsigma", "uvms"):
                series = track_minima(simulate(scheme, mesh, get_problem(problem, mu_u), args.dt, steps))
                name = f"{scheme}_{problem}_mu{mu_u:g}.csv"
                write_minima_csv(out / name, series)
                print(f"{name:28s} min u = {series.overall('u'): .3e}")


if __name__ == "__main__":
    main()
