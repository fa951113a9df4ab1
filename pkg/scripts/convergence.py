"""Space-time refinement study against a fine self-reference.

    python scripts/convergence.py --scheme uvmsigma --u-init elliptic
"""
import argparse

from haptofem.problems import get_problem
from haptofem.verification import convergence_study


def parse_levels(text):
    return [(int(a), float(b)) for a, b in (item.split(":") for item in text.split(","))]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scheme", default="uvmsigma", choices=["uvmsigma", "uvms"])
    ap.add_argument("--problem", default="test1")
    ap.add_argument("--mu-u", type=float, default=0.0)
    ap.add_argument("--levels", default="8:0.04,16:0.02,32:0.01")
    ap.add_argument("--reference", default="128:0.0025")
    ap.add_argument("--t-check", type=float, default=1.0)
    ap.add_argument("--u-init", default="elliptic", choices=["nodal", "elliptic"])
    args = ap.parse_args()

    (ref,) = parse_levels(args.reference)
    table = convergence_study(args.scheme, get_problem(args.problem, args.mu_u), parse_levels(args.levels), ref,
                              args.t_check, u_init=args.u_init)
    print(f"{'n':>4} {'dt':>8} {'e_u':>10} {'e_v':>10} {'e_m':>10} {'e_sig':>10} {'e_u_H1':>10} {'e_m_H1':>10}")
    for r in table.rows:
        print(f"{r.n:4d} {r.dt:8.4f} {r.e_u_L2:10.3e} {r.e_v_L2:10.3e} {r.e_m_L2:10.3e} {r.e_sigma_L2:10.3e} "
              f"{r.e_u_H1:10.3e} {r.e_m_H1:10.3e}")
    for name in ("u", "v", "m", "sigma", "u_H1", "m_H1"):
        print(f"order {name:6s}", " ".join(f"{o:5.2f}" for o in table.orders(name)))


if __name__ == "__main__":
    main()
