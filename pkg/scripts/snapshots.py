"""VTK snapshots at t = 1, 5, 10, 15 for every scheme/test/mu_u combination (n = 50, dt = 0.01)."""
import argparse
import sys

from haptofem.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/snapshots")
    ap.add_argument("--n", default="50")
    args = ap.parse_args()
    status = 0
    for scheme in ("uvmsigma", "uvms"):
        for problem in ("test1", "test2"):
            for mu_u in ("0", "2"):
                out = f"{args.out}/{scheme}_{problem}_mu{mu_u}"
                print("running", out, flush=True)
                status |= cli_main(["run", "--scheme", scheme, "--problem", problem, "--mu-u", mu_u,
                                    "--n", args.n, "--out", out])
    return status


if __name__ == "__main__":
    sys.exit(main())
