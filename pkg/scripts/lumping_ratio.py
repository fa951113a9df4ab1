"""Lumped vs consistent inner product of x and y, scaled by h ||x|| ||grad y||."""
import argparse

from haptofem.fem import assemble_mass, discrete_inner_h, h1_seminorm, l2_norm, nodal_interpolate
from haptofem.mesh import generate_unit_square_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="4,8,16,32,64")
    args = ap.parse_args()
    print(f"{'n':>4} {'gap':>12} {'ratio':>10}")
    for n in map(int, args.levels.split(",")):
        mesh = generate_unit_square_mesh(n)
        x = nodal_interpolate(lambda x, y: x, mesh)
        y = nodal_interpolate(lambda x, y: y, mesh)
        gap = abs(discrete_inner_h(x, y) - x.values @ (assemble_mass(mesh) @ y.values))
        print(f"{n:4d} {gap:12.4e} {gap / (mesh.h * l2_norm(x) * h1_seminorm(y)):10.5f}")


if __name__ == "__main__":
    main()
