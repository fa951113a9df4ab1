"""Command line: ``haptofem {mesh-gen,run,converge,compare}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .io import write_csv, write_diagnostics_csv, write_errors_csv, write_manifest, write_minima_csv, write_state_vtk
from .linalg import NumericError, SolverError
from .mesh import MeshError, generate_unit_square_mesh, read_mesh, write_mesh
from .model import SCHEME_TOL, TimeConfig
from .problems import PROBLEMS, get_problem
from .uvms import StateError
from .uvmsigma import PositivityError
from .verification import (
    SCHEMES,
    BoundednessReport,
    MinimaSeries,
    convergence_study,
    cross_scheme_diff,
    make_scheme,
)

log = logging.getLogger("haptofem")


class ConfigError(ValueError):
    """Bad configuration key or value; the message names the key."""


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "uvmsigma"
    problem: str = "test1"
    mu_u: float = 0.0
    n: int = 50
    dt: float = 0.01
    t_end: float = 15.0
    snapshots: tuple[float, ...] = (1.0, 5.0, 10.0, 15.0)
    out: str = "output"
    tol: float = SCHEME_TOL
    mesh_file: str | None = None
    u_init: str = "nodal"

    def validate(self) -> "RunConfig":
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme: must be one of {sorted(SCHEMES)}, got {self.scheme!r}")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: must be one of {sorted(PROBLEMS)}, got {self.problem!r}")
        if not self.mu_u >= 0:
            raise ConfigError(f"mu_u: must be >= 0, got {self.mu_u}")
        if self.n < 1:
            raise ConfigError(f"n: must be >= 1, got {self.n}")
        if not self.dt > 0:
            raise ConfigError(f"dt: must be > 0, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end: must be > 0, got {self.t_end}")
        if not self.tol > 0:
            raise ConfigError(f"tol: must be > 0, got {self.tol}")
        if self.u_init not in ("nodal", "elliptic"):
            raise ConfigError(f"u_init: must be 'nodal' or 'elliptic', got {self.u_init!r}")
        try:
            tc = self.time_config()
        except ValueError as exc:
            raise ConfigError(f"t_end: {exc}") from None
        for t in self.snapshots:
            try:
                tc.snap(t)
            except ValueError as exc:
                raise ConfigError(f"snapshots: {exc}") from None
        return self

    def time_config(self) -> TimeConfig:
        return TimeConfig(self.dt, self.t_end, self.tol)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if key == "snapshots":
            parts = [p for p in raw.replace(",", " ").split() if p]
            return tuple(float(p) for p in parts)
        if key == "mesh_file":
            return raw or None
        return raw
    except ValueError:
        raise ConfigError(f"{key}: malformed value {raw!r}") from None


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys may use ``-`` or ``_``."""
    values = {}
    for no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{key}: unknown configuration key ({path}:{no})")
        values[key] = _convert(key, raw)
    return values


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--scheme", choices=sorted(SCHEMES))
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--mu-u", dest="mu_u")
    p.add_argument("--n")
    p.add_argument("--dt")
    p.add_argument("--t-end", dest="t_end")
    p.add_argument("--snapshots", help="comma-separated output times")
    p.add_argument("--out")
    p.add_argument("--tol")
    p.add_argument("--mesh-file", dest="mesh_file")
    p.add_argument("--u-init", dest="u_init", choices=["nodal", "elliptic"])


def parse_config(argv=None, config_file=None) -> RunConfig:
    """Resolve a :class:`RunConfig` from defaults, an optional file, then ``run`` flags."""
    p = argparse.ArgumentParser(prog="haptofem run", add_help=False)
    _add_run_flags(p)
    ns = p.parse_args([] if argv is None else argv)
    return _config_from_namespace(ns, config_file)


def _config_from_namespace(ns, config_file=None) -> RunConfig:
    values = {}
    path = config_file or getattr(ns, "config", None)
    if path:
        values.update(read_config_file(path))
    for key in _FIELD_TYPES:
        raw = getattr(ns, key, None)
        if raw is not None:
            values[key] = _convert(key, str(raw))
    return RunConfig(**values).validate()


# ------------------------------------------------------------------------ commands


def _mesh_for(config: RunConfig):
    return read_mesh(config.mesh_file) if config.mesh_file else generate_unit_square_mesh(config.n)


def run_simulation(config: RunConfig) -> int:
    """Run one simulation and write snapshots, minima.csv, diagnostics.csv and run.json."""
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        log.error("output directory %s is not writable: %s", out, exc)
        return 3

    mesh = _mesh_for(config)
    problem = get_problem(config.problem, config.mu_u)
    tc = config.time_config()
    scheme = make_scheme(config.scheme, mesh, problem.params, tc.dt, tc.tol)
    snap_steps = {tc.snap(t): t for t in config.snapshots}
    minima = MinimaSeries()
    bounds = BoundednessReport(tc.dt)
    written = []
    state = scheme.initialize(problem, config.u_init)
    status = 0
    failure = None
    try:
        for state in scheme.run(state, tc.n_steps):
            minima.update(state)
            bounds.update(state)
            if state.step in snap_steps:
                name = f"snapshot_{state.step:06d}.vtk"
                write_state_vtk(out / name, state, title=f"{config.scheme} {config.problem}")
                written.append({"requested": snap_steps[state.step], "time": state.time, "step": state.step, "file": name})
    except (SolverError, NumericError, PositivityError, StateError) as exc:
        failure = f"step {state.step + 1}: {exc}"
        log.error("solver failure at %s", failure)
        status = 2

    write_minima_csv(out / "minima.csv", minima)
    write_diagnostics_csv(out / "diagnostics.csv", bounds)
    write_manifest(
        out / "run.json",
        {
            "version": __version__,
            "config": {**asdict(config), "snapshots": list(config.snapshots)},
            "params": problem.params.as_dict(),
            "mesh": {"n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles, "h": mesh.h,
                     "nonobtuse": mesh.nonobtuse},
            "n_steps": tc.n_steps,
            "snapshots": written,
            "boundedness": bounds.summary(),
            "min": {k: minima.overall(k) for k in ("u", "v", "m")} | ({"s": minima.overall("s")} if minima.has_s else {}),
            "events": [f"step {k}: {msg}" for k, msg in scheme.events],
            "failure": failure,
        },
    )
    return status


def _parse_levels(text: str) -> list[tuple[int, float]]:
    try:
        return [(int(a), float(b)) for a, b in (item.split(":") for item in text.split(",") if item.strip())]
    except ValueError:
        raise ConfigError(f"levels: expected 'n:dt,n:dt,...', got {text!r}") from None


def _cmd_mesh_gen(args) -> int:
    mesh = generate_unit_square_mesh(args.n)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, h = {mesh.h:.6g}")
    return 0


def _cmd_run(args) -> int:
    return run_simulation(_config_from_namespace(args))


def _cmd_converge(args) -> int:
    levels = _parse_levels(args.levels)
    (ref,) = _parse_levels(args.reference)
    problem = get_problem(args.problem, float(args.mu_u))
    table = convergence_study(args.scheme, problem, levels, ref, args.t_check, tol=args.tol, u_init=args.u_init)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_errors_csv(out / "errors.csv", table)
    write_manifest(out / "converge.json", {
        "version": __version__, "scheme": args.scheme, "problem": args.problem, "mu_u": float(args.mu_u),
        "levels": levels, "reference": list(ref), "t_check": args.t_check, "tol": args.tol, "u_init": args.u_init,
    })
    for r in table.rows:
        print(f"n={r.n:4d} dt={r.dt:<8g} e_u={r.e_u_L2:.3e} e_v={r.e_v_L2:.3e} e_m={r.e_m_L2:.3e} "
              f"e_sigma={r.e_sigma_L2:.3e} orders u/v/m/sigma = {r.order_u:.2f}/{r.order_v:.2f}/"
              f"{r.order_m:.2f}/{r.order_sigma:.2f}")
    return 0


def _cmd_compare(args) -> int:
    problem = get_problem(args.problem, float(args.mu_u))
    res = cross_scheme_diff(problem, args.n, args.dt, args.t_check, tol=args.tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(res.n, res.dt) + tuple(res.distances[k] for k in "uvm")]
    rows.append((2 * res.n, res.dt / 2) + tuple(res.refined[k] for k in "uvm"))
    write_csv(out / "compare.csv", ("n", "dt", "dist_u", "dist_v", "dist_m"), rows)
    for n, dt, du, dv, dm in rows:
        print(f"n={n:4d} dt={dt:<8g} |u1-u2|={du:.3e} |v1-v2|={dv:.3e} |m1-m2|={dm:.3e}")
    print("ratios (fine/coarse):", {k: round(v, 3) for k, v in res.ratios().items()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haptofem", description="P1 finite-element haptotaxis simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", help="write a structured unit-square mesh file")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--out", default="mesh.txt")
    p.set_defaults(func=_cmd_mesh_gen)

    p = sub.add_parser("run", help="run one simulation")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_run)

    for name, func, help_ in (("converge", _cmd_converge, "refinement study against a fine reference"),
                              ("compare", _cmd_compare, "distance between the two schemes")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--problem", choices=sorted(PROBLEMS), default="test1")
        p.add_argument("--mu-u", dest="mu_u", type=float, default=0.0)
        p.add_argument("--t-check", dest="t_check", type=float, default=1.0)
        p.add_argument("--tol", type=float, default=SCHEME_TOL)
        p.add_argument("--out", default="output")
        p.set_defaults(func=func)
        if name == "converge":
            p.add_argument("--scheme", choices=sorted(SCHEMES), default="uvmsigma")
            p.add_argument("--levels", default="8:0.04,16:0.02,32:0.01")
            p.add_argument("--reference", default="128:0.0025")
            p.add_argument("--u-init", dest="u_init", choices=["nodal", "elliptic"], default="elliptic")
        else:
            p.add_argument("--n", type=int, default=16)
            p.add_argument("--dt", type=float, default=0.02)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"haptofem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
