"""Positivity / boundedness monitors, refinement studies and cross-scheme comparison.

There is no closed-form solution for the experiments, so errors are measured
against a fine-grid run of the same scheme, with the coarse solutions
interpolated onto the reference mesh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .fem import FeScalarField, FeVectorField, h1_error_vs_field, h1_norm, l2_error_vs_field, l2_norm
from .mesh import TriMesh, generate_unit_square_mesh
from .model import SCHEME_TOL, ModelParams
from .problems import ProblemSetup
from .uvms import UvmsScheme
from .uvmsigma import UvmSigmaScheme

SCHEMES = {"uvmsigma": UvmSigmaScheme, "uvms": UvmsScheme}


def make_scheme(name: str, mesh: TriMesh, params: ModelParams, dt: float, tol: float = SCHEME_TOL):
    try:
        cls = SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}") from None
    return cls(mesh, params, dt, tol)


def simulate(scheme_name: str, mesh: TriMesh, problem: ProblemSetup, dt: float, n_steps: int,
             tol: float = SCHEME_TOL, u_init: str = "nodal"):
    """Generator over the states ``0 .. n_steps`` of one run."""
    scheme = make_scheme(scheme_name, mesh, problem.params, dt, tol)
    return scheme.run(scheme.initialize(problem, u_init), n_steps)


def final_state(scheme_name, mesh, problem, dt, n_steps, tol=SCHEME_TOL, u_init="nodal"):
    state = None
    for state in simulate(scheme_name, mesh, problem, dt, n_steps, tol, u_init):
        pass
    return state


# ------------------------------------------------------------------ minima tracking


@dataclass
class MinimaSeries:
    """Nodal minima per step; ``min_s`` is empty for runs without ``s``."""

    step: list[int] = field(default_factory=list)
    time: list[float] = field(default_factory=list)
    min_u: list[float] = field(default_factory=list)
    min_v: list[float] = field(default_factory=list)
    min_m: list[float] = field(default_factory=list)
    min_s: list[float] = field(default_factory=list)

    def update(self, state) -> None:
        self.step.append(state.step)
        self.time.append(state.time)
        self.min_u.append(state.u.min())
        self.min_v.append(state.v.min())
        self.min_m.append(state.m.min())
        if hasattr(state, "s"):
            self.min_s.append(state.s.min())

    def __len__(self) -> int:
        return len(self.step)

    @property
    def has_s(self) -> bool:
        return bool(self.min_s)

    def overall(self, name: str) -> float:
        return float(min(getattr(self, f"min_{name}")))

    def rows(self) -> list[tuple]:
        cols = [self.step, self.time, self.min_u, self.min_v, self.min_m]
        if self.has_s:
            cols.append(self.min_s)
        return list(zip(*cols))


def track_minima(states: Iterable) -> MinimaSeries:
    series = MinimaSeries()
    for s in states:
        series.update(s)
    return series


# -------------------------------------------------------------- boundedness report


@dataclass
class BoundednessReport:
    """Running bounds for v (sup norm) and m (l-inf L2, l2 H1, time-derivative l2 L2).

    ``v_sup_violations`` counts steps with ``max v^n > max v^0 + 1e-14``;
    ``v_increase_violations`` counts steps where some node has ``v^n > v^{n-1}``.
    """

    dt: float
    v0_sup: float = math.nan
    max_v_sup: float = -math.inf
    max_m_l2: float = 0.0
    sum_m_h1_sq: float = 0.0
    sum_dtm_l2_sq: float = 0.0
    v_sup_violations: int = 0
    v_increase_violations: int = 0
    rows: list[tuple] = field(default_factory=list)
    _prev_v: np.ndarray | None = field(default=None, repr=False)
    _prev_m: np.ndarray | None = field(default=None, repr=False)

    V_SUP_SLACK = 1e-14

    def update(self, state) -> None:
        v = state.v.values
        m = state.m
        v_sup = float(np.abs(v).max())
        if self._prev_v is None:
            self.v0_sup = v_sup
        else:
            if np.any(v > self._prev_v):
                self.v_increase_violations += 1
            h1 = h1_norm(m)
            self.sum_m_h1_sq += self.dt * h1**2
            dm = FeScalarField(m.mesh, (m.values - self._prev_m) / self.dt)
            self.sum_dtm_l2_sq += self.dt * l2_norm(dm) ** 2
        if v_sup > self.v0_sup + self.V_SUP_SLACK:
            self.v_sup_violations += 1
        self.max_v_sup = max(self.max_v_sup, v_sup)
        m_l2 = l2_norm(m)
        self.max_m_l2 = max(self.max_m_l2, m_l2)
        self.rows.append(
            (state.step, state.time, v_sup, m_l2, self.sum_m_h1_sq, self.sum_dtm_l2_sq, int(v_sup <= self.v0_sup + self.V_SUP_SLACK))
        )
        self._prev_v = v
        self._prev_m = m.values

    @property
    def v_sup_ok(self) -> bool:
        return self.v_sup_violations == 0

    @property
    def finite(self) -> bool:
        return all(math.isfinite(x) for x in (self.max_v_sup, self.max_m_l2, self.sum_m_h1_sq, self.sum_dtm_l2_sq))

    def summary(self) -> dict:
        return {
            "v0_sup": self.v0_sup,
            "max_v_sup": self.max_v_sup,
            "max_m_l2": self.max_m_l2,
            "dt_sum_m_h1_sq": self.sum_m_h1_sq,
            "dt_sum_dtm_l2_sq": self.sum_dtm_l2_sq,
            "v_sup_ok": self.v_sup_ok,
            "v_increase_violations": self.v_increase_violations,
        }


def boundedness_report(states: Iterable, dt: float) -> BoundednessReport:
    report = BoundednessReport(dt)
    for s in states:
        report.update(s)
    return report


# ----------------------------------------------------------------- convergence


@dataclass
class ErrorRow:
    level: int
    n: int
    h: float
    dt: float
    e_u_L2: float
    e_v_L2: float
    e_m_L2: float
    e_sigma_L2: float
    e_u_H1: float
    e_m_H1: float
    order_u: float = math.nan
    order_v: float = math.nan
    order_m: float = math.nan
    order_sigma: float = math.nan
    order_u_H1: float = math.nan
    order_m_H1: float = math.nan


ERROR_COLUMNS = (
    "level", "n", "h", "dt", "e_u_L2", "e_v_L2", "e_m_L2", "e_sigma_L2", "e_u_H1", "e_m_H1",
    "order_u", "order_v", "order_m", "order_sigma",
)


@dataclass
class ErrorTable:
    rows: list[ErrorRow]
    T_check: float
    reference: tuple[int, float]

    def orders(self, name: str) -> list[float]:
        return [getattr(r, f"order_{name}") for r in self.rows[1:]]


def observed_order(e_coarse: float, e_fine: float) -> float:
    if e_fine == 0.0 or e_coarse == 0.0:
        return math.nan
    return math.log2(e_coarse / e_fine)


def _check_levels(levels: Sequence[tuple[int, float]]) -> None:
    for (n0, dt0), (n1, dt1) in zip(levels, levels[1:]):
        if n1 != 2 * n0 or not math.isclose(dt1, dt0 / 2, rel_tol=1e-12):
            raise ValueError(f"levels must halve (h, dt) consecutively; got ({n0}, {dt0}) -> ({n1}, {dt1})")


def _steps(T: float, dt: float) -> int:
    n = round(T / dt)
    if abs(n * dt - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"T_check = {T} is not a multiple of dt = {dt}")
    return int(n)


def state_errors(state, ref) -> dict:
    """Distances between a (coarse) state and a reference state, after interpolation."""
    out = {
        "u": l2_error_vs_field(state.u, ref.u, prolongate=True),
        "v": l2_error_vs_field(state.v, ref.v, prolongate=True),
        "m": l2_error_vs_field(state.m, ref.m, prolongate=True),
        "u_H1": h1_error_vs_field(state.u, ref.u, prolongate=True),
        "m_H1": h1_error_vs_field(state.m, ref.m, prolongate=True),
        "sigma": math.nan,
    }
    if isinstance(getattr(state, "sigma", None), FeVectorField) and isinstance(getattr(ref, "sigma", None), FeVectorField):
        out["sigma"] = l2_error_vs_field(state.sigma, ref.sigma, prolongate=True)
    return out


def convergence_study(
    scheme: str,
    problem: ProblemSetup,
    levels: Sequence[tuple[int, float]],
    reference: tuple[int, float],
    T_check: float,
    *,
    tol: float = SCHEME_TOL,
    u_init: str = "elliptic",
    require_finer: bool = True,
    reference_state=None,
) -> ErrorTable:
    """Errors of each ``(n, dt)`` level against a fine ``(n_ref, dt_ref)`` run at ``T_check``.

    Levels must halve ``h`` and ``dt`` consecutively. With ``require_finer``
    the reference must satisfy ``n_ref >= 4 max n`` and ``dt_ref <= min dt / 4``.
    A precomputed ``reference_state`` may be passed to skip the reference run.
    """
    levels = [(int(n), float(dt)) for n, dt in levels]
    _check_levels(levels)
    n_ref, dt_ref = reference
    if require_finer:
        if n_ref < 4 * max(n for n, _ in levels) or dt_ref > min(dt for _, dt in levels) / 4 * (1 + 1e-12):
            raise ValueError("reference must be at least 4x finer in h and dt than every level")
    if reference_state is None:
        reference_state = final_state(
            scheme, generate_unit_square_mesh(n_ref), problem, dt_ref, _steps(T_check, dt_ref), tol, u_init
        )
    rows: list[ErrorRow] = []
    for k, (n, dt) in enumerate(levels):
        mesh = generate_unit_square_mesh(n)
        st = final_state(scheme, mesh, problem, dt, _steps(T_check, dt), tol, u_init)
        e = state_errors(st, reference_state)
        row = ErrorRow(k, n, mesh.h, dt, e["u"], e["v"], e["m"], e["sigma"], e["u_H1"], e["m_H1"])
        if rows:
            prev = rows[-1]
            row.order_u = observed_order(prev.e_u_L2, row.e_u_L2)
            row.order_v = observed_order(prev.e_v_L2, row.e_v_L2)
            row.order_m = observed_order(prev.e_m_L2, row.e_m_L2)
            row.order_sigma = observed_order(prev.e_sigma_L2, row.e_sigma_L2)
            row.order_u_H1 = observed_order(prev.e_u_H1, row.e_u_H1)
            row.order_m_H1 = observed_order(prev.e_m_H1, row.e_m_H1)
        rows.append(row)
    return ErrorTable(rows, T_check, (n_ref, dt_ref))


def time_refinement_errors(
    scheme: str,
    problem: ProblemSetup,
    n: int,
    dts: Sequence[float],
    dt_ref: float,
    T_check: float,
    *,
    tol: float = SCHEME_TOL,
) -> list[dict]:
    """Errors at fixed mesh for several time steps against a small-``dt`` run (temporal error only)."""
    mesh = generate_unit_square_mesh(n)
    ref = final_state(scheme, mesh, problem, dt_ref, _steps(T_check, dt_ref), tol)
    out = []
    for dt in dts:
        st = final_state(scheme, mesh, problem, dt, _steps(T_check, dt), tol)
        out.append({"dt": dt, **state_errors(st, ref)})
    return out


# ------------------------------------------------------------ scheme comparison


@dataclass
class CrossSchemeResult:
    n: int
    dt: float
    T_check: float
    distances: dict  # {"u": ..., "v": ..., "m": ...} at (n, dt)
    refined: dict | None = None  # same at (2n, dt/2)

    def ratios(self) -> dict:
        if self.refined is None:
            return {}
        return {k: (self.refined[k] / self.distances[k] if self.distances[k] else math.nan) for k in self.distances}

    def halves(self) -> dict:
        """Whether each distance roughly halves (ratio within 0.5 +- 50%)."""
        return {k: (0.25 <= r <= 0.75) for k, r in self.ratios().items()}


def _scheme_distances(problem, n, dt, T_check, tol) -> dict:
    mesh = generate_unit_square_mesh(n)
    steps = _steps(T_check, dt)
    a = final_state("uvmsigma", mesh, problem, dt, steps, tol)
    b = final_state("uvms", mesh, problem, dt, steps, tol)
    return {k: l2_error_vs_field(getattr(a, k), getattr(b, k)) for k in ("u", "v", "m")}


def cross_scheme_diff(
    problem: ProblemSetup, n: int, dt: float, T_check: float, *, refine: bool = True, tol: float = SCHEME_TOL
) -> CrossSchemeResult:
    """L2 distances between the two schemes' u, v, m at ``T_check`` (and after one refinement)."""
    d = _scheme_distances(problem, n, dt, T_check, tol)
    r = _scheme_distances(problem, 2 * n, dt / 2, T_check, tol) if refine else None
    return CrossSchemeResult(n, dt, T_check, d, r)
