"""Divergence-form scheme in the variables (s, v, m), with ``u = phi(v) s`` recovered per node.

Every term that needs a sign argument (time derivative, the two implicit
logistic terms) is lumped with nodal weights; the remaining loads use
quadrature-point composition.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .fem import (
    FeScalarField,
    assemble_lumped_mass,
    assemble_product_load,
    assemble_stiffness,
)
from .linalg import DiagMatrix, cg_solve
from .mesh import TriMesh
from .model import SCHEME_TOL, ModelParams, phi_eval  # noqa: F401  (re-exported)
from .problems import ProblemSetup, initial_fields
from .uvmsigma import NEGATIVITY_SLACK, step_v

log = logging.getLogger(__name__)


class StateError(ValueError):
    """Previous state violates a sign precondition beyond solver slack."""


@dataclass(frozen=True)
class UvmsState:
    s: FeScalarField
    v: FeScalarField
    m: FeScalarField
    u: FeScalarField
    step: int = 0
    time: float = 0.0

    @property
    def mesh(self) -> TriMesh:
        return self.s.mesh


def recover_u(s: FeScalarField, v: FeScalarField, params: ModelParams) -> FeScalarField:
    """Nodal product ``u_j = phi(v_j) s_j``."""
    return FeScalarField(s.mesh, params.phi(v.values) * s.values)


class UvmsScheme:
    name = "uvms"

    def __init__(self, mesh: TriMesh, params: ModelParams, dt: float, tol: float = SCHEME_TOL):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.mesh = mesh
        self.params = params
        self.dt = dt
        self.tol = tol
        self.events: list[tuple[int, str]] = []
        self.lumped = assemble_lumped_mass(mesh)
        self.stiffness = assemble_stiffness(mesh)
        self._m_matrix = (params.D_m * self.stiffness).tocsr()
        self._m_diag = self.lumped * (1.0 / dt + params.rho_m)
        self.iterations = 0

    def _solve(self, A, b, diag=None) -> np.ndarray:
        res = cg_solve(A, b, diag=diag, tol=self.tol, jacobi=True)
        self.iterations += res.iterations
        return res.x

    def _note(self, step: int, message: str) -> None:
        self.events.append((step, message))
        log.debug("step %d: %s", step, message)

    def step_m(self, prev: UvmsState) -> FeScalarField:
        p = self.params
        b = self.lumped.diag * prev.m.values / self.dt
        if p.mu_m:
            b = b + p.mu_m * assemble_product_load(
                self.mesh, [prev.s.values, prev.v.values, prev.v.values], [None, p.phi, None]
            )
        return FeScalarField(self.mesh, self._solve(self._m_matrix, b, self._m_diag))

    def step_v(self, v_prev: FeScalarField, m_new: FeScalarField, step: int | None = None) -> FeScalarField:
        if step is not None and m_new.min() < 0:
            self._note(step, f"m has negative nodal value {m_new.min():.3e} before the ECM update")
        return step_v(v_prev, m_new, self.params.alpha, self.dt)

    def step_s(self, prev: UvmsState, v_new: FeScalarField, m_new: FeScalarField) -> FeScalarField:
        p = self.params
        s_prev = prev.s.values
        if s_prev.min() < -NEGATIVITY_SLACK:
            j = int(s_prev.argmin())
            raise StateError(f"s has negative nodal value {s_prev[j]:.3e} at node {j}")
        v = v_new.values
        phi_nodal = p.phi(v)
        ml = self.lumped.diag
        diag = ml * phi_nodal / self.dt
        if p.mu_u:
            diag = diag + p.mu_u * ml * (s_prev * phi_nodal**2 + phi_nodal * v)
        A = (p.D_u * assemble_stiffness(self.mesh, v, p.phi)).tocsr()
        b = ml * phi_nodal * s_prev / self.dt
        if p.alpha:
            b = b + (p.alpha / p.D_u) * assemble_product_load(
                self.mesh,
                [s_prev, v, v, v, m_new.values],
                [None, p.phi, p.chi, None, None],
            )
        if p.mu_u:
            b = b + p.mu_u * assemble_product_load(self.mesh, [s_prev, v], [None, p.phi])
        return FeScalarField(self.mesh, self._solve(A, b, DiagMatrix(diag)))

    def advance(self, state: UvmsState) -> UvmsState:
        n = state.step + 1
        m = self.step_m(state)
        v = self.step_v(state.v, m, step=n)
        s = self.step_s(state, v, m)
        return UvmsState(s, v, m, recover_u(s, v, self.params), n, n * self.dt)

    def initialize(self, problem: ProblemSetup, u_init: str = "nodal") -> UvmsState:
        """``s0 = u0 / phi(v0)`` at the nodes (``u_init`` other than nodal uses the given ``u`` field)."""
        f = initial_fields(self.mesh, problem, u_init)
        s = FeScalarField(self.mesh, f["u"].values / self.params.phi(f["v"].values))
        return UvmsState(s, f["v"], f["m"], recover_u(s, f["v"], self.params), 0, 0.0)

    def run(self, state: UvmsState, n_steps: int) -> Iterator[UvmsState]:
        yield state
        for _ in range(n_steps):
            state = self.advance(state)
            yield state


def step_m_uvms(prev: UvmsState, params: ModelParams, dt: float, tol: float = SCHEME_TOL) -> FeScalarField:
    return UvmsScheme(prev.mesh, params, dt, tol).step_m(prev)


step_v_uvms = step_v


def step_s(prev: UvmsState, v_new, m_new, params: ModelParams, dt: float, tol: float = SCHEME_TOL):
    return UvmsScheme(prev.mesh, params, dt, tol).step_s(prev, v_new, m_new)


def advance_uvms(state: UvmsState, params: ModelParams, dt: float, tol: float = SCHEME_TOL) -> UvmsState:
    return UvmsScheme(state.mesh, params, dt, tol).advance(state)


def initialize(mesh: TriMesh, problem: ProblemSetup, params: ModelParams | None = None, u_init: str = "nodal"):
    params = problem.params if params is None else params
    return UvmsScheme(mesh, params, 1.0).initialize(problem, u_init)
