"""Splitting scheme with the ECM gradient as an extra unknown (variables m, v, u, sigma).

One step, given ``(m, v, u, sigma)`` at level ``n-1``::

    m^n      lumped-mass backward Euler, load mu_m [u^{n-1}]_+ v^{n-1}
    v^n      nodal closed form v^{n-1} / (1 + alpha dt m^n)
    u^n      consistent mass + diffusion, -mu_u u^n v^n implicit,
             haptotaxis and logistic loads lagged
    sigma^n  two scalar systems sharing (M + alpha dt W(m^n))
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .fem import (
    ElementConstant,
    FeScalarField,
    FeVectorField,
    assemble_haptotaxis_load,
    assemble_lumped_mass,
    assemble_mass,
    assemble_product_load,
    assemble_stiffness,
    assemble_weighted_mass,
    element_gradients,
)
from .linalg import cg_solve
from .mesh import TriMesh
from .model import SCHEME_TOL, ModelParams
from .problems import ProblemSetup, initial_fields

log = logging.getLogger(__name__)

# solver-level slack tolerated on quantities that are nonnegative in exact arithmetic
NEGATIVITY_SLACK = 1e-12


class PositivityError(ArithmeticError):
    """A nodal update would divide by a nonpositive number."""


@dataclass(frozen=True)
class UvmSigmaState:
    m: FeScalarField
    v: FeScalarField
    u: FeScalarField
    sigma: FeVectorField
    step: int = 0
    time: float = 0.0

    @property
    def mesh(self) -> TriMesh:
        return self.m.mesh


def update_v(v_prev: np.ndarray, m_new: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    """``v^n_j = v^{n-1}_j / (1 + alpha dt m^n_j)`` at every vertex."""
    denom = 1.0 + alpha * dt * m_new
    if np.any(denom <= 0):
        j = int(np.flatnonzero(denom <= 0)[0])
        raise PositivityError(
            f"ECM update breaks down at node {j}: 1 + alpha*dt*m = {denom[j]:.3e} (m = {m_new[j]:.3e})"
        )
    return v_prev / denom


def step_v(v_prev: FeScalarField, m_new: FeScalarField, alpha: float, dt: float) -> FeScalarField:
    return FeScalarField(v_prev.mesh, update_v(v_prev.values, m_new.values, alpha, dt))


class UvmSigmaScheme:
    """Time stepper on a fixed mesh; caches the matrices that do not change between steps."""

    name = "uvmsigma"

    def __init__(self, mesh: TriMesh, params: ModelParams, dt: float, tol: float = SCHEME_TOL):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.mesh = mesh
        self.params = params
        self.dt = dt
        self.tol = tol
        self.events: list[tuple[int, str]] = []
        self.lumped = assemble_lumped_mass(mesh)
        self.mass = assemble_mass(mesh)
        self.stiffness = assemble_stiffness(mesh)
        p = params
        self._m_matrix = (p.D_m * self.stiffness).tocsr()
        self._m_diag = self.lumped * (1.0 / dt + p.rho_m)
        self._u_base = (self.mass / dt + p.D_u * self.stiffness).tocsr()
        self.iterations = 0

    def _solve(self, A, b, diag=None) -> np.ndarray:
        res = cg_solve(A, b, diag=diag, tol=self.tol, jacobi=True)
        self.iterations += res.iterations
        return res.x

    def _note(self, step: int, message: str) -> None:
        self.events.append((step, message))
        log.debug("step %d: %s", step, message)

    # -- substeps ---------------------------------------------------------------

    def step_m(self, prev: UvmSigmaState) -> FeScalarField:
        p = self.params
        b = self.lumped.diag * prev.m.values / self.dt
        if p.mu_m:
            b = b + p.mu_m * assemble_product_load(
                self.mesh, [prev.u.values, prev.v.values], [_positive_part, None]
            )
        return FeScalarField(self.mesh, self._solve(self._m_matrix, b, self._m_diag))

    def step_v(self, v_prev: FeScalarField, m_new: FeScalarField, step: int | None = None) -> FeScalarField:
        if step is not None and m_new.min() < 0:
            self._note(step, f"m has negative nodal value {m_new.min():.3e} before the ECM update")
        return step_v(v_prev, m_new, self.params.alpha, self.dt)

    def step_u(self, prev: UvmSigmaState, v_new: FeScalarField) -> FeScalarField:
        p = self.params
        u_prev = prev.u.values
        A = self._u_base
        b = self.mass @ u_prev / self.dt
        b = b + assemble_haptotaxis_load(self.mesh, v_new.values, u_prev, prev.sigma.values, p.chi)
        if p.mu_u:
            A = (A + p.mu_u * assemble_weighted_mass(self.mesh, v_new.values)).tocsr()
            b = b + p.mu_u * assemble_product_load(self.mesh, [u_prev], [_logistic])
        return FeScalarField(self.mesh, self._solve(A, b))

    def step_sigma(self, prev: UvmSigmaState, m_new: FeScalarField, v_new: FeScalarField) -> FeVectorField:
        p = self.params
        A = (self.mass / self.dt + p.alpha * assemble_weighted_mass(self.mesh, m_new.values)).tocsr()
        grad_m = element_gradients(self.mesh, m_new.values)
        out = np.empty((self.mesh.n_vertices, 2))
        for k in range(2):
            b = self.mass @ prev.sigma.values[:, k] / self.dt
            if p.alpha:
                b = b - p.alpha * assemble_product_load(
                    self.mesh, [v_new.values, ElementConstant(grad_m[:, k])]
                )
            out[:, k] = self._solve(A, b)
        return FeVectorField(self.mesh, out)

    def advance(self, state: UvmSigmaState) -> UvmSigmaState:
        n = state.step + 1
        m = self.step_m(state)
        v = self.step_v(state.v, m, step=n)
        u = self.step_u(state, v)
        sigma = self.step_sigma(state, m, v)
        return UvmSigmaState(m, v, u, sigma, n, n * self.dt)

    # -- driving ------------------------------------------------------------------

    def initialize(self, problem: ProblemSetup, u_init: str = "nodal") -> UvmSigmaState:
        f = initial_fields(self.mesh, problem, u_init)
        return UvmSigmaState(f["m"], f["v"], f["u"], f["sigma"], 0, 0.0)

    def run(self, state: UvmSigmaState, n_steps: int) -> Iterator[UvmSigmaState]:
        """Yield ``state`` and then each of the next ``n_steps`` states."""
        yield state
        for _ in range(n_steps):
            state = self.advance(state)
            yield state


def _positive_part(x):
    return np.maximum(x, 0.0)


def _logistic(x):
    return x - x * x


# Module-level forms of the substeps. Each builds a throwaway stepper, so prefer
# UvmSigmaScheme when stepping repeatedly.


def step_m(prev: UvmSigmaState, params: ModelParams, dt: float, tol: float = SCHEME_TOL) -> FeScalarField:
    return UvmSigmaScheme(prev.mesh, params, dt, tol).step_m(prev)


def step_u(prev: UvmSigmaState, v_new: FeScalarField, params: ModelParams, dt: float, tol: float = SCHEME_TOL):
    return UvmSigmaScheme(prev.mesh, params, dt, tol).step_u(prev, v_new)


def step_sigma(prev: UvmSigmaState, m_new, v_new, params: ModelParams, dt: float, tol: float = SCHEME_TOL):
    return UvmSigmaScheme(prev.mesh, params, dt, tol).step_sigma(prev, m_new, v_new)


def advance(state: UvmSigmaState, params: ModelParams, dt: float, tol: float = SCHEME_TOL) -> UvmSigmaState:
    return UvmSigmaScheme(state.mesh, params, dt, tol).advance(state)


def initialize(mesh: TriMesh, problem: ProblemSetup, params: ModelParams | None = None, u_init: str = "nodal"):
    params = problem.params if params is None else params
    return UvmSigmaScheme(mesh, params, 1.0).initialize(problem, u_init)
