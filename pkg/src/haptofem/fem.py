"""P1 finite elements on a :class:`~haptofem.mesh.TriMesh`.

Nodal fields, quadrature, assembly of the mass / lumped mass / stiffness
matrices and of the nonlinear load vectors used by both time-stepping
schemes, the elliptic projection and the Gram-matrix norms.

Nonlinear coefficients inside consistent (non-lumped) integrals are applied
pointwise to the P1 field values at the quadrature points.  Lumped forms use
nodal values only.
"""
from __future__ import annotations

import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import DiagMatrix, cg_solve, dot
from .mesh import TriMesh

THREADS_ENV = "HAPTOFEM_THREADS"


# --------------------------------------------------------------------------- fields


@dataclass(frozen=True, eq=False)
class FeScalarField:
    """P1 field: one value per mesh vertex."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} nodal values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True, eq=False)
class FeVectorField:
    """P1 vector field with two components per vertex, stored as shape ``(nv, 2)``."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != 2 * self.mesh.n_vertices:
            raise ValueError(f"expected {2 * self.mesh.n_vertices} values, got {v.size}")
        v = v.reshape(self.mesh.n_vertices, 2)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def component(self, k: int) -> np.ndarray:
        return self.values[:, k]


def zero_field(mesh: TriMesh) -> FeScalarField:
    return FeScalarField(mesh, np.zeros(mesh.n_vertices))


def _values(f, mesh: TriMesh | None = None) -> np.ndarray:
    if isinstance(f, (FeScalarField, FeVectorField)):
        if mesh is not None and not f.mesh.same_as(mesh):
            raise ValueError("field lives on a different mesh")
        return f.values
    return np.asarray(f, dtype=float)


def _check_same_mesh(*fields) -> None:
    meshes = [f.mesh for f in fields if isinstance(f, (FeScalarField, FeVectorField))]
    for m in meshes[1:]:
        if not m.same_as(meshes[0]):
            raise ValueError("fields live on different meshes")


# ----------------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle; weights are normalized to sum to one."""

    points: np.ndarray  # barycentric coordinates, shape (nq, 3)
    weights: np.ndarray  # shape (nq,)
    degree: int

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to 1")


def _sym3(a: float) -> list[list[float]]:
    b = 1.0 - 2.0 * a
    return [[b, a, a], [a, b, a], [a, a, b]]


QUAD2 = QuadratureRule(np.array(_sym3(1 / 6)), np.full(3, 1 / 3), 2)

_A4, _B4 = 0.445948490915964886318, 0.091576213509770743460
_W4A, _W4B = 0.223381589678011465944, 0.109951743655321867389
QUAD4 = QuadratureRule(
    np.array(_sym3(_A4) + _sym3(_B4)),
    np.array([_W4A] * 3 + [_W4B] * 3),
    4,
)


def at_quadrature(mesh: TriMesh, values: np.ndarray, rule: QuadratureRule = QUAD2) -> np.ndarray:
    """P1 field evaluated at the quadrature points of every triangle, shape ``(nt, nq)``."""
    return values[mesh.triangles] @ rule.points.T


def quadrature_points(mesh: TriMesh, rule: QuadratureRule = QUAD2) -> np.ndarray:
    """Physical quadrature points, shape ``(nt, nq, 2)``."""
    return np.einsum("qi,tid->tqd", rule.points, mesh.vertices[mesh.triangles])


def element_gradients(mesh: TriMesh, values) -> np.ndarray:
    """Piecewise-constant gradient of a P1 field, shape ``(nt, 2)``."""
    v = _values(values, mesh)
    return np.einsum("ti,tid->td", v[mesh.triangles], mesh.grads)


@dataclass(frozen=True)
class ElementConstant:
    """Load factor that is constant on each triangle (e.g. a component of a P1 gradient)."""

    values: np.ndarray


# ------------------------------------------------------------------------- assembly


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be a non-negative integer, got {n}")
    return n


def _scatter_sum(index: np.ndarray, weights: np.ndarray, size: int) -> np.ndarray:
    """Deterministic scatter-add; with threads, partial sums are merged in chunk order."""
    nthreads = _threads()
    if nthreads <= 1 or len(index) < 20000:
        return np.bincount(index, weights=weights, minlength=size)
    chunks = np.array_split(np.arange(len(index)), nthreads)
    with ThreadPoolExecutor(nthreads) as pool:
        parts = list(pool.map(lambda c: np.bincount(index[c], weights=weights[c], minlength=size), chunks))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


class _Pattern:
    """CSR sparsity of the P1 matrices on one mesh plus the element-to-slot map."""

    def __init__(self, mesh: TriMesh):
        t = mesh.triangles
        n = mesh.n_vertices
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        key = rows * n + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        self.slot = inverse.astype(np.int64)
        self.nnz = len(uniq)
        r, c = np.divmod(uniq, n)
        self.indices = c.astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))]).astype(np.int32)
        self.n = n

    def build(self, local: np.ndarray) -> sp.csr_matrix:
        data = _scatter_sum(self.slot, local.reshape(-1), self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


_patterns: "weakref.WeakKeyDictionary[TriMesh, _Pattern]" = weakref.WeakKeyDictionary()


def _pattern(mesh: TriMesh) -> _Pattern:
    p = _patterns.get(mesh)
    if p is None:
        p = _patterns[mesh] = _Pattern(mesh)
    return p


def _assemble_vector(mesh: TriMesh, local: np.ndarray) -> np.ndarray:
    return _scatter_sum(mesh.triangles.ravel(), local.reshape(-1), mesh.n_vertices)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_lumped_mass(mesh: TriMesh) -> DiagMatrix:
    """Diagonal of the lumped mass matrix: sum of ``area/3`` over incident triangles."""
    return DiagMatrix(_assemble_vector(mesh, np.repeat(mesh.areas / 3.0, 3)))


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    local = mesh.areas[:, None, None] * _MASS_REF
    return _pattern(mesh).build(local)


def _coefficient(mesh: TriMesh, weight, weight_map, rule: QuadratureRule) -> np.ndarray:
    wq = at_quadrature(mesh, _values(weight, mesh), rule)
    return wq if weight_map is None else weight_map(wq)


def assemble_stiffness(
    mesh: TriMesh,
    weight=None,
    weight_map: Callable[[np.ndarray], np.ndarray] | None = None,
    rule: QuadratureRule = QUAD2,
) -> sp.csr_matrix:
    """Stiffness matrix ``int c grad(l_i).grad(l_j)``.

    Without ``weight`` the coefficient is 1.  Otherwise the coefficient at a
    quadrature point is ``weight_map(w(q))`` where ``w`` is the P1 field
    ``weight`` (identity map if ``weight_map`` is None).
    """
    gg = np.einsum("tid,tjd->tij", mesh.grads, mesh.grads)
    if weight is None:
        scale = mesh.areas
    else:
        scale = mesh.areas * (_coefficient(mesh, weight, weight_map, rule) @ rule.weights)
    return _pattern(mesh).build(scale[:, None, None] * gg)


def assemble_weighted_mass(
    mesh: TriMesh,
    weight,
    weight_map: Callable[[np.ndarray], np.ndarray] | None = None,
    rule: QuadratureRule = QUAD2,
) -> sp.csr_matrix:
    """Consistent mass with coefficient: ``int c l_i l_j``, ``c`` composed at quadrature points."""
    c = _coefficient(mesh, weight, weight_map, rule) * rule.weights  # (nt, nq)
    P = rule.points
    local = np.einsum("tq,qi,qj->tij", c, P, P) * mesh.areas[:, None, None]
    return _pattern(mesh).build(local)


def assemble_weighted_lumped(mesh: TriMesh, weight) -> DiagMatrix:
    """Lumped mass with nodal coefficient: entry ``j`` is ``M_L[j, j] * weight[j]``."""
    return DiagMatrix(assemble_lumped_mass(mesh).diag * _values(weight, mesh))


def discrete_inner_h(u1, u2) -> float:
    """Lumped inner product ``int I_h(u1 u2)`` of two P1 fields."""
    _check_same_mesh(u1, u2)
    mesh = u1.mesh if isinstance(u1, FeScalarField) else u2.mesh
    return dot(_values(u1, mesh), assemble_lumped_mass(mesh).diag * _values(u2, mesh))


def discrete_norm_h(u) -> float:
    return float(np.sqrt(discrete_inner_h(u, u)))


Factor = "np.ndarray | FeScalarField | ElementConstant"


def _factor_at_quadrature(mesh: TriMesh, factor, rule: QuadratureRule) -> np.ndarray:
    if isinstance(factor, ElementConstant):
        vals = np.asarray(factor.values, dtype=float)
        if vals.shape != (mesh.n_triangles,):
            raise ValueError("element-constant factor needs one value per triangle")
        return np.repeat(vals[:, None], len(rule.weights), axis=1)
    return at_quadrature(mesh, _values(factor, mesh), rule)


def assemble_product_load(
    mesh: TriMesh,
    factors: Sequence,
    maps: Sequence[Callable | None] | None = None,
    rule: QuadratureRule = QUAD2,
) -> np.ndarray:
    """Load vector ``int (prod_k map_k(f_k)) l_i``.

    Each factor is a P1 field (evaluated at the quadrature points) or an
    :class:`ElementConstant`; ``maps[k]`` is applied pointwise to factor ``k``.
    """
    if maps is None:
        maps = [None] * len(factors)
    if len(maps) != len(factors):
        raise ValueError("need one map per factor")
    integrand = np.ones((mesh.n_triangles, len(rule.weights)))
    for f, g in zip(factors, maps):
        fq = _factor_at_quadrature(mesh, f, rule)
        integrand = integrand * (fq if g is None else g(fq))
    local = (integrand * rule.weights) @ rule.points * mesh.areas[:, None]
    return _assemble_vector(mesh, local)


def assemble_haptotaxis_load(
    mesh: TriMesh,
    v,
    u_prev,
    sigma_prev,
    chi: Callable[[np.ndarray], np.ndarray],
    rule: QuadratureRule = QUAD2,
) -> np.ndarray:
    """``int chi(v) u_prev sigma_prev . grad(l_i)`` with every factor taken at quadrature points."""
    _check_same_mesh(v, u_prev, sigma_prev)
    s = _values(sigma_prev, mesh).reshape(mesh.n_vertices, 2)
    coef = chi(at_quadrature(mesh, _values(v, mesh), rule)) * at_quadrature(mesh, _values(u_prev, mesh), rule)
    sx = ((coef * at_quadrature(mesh, s[:, 0], rule)) @ rule.weights) * mesh.areas
    sy = ((coef * at_quadrature(mesh, s[:, 1], rule)) @ rule.weights) * mesh.areas
    local = sx[:, None] * mesh.grads[:, :, 0] + sy[:, None] * mesh.grads[:, :, 1]
    return _assemble_vector(mesh, local)


# ------------------------------------------------------------- interpolation, etc.


def nodal_interpolate(f: Callable[[np.ndarray, np.ndarray], np.ndarray], mesh: TriMesh) -> FeScalarField:
    """``I_h f``: the P1 field with ``f`` at every vertex. ``f`` takes ``(x, y)`` arrays."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape).copy()
    if np.any(np.isnan(vals)):
        j = int(np.flatnonzero(np.isnan(vals))[0])
        raise ValueError(f"function returned NaN at vertex {j} ({x[j]}, {y[j]})")
    return FeScalarField(mesh, vals)


def positive_part_nodal(f: FeScalarField) -> FeScalarField:
    return FeScalarField(f.mesh, np.maximum(f.values, 0.0))


def negative_part_nodal(f: FeScalarField) -> FeScalarField:
    return FeScalarField(f.mesh, np.minimum(f.values, 0.0))


def elliptic_projection(
    mesh: TriMesh,
    f: Callable,
    grad_f: Callable | None,
    *,
    rule: QuadratureRule = QUAD4,
    tol: float = 1e-12,
) -> FeScalarField:
    """P1 field ``p`` with ``(grad(p - f), grad w) + (p - f, w) = 0`` for all P1 ``w``.

    ``grad_f(x, y)`` must return the pair ``(f_x, f_y)``; numerical
    differentiation is deliberately not offered.
    """
    if grad_f is None:
        raise ValueError("elliptic projection needs the analytic gradient of f")
    q = quadrature_points(mesh, rule)
    x, y = q[..., 0], q[..., 1]
    fq = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    gx, gy = (np.broadcast_to(np.asarray(g, dtype=float), x.shape) for g in grad_f(x, y))
    wa = rule.weights * mesh.areas[:, None]  # (nt, nq)
    local = (fq * wa) @ rule.points
    local += ((gx * wa).sum(1))[:, None] * mesh.grads[:, :, 0]
    local += ((gy * wa).sum(1))[:, None] * mesh.grads[:, :, 1]
    b = _assemble_vector(mesh, local)
    A = assemble_stiffness(mesh) + assemble_mass(mesh)
    return FeScalarField(mesh, cg_solve(A, b, tol=tol).x)


# ----------------------------------------------------------------------------- norms


_gram: "weakref.WeakKeyDictionary[TriMesh, dict]" = weakref.WeakKeyDictionary()


def _gram_matrix(mesh: TriMesh, kind: str) -> sp.csr_matrix:
    cache = _gram.setdefault(mesh, {})
    if kind not in cache:
        cache[kind] = assemble_mass(mesh) if kind == "mass" else assemble_stiffness(mesh)
    return cache[kind]


def l2_norm(a) -> float:
    mesh = a.mesh
    vals = a.values.reshape(mesh.n_vertices, -1)
    M = _gram_matrix(mesh, "mass")
    return float(np.sqrt(sum(max(dot(c, M @ c), 0.0) for c in vals.T)))


def h1_seminorm(a) -> float:
    mesh = a.mesh
    vals = a.values.reshape(mesh.n_vertices, -1)
    K = _gram_matrix(mesh, "stiffness")
    return float(np.sqrt(sum(max(dot(c, K @ c), 0.0) for c in vals.T)))


def h1_norm(a) -> float:
    return float(np.hypot(l2_norm(a), h1_seminorm(a)))


def locate_points(mesh: TriMesh, points: np.ndarray, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangle and barycentric coordinates for each point (brute force, chunked)."""
    points = np.asarray(points, dtype=float)
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    a = p[:, 0]
    # rows of inv map (x - a) to (l1, l2)
    e1, e2 = p[:, 1] - a, p[:, 2] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    inv = np.stack([np.stack([e2[:, 1], -e2[:, 0]], 1), np.stack([-e1[:, 1], e1[:, 0]], 1)], 1) / det[:, None, None]
    tri = np.full(len(points), -1, dtype=np.int64)
    bary = np.zeros((len(points), 3))
    tol = 1e-12
    for s in range(0, len(points), chunk):
        pts = points[s : s + chunk]
        d = pts[None, :, :] - a[:, None, :]  # (nt, np, 2)
        l12 = np.einsum("tkd,tpd->tpk", inv, d)
        l0 = 1.0 - l12.sum(-1)
        lam_min = np.minimum(l0, l12.min(-1))  # (nt, np)
        best = lam_min.argmax(0)
        ok = lam_min[best, np.arange(len(pts))] >= -tol
        if not np.all(ok):
            k = int(np.flatnonzero(~ok)[0])
            raise ValueError(f"point {tuple(pts[k])} lies outside the mesh")
        tri[s : s + chunk] = best
        idx = np.arange(len(pts))
        bary[s : s + chunk, 0] = l0[best, idx]
        bary[s : s + chunk, 1:] = l12[best, idx]
    return tri, bary


def evaluate_p1(mesh: TriMesh, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate a P1 field (scalar or per-vertex vector) at arbitrary points of the domain."""
    tri, bary = locate_points(mesh, points)
    vals = np.asarray(values, dtype=float)
    nodal = vals[mesh.triangles[tri]]  # (np, 3, ...)
    return np.einsum("pi,pi...->p...", bary, nodal)


def prolong(field, fine: TriMesh):
    """Interpolate a P1 field onto the vertices of another mesh (exact for nested refinements)."""
    vals = evaluate_p1(field.mesh, field.values, fine.vertices)
    return type(field)(fine, vals)


def l2_error_vs_field(a, b, *, prolongate: bool = False) -> float:
    """``||a - b||_{L2}``; with ``prolongate`` the coarser field is interpolated to the finer mesh."""
    a, b = _aligned(a, b, prolongate)
    return l2_norm(type(a)(a.mesh, a.values - b.values))


def h1_error_vs_field(a, b, *, prolongate: bool = False) -> float:
    a, b = _aligned(a, b, prolongate)
    return h1_norm(type(a)(a.mesh, a.values - b.values))


def _aligned(a, b, prolongate: bool):
    if a.mesh.same_as(b.mesh):
        return a, b
    if not prolongate:
        raise ValueError("fields live on different meshes; pass prolongate=True")
    if a.mesh.n_vertices > b.mesh.n_vertices:
        return a, prolong(b, a.mesh)
    return prolong(a, b.mesh), b
