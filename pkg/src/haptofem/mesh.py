"""Conforming 2D triangulations with cached P1 element geometry."""
from __future__ import annotations

from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data."""


class MeshLoadError(MeshError):
    """Mesh file could not be parsed or failed validation."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class TriMesh:
    """Immutable triangulation of a polygonal domain.

    Triangles are stored counterclockwise. The constructor computes element
    areas, the constant gradients of the three barycentric basis functions,
    the mesh size ``h`` (largest edge length) and a ``nonobtuse`` flag.

    Parameters
    ----------
    vertices
        Array of shape ``(nv, 2)``.
    triangles
        Integer array of shape ``(nt, 3)``. Clockwise triangles are reordered.
    """

    def __init__(self, vertices, triangles):
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError(f"vertices must have shape (nv, 2), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError(f"triangles must have shape (nt, 3), got {triangles.shape}")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        nv = len(vertices)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
            bad = int(np.flatnonzero((triangles < 0).any(1) | (triangles >= nv).any(1))[0])
            raise MeshError(f"triangle {bad} has a vertex index outside [0, {nv})")

        signed = _signed_areas(vertices, triangles)
        flip = signed < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        area = np.abs(signed)
        scale = max(np.ptp(vertices[:, 0]), np.ptp(vertices[:, 1]), 1.0) if nv else 1.0
        degenerate = area <= 1e-14 * scale**2
        if np.any(degenerate):
            bad = int(np.flatnonzero(degenerate)[0])
            raise MeshError(f"triangle {bad} has zero area")
        _check_conforming(triangles)

        self.vertices = _readonly(vertices)
        self.triangles = _readonly(triangles)
        self.areas = _readonly(area)
        self.grads = _readonly(_barycentric_gradients(vertices, triangles, area))
        edges = _edge_lengths(vertices, triangles)
        self.h = float(edges.max())
        self.nonobtuse = bool(_max_angle(vertices, triangles) <= np.pi / 2 + 1e-12)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def element_geometry(self, e: int) -> tuple[float, np.ndarray]:
        """Return ``(area, grads)`` of triangle ``e``; ``grads`` has shape (3, 2)."""
        if not 0 <= e < self.n_triangles:
            raise IndexError(f"triangle index {e} out of range [0, {self.n_triangles})")
        return float(self.areas[e]), self.grads[e].copy()

    def max_angle(self) -> float:
        return float(_max_angle(self.vertices, self.triangles))

    def same_as(self, other: "TriMesh") -> bool:
        return (
            self is other
            or (
                self.vertices.shape == other.vertices.shape
                and self.triangles.shape == other.triangles.shape
                and np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
            )
        )

    def __repr__(self) -> str:
        return f"TriMesh(nv={self.n_vertices}, nt={self.n_triangles}, h={self.h:.4g})"


def _signed_areas(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


def _barycentric_gradients(p: np.ndarray, t: np.ndarray, area: np.ndarray) -> np.ndarray:
    # grad(lambda_i) = rot90(opposite edge) / (2 area), counterclockwise orientation
    x = p[t, 0]
    y = p[t, 1]
    g = np.empty((len(t), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (y[:, j] - y[:, k]) / (2 * area)
        g[:, i, 1] = (x[:, k] - x[:, j]) / (2 * area)
    return g


def _edge_lengths(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return np.stack(
        [np.hypot(*(b - c).T), np.hypot(*(c - a).T), np.hypot(*(a - b).T)], axis=1
    )


def _max_angle(p: np.ndarray, t: np.ndarray) -> float:
    if len(t) == 0:
        return 0.0
    worst = 0.0
    for i in range(3):
        o = p[t[:, i]]
        d1 = p[t[:, (i + 1) % 3]] - o
        d2 = p[t[:, (i + 2) % 3]] - o
        cos = np.einsum("ij,ij->i", d1, d2) / (np.hypot(*d1.T) * np.hypot(*d2.T))
        worst = max(worst, float(np.arccos(np.clip(cos, -1.0, 1.0)).max()))
    return worst


def _check_conforming(t: np.ndarray) -> None:
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        bad = int(np.flatnonzero((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2]))[0])
        raise MeshError(f"triangle {bad} has zero area (repeated vertex)")
    edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-conforming connectivity: an edge is shared by more than two triangles")


def generate_unit_square_mesh(n: int) -> TriMesh:
    """Uniform ``n x n`` grid on [0, 1]^2, each cell cut along its lower-left/upper-right diagonal.

    All triangles are right isosceles, so the mesh is nonobtuse and ``h = sqrt(2)/n``.
    Meshes for ``n`` and ``2n`` are nested.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)  # vertex k = j*(n+1) + i at (xs[i], xs[j])
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    k = (j * (n + 1) + i).ravel()
    lower = np.column_stack([k, k + 1, k + n + 2])
    upper = np.column_stack([k, k + n + 2, k + n + 1])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return TriMesh(vertices, triangles)


def element_geometry(mesh: TriMesh, e: int) -> tuple[float, np.ndarray]:
    return mesh.element_geometry(e)


def write_mesh(mesh: TriMesh, path) -> None:
    """Plain-text format: ``nv nt``, then ``x y`` per vertex, then ``i j k`` (0-based) per triangle."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    """Read a mesh written by :func:`write_mesh`. Errors name the offending line."""
    text = Path(path).read_text().splitlines()
    lines = [(no, ln.split()) for no, ln in enumerate(text, start=1) if ln.strip()]
    if not lines:
        raise MeshLoadError(f"{path}: empty mesh file")
    no, head = lines[0]
    try:
        nv, nt = (int(s) for s in head)
    except ValueError:
        raise MeshLoadError(f"{path}:{no}: expected header 'nv nt', got {' '.join(head)!r}") from None
    if nv < 3 or nt < 1:
        raise MeshLoadError(f"{path}:{no}: need at least 3 vertices and 1 triangle")
    if len(lines) != 1 + nv + nt:
        raise MeshLoadError(f"{path}: expected {1 + nv + nt} non-empty lines, found {len(lines)}")

    vertices = np.empty((nv, 2))
    for k, (no, tok) in enumerate(lines[1 : 1 + nv]):
        try:
            if len(tok) != 2:
                raise ValueError
            vertices[k] = [float(s) for s in tok]
        except ValueError:
            raise MeshLoadError(f"{path}:{no}: expected 'x y', got {' '.join(tok)!r}") from None
        if not np.all(np.isfinite(vertices[k])):
            raise MeshLoadError(f"{path}:{no}: non-finite coordinate")

    triangles = np.empty((nt, 3), dtype=np.int64)
    tri_lines = lines[1 + nv :]
    for k, (no, tok) in enumerate(tri_lines):
        try:
            if len(tok) != 3:
                raise ValueError
            triangles[k] = [int(s) for s in tok]
        except ValueError:
            raise MeshLoadError(f"{path}:{no}: expected 'i j k', got {' '.join(tok)!r}") from None
        if triangles[k].min() < 0 or triangles[k].max() >= nv:
            raise MeshLoadError(f"{path}:{no}: vertex index out of range [0, {nv})")
        if len(set(triangles[k].tolist())) < 3:
            raise MeshLoadError(f"{path}:{no}: triangle has zero area (repeated vertex index)")

    area = np.abs(_signed_areas(vertices, triangles))
    scale = max(np.ptp(vertices[:, 0]), np.ptp(vertices[:, 1]), 1.0)
    zero = np.flatnonzero(area <= 1e-14 * scale**2)
    if zero.size:
        raise MeshLoadError(f"{path}:{tri_lines[zero[0]][0]}: triangle has zero area")
    try:
        return TriMesh(vertices, triangles)
    except MeshError as exc:
        raise MeshLoadError(f"{path}: {exc}") from None
