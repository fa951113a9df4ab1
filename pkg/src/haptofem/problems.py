"""Experiment setups: homogeneous ECM (test1), heterogeneous ECM (test2), zero data."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import FeScalarField, FeVectorField, elliptic_projection, nodal_interpolate
from .model import ModelParams

# Bumps of the heterogeneous ECM: v0 = 1 - sum_i exp(-b_i (x - x_i)^2 - c_i (y - y_i)^2).
# Columns: b, c, x_center, y_center.
TEST2_BUMPS = np.array(
    [
        [800.0, 100.0, 0.2, 0.2],
        [800.0, 100.0, 0.5, 0.1],
        [600.0, 200.0, 0.3, 0.5],
        [600.0, 200.0, 0.6, 0.7],
        [600.0, 200.0, 0.8, 0.2],
        [400.0, 300.0, 0.5, 0.9],
        [100.0, 50.0, 0.8, 0.7],
    ]
)

TUMOR_WIDTH = 400.0


@dataclass(frozen=True)
class ProblemSetup:
    """Parameters plus initial data.

    ``sigma0`` returns ``(dv0/dx, dv0/dy)`` of the smooth (unclamped) ``v0``;
    ``grad_u0`` is used when ``u0`` is initialized by elliptic projection.
    """

    name: str
    params: ModelParams
    u0: Callable = field(repr=False)
    v0: Callable = field(repr=False)
    m0: Callable = field(repr=False)
    sigma0: Callable = field(repr=False)
    grad_u0: Callable | None = field(default=None, repr=False)
    clamp_negative_v0: bool = False


def reference_params(mu_u: float = 0.0) -> ModelParams:
    """D_m = 0.001, rho_m = 0, mu_m = 0.1, alpha = 10, D_u = 0.001, chi = 0.005."""
    return ModelParams.with_constant_chi(
        0.005, D_u=0.001, D_m=0.001, alpha=10.0, rho_m=0.0, mu_m=0.1, mu_u=float(mu_u)
    )


def tumor(x, y):
    return np.exp(-TUMOR_WIDTH * (x - 0.5) ** 2 - TUMOR_WIDTH * (y - 0.5) ** 2)


def tumor_gradient(x, y):
    u = tumor(x, y)
    return -2 * TUMOR_WIDTH * (x - 0.5) * u, -2 * TUMOR_WIDTH * (y - 0.5) * u


def test1_setup(mu_u: float = 0.0) -> ProblemSetup:
    def v0(x, y):
        return 1.0 - tumor(x, y)

    def m0(x, y):
        return 0.5 * tumor(x, y)

    def sigma0(x, y):
        gx, gy = tumor_gradient(x, y)
        return -gx, -gy

    return ProblemSetup("test1", reference_params(mu_u), tumor, v0, m0, sigma0, tumor_gradient)


def _bumps(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    terms = [np.exp(-b * (x - xc) ** 2 - c * (y - yc) ** 2) for b, c, xc, yc in TEST2_BUMPS]
    return terms


def test2_v0(x, y):
    return 1.0 - sum(_bumps(x, y))


def test2_sigma0(x, y):
    gx = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
    gy = np.zeros_like(gx)
    for (b, c, xc, yc), e in zip(TEST2_BUMPS, _bumps(x, y)):
        gx = gx + 2 * b * (x - xc) * e
        gy = gy + 2 * c * (y - yc) * e
    return gx, gy


def test2_setup(mu_u: float = 0.0) -> ProblemSetup:
    def m0(x, y):
        return 0.5 * tumor(x, y)

    return ProblemSetup(
        "test2", reference_params(mu_u), tumor, test2_v0, m0, test2_sigma0, tumor_gradient, clamp_negative_v0=True
    )


def zero_setup(mu_u: float = 0.0) -> ProblemSetup:
    """All initial data zero; every scheme must keep it zero."""

    def zero(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def zero2(x, y):
        return zero(x, y), zero(x, y)

    return ProblemSetup("zero", reference_params(mu_u), zero, zero, zero, zero2, zero2)


PROBLEMS = {"test1": test1_setup, "test2": test2_setup, "zero": zero_setup}


def get_problem(name: str, mu_u: float = 0.0) -> ProblemSetup:
    try:
        return PROBLEMS[name](mu_u)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


class InitialDataError(ValueError):
    """Interpolated initial data violate the sign hypotheses."""


def initial_fields(mesh, problem: ProblemSetup, u_init: str = "nodal", clamp: bool | None = None) -> dict:
    """Discrete initial data ``{"u", "v", "m", "sigma"}`` on ``mesh``.

    ``v``, ``m`` and ``sigma`` are nodal interpolants. ``u`` is the nodal
    interpolant (``u_init="nodal"``) or the elliptic projection
    (``u_init="elliptic"``). Negative nodal ``v`` is clamped to zero when the
    problem (or ``clamp``) asks for it and rejected otherwise; negative ``m``
    is always rejected.
    """
    clamp = problem.clamp_negative_v0 if clamp is None else clamp
    v = nodal_interpolate(problem.v0, mesh)
    if v.min() < 0:
        if not clamp:
            raise InitialDataError(f"initial v has negative nodal value {v.min():.3e}")
        v = FeScalarField(mesh, np.maximum(v.values, 0.0))
    m = nodal_interpolate(problem.m0, mesh)
    if m.min() < 0:
        raise InitialDataError(f"initial m has negative nodal value {m.min():.3e}")
    if u_init == "nodal":
        u = nodal_interpolate(problem.u0, mesh)
    elif u_init == "elliptic":
        u = elliptic_projection(mesh, problem.u0, problem.grad_u0)
    else:
        raise ValueError(f"u_init must be 'nodal' or 'elliptic', got {u_init!r}")
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    sx, sy = problem.sigma0(x, y)
    sigma = FeVectorField(mesh, np.column_stack([np.broadcast_to(sx, x.shape), np.broadcast_to(sy, x.shape)]))
    return {"u": u, "v": v, "m": m, "sigma": sigma}
