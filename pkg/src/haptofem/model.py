"""Model constants, the sensitivity function and the time grid."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# CG tolerance used by the time steppers; 1e-10 lets solver residuals show up
# as nodal negatives of order 1e-11 once amplified by phi.
SCHEME_TOL = 1e-12

class PhiOverflowError(OverflowError):
    """phi(v) = exp(X(v)/D_u) is not representable."""

def constant_chi(value: float) -> tuple[Callable, Callable]:
    """Sensitivity ``chi(v) = value`` and its antiderivative ``X(v) = value * v``."""

    def chi(v):
        return np.full_like(np.asarray(v, dtype=float), value)

    def antiderivative(v):
        return value * np.asarray(v, dtype=float)

    return chi, antiderivative

@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the cells/matrix/enzyme system.

    ``chi`` maps ECM density to haptotactic sensitivity; ``chi_antiderivative``
    must vanish at 0 and is used to build ``phi(v) = exp(X(v) / D_u)``.
    ``chi_value`` records the constant when ``chi`` is constant (for manifests).
    """

    D_u: float
    D_m: float
    alpha: float
    rho_m: float
    mu_m: float
    mu_u: float
    chi: Callable = field(repr=False)
    chi_antiderivative: Callable = field(repr=False)
    chi_value: float | None = None

    def __post_init__(self):
        if not (self.D_u > 0 and self.D_m > 0):
            raise ValueError("diffusion coefficients D_u, D_m must be positive")
        for name in ("alpha", "rho_m", "mu_m", "mu_u"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if abs(float(np.asarray(self.chi_antiderivative(0.0)))) > 1e-14:
            raise ValueError("chi antiderivative must vanish at v = 0")

    @classmethod
    def with_constant_chi(cls, chi: float, **kw) -> "ModelParams":
        if chi < 0:
            raise ValueError("chi must be nonnegative")
        f, X = constant_chi(chi)
        return cls(chi=f, chi_antiderivative=X, chi_value=chi, **kw)

    def replace(self, **kw) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **kw)

    def phi(self, v):
        """``exp(X(v) / D_u)``, elementwise."""
        with np.errstate(over="ignore"):
            out = np.exp(np.asarray(self.chi_antiderivative(v), dtype=float) / self.D_u)
        if not np.all(np.isfinite(out)):
            bad = np.asarray(v, dtype=float).ravel()[~np.isfinite(out).ravel()][0]
            raise PhiOverflowError(f"phi(v) overflows at v = {bad}")
        return out

    def as_dict(self) -> dict:
        return {
            "D_u": self.D_u,
            "D_m": self.D_m,
            "alpha": self.alpha,
            "rho_m": self.rho_m,
            "mu_m": self.mu_m,
            "mu_u": self.mu_u,
            "chi": self.chi_value,
        }

def phi_eval(v: float, params: ModelParams) -> float:
    return float(params.phi(v))

@dataclass(frozen=True)
class TimeConfig:
    """Uniform partition of ``[0, T]`` with ``N = T / dt`` steps."""

    dt: float
    T: float
    tol: float = SCHEME_TOL

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.tol > 0:
            raise ValueError("solver tolerance must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def time(self, n: int) -> float:
        return n * self.dt

    def snap(self, t: float) -> int:
        """Index of the grid time nearest ``t``; must lie within ``dt/2``."""
        if t < -1e-12 or t > self.T + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.T}]")
        n = int(math.floor(t / self.dt + 0.5))
        if abs(n * self.dt - t) > self.dt / 2 + 1e-12:
            raise ValueError(f"time {t} is not within dt/2 of a grid time")
        return min(n, self.n_steps)
