"""Master-domain shape functions on tau in [-1, 1] and Gauss-Legendre rules.

The cubic Hermite velocity functions ``H1``, ``H2`` carry the Jacobian
``J = dt/dtau`` so that their coefficients are nodal velocities.  All
derivative evaluators return derivatives with respect to physical time,
i.e. master derivatives divided by ``J``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "HermiteBasis",
    "QuadratureRule",
    "gauss_rule",
    "hermite_eval",
    "hermite_deriv_eval",
    "hermite_second_deriv_eval",
    "lagrange_eval",
    "lagrange_deriv_eval",
]

MAX_GAUSS_POINTS = 16


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(tau)) or np.any(np.abs(tau) > 1.0):
        raise ValueError("tau must lie in [-1, 1]")
    return tau


@dataclass(frozen=True)
class HermiteBasis:
    """Cubic Hermite basis on one interval of length ``2 * jac``."""

    jac: float

    def __post_init__(self):
        if not (self.jac > 0.0 and np.isfinite(self.jac)):
            raise ValueError(f"Jacobian must be positive, got {self.jac}")

    @classmethod
    def from_step(cls, dt: float) -> "HermiteBasis":
        return cls(0.5 * dt)

    @property
    def dt(self) -> float:
        return 2.0 * self.jac


def hermite_eval(basis: HermiteBasis, tau):
    """Return ``(R1, R2, H1, H2)`` at ``tau`` (scalar or array)."""
    tau = _check_tau(tau)
    J = basis.jac
    r1 = 0.25 * (2.0 + tau) * (1.0 - tau) ** 2
    r2 = 0.25 * (2.0 - tau) * (1.0 + tau) ** 2
    h1 = 0.25 * J * (tau + 1.0) * (1.0 - tau) ** 2
    h2 = 0.25 * J * (tau - 1.0) * (1.0 + tau) ** 2
    return r1, r2, h1, h2


def hermite_deriv_eval(basis: HermiteBasis, tau):
    """Return time derivatives ``(dR1, dR2, dH1, dH2)`` at ``tau``."""
    tau = _check_tau(tau)
    J = basis.jac
    dr2 = 0.75 * (1.0 - tau**2) / J
    dh1 = 0.25 * (1.0 - tau) * (-1.0 - 3.0 * tau)
    dh2 = 0.25 * (1.0 + tau) * (3.0 * tau - 1.0)
    return -dr2, dr2, dh1, dh2


def hermite_second_deriv_eval(basis: HermiteBasis, tau):
    """Second time derivatives ``(ddR1, ddR2, ddH1, ddH2)``."""
    tau = _check_tau(tau)
    J = basis.jac
    ddr2 = -1.5 * tau / J**2
    ddh1 = 0.25 * (6.0 * tau - 2.0) / J
    ddh2 = 0.25 * (6.0 * tau + 2.0) / J
    return -ddr2, ddr2, ddh1, ddh2


def lagrange_eval(tau):
    """Linear Lagrange functions ``(R1, R2)``."""
    tau = _check_tau(tau)
    return 0.5 * (1.0 - tau), 0.5 * (1.0 + tau)


def lagrange_deriv_eval(jac: float, tau):
    """Time derivatives of the linear Lagrange functions for Jacobian ``jac``."""
    tau = _check_tau(tau)
    d = np.full_like(tau, 0.5 / jac)
    return -d, d


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre abscissae and weights on [-1, 1]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)

    def integrate(self, func, jac: float = 1.0):
        """Integrate ``func(tau)`` over the mapped interval (vectorised in tau)."""
        vals = np.asarray(func(self.points))
        return jac * np.tensordot(self.weights, vals, axes=(0, 0))


@lru_cache(maxsize=None)
def _leggauss(n: int):
    pts, wts = np.polynomial.legendre.leggauss(n)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def gauss_rule(n_pts: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``n_pts`` points, exact up to degree ``2n - 1``."""
    if int(n_pts) != n_pts or not 1 <= n_pts <= MAX_GAUSS_POINTS:
        raise ValueError(f"unsupported Gauss order {n_pts}; need 1..{MAX_GAUSS_POINTS}")
    pts, wts = _leggauss(int(n_pts))
    return QuadratureRule(pts, wts)
