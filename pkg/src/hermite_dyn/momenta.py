"""Discrete momenta and pseudo-momenta of one cubic Hermite time interval.

For an interval of length ``dt`` with end coefficients ``(x_n, x_n1, v_n, v_n1)``
the four quantities are the endpoint derivatives of the interval action::

    p_minus = -dS/dx_n    p_plus = dS/dx_n1
    q_minus = -dS/dv_n    q_plus = dS/dv_n1

Kinetic and linear-elastic contributions are closed-form polynomial
stencils.  The remainder ``ftilde`` is integrated by Gauss quadrature on the
Hermite trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, SystemModel
from .shapefn import HermiteBasis, QuadratureRule, gauss_rule, hermite_eval

__all__ = [
    "IntervalCoefficients",
    "MomentaSet",
    "MomentaTangents",
    "compute_momenta",
    "momenta_tangents",
    "momentum_balance_residual",
    "interval_quantities",
    "DEFAULT_TIME_QUADRATURE",
]

DEFAULT_TIME_QUADRATURE = 5

# Integrals over one interval of products of the Hermite functions, written
# in terms of dt.  Order of functions: R1, R2, H1, H2.
#   mass: int dphi_a/dt * dphi_b/dt dt ;  stiff: int phi_a * phi_b dt


def _mass_stencil(dt):
    return np.array([
        [6 / (5 * dt), -6 / (5 * dt), 1 / 10, 1 / 10],
        [-6 / (5 * dt), 6 / (5 * dt), -1 / 10, -1 / 10],
        [1 / 10, -1 / 10, 2 * dt / 15, -dt / 30],
        [1 / 10, -1 / 10, -dt / 30, 2 * dt / 15],
    ])


def _stiff_stencil(dt):
    return dt / 420 * np.array([
        [156, 54, 22 * dt, -13 * dt],
        [54, 156, 13 * dt, -22 * dt],
        [22 * dt, 13 * dt, 4 * dt**2, -3 * dt**2],
        [-13 * dt, -22 * dt, -3 * dt**2, 4 * dt**2],
    ])


# int phi_a dt for R1, R2, H1, H2
def _load_stencil(dt):
    return np.array([dt / 2, dt / 2, dt**2 / 12, -(dt**2) / 12])


# p_minus, p_plus, q_minus, q_plus = sign * dS/d(coef_a)
_SIGNS = np.array([-1.0, 1.0, -1.0, 1.0])
# coefficient index (R1, R2, H1, H2) of each momentum
_COEF = (0, 1, 2, 3)


@dataclass(frozen=True)
class IntervalCoefficients:
    """Hermite coefficients of one time interval."""

    x_n: np.ndarray
    x_n1: np.ndarray
    v_n: np.ndarray
    v_n1: np.ndarray
    dt: float
    X: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.x_n).size
        for name in ("x_n1", "v_n", "v_n1", "X"):
            if np.asarray(getattr(self, name)).size != n:
                raise DimensionError(f"{name} does not match x_n ({n} entries)")
        if not self.dt > 0:
            raise ValueError("time step must be positive")

    @property
    def u_n(self):
        return np.asarray(self.x_n) - self.X

    @property
    def u_n1(self):
        return np.asarray(self.x_n1) - self.X

    def stacked(self):
        """Coefficients as a ``(4, ndof)`` array in R1, R2, H1, H2 order."""
        return np.vstack([self.x_n, self.x_n1, self.v_n, self.v_n1])

    def positions(self, tau):
        """Interpolated positions at master coordinates ``tau`` -> ``(len(tau), ndof)``."""
        phi = np.array(hermite_eval(HermiteBasis.from_step(self.dt), np.atleast_1d(tau)))
        return phi.T @ self.stacked()


@dataclass(frozen=True)
class MomentaSet:
    p_minus: np.ndarray
    p_plus: np.ndarray
    q_minus: np.ndarray
    q_plus: np.ndarray

    def as_tuple(self):
        return self.p_minus, self.p_plus, self.q_minus, self.q_plus


@dataclass(frozen=True)
class MomentaTangents:
    """Derivatives of the four momenta with respect to ``x_n1`` and ``v_n1``.

    ``dx[i]`` and ``dv[i]`` follow the order ``p_minus, p_plus, q_minus, q_plus``.
    """

    dx: tuple
    dv: tuple


def _nonlinear_integrals(model, c, quad, tangents):
    """``int phi_a ftilde dt`` (4, n) and ``int phi_a phi_b dftilde/dx dt`` (4, 4, n, n)."""
    n = model.ndof
    if model.linear:
        # ftilde is constant: integrate the shape functions exactly
        f = model.nonlinear_force(c.x_n)
        loads = np.outer(_load_stencil(c.dt), f)
        return loads, None
    basis = HermiteBasis.from_step(c.dt)
    phi = np.array(hermite_eval(basis, quad.points))  # (4, nq)
    xq = phi.T @ c.stacked()
    wj = quad.weights * basis.jac
    loads = np.zeros((4, n))
    tang = np.zeros((4, 2, n, n)) if tangents else None
    for q in range(quad.n_points):
        if tangents:
            fq, kq = model.nonlinear_force_and_tangent(xq[q])
        else:
            fq = model.nonlinear_force(xq[q])
        loads += wj[q] * np.outer(phi[:, q], fq)
        if tangents:
            # only derivatives w.r.t. the unknown coefficients x_n1 (R2) and v_n1 (H2)
            for b, col in enumerate((1, 3)):
                w = wj[q] * phi[:, q] * phi[col, q]
                tang[:, b] += w[:, None, None] * kq
    return loads, tang


def interval_quantities(model: SystemModel, c: IntervalCoefficients, quad: QuadratureRule | None = None,
                        tangents: bool = True):
    """Momenta and, optionally, their tangents in one pass over the quadrature points."""
    if np.asarray(c.x_n).size != model.ndof:
        raise DimensionError(f"coefficients have {np.asarray(c.x_n).size} DOFs, model has {model.ndof}")
    quad = quad or gauss_rule(DEFAULT_TIME_QUADRATURE)
    dt = c.dt
    m = model.mass_matrix()
    k = model.linear_stiffness()
    coef = c.stacked()
    ucoef = coef - np.vstack([c.X, c.X, np.zeros_like(c.X), np.zeros_like(c.X)])

    ms = _mass_stencil(dt)
    ks = _stiff_stencil(dt)
    loads, ntang = _nonlinear_integrals(model, c, quad, tangents)

    # dS/dcoef_a = M_ab m coef_b - K_ab k u_b - int phi_a ftilde.  The mass
    # stencil annihilates the constant X, so it acts on displacements to
    # avoid cancellation of O(1) positions when dt is small.
    mv = m @ (ms @ ucoef).T  # (n, 4)
    ku = k @ (ks @ ucoef).T
    grad = mv - ku - loads.T
    mom = MomentaSet(*(_SIGNS[i] * grad[:, i] for i in range(4)))
    if not tangents:
        return mom, None

    dx, dv = [], []
    for i, a in enumerate(_COEF):
        s = _SIGNS[i]
        for b, out in ((1, dx), (3, dv)):
            d = ms[a, b] * m - ks[a, b] * k
            if ntang is not None:
                d = d - ntang[a, 0 if b == 1 else 1]
            out.append(s * d)
    return mom, MomentaTangents(tuple(dx), tuple(dv))


def compute_momenta(model: SystemModel, c: IntervalCoefficients, quad: QuadratureRule | None = None) -> MomentaSet:
    """Discrete momenta ``p-_n, p+_n+1`` and pseudo-momenta ``q-_n, q+_n+1``."""
    return interval_quantities(model, c, quad, tangents=False)[0]


def momenta_tangents(model: SystemModel, c: IntervalCoefficients,
                     quad: QuadratureRule | None = None) -> MomentaTangents:
    """Newton tangents of the four momenta with respect to ``x_n1`` and ``v_n1``."""
    return interval_quantities(model, c, quad, tangents=True)[1]


def momentum_balance_residual(model: SystemModel, c: IntervalCoefficients,
                              quad: QuadratureRule | None = None) -> np.ndarray:
    """Interval-averaged momentum balance ``int (m xdd + f(x)) dt``.

    Vanishes for converged p2 steps since it equals
    ``(p_minus - m v_n) + (m v_n1 - p_plus)``.
    """
    quad = quad or gauss_rule(DEFAULT_TIME_QUADRATURE)
    m = model.mass_matrix()
    k = model.linear_stiffness()
    load = _load_stencil(c.dt)
    ucoef = np.vstack([c.u_n, c.u_n1, c.v_n, c.v_n1])
    ftilde, _ = _nonlinear_integrals(model, c, quad, tangents=False)
    inertia = m @ (np.asarray(c.v_n1) - np.asarray(c.v_n))
    return inertia + k @ (load @ ucoef) + ftilde[0] + ftilde[1]
