"""Shared domain types and the single-DOF harmonic oscillator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionError",
    "ElementInversion",
    "NewtonDivergence",
    "OscillatorModel",
    "State",
    "SystemModel",
    "TimeGrid",
    "oscillator_analytic",
    "total_energy",
]


class DimensionError(ValueError):
    """State and model disagree on the number of degrees of freedom."""


class ElementInversion(RuntimeError):
    """A non-positive stretch was encountered in a hyperelastic element."""


class NewtonDivergence(RuntimeError):
    """Newton iterations failed to reduce the residual below tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 < t1 < ... < tN = T``."""

    t0: float
    T: float
    N: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError("final time must exceed start time")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("number of steps must be a positive integer")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.N

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.N + 1)


@dataclass(frozen=True)
class State:
    """Nodal positions ``x`` and velocities ``v`` at time ``t``."""

    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        v = np.array(self.v, dtype=float).ravel()
        if x.shape != v.shape:
            raise DimensionError(f"x has {x.size} entries but v has {v.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and math.isfinite(self.t)):
            raise ValueError("state contains non-finite values")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", float(self.t))

    @property
    def ndof(self) -> int:
        return self.x.size


class SystemModel:
    """Semi-discrete mechanical system ``m xdd + k (x - X) + ftilde(x) = 0``.

    The internal force is split into a linear part ``k u`` with ``u = x - X``
    and a remainder ``ftilde = f_nlin - f_ext``.  Subclasses provide the five
    capabilities below; ``linear`` tells integrators that ``ftilde`` is
    constant so a single Newton correction is exact.
    """

    linear = False

    @property
    def ndof(self) -> int:
        return self.reference_positions().size

    def mass_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def linear_stiffness(self) -> np.ndarray:
        raise NotImplementedError

    def reference_positions(self) -> np.ndarray:
        raise NotImplementedError

    def nonlinear_force(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(self.ndof)

    def nonlinear_tangent(self, x: np.ndarray) -> np.ndarray:
        return np.zeros((self.ndof, self.ndof))

    def nonlinear_force_and_tangent(self, x: np.ndarray):
        return self.nonlinear_force(x), self.nonlinear_tangent(x)

    def nonlinear_potential(self, x: np.ndarray) -> float:
        """Potential whose gradient is ``nonlinear_force``."""
        return 0.0

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``m a = rhs`` with a cached Cholesky factorization."""
        factor = self.__dict__.get("_mass_factor")
        if factor is None:
            factor = scipy.linalg.cho_factor(self.mass_matrix())
            self.__dict__["_mass_factor"] = factor
        return scipy.linalg.cho_solve(factor, rhs)

    def force(self, x: np.ndarray) -> np.ndarray:
        """Full force ``f(x) = k (x - X) + ftilde(x)``."""
        u = np.asarray(x) - self.reference_positions()
        return self.linear_stiffness() @ u + self.nonlinear_force(x)

    def energy(self, x, v):
        """Return ``(K, Pi, E)`` for positions ``x`` and velocities ``v``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        u = x - self.reference_positions()
        kin = 0.5 * v @ self.mass_matrix() @ v
        pot = 0.5 * u @ self.linear_stiffness() @ u + self.nonlinear_potential(x)
        return kin, pot, kin + pot


def total_energy(model: SystemModel, s: State):
    """Kinetic, potential and total energy of ``s``."""
    if s.ndof != model.ndof:
        raise DimensionError(f"state has {s.ndof} DOFs, model has {model.ndof}")
    return model.energy(s.x, s.v)


class OscillatorModel(SystemModel):
    """Spring pendulum with mass ``m`` and stiffness ``k``; reference position 0."""

    linear = True

    def __init__(self, m: float = 1.0, k: float = 1.0):
        if not (m > 0 and k > 0):
            raise ValueError("oscillator needs m > 0 and k > 0")
        self.m = float(m)
        self.k = float(k)
        self._m = np.array([[self.m]])
        self._k = np.array([[self.k]])
        self._m.setflags(write=False)
        self._k.setflags(write=False)

    def __repr__(self):
        return f"OscillatorModel(m={self.m}, k={self.k})"

    @property
    def omega(self) -> float:
        return math.sqrt(self.k / self.m)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def initial_energy(self, u0: float) -> float:
        return 0.5 * self.k * u0**2

    def mass_matrix(self):
        return self._m

    def linear_stiffness(self):
        return self._k

    def reference_positions(self):
        return np.zeros(1)

    def initial_state(self, u0: float = 1.0, t0: float = 0.0) -> State:
        return State(t0, [u0], [0.0])


def oscillator_analytic(model: OscillatorModel, u0, t):
    """Exact free vibration started from rest at displacement ``u0``."""
    w = model.omega
    t = np.asarray(t, dtype=float)
    return u0 * np.cos(w * t), -w * u0 * np.sin(w * t)
