"""Free-free 1D bar: meshes, element matrices, materials and modal data.

Two element families are supported:

* ``linear``  - two-node Lagrange elements, one position DOF per node.
* ``hermite`` - two-node cubic Hermite elements, DOFs ``(x_I, dx/dX_I)``
  per node, interleaved.

Positions ``x`` are the unknowns; displacements are ``u = x - X`` where the
reference vector ``X`` holds node coordinates and, for Hermite meshes, unit
reference slopes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg

from .core import ElementInversion, State, SystemModel
from .shapefn import HermiteBasis, gauss_rule, hermite_deriv_eval, hermite_eval

__all__ = [
    "BarMesh",
    "BarProperties",
    "ElementKind",
    "EigenSolverError",
    "LinearBarModel",
    "MaterialKind",
    "NeoHookeBarModel",
    "analytic_first_mode",
    "assemble_linear_stiffness",
    "assemble_mass",
    "discrete_first_mode",
    "discrete_mode_frequency",
    "internal_force_neohooke",
    "make_bar_model",
    "mode_initial_state",
    "neohooke_energy_density",
    "neohooke_stress",
]


class EigenSolverError(RuntimeError):
    pass


class ElementKind(str, enum.Enum):
    LINEAR = "linear"
    HERMITE = "hermite"


class MaterialKind(str, enum.Enum):
    LINEAR_ELASTIC = "linear"
    NEOHOOKE = "neohooke"


@dataclass(frozen=True)
class BarProperties:
    L: float = 1.0
    A: float = 1.0
    rho0: float = 1.0
    E: float = 1.0

    def __post_init__(self):
        for name in ("L", "A", "rho0", "E"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"bar property {name} must be positive, got {val}")

    @property
    def wave_speed(self) -> float:
        return math.sqrt(self.E / self.rho0)

    @property
    def omega_an(self) -> float:
        """First natural frequency of the continuous free-free bar."""
        return math.pi * math.sqrt(self.E / (self.rho0 * self.L**2))

    @property
    def period_an(self) -> float:
        return 2.0 * math.pi / self.omega_an

    def mode_energy(self, u0: float) -> float:
        """Energy of the continuous first mode with amplitude ``u0``."""
        return self.E * self.A / (4.0 * self.L) * (math.pi * u0) ** 2


@dataclass(frozen=True)
class BarMesh:
    """Uniform mesh of ``n_el`` elements on ``[0, L]``."""

    n_el: int
    kind: ElementKind = ElementKind.LINEAR
    L: float = 1.0

    def __post_init__(self):
        if int(self.n_el) != self.n_el or self.n_el < 1:
            raise ValueError("n_el must be a positive integer")
        if not self.L > 0:
            raise ValueError("mesh length must be positive")
        object.__setattr__(self, "kind", ElementKind(self.kind))

    @property
    def n_nodes(self) -> int:
        return self.n_el + 1

    @property
    def dofs_per_node(self) -> int:
        return 2 if self.kind is ElementKind.HERMITE else 1

    @property
    def ndof(self) -> int:
        return self.n_nodes * self.dofs_per_node

    @property
    def element_length(self) -> float:
        return self.L / self.n_el

    @property
    def characteristic_length(self) -> float:
        le = self.element_length
        return le / 2.0 if self.kind is ElementKind.HERMITE else le

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n_nodes)

    @property
    def value_dofs(self) -> np.ndarray:
        """Indices of the nodal position DOFs (slopes excluded)."""
        return np.arange(self.n_nodes) * self.dofs_per_node

    @cached_property
    def connectivity(self) -> np.ndarray:
        nen = 2 * self.dofs_per_node
        first = np.arange(self.n_el) * self.dofs_per_node
        return first[:, None] + np.arange(nen)[None, :]

    def reference_positions(self) -> np.ndarray:
        X = np.zeros(self.ndof)
        X[self.value_dofs] = self.nodes
        if self.kind is ElementKind.HERMITE:
            X[self.value_dofs + 1] = 1.0
        return X

    def default_quadrature_order(self) -> int:
        return 4 if self.kind is ElementKind.HERMITE else 2

    def shape_tables(self, n_qp: int | None = None):
        """``(N, B, w)``: shape values and X-derivatives at the quadrature points.

        ``N`` and ``B`` have shape ``(n_qp, nen)``; ``w`` contains weights
        times the element Jacobian.
        """
        return _shape_tables(self, n_qp or self.default_quadrature_order())

    def _build_shape_tables(self, n_qp):
        rule = gauss_rule(n_qp)
        jac = 0.5 * self.element_length
        xi = rule.points
        if self.kind is ElementKind.LINEAR:
            N = np.column_stack([0.5 * (1 - xi), 0.5 * (1 + xi)])
            B = np.tile([-0.5 / jac, 0.5 / jac], (xi.size, 1))
        else:
            basis = HermiteBasis(jac)
            r1, r2, h1, h2 = hermite_eval(basis, xi)
            dr1, dr2, dh1, dh2 = hermite_deriv_eval(basis, xi)
            N = np.column_stack([r1, h1, r2, h2])
            B = np.column_stack([dr1, dh1, dr2, dh2])
        return N, B, rule.weights * jac

    def interpolate(self, values: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Evaluate the FE field with DOF vector ``values`` at points ``X``."""
        X = np.atleast_1d(np.asarray(X, dtype=float))
        le = self.element_length
        e = np.clip((X // le).astype(int), 0, self.n_el - 1)
        xi = np.clip(2.0 * (X - e * le) / le - 1.0, -1.0, 1.0)
        local = np.asarray(values)[self.connectivity[e]]
        if self.kind is ElementKind.LINEAR:
            N = np.column_stack([0.5 * (1 - xi), 0.5 * (1 + xi)])
        else:
            r1, r2, h1, h2 = hermite_eval(HermiteBasis(0.5 * le), xi)
            N = np.column_stack([r1, h1, r2, h2])
        return np.sum(N * local, axis=1)


@lru_cache(maxsize=64)
def _shape_tables(mesh, n_qp):
    tables = mesh._build_shape_tables(n_qp)
    for a in tables:
        a.setflags(write=False)
    return tables


def _scatter_matrix(mesh: BarMesh, ke: np.ndarray) -> np.ndarray:
    """Assemble (nen, nen) element matrices, one or one per element, into a dense matrix."""
    conn = mesh.connectivity
    ke = np.broadcast_to(ke, (mesh.n_el,) + ke.shape[-2:])
    flat = (conn[:, :, None] * mesh.ndof + conn[:, None, :]).ravel()
    K = np.bincount(flat, weights=ke.ravel(), minlength=mesh.ndof**2)
    return K.reshape(mesh.ndof, mesh.ndof)


def assemble_mass(mesh: BarMesh, props: BarProperties) -> np.ndarray:
    """Consistent mass matrix ``rho0 A int N^T N dX``."""
    N, _, w = mesh.shape_tables()
    me = props.rho0 * props.A * np.einsum("q,qa,qb->ab", w, N, N)
    me = 0.5 * (me + me.T)
    return _scatter_matrix(mesh, me)


def assemble_linear_stiffness(mesh: BarMesh, props: BarProperties) -> np.ndarray:
    """Linear elastic stiffness ``E A int B^T B dX``."""
    _, B, w = mesh.shape_tables()
    ke = props.E * props.A * np.einsum("q,qa,qb->ab", w, B, B)
    ke = 0.5 * (ke + ke.T)
    return _scatter_matrix(mesh, ke)


def neohooke_stress(E, lam):
    """First Piola stress ``P = E/2 (lam - 1/lam)`` and ``dP/dlam``."""
    return 0.5 * E * (lam - 1.0 / lam), 0.5 * E * (1.0 + lam**-2)


def neohooke_energy_density(E, lam):
    """Strain energy density with ``dW/dlam = P`` and ``W(1) = 0``."""
    return 0.25 * E * (lam**2 - 1.0) - 0.5 * E * np.log(lam)


def _stretches(mesh: BarMesh, B: np.ndarray, x: np.ndarray) -> np.ndarray:
    lam = np.asarray(x)[mesh.connectivity] @ B.T  # (n_el, n_qp)
    if np.any(~(lam > 0.0)):
        e, q = np.argwhere(~(lam > 0.0))[0]
        raise ElementInversion(
            f"non-positive stretch {lam[e, q]:.3e} in element {e} (quadrature point {q})")
    return lam


def internal_force_neohooke(mesh: BarMesh, props: BarProperties, x, tangent: bool = True):
    """Neo-Hooke internal force ``A int B^T P dX`` and its tangent."""
    _, B, w = mesh.shape_tables()
    lam = _stretches(mesh, B, x)
    P, dP = neohooke_stress(props.E, lam)
    fe = props.A * (P * w) @ B  # (n_el, nen)
    f = np.zeros(mesh.ndof)
    np.add.at(f, mesh.connectivity, fe)
    if not tangent:
        return f, None
    ke = props.A * np.einsum("eq,qa,qb->eab", dP * w, B, B)
    return f, _scatter_matrix(mesh, ke)


def neohooke_strain_energy(mesh: BarMesh, props: BarProperties, x) -> float:
    _, B, w = mesh.shape_tables()
    lam = _stretches(mesh, B, x)
    return float(props.A * np.sum(neohooke_energy_density(props.E, lam) * w))


class LinearBarModel(SystemModel):
    """Linear elastic bar; internal force is exactly ``k (x - X)``."""

    linear = True

    def __init__(self, mesh: BarMesh, props: BarProperties):
        self.mesh = mesh
        self.props = props
        self._m = assemble_mass(mesh, props)
        self._k = assemble_linear_stiffness(mesh, props)
        self._X = mesh.reference_positions()
        for a in (self._m, self._k, self._X):
            a.setflags(write=False)

    def __repr__(self):
        return f"LinearBarModel({self.mesh}, {self.props})"

    def mass_matrix(self):
        return self._m

    def linear_stiffness(self):
        return self._k

    def reference_positions(self):
        return self._X


class NeoHookeBarModel(SystemModel):
    """Neo-Hookean bar with zero linear split (``k = 0``, all force nonlinear)."""

    def __init__(self, mesh: BarMesh, props: BarProperties):
        self.mesh = mesh
        self.props = props
        self._m = assemble_mass(mesh, props)
        self._k = np.zeros_like(self._m)
        self._X = mesh.reference_positions()
        for a in (self._m, self._k, self._X):
            a.setflags(write=False)

    def __repr__(self):
        return f"NeoHookeBarModel({self.mesh}, {self.props})"

    def mass_matrix(self):
        return self._m

    def linear_stiffness(self):
        return self._k

    def reference_positions(self):
        return self._X

    def nonlinear_force(self, x):
        return internal_force_neohooke(self.mesh, self.props, x, tangent=False)[0]

    def nonlinear_tangent(self, x):
        return internal_force_neohooke(self.mesh, self.props, x)[1]

    def nonlinear_force_and_tangent(self, x):
        return internal_force_neohooke(self.mesh, self.props, x)

    def nonlinear_potential(self, x):
        return neohooke_strain_energy(self.mesh, self.props, x)


def make_bar_model(mesh: BarMesh, props: BarProperties, material="linear") -> SystemModel:
    material = MaterialKind(material)
    if material is MaterialKind.LINEAR_ELASTIC:
        return LinearBarModel(mesh, props)
    return NeoHookeBarModel(mesh, props)


def analytic_first_mode(props: BarProperties, u0: float, t, X):
    """Continuous first-mode displacement and velocity at ``(X, t)``."""
    w = props.omega_an
    shape = u0 * np.cos(np.pi * np.asarray(X) / props.L)
    t = np.asarray(t, dtype=float)
    return shape * np.cos(w * t), -shape * w * np.sin(w * t)


def _mode_slope(props, u0, X):
    return -u0 * np.pi / props.L * np.sin(np.pi * np.asarray(X) / props.L)


def mode_initial_state(mesh: BarMesh, props: BarProperties, u0: float, t0: float = 0.0) -> State:
    """Nodal state sampled from the continuous first mode at ``t0``.

    Hermite slope DOFs take the analytic spatial derivative.
    """
    X = mesh.nodes
    w = props.omega_an
    x = mesh.reference_positions().copy()
    v = np.zeros(mesh.ndof)
    u, vel = analytic_first_mode(props, u0, t0, X)
    x[mesh.value_dofs] += u
    v[mesh.value_dofs] = vel
    if mesh.kind is ElementKind.HERMITE:
        slope = _mode_slope(props, u0, X)
        x[mesh.value_dofs + 1] += slope * np.cos(w * t0)
        v[mesh.value_dofs + 1] = -slope * w * np.sin(w * t0)
    return State(t0, x, v)


def _generalized_eigh(mesh, props):
    k = assemble_linear_stiffness(mesh, props)
    m = assemble_mass(mesh, props)
    mu, phi = scipy.linalg.eigh(k, m)
    return k, m, mu, phi


def discrete_mode_frequency(mesh: BarMesh, props: BarProperties, mode_index: int = 0) -> float:
    """Angular frequency of elastic mode ``mode_index`` (rigid translation skipped)."""
    if mode_index < 0 or mode_index + 1 >= mesh.ndof:
        raise ValueError(f"mode index {mode_index} out of range")
    k, m, mu, phi = _generalized_eigh(mesh, props)
    j = mode_index + 1
    vec = phi[:, j]
    kv = k @ vec
    res = np.linalg.norm(kv - mu[j] * (m @ vec))
    if res > 1e-10 * np.linalg.norm(kv) or not mu[j] > 0:
        raise EigenSolverError(f"eigenpair {j} not converged (residual {res:.3e})")
    return math.sqrt(mu[j])


def discrete_first_mode(mesh: BarMesh, props: BarProperties, u0: float, t, omega: float | None = None):
    """Nodal first-mode solution oscillating at the discrete frequency ``omega``."""
    if omega is None:
        omega = discrete_mode_frequency(mesh, props, 0)
    shape = u0 * np.cos(np.pi * mesh.nodes / props.L)
    t = np.asarray(t, dtype=float)[..., None]
    return shape * np.cos(omega * t), -shape * omega * np.sin(omega * t)
