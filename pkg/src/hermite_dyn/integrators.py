"""One-step time integrators and the simulation driver.

The six Hermite schemes pick two of the four interval conditions::

    p_minus = m v_n     p_plus = m v_n1     q_minus = 0     q_plus = 0

and solve them for ``(x_n1, v_n1)`` with a block Newton method.  Newmark
(average acceleration by default) and the linear-in-time variational
integrator L1 serve as references.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import ElementInversion, NewtonDivergence, State, SystemModel, TimeGrid, total_energy
from .momenta import DEFAULT_TIME_QUADRATURE, IntervalCoefficients, interval_quantities
from .shapefn import QuadratureRule, gauss_rule, lagrange_eval

__all__ = [
    "HERMITE_SCHEMES",
    "NewmarkParameters",
    "NewtonSettings",
    "Predictor",
    "Scheme",
    "StepDiagnostics",
    "Trajectory",
    "hermite_step",
    "l1_step",
    "newmark_step",
    "scheme_residual",
    "simulate",
    "step",
]

log = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    P2 = "p2"
    Q2 = "q2"
    PPQM = "p+q-"
    PPQP = "p+q+"
    PMQM = "p-q-"
    PMQP = "p-q+"
    NEWMARK = "newmark"
    L1 = "l1"

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        aliases = {
            "ppqm": cls.PPQM, "ppqp": cls.PPQP, "pmqm": cls.PMQM, "pmqp": cls.PMQP,
            "geradin": cls.PPQP, "nm": cls.NEWMARK,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scheme {name!r}; expected one of {names}") from None

    @property
    def is_hermite(self) -> bool:
        return self in HERMITE_SCHEMES


HERMITE_SCHEMES = (Scheme.P2, Scheme.Q2, Scheme.PPQM, Scheme.PPQP, Scheme.PMQM, Scheme.PMQP)

# (first, second) equation of each scheme; 'pm' is p_minus = m v_n, etc.
_EQUATIONS = {
    Scheme.P2: ("pm", "pp"),
    Scheme.Q2: ("qm", "qp"),
    Scheme.PPQM: ("pp", "qm"),
    Scheme.PPQP: ("pp", "qp"),
    Scheme.PMQM: ("pm", "qm"),
    Scheme.PMQP: ("pm", "qp"),
}
_INDEX = {"pm": 0, "pp": 1, "qm": 2, "qp": 3}


class Predictor(str, enum.Enum):
    PREVIOUS_STATE = "previous"
    CONSTANT_VELOCITY = "constant_velocity"


@dataclass(frozen=True)
class NewtonSettings:
    tol_rel: float = 1e-12
    tol_abs: float = 1e-14
    max_iter: int = 25
    predictor: Predictor = Predictor.CONSTANT_VELOCITY

    def __post_init__(self):
        if not (self.tol_rel > 0 and self.tol_abs > 0):
            raise ValueError("Newton tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        object.__setattr__(self, "predictor", Predictor(self.predictor))


@dataclass(frozen=True)
class NewmarkParameters:
    beta: float = 0.25
    gamma: float = 0.5


@dataclass(frozen=True)
class StepDiagnostics:
    newton_iters: int
    final_residual_norm: float
    tolerance: float
    converged: bool


def _tolerance(settings, scale):
    return settings.tol_rel * scale + settings.tol_abs


def _newton(residual_and_jacobian, z0, settings, scale):
    """Plain Newton iteration on ``r(z) = 0``; returns ``(z, diagnostics)``."""
    tol = _tolerance(settings, scale)
    z = z0
    r, jac = residual_and_jacobian(z)
    norm = np.linalg.norm(r)
    iters = 0
    while norm > tol or not np.isfinite(norm):
        if iters >= settings.max_iter or not np.isfinite(norm):
            diag = StepDiagnostics(iters, float(norm), tol, False)
            raise NewtonDivergence(f"Newton failed after {iters} iterations (|r| = {norm:.3e}, tol = {tol:.3e})",
                                   diag)
        z = z - np.linalg.solve(jac, r)
        iters += 1
        r, jac = residual_and_jacobian(z)
        norm = np.linalg.norm(r)
    return z, StepDiagnostics(iters, float(norm), tol, True)


def _predict(s: State, dt, settings):
    if settings.predictor is Predictor.CONSTANT_VELOCITY:
        return s.x + dt * s.v, s.v.copy()
    return s.x.copy(), s.v.copy()


def _momentum_scale(model, s, dt):
    m = model.mass_matrix()
    return float(np.linalg.norm(m @ s.v) + dt * np.linalg.norm(model.force(s.x)))


def scheme_residual(scheme: Scheme, model: SystemModel, s: State, x1, v1, dt, quad=None, tangents=True):
    """Residual of the two scheme equations at candidate ``(x1, v1)``.

    Pseudo-momentum rows are divided by ``dt`` so that every row has
    momentum units.  Returns ``(r, J)`` with ``J = dr/d(x1, v1)``.
    """
    scheme = Scheme.parse(scheme)
    n = model.ndof
    m = model.mass_matrix()
    c = IntervalCoefficients(s.x, x1, s.v, v1, dt, model.reference_positions())
    mom, tan = interval_quantities(model, c, quad, tangents=tangents)
    mom = mom.as_tuple()
    r = np.empty(2 * n)
    J = np.empty((2 * n, 2 * n)) if tangents else None
    for row, eq in enumerate(_EQUATIONS[scheme]):
        i = _INDEX[eq]
        sl = slice(row * n, (row + 1) * n)
        if eq == "pm":
            r[sl] = mom[i] - m @ s.v
        elif eq == "pp":
            r[sl] = mom[i] - m @ v1
        else:
            r[sl] = mom[i] / dt
        if tangents:
            dx, dv = tan.dx[i], tan.dv[i]
            if eq == "pp":
                dv = dv - m
            elif eq in ("qm", "qp"):
                dx, dv = dx / dt, dv / dt
            J[sl, :n] = dx
            J[sl, n:] = dv
    return r, J


def hermite_step(scheme, model: SystemModel, s: State, dt: float, settings: NewtonSettings | None = None,
                 quad: QuadratureRule | None = None):
    """Advance one step with one of the six Hermite schemes."""
    scheme = Scheme.parse(scheme)
    if not scheme.is_hermite:
        raise ValueError(f"{scheme.value} is not a Hermite scheme")
    settings = settings or NewtonSettings()
    quad = quad or gauss_rule(DEFAULT_TIME_QUADRATURE)
    n = model.ndof
    x0, v0 = _predict(s, dt, settings)

    def rj(z):
        return scheme_residual(scheme, model, s, z[:n], z[n:], dt, quad)

    z, diag = _newton(rj, np.concatenate([x0, v0]), settings, _momentum_scale(model, s, dt))
    return State(s.t + dt, z[:n], z[n:]), diag


def newmark_step(model: SystemModel, s: State, dt: float, beta: float = 0.25, gamma: float = 0.5,
                 settings: NewtonSettings | None = None):
    """Newmark step in displacement form.

    The start acceleration is recovered from equilibrium ``m a_n = -f(x_n)``,
    which holds for every converged Newmark state of an unloaded system.
    """
    settings = settings or NewtonSettings()
    m = model.mass_matrix()
    k = model.linear_stiffness()
    a_n = -model.solve_mass(model.force(s.x))
    base = s.x + dt * s.v + dt**2 * (0.5 - beta) * a_n
    c0 = 1.0 / (beta * dt**2)

    def rj(x1):
        a1 = c0 * (x1 - base)
        r = m @ a1 + model.force(x1)
        jac = c0 * m + k
        if not model.linear:
            jac = jac + model.nonlinear_tangent(x1)
        return dt * r, dt * jac

    x0, _ = _predict(s, dt, settings)
    x1, diag = _newton(rj, x0, settings, _momentum_scale(model, s, dt))
    a1 = c0 * (x1 - base)
    v1 = s.v + dt * ((1.0 - gamma) * a_n + gamma * a1)
    return State(s.t + dt, x1, v1), diag


def _l1_force_integrals(model, x0, x1, dt, quad, tangent):
    """``int R_a f dt`` for a = 1, 2 on the linear interpolant, and ``int R1 R2 df/dx dt``."""
    k = model.linear_stiffness()
    X = model.reference_positions()
    u0, u1 = x0 - X, x1 - X
    i1 = dt * k @ (u0 / 3.0 + u1 / 6.0)
    i2 = dt * k @ (u0 / 6.0 + u1 / 3.0)
    jac = dt / 6.0 * k
    if model.linear:
        f = model.nonlinear_force(x0)
        return i1 + 0.5 * dt * f, i2 + 0.5 * dt * f, jac
    r1, r2 = lagrange_eval(quad.points)
    wj = 0.5 * dt * quad.weights
    for q in range(quad.n_points):
        xq = r1[q] * x0 + r2[q] * x1
        fq = model.nonlinear_force(xq)
        i1 = i1 + wj[q] * r1[q] * fq
        i2 = i2 + wj[q] * r2[q] * fq
        if tangent:
            jac = jac + wj[q] * r1[q] * r2[q] * model.nonlinear_tangent(xq)
    return i1, i2, jac


def l1_step(model: SystemModel, s: State, dt: float, quad: QuadratureRule | None = None,
            settings: NewtonSettings | None = None):
    """Linear-in-time variational integrator in position-momentum form.

    Solves ``-dS/dx_n (x_n, x_n1) = m v_n`` for ``x_n1`` and recovers the
    velocity from the discrete Legendre transform ``m v_n1 = dS/dx_n1``.
    """
    settings = settings or NewtonSettings()
    quad = quad or gauss_rule(DEFAULT_TIME_QUADRATURE)
    m = model.mass_matrix()
    mv = m @ s.v

    def rj(x1):
        i1, _, jac = _l1_force_integrals(model, s.x, x1, dt, quad, True)
        r = m @ (x1 - s.x) / dt + i1 - mv
        return r, m / dt + jac

    x0, _ = _predict(s, dt, settings)
    x1, diag = _newton(rj, x0, settings, _momentum_scale(model, s, dt))
    _, i2, _ = _l1_force_integrals(model, s.x, x1, dt, quad, False)
    p1 = m @ (x1 - s.x) / dt - i2
    return State(s.t + dt, x1, model.solve_mass(p1)), diag


def step(scheme, model: SystemModel, s: State, dt: float, settings: NewtonSettings | None = None,
         quad: QuadratureRule | None = None, newmark: NewmarkParameters | None = None):
    """Advance ``s`` by ``dt`` with any supported scheme."""
    scheme = Scheme.parse(scheme)
    if scheme.is_hermite:
        return hermite_step(scheme, model, s, dt, settings, quad)
    if scheme is Scheme.NEWMARK:
        nm = newmark or NewmarkParameters()
        return newmark_step(model, s, dt, nm.beta, nm.gamma, settings)
    return l1_step(model, s, dt, quad, settings)


@dataclass
class Trajectory:
    """Stored states, energies and per-step Newton diagnostics of one run."""

    scheme: Scheme
    dt: float
    times: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    vs: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    newton_iters: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    status: str = "ok"
    message: str = ""
    n_steps_requested: int = 0

    def record(self, n, s, energy, iters=0, residual=0.0):
        self.steps.append(n)
        self.times.append(s.t)
        self.xs.append(s.x)
        self.vs.append(s.v)
        self.energies.append(energy)
        self.newton_iters.append(iters)
        self.residuals.append(residual)

    @property
    def completed(self) -> bool:
        return self.status == "ok"

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.xs)

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.vs)

    @property
    def E(self) -> np.ndarray:
        return np.asarray(self.energies)[:, 2]

    @property
    def K(self) -> np.ndarray:
        return np.asarray(self.energies)[:, 0]

    @property
    def Pi(self) -> np.ndarray:
        return np.asarray(self.energies)[:, 1]

    @property
    def final_state(self) -> State:
        return State(self.times[-1], self.xs[-1], self.vs[-1])

    def __len__(self):
        return len(self.times)


def simulate(scheme, model: SystemModel, s0: State, grid: TimeGrid, settings: NewtonSettings | None = None,
             quad: QuadratureRule | None = None, newmark: NewmarkParameters | None = None,
             store_every: int = 1, energy_limit: float | None = None) -> Trajectory:
    """Run ``grid.N`` steps from ``s0``.

    Solver failures stop the run and return the partial trajectory with
    ``status='diverged'``.  With ``energy_limit`` set, a run whose total
    energy exceeds ``energy_limit * E0`` (or becomes non-finite) stops with
    ``status='unstable'``.
    """
    scheme = Scheme.parse(scheme)
    settings = settings or NewtonSettings()
    if quad is None:
        quad = gauss_rule(DEFAULT_TIME_QUADRATURE)
    if store_every < 1:
        raise ValueError("store_every must be >= 1")
    dt = grid.dt
    traj = Trajectory(scheme, dt, n_steps_requested=grid.N)
    s = State(grid.t0, s0.x, s0.v)
    e0 = total_energy(model, s)
    traj.record(0, s, e0)
    limit = None if energy_limit is None else energy_limit * abs(e0[2])
    for n in range(1, grid.N + 1):
        try:
            s_new, diag = step(scheme, model, s, dt, settings, quad, newmark)
        except (NewtonDivergence, ElementInversion, np.linalg.LinAlgError, ValueError) as exc:
            traj.status = "diverged"
            traj.message = f"step {n}: {exc}"
            log.warning("%s run stopped at step %d: %s", scheme.value, n, exc)
            return traj
        # keep the time stamp on the uniform grid
        s = State(grid.t0 + n * dt, s_new.x, s_new.v)
        energy = total_energy(model, s)
        if n % store_every == 0 or n == grid.N:
            traj.record(n, s, energy, diag.newton_iters, diag.final_residual_norm)
        if limit is not None and not energy[2] <= limit:
            if traj.steps[-1] != n:
                traj.record(n, s, energy, diag.newton_iters, diag.final_residual_norm)
            traj.status = "unstable"
            traj.message = f"step {n}: energy {energy[2]:.3e} exceeds {energy_limit} x E0"
            return traj
    return traj
