"""Linear stability, symplecticity, error norms, convergence fits and CFL tools.

Amplification matrices act on the normalized oscillator state
``[v_n, omega * u_n]`` and depend only on ``gamma = omega * dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import TimeGrid
from .integrators import HERMITE_SCHEMES, NewtonSettings, Scheme, simulate

__all__ = [
    "AmplificationMatrix",
    "CflEstimate",
    "ErrorSeries",
    "StabilityResult",
    "SymplecticityReport",
    "amplification",
    "cfl_number",
    "convergence_order",
    "error_norms",
    "machine_floor",
    "max_stable_cfl",
    "spectral_radius",
    "stability_threshold",
    "symplecticity_check",
]

STABILITY_SLACK = 1e-12
GAMMA_RESOLUTION = 1e-4

# (denominator, a11, a12, a21, a22) polynomial coefficients, highest power first.
_POLY = {
    Scheme.P2: ((8, 0, 132, 0, 2016),
                (26, 0, -876, 0, 2016), (204, 0, -2016, 0),
                (3, 0, -204, 0, 2016, 0), (26, 0, -876, 0, 2016)),
    Scheme.Q2: ((2, 0, 18, 0, 420),
                (7, 0, -192, 0, 420), (45, 0, -420, 0),
                (1, 0, -52, 0, 420, 0), (7, 0, -192, 0, 420)),
    Scheme.PPQM: ((26, 0, 198, 0, 3780),
                  (65, 0, -1692, 0, 3780), (390, 0, -3780, 0),
                  (7, 0, -432, 0, 3780, 0), (46, 0, -1692, 0, 3780)),
    Scheme.PPQP: ((10, 0, 24, 0, 630),
                  (13, 0, -291, 0, 630), (60, 0, -630, 0),
                  (1, 0, -81, 0, 630, 0), (5, 0, -291, 0, 630)),
    Scheme.PMQM: ((1, 0, 48, 0, 1260),
                  (10, 0, -582, 0, 1260), (120, 0, -1260, 0),
                  (2, 0, -162, 0, 1260, 0), (26, 0, -582, 0, 1260)),
    Scheme.PMQP: ((10, 0, 198, 0, 3780),
                  (46, 0, -1692, 0, 3780), (390, 0, -3780, 0),
                  (7, 0, -432, 0, 3780, 0), (65, 0, -1692, 0, 3780)),
}


@dataclass(frozen=True)
class AmplificationMatrix:
    scheme: Scheme
    gamma: float
    entries: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.entries))

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    def apply(self, v, omega_u):
        return self.entries @ np.array([v, omega_u], dtype=float)


def amplification(scheme, gamma: float) -> AmplificationMatrix:
    """Closed-form amplification matrix of a Hermite scheme at ``gamma = omega dt``."""
    scheme = Scheme.parse(scheme)
    if scheme not in _POLY:
        raise ValueError(f"no closed-form amplification matrix for {scheme.value}")
    if not gamma >= 0:
        raise ValueError("gamma must be non-negative")
    den, *num = _POLY[scheme]
    d = np.polyval(den, gamma)
    a = np.array([np.polyval(p, gamma) for p in num]).reshape(2, 2) / d
    return AmplificationMatrix(scheme, float(gamma), a)


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a real 2x2 matrix (closed form)."""
    a = A.entries if isinstance(A, AmplificationMatrix) else np.asarray(A, dtype=float)
    tr = a[0, 0] + a[1, 1]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    disc = 0.25 * tr * tr - det
    if disc >= 0.0:
        r = math.sqrt(disc)
        return max(abs(0.5 * tr + r), abs(0.5 * tr - r))
    # complex pair: |lambda|^2 = det
    return math.sqrt(det)


def _rho_curve(scheme, gammas):
    """Vectorized spectral radius over an array of ``gamma`` values."""
    g = np.asarray(gammas, dtype=float)
    den, *num = _POLY[Scheme.parse(scheme)]
    d = np.polyval(den, g)
    a11, a12, a21, a22 = (np.polyval(p, g) / d for p in num)
    tr = a11 + a22
    det = a11 * a22 - a12 * a21
    disc = 0.25 * tr * tr - det
    root = np.sqrt(np.abs(disc))
    real = np.maximum(np.abs(0.5 * tr + root), np.abs(0.5 * tr - root))
    return np.where(disc >= 0.0, real, np.sqrt(np.abs(det)))


@dataclass(frozen=True)
class StabilityResult:
    scheme: Scheme
    gamma_stab: float
    unstable: bool
    crossings: tuple = ()

    @property
    def dt_stab(self) -> float:
        """Stable step limit in units of the oscillator period."""
        return self.gamma_stab / (2.0 * math.pi)


def _bisect_crossing(scheme, lo, hi, stable_lo, tol=1e-12):
    """Refine the switch between ``lo`` and ``hi`` where stability changes."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok = spectral_radius(amplification(scheme, mid)) <= 1.0 + STABILITY_SLACK
        if ok == stable_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _unstable_near_zero(scheme) -> bool:
    """Does rho exceed one for arbitrarily small gamma?

    Near ``gamma = 0`` the excess ``rho - 1`` can fall below rounding, so
    the leading behaviour is read from the eigenvalue moduli on a
    logarithmic sweep where ``rho - 1`` is still resolvable.
    """
    gammas = np.geomspace(1e-2, 0.5, 25)
    excess = _rho_curve(scheme, gammas) - 1.0
    return bool(np.all(excess > STABILITY_SLACK))


def stability_threshold(scheme, gamma_max: float = 12.0, resolution: float = GAMMA_RESOLUTION) -> StabilityResult:
    """First stability limit ``gamma_stab`` and all stability switches on ``[0, gamma_max]``."""
    scheme = Scheme.parse(scheme)
    gammas = np.arange(0.0, gamma_max + 0.5 * resolution, resolution)
    ok = _rho_curve(scheme, gammas) <= 1.0 + STABILITY_SLACK
    crossings = []
    for i in np.nonzero(ok[1:] != ok[:-1])[0]:
        crossings.append(float(_bisect_crossing(scheme, gammas[i], gammas[i + 1], bool(ok[i]))))
    if _unstable_near_zero(scheme) or not ok[1]:
        return StabilityResult(scheme, 0.0, True, tuple(crossings))
    gamma_stab = crossings[0] if crossings else float(gammas[-1])
    return StabilityResult(scheme, gamma_stab, False, tuple(crossings))


@dataclass
class SymplecticityReport:
    scheme: Scheme
    gammas: np.ndarray
    det_error: np.ndarray
    tol: float = 1e-12
    asserted: bool = False

    @property
    def passed(self) -> bool:
        return bool(np.all(self.det_error <= self.tol))

    @property
    def max_error(self) -> float:
        return float(np.max(self.det_error)) if self.det_error.size else 0.0


def symplecticity_check(scheme, gammas, tol: float = 1e-12) -> SymplecticityReport:
    """``|det A(gamma) - 1|`` for each sample; pass/fail is meaningful for p2 and q2."""
    scheme = Scheme.parse(scheme)
    gammas = np.asarray(gammas, dtype=float)
    err = np.array([abs(amplification(scheme, g).det - 1.0) for g in gammas])
    return SymplecticityReport(scheme, gammas, err, tol, scheme in (Scheme.P2, Scheme.Q2))


@dataclass
class ErrorSeries:
    """Relative errors per stored step and their aggregates."""

    e_u: np.ndarray
    e_v: np.ndarray
    e_E: np.ndarray
    e_u_max: float = field(init=False)
    e_v_max: float = field(init=False)
    e_E_max: float = field(init=False)
    e_u_sigma: float = field(init=False)
    e_v_sigma: float = field(init=False)
    e_E_sigma: float = field(init=False)

    def __post_init__(self):
        for name in ("u", "v", "E"):
            e = np.atleast_1d(np.asarray(getattr(self, "e_" + name), dtype=float))
            if e.ndim == 1 and name != "E":
                e = e[:, None]
            setattr(self, "e_" + name, e)
            setattr(self, f"e_{name}_max", float(np.max(e)) if e.size else 0.0)
            setattr(self, f"e_{name}_sigma", float(np.sqrt(np.mean(e**2))) if e.size else 0.0)

    def summary(self) -> dict:
        return {
            "e_u_max": self.e_u_max, "e_v_max": self.e_v_max, "e_E_max": self.e_E_max,
            "e_u_sigma": self.e_u_sigma, "e_v_sigma": self.e_v_sigma, "e_E_sigma": self.e_E_sigma,
        }


def error_norms(u, v, E, u_ref, v_ref, E0, u0: float, omega: float) -> ErrorSeries:
    """Relative errors normalized by ``|u0|``, ``|omega u0|`` and ``E0``.

    ``u``, ``v`` and the references are ``(n_steps + 1, n_nodes)`` arrays (or
    1D for a single DOF); ``E`` is the per-step total energy.  The sigma
    aggregates are Frobenius norms divided by ``sqrt((N + 1) * n_nodes)``.
    """
    e_u = np.abs(np.asarray(u, dtype=float) - np.asarray(u_ref, dtype=float)) / abs(u0)
    e_v = np.abs(np.asarray(v, dtype=float) - np.asarray(v_ref, dtype=float)) / abs(omega * u0)
    e_E = np.abs(np.asarray(E, dtype=float) - E0) / abs(E0)
    return ErrorSeries(e_u, e_v, e_E)


def machine_floor(n_steps, factor: float = 100.0) -> float:
    """Error level below which rounding dominates: ``factor * eps * n_steps``."""
    return factor * np.finfo(float).eps * n_steps


def convergence_order(errors, steps, n_steps=None, floor_factor: float = 100.0):
    """Least-squares slope of ``log(error)`` against ``log(step)``.

    Points with error below ``floor_factor * eps * n_steps`` are excluded.
    Returns ``nan`` when fewer than two points remain.
    """
    errors = np.asarray(errors, dtype=float)
    steps = np.asarray(steps, dtype=float)
    if errors.shape != steps.shape:
        raise ValueError("errors and steps must have the same length")
    if n_steps is None:
        n_steps = np.ones_like(steps)
    keep = (errors > machine_floor(np.asarray(n_steps, dtype=float), floor_factor)) & (steps > 0)
    if np.count_nonzero(keep) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(steps[keep]), np.log(errors[keep]), 1)
    return float(slope)


def cfl_number(wave_speed: float, dt: float, char_length: float) -> float:
    return wave_speed * dt / char_length


@dataclass(frozen=True)
class CflEstimate:
    scheme: Scheme
    cfl_max: float
    horizon: float
    evaluations: tuple


def _bar_is_stable(scheme, model, s0, props, cfl, n_periods, char_length, growth, settings):
    dt = cfl * char_length / props.wave_speed
    T = n_periods * props.period_an
    N = max(1, int(math.ceil(T / dt)))
    grid = TimeGrid(0.0, N * dt, N)
    traj = simulate(scheme, model, s0, grid, settings, store_every=N, energy_limit=growth)
    return traj.completed


def max_stable_cfl(scheme, model, s0, props, char_length, horizon: float = 200.0, lo: float = 0.3,
                   hi: float = 1.5, tol: float = 5e-3, growth: float = 2.0,
                   settings: NewtonSettings | None = None) -> CflEstimate:
    """Bisect the largest CFL number for which energy stays below ``growth * E0``.

    ``horizon`` counts oscillations of the analytic first mode.  ``lo`` must
    be stable and ``hi`` unstable; otherwise the bracket end is returned.
    """
    scheme = Scheme.parse(scheme)
    evals = []

    def stable(c):
        ok = _bar_is_stable(scheme, model, s0, props, c, horizon, char_length, growth, settings)
        evals.append((c, ok))
        return ok

    if not stable(lo):
        return CflEstimate(scheme, lo, horizon, tuple(evals))
    if stable(hi):
        return CflEstimate(scheme, hi, horizon, tuple(evals))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return CflEstimate(scheme, lo, horizon, tuple(evals))


def stability_table(gamma_max: float = 12.0):
    return [stability_threshold(s, gamma_max) for s in HERMITE_SCHEMES]
