import math

import numpy as np
import pytest

from hermite_dyn.core import NewtonDivergence, OscillatorModel, State, TimeGrid, oscillator_analytic
from hermite_dyn.fe1d import BarMesh, BarProperties, NeoHookeBarModel, make_bar_model, mode_initial_state
from hermite_dyn.integrators import (
    HERMITE_SCHEMES,
    NewtonSettings,
    Scheme,
    hermite_step,
    scheme_residual,
    simulate,
    step,
)
from hermite_dyn.momenta import IntervalCoefficients, compute_momenta

ALL_SCHEMES = list(Scheme)
PROPS = BarProperties()


def _neohooke(n_el=4, u0=0.05):
    mesh = BarMesh(n_el, "hermite")
    return NeoHookeBarModel(mesh, PROPS), mode_initial_state(mesh, PROPS, u0)


def test_scheme_parse():
    assert Scheme.parse("P2") is Scheme.P2
    assert Scheme.parse("ppqm") is Scheme.PPQM
    assert Scheme.parse("nm") is Scheme.NEWMARK
    assert Scheme.parse(Scheme.L1) is Scheme.L1
    with pytest.raises(ValueError):
        Scheme.parse("rk4")
    assert Scheme.P2.is_hermite and not Scheme.L1.is_hermite


def test_newton_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(tol_rel=0.0)
    with pytest.raises(ValueError):
        NewtonSettings(max_iter=0)


@pytest.mark.parametrize("scheme", ALL_SCHEMES)
def test_equilibrium_is_fixed_point(scheme):
    model = make_bar_model(BarMesh(3, "hermite"), PROPS, "linear")
    X = model.reference_positions()
    s = State(0.0, X, np.zeros_like(X))
    s1, _ = step(scheme, model, s, 0.1)
    assert np.array_equal(s1.x, X) and np.allclose(s1.v, 0.0, atol=0)
    osc = OscillatorModel()
    s1, _ = step(scheme, osc, State(0.0, [0.0], [0.0]), 0.5)
    assert s1.x[0] == 0.0 and s1.v[0] == 0.0


@pytest.mark.parametrize("scheme", ALL_SCHEMES)
def test_linear_problems_need_one_newton_iteration(scheme):
    model = make_bar_model(BarMesh(4, "hermite"), PROPS, "linear")
    s = mode_initial_state(model.mesh, PROPS, 0.1)
    for _ in range(3):
        s, diag = step(scheme, model, s, 0.05)
        assert diag.newton_iters == 1
        assert diag.converged and diag.final_residual_norm <= diag.tolerance


@pytest.mark.parametrize("scheme", ALL_SCHEMES)
def test_accepted_nonlinear_steps_meet_tolerance(scheme):
    model, s = _neohooke()
    for _ in range(4):
        s, diag = step(scheme, model, s, 2 / 64)
        assert diag.converged
        assert diag.final_residual_norm <= diag.tolerance
        assert 1 <= diag.newton_iters <= 6


@pytest.mark.parametrize("scheme", HERMITE_SCHEMES)
def test_converged_step_satisfies_scheme_equations(scheme):
    model, s = _neohooke()
    dt = 2 / 64
    s1, diag = hermite_step(scheme, model, s, dt)
    r, _ = scheme_residual(scheme, model, s, s1.x, s1.v, dt, tangents=False)
    assert np.linalg.norm(r) <= diag.tolerance


def _interval_momenta(model, states, dt):
    X = model.reference_positions()
    return [compute_momenta(model, IntervalCoefficients(a.x, b.x, a.v, b.v, dt, X))
            for a, b in zip(states, states[1:])]


def test_p2_matches_momenta_at_interior_nodes():
    model, s = _neohooke()
    dt = 2 / 64
    states = [s]
    for _ in range(6):
        states.append(hermite_step("p2", model, states[-1], dt)[0])
    moms = _interval_momenta(model, states, dt)
    m = model.mass_matrix()
    for n in range(1, len(states) - 1):
        p_plus = moms[n - 1].p_plus
        p_minus = moms[n].p_minus
        mv = m @ states[n].v
        assert np.allclose(p_plus, p_minus, atol=1e-12)
        assert np.allclose(p_minus, mv, atol=1e-12)


def test_q2_pseudo_momenta_vanish():
    model, s = _neohooke()
    dt = 2 / 64
    states = [s]
    for _ in range(5):
        states.append(hermite_step("q2", model, states[-1], dt)[0])
    for mom in _interval_momenta(model, states, dt):
        assert np.allclose(mom.q_minus, 0.0, atol=1e-13)
        assert np.allclose(mom.q_plus, 0.0, atol=1e-13)


@pytest.mark.parametrize("case", ["oscillator", "neohooke"])
def test_p2_time_reversal(case):
    if case == "oscillator":
        model = OscillatorModel()
        s0, dt = model.initial_state(1.0), 0.3
    else:
        model, s0 = _neohooke()
        dt = 2 / 64
    s = s0
    for _ in range(40):
        s, _ = hermite_step("p2", model, s, dt)
    s = State(0.0, s.x, -s.v)
    for _ in range(40):
        s, _ = hermite_step("p2", model, s, dt)
    assert np.allclose(s.x, s0.x, atol=1e-10)
    assert np.allclose(-s.v, s0.v, atol=1e-10)


def test_p2_fourth_order_over_one_period():
    model = OscillatorModel()
    errs = []
    for gamma in (0.1, 0.05):
        n = int(round(2 * math.pi / gamma))
        dt = model.period / n
        traj = simulate("p2", model, model.initial_state(1.0), TimeGrid(0.0, n * dt, n))
        u_ref, _ = oscillator_analytic(model, 1.0, traj.t)
        errs.append(np.max(np.abs(traj.x[:, 0] - u_ref)))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.2)


def test_newmark_conserves_linear_energy():
    model = OscillatorModel()
    N = 1000
    traj = simulate("newmark", model, model.initial_state(1.0), TimeGrid(0.0, 100 * model.period, N))
    assert np.max(np.abs(traj.E - 0.5)) / 0.5 <= 1e-10


def test_newton_failure_raises_with_diagnostics():
    model, s = _neohooke(u0=0.2)
    with pytest.raises(NewtonDivergence) as info:
        hermite_step("p2", model, s, 0.2, NewtonSettings(max_iter=1))
    assert info.value.diagnostics is not None
    assert not info.value.diagnostics.converged


def test_simulate_reports_divergence_with_partial_output():
    model, s = _neohooke(u0=0.2)
    traj = simulate("p2", model, s, TimeGrid(0.0, 2.0, 10), NewtonSettings(max_iter=1))
    assert traj.status == "diverged"
    assert len(traj) >= 1 and "step" in traj.message


def test_simulate_flags_energy_growth():
    model = OscillatorModel()
    grid = TimeGrid(0.0, 100 * model.period, 1000)
    traj = simulate("p-q-", model, model.initial_state(1.0), grid, energy_limit=10.0)
    assert traj.status == "unstable"
    assert traj.E[-1] > 10 * traj.E[0]


def test_store_every_keeps_first_and_last():
    model = OscillatorModel()
    traj = simulate("p2", model, model.initial_state(1.0), TimeGrid(0.0, 1.0, 10), store_every=4)
    assert traj.steps == [0, 4, 8, 10]
    with pytest.raises(ValueError):
        simulate("p2", model, model.initial_state(1.0), TimeGrid(0.0, 1.0, 10), store_every=0)


def test_simulate_times_on_uniform_grid():
    model = OscillatorModel()
    grid = TimeGrid(0.5, 2.5, 16)
    traj = simulate("l1", model, model.initial_state(1.0, 0.5), grid)
    assert np.allclose(traj.t, grid.times, rtol=0, atol=1e-15)
    assert traj.completed and traj.final_state.t == pytest.approx(2.5)
