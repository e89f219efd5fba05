import math

import numpy as np
import pytest

from hermite_dyn.core import (
    DimensionError,
    OscillatorModel,
    State,
    TimeGrid,
    oscillator_analytic,
    total_energy,
)


def test_time_grid():
    g = TimeGrid(0.0, 2.0, 8)
    assert g.dt == 0.25
    assert g.times[-1] == pytest.approx(2.0)
    assert len(g.times) == 9


@pytest.mark.parametrize("args", [(0.0, 0.0, 4), (1.0, 0.5, 4), (0.0, 1.0, 0), (0.0, 1.0, 2.5)])
def test_time_grid_rejects_invalid(args):
    with pytest.raises(ValueError):
        TimeGrid(*args)


def test_state_is_immutable_and_finite():
    s = State(0.0, [1.0, 2.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        s.x[0] = 3.0
    with pytest.raises(ValueError):
        State(0.0, [np.nan], [0.0])
    with pytest.raises(DimensionError):
        State(0.0, [1.0, 2.0], [0.0])


def test_state_copies_input():
    x = np.array([1.0])
    s = State(0.0, x, [0.0])
    x[0] = 5.0
    assert s.x[0] == 1.0


@pytest.mark.parametrize("m,k,u0,t,u,v", [
    (1, 1, 1, 0.0, 1.0, 0.0),
    (1, 1, 1, math.pi, -1.0, 0.0),
    (1, 4, 0.5, math.pi / 4, 0.0, -1.0),
])
def test_oscillator_analytic(m, k, u0, t, u, v):
    ua, va = oscillator_analytic(OscillatorModel(m, k), u0, t)
    assert ua == pytest.approx(u, abs=1e-15)
    assert va == pytest.approx(v, abs=1e-15)


def test_analytic_energy_is_constant():
    model = OscillatorModel(2.0, 3.0)
    t = np.linspace(0, 50, 1001)
    u, v = oscillator_analytic(model, 0.7, t)
    E = 0.5 * model.m * v**2 + 0.5 * model.k * u**2
    assert np.max(np.abs(E - model.initial_energy(0.7))) / model.initial_energy(0.7) <= 1e-14


def test_total_energy_examples():
    model = OscillatorModel()
    assert total_energy(model, State(0, [1.0], [0.0])) == pytest.approx((0.0, 0.5, 0.5))
    assert total_energy(model, State(0, [0.0], [1.0])) == pytest.approx((0.5, 0.0, 0.5))
    with pytest.raises(DimensionError):
        total_energy(model, State(0, [0.0, 1.0], [0.0, 0.0]))


def test_oscillator_properties():
    model = OscillatorModel(1.0, 4.0)
    assert model.omega == 2.0
    assert model.period == pytest.approx(math.pi)
    assert np.array_equal(model.mass_matrix(), model.mass_matrix().T)
    with pytest.raises(ValueError):
        OscillatorModel(0.0, 1.0)


def test_solve_mass(rng):
    model = OscillatorModel(2.5, 1.0)
    assert model.solve_mass(np.array([5.0])) == pytest.approx([2.0])
