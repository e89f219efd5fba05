import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hermite_dyn.core import ElementInversion, total_energy
from hermite_dyn.fe1d import (
    BarMesh,
    BarProperties,
    ElementKind,
    analytic_first_mode,
    assemble_linear_stiffness,
    assemble_mass,
    discrete_mode_frequency,
    internal_force_neohooke,
    make_bar_model,
    mode_initial_state,
    neohooke_strain_energy,
)

PROPS = BarProperties()
KINDS = [ElementKind.LINEAR, ElementKind.HERMITE]


def test_single_linear_element_matrices():
    mesh = BarMesh(1, "linear")
    assert np.allclose(assemble_mass(mesh, PROPS), np.array([[2, 1], [1, 2]]) / 6)
    assert np.allclose(assemble_linear_stiffness(mesh, PROPS), [[1, -1], [-1, 1]])


def test_two_linear_elements_mass():
    m = assemble_mass(BarMesh(2, "linear"), PROPS)
    expected = np.array([[2, 1, 0], [1, 4, 1], [0, 1, 2]]) / 12
    assert np.allclose(m, expected)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n_el", [1, 3, 7])
def test_mass_symmetric_positive_and_total_mass(kind, n_el, rng):
    props = BarProperties(L=2.0, A=0.5, rho0=3.0, E=1.0)
    mesh = BarMesh(n_el, kind, props.L)
    m = assemble_mass(mesh, props)
    assert np.array_equal(m, m.T)
    for _ in range(10):
        x = rng.normal(size=mesh.ndof)
        assert x @ m @ x > 0
    ones = np.zeros(mesh.ndof)
    ones[mesh.value_dofs] = 1.0
    assert ones @ m @ ones == pytest.approx(props.rho0 * props.A * props.L)


@pytest.mark.parametrize("kind", KINDS)
def test_stiffness_annihilates_rigid_translation(kind):
    mesh = BarMesh(5, kind)
    k = assemble_linear_stiffness(mesh, PROPS)
    r = np.zeros(mesh.ndof)
    r[mesh.value_dofs] = 1.0
    assert np.allclose(k @ r, 0.0, atol=1e-12)
    assert np.array_equal(k, k.T)


def test_neohooke_undeformed_force_zero():
    mesh = BarMesh(3, "hermite")
    f, _ = internal_force_neohooke(mesh, PROPS, mesh.reference_positions())
    assert np.allclose(f, 0.0, atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_neohooke_uniform_stretch_end_forces(kind):
    props = BarProperties(A=2.0, E=3.0)
    mesh = BarMesh(1, kind)
    x = 2.0 * mesh.reference_positions()  # lambda = 2; Hermite slopes become 2
    f, _ = internal_force_neohooke(mesh, props, x)
    end = props.A * 0.5 * props.E * (2.0 - 0.5)
    assert f[mesh.value_dofs[0]] == pytest.approx(-end)
    assert f[mesh.value_dofs[-1]] == pytest.approx(end)


def _random_state(mesh, rng, scale=0.05):
    x = mesh.reference_positions().copy()
    x += scale * mesh.element_length * rng.normal(size=mesh.ndof)
    return x


@pytest.mark.parametrize("kind", KINDS)
def test_neohooke_tangent_matches_finite_differences(kind, rng):
    mesh = BarMesh(4, kind)
    for _ in range(5):
        x = _random_state(mesh, rng)
        _, K = internal_force_neohooke(mesh, PROPS, x)
        h = 1e-6
        fd = np.empty_like(K)
        for j in range(mesh.ndof):
            e = np.zeros(mesh.ndof)
            e[j] = h
            fp, _ = internal_force_neohooke(mesh, PROPS, x + e, tangent=False)
            fm, _ = internal_force_neohooke(mesh, PROPS, x - e, tangent=False)
            fd[:, j] = (fp - fm) / (2 * h)
        assert np.allclose(K, fd, rtol=1e-6, atol=1e-6 * np.max(np.abs(K)))


@pytest.mark.parametrize("kind", KINDS)
def test_neohooke_force_is_energy_gradient(kind, rng):
    mesh = BarMesh(4, kind)
    x = _random_state(mesh, rng)
    f, _ = internal_force_neohooke(mesh, PROPS, x, tangent=False)
    for _ in range(5):
        d = rng.normal(size=mesh.ndof)
        h = 1e-6
        dW = (neohooke_strain_energy(mesh, PROPS, x + h * d) - neohooke_strain_energy(mesh, PROPS, x - h * d)) / (2 * h)
        assert dW == pytest.approx(f @ d, rel=1e-6, abs=1e-10)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("material", ["linear", "neohooke"])
def test_free_bar_forces_self_equilibrated(kind, material, rng):
    mesh = BarMesh(5, kind)
    model = make_bar_model(mesh, PROPS, material)
    x = _random_state(mesh, rng)
    f = model.force(x)
    assert abs(np.sum(f[mesh.value_dofs])) <= 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_neohooke_linearizes_to_linear_elasticity(kind, rng):
    mesh = BarMesh(4, kind)
    u = 1e-7 * rng.normal(size=mesh.ndof)
    x = mesh.reference_positions() + u
    f, _ = internal_force_neohooke(mesh, PROPS, x, tangent=False)
    ku = assemble_linear_stiffness(mesh, PROPS) @ u
    assert np.linalg.norm(f - ku) <= 1e-5 * np.linalg.norm(ku)


def test_element_inversion_raises():
    mesh = BarMesh(2, "linear")
    x = mesh.reference_positions().copy()
    x[1] = -0.2
    with pytest.raises(ElementInversion):
        internal_force_neohooke(mesh, PROPS, x)


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.integers(1, 6))
def test_hermite_interpolates_cubics_exactly(coef, n_el):
    mesh = BarMesh(n_el, "hermite", 2.0)
    p = np.polynomial.Polynomial(coef)
    vals = np.zeros(mesh.ndof)
    vals[mesh.value_dofs] = p(mesh.nodes)
    vals[mesh.value_dofs + 1] = p.deriv()(mesh.nodes)
    X = np.linspace(0, 2.0, 37)
    assert np.allclose(mesh.interpolate(vals, X), p(X), atol=1e-12)


def test_analytic_first_mode_examples():
    props = BarProperties()
    assert props.omega_an == pytest.approx(math.pi)
    assert props.period_an == pytest.approx(2.0)
    u, v = analytic_first_mode(props, 0.3, 0.0, 0.0)
    assert (u, v) == (pytest.approx(0.3), pytest.approx(0.0))
    u, _ = analytic_first_mode(props, 0.3, 0.0, 0.5)
    assert u == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("kind", KINDS)
def test_mode_initial_energy_close_to_continuous(kind):
    props = BarProperties()
    u0 = 0.1
    mesh = BarMesh(32, kind)
    model = make_bar_model(mesh, props, "linear")
    _, _, E = total_energy(model, mode_initial_state(mesh, props, u0))
    E_an = props.E * props.A * (math.pi * u0) ** 2 / (4 * props.L)
    assert E == pytest.approx(E_an, rel=1e-3)
    assert props.mode_energy(u0) == pytest.approx(E_an)


def test_discrete_frequency_six_linear_elements():
    w = discrete_mode_frequency(BarMesh(6, "linear"), PROPS)
    assert (w - PROPS.omega_an) / PROPS.omega_an == pytest.approx(0.0115, abs=0.001)


def test_discrete_frequency_converges_from_above():
    errs = [discrete_mode_frequency(BarMesh(n, "linear"), PROPS) - PROPS.omega_an for n in (4, 8, 16, 32)]
    assert all(e > 0 for e in errs)
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_discrete_frequency_rejects_bad_index():
    with pytest.raises(ValueError):
        discrete_mode_frequency(BarMesh(2, "linear"), PROPS, 5)


def test_mesh_validation():
    with pytest.raises(ValueError):
        BarMesh(0)
    with pytest.raises(ValueError):
        BarMesh(2, "quadratic")
    assert BarMesh(4, "hermite").characteristic_length == pytest.approx(0.125)
