"""Mesh, quadrature, frequency grid, Planck and opacity checks."""
import numpy as np
import pytest

from qdrom.materials import (
    A_RAD,
    C_LIGHT,
    FOUR_PI,
    FrequencyGrid,
    MaterialModel,
    TemperatureDomainError,
    planck_band_fraction,
    planck_group_integral,
    planck_spectrum,
)
from qdrom.mesh import SpatialMesh, build_adjacency, build_boundary
from qdrom.quadrature import QuadratureSpecError, build_quadrature

FC_BOUNDS = np.array([0.0, 0.7075, 1.415, 2.123, 2.830, 3.538, 4.245, 5.129,
                      6.014, 6.898, 7.783, 8.667, 9.551, 10.44, 11.32, 12.20,
                      13.09, 1.0e7])


def series_band_integral(x_lo, x_hi, n_terms=400):
    """Independent oracle: integral of x^3/(e^x-1) over [x_lo, x_hi]."""
    def tail(x):
        if np.isinf(x):
            return 0.0
        if x == 0.0:
            return np.pi**4 / 15.0
        total = 0.0
        for n in range(1, n_terms + 1):
            total += np.exp(-n * x) * (x**3 / n + 3 * x**2 / n**2 + 6 * x / n**3 + 6 / n**4)
        return total
    return tail(x_lo) - tail(x_hi)


# ---------------------------------------------------------------------------
# Planck integrals
# ---------------------------------------------------------------------------

def test_single_group_recovers_stefan_boltzmann():
    grid = FrequencyGrid(np.array([0.0, 1.0e7]))
    for T in (0.37, 1.0, 2.5):
        b1 = planck_group_integral(T, 0, grid)
        assert b1 >= 0.0
        assert FOUR_PI * b1 == pytest.approx(A_RAD * C_LIGHT * T**4, rel=1e-12)


def test_planck_vanishes_at_low_temperature():
    grid = FrequencyGrid(np.array([0.0, 0.7075, 2.0]))
    b = planck_spectrum(1e-4, grid)
    assert b[1] < 1e-280
    assert np.all(b >= 0.0)


def test_first_group_fraction_matches_series_oracle():
    # T = 1 keV, group (0, 0.7075]: expected fraction from the independent series
    expected = series_band_integral(0.0, 0.7075) / (np.pi**4 / 15.0)
    assert expected == pytest.approx(1.381e-2, rel=2e-3)  # sanity on the oracle itself
    grid = FrequencyGrid(FC_BOUNDS)
    b1 = planck_group_integral(1.0, 0, grid)
    total = A_RAD * C_LIGHT
    assert FOUR_PI * b1 / total == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("T", [0.001, 0.1, 1.0])
def test_planck_normalization(T):
    grid = FrequencyGrid(FC_BOUNDS)
    b = planck_spectrum(T, grid)
    assert FOUR_PI * b.sum() == pytest.approx(A_RAD * C_LIGHT * T**4, rel=1e-10)


def test_planck_additivity_under_group_split():
    coarse = FrequencyGrid(np.array([0.0, 2.0, 8.0]))
    fine = FrequencyGrid(np.array([0.0, 2.0, 4.7, 8.0]))
    for T in (0.05, 1.0):
        b_c = planck_spectrum(T, coarse)
        b_f = planck_spectrum(T, fine)
        assert b_f[1] + b_f[2] == pytest.approx(b_c[1], rel=1e-12)


from hypothesis import given, settings, strategies as st  # noqa: E402


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.02, 2.0))
def test_planck_additivity_property(frac, T):
    lo, hi = 0.4, 3.1
    mid = lo + frac * (hi - lo)
    whole = FrequencyGrid(np.array([0.0, lo, hi]))
    split = FrequencyGrid(np.array([0.0, lo, mid, hi]))
    b_w = planck_spectrum(T, whole)
    b_s = planck_spectrum(T, split)
    assert b_s[1] + b_s[2] == pytest.approx(b_w[1], rel=1e-12, abs=1e-300)


def test_planck_rejects_nonpositive_temperature():
    grid = FrequencyGrid(np.array([0.0, 1.0]))
    with pytest.raises(TemperatureDomainError):
        planck_group_integral(0.0, 0, grid)
    with pytest.raises(TemperatureDomainError):
        planck_spectrum(-1.0, grid)


def test_band_fraction_against_oracle():
    for lo, hi in [(0.5, 3.0), (0.0, 1.0), (2.0, np.inf)]:
        expected = series_band_integral(lo, hi) / (np.pi**4 / 15.0)
        assert planck_band_fraction(lo, hi) == pytest.approx(expected, rel=1e-12, abs=1e-15)


# ---------------------------------------------------------------------------
# Opacity
# ---------------------------------------------------------------------------

def material(cv=1.0, **kw):
    return MaterialModel(heat_capacity=cv, **kw)


def test_spectral_opacity_direct_value():
    m = material()
    # nu = 3 keV, T = 1 keV: (27/27)(1 - e^-3)
    assert m.spectral_opacity(3.0, 1.0) == pytest.approx(1.0 - np.exp(-3.0), rel=1e-12)


def test_spectral_opacity_limits():
    m = material()
    assert m.spectral_opacity(1e6, 1.0) < 1e-16
    # T >> nu: (1 - e^{-nu/T}) ~ nu/T
    assert m.spectral_opacity(2.0, 1e6) == pytest.approx(27.0 / 8.0 * (2.0 / 1e6), rel=1e-5)


def test_group_opacity_positive_and_decreasing_at_high_frequency():
    m = material()
    grid = FrequencyGrid(FC_BOUNDS)
    kap = m.group_opacity(1.0, grid)
    assert kap.shape == (grid.n_groups,)
    assert np.all(kap > 0.0)
    assert np.all(np.diff(kap[2:]) < 0.0)


def test_group_opacity_matches_quadrature_oracle():
    m = material()
    grid = FrequencyGrid(np.array([0.0, 1.0, 4.0, 1.0e7]))
    T = 0.8
    # independent 16-point Gauss-Legendre evaluation of the same collapse rule
    gx, gw = np.polynomial.legendre.leggauss(16)
    nu = 0.5 * 3.0 * gx + 2.5
    b = nu**3 / np.expm1(nu / T)
    k = m.spectral_opacity(nu, T)
    rule_value = np.sum(gw * k * b) / np.sum(gw * b)
    got = m.group_opacity(T, grid)[1]
    assert got == pytest.approx(rule_value, rel=1e-13)
    # and stays close to the exact Planck average (rule truncation ~1e-6 here)
    nu_f = np.linspace(1.0, 4.0, 200001)[1:-1]
    b_f = nu_f**3 / np.expm1(nu_f / T)
    exact = np.trapezoid(m.spectral_opacity(nu_f, T) * b_f, nu_f) / np.trapezoid(b_f, nu_f)
    assert got == pytest.approx(exact, rel=1e-4)


def test_group_opacity_cold_limit_stays_finite():
    m = material()
    grid = FrequencyGrid(FC_BOUNDS)
    kap = m.group_opacity(0.001, grid)
    assert np.all(np.isfinite(kap))
    assert np.all(kap > 0.0)


def test_opacity_rejects_nonpositive_temperature():
    m = material()
    with pytest.raises(TemperatureDomainError):
        m.spectral_opacity(1.0, 0.0)
    with pytest.raises(TemperatureDomainError):
        m.group_opacity(1e-12, FrequencyGrid(np.array([0.0, 1.0])))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def test_four_point_set_is_the_symmetric_reference():
    q = build_quadrature(1)
    assert q.n_dirs == 4
    r = 1.0 / np.sqrt(3.0)
    assert np.allclose(np.abs(q.mu), r, atol=1e-15)
    assert np.allclose(np.abs(q.eta), r, atol=1e-15)
    assert np.allclose(q.xi, r, atol=1e-15)
    assert np.allclose(q.weight, np.pi, atol=1e-14)
    q.validate(1e-12)


@pytest.mark.parametrize("per_quadrant,total", [(1, 4), (3, 12), (4, 16), (36, 144)])
def test_quadrature_counts_and_moments(per_quadrant, total):
    q = build_quadrature(per_quadrant)
    assert q.n_dirs == total
    q.validate(1e-10)
    assert np.sum(q.weight * q.mu * q.mu) == pytest.approx(FOUR_PI / 3.0, abs=1e-10)


def test_quadrature_octant_symmetry():
    q = build_quadrature(4)
    key = np.sort(np.round(np.abs(q.mu) + 1j * np.abs(q.eta), 12))
    for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        sel = (np.sign(q.mu) == sx) & (np.sign(q.eta) == sy)
        assert sel.sum() == 4
        sub = np.sort(np.round(np.abs(q.mu[sel]) + 1j * np.abs(q.eta[sel]), 12))
        assert np.array_equal(sub, key[:4]) or len(set(np.round(q.weight, 14))) <= 2


def test_quadrature_rejects_unsupported_count():
    with pytest.raises(QuadratureSpecError):
        build_quadrature(5)
    with pytest.raises(QuadratureSpecError):
        build_quadrature(0)


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------

def test_mesh_counts_and_areas():
    mesh = SpatialMesh.uniform(20, 20, 0.3, 0.3)
    assert mesh.n_cells == 400
    assert mesh.n_vfaces == 21 * 20
    assert mesh.n_hfaces == 20 * 21
    assert np.all(mesh.cell_area > 0.0)
    assert mesh.cell_area.sum() == pytest.approx(mesh.domain_area, rel=1e-14)


def test_adjacency_half_areas_and_counts():
    mesh = SpatialMesh(3, 2, np.array([0.1, 0.2, 0.3]), np.array([0.5, 0.6]))
    vadj, hadj = build_adjacency(mesh)
    assert vadj.face.shape[0] == 2 * mesh.n_cells
    assert hadj.face.shape[0] == 2 * mesh.n_cells
    area = mesh.cell_area.ravel()
    assert np.allclose(vadj.half_area, 0.5 * area[vadj.cell])
    assert np.allclose(hadj.half_area, 0.5 * area[hadj.cell])
    # every interior face appears exactly twice, boundary faces once
    v_counts = np.bincount(vadj.face, minlength=mesh.n_vfaces)
    assert set(v_counts[mesh.vface_ids()[:, 1:-1].ravel()]) == {2}
    assert set(v_counts[mesh.vface_ids()[:, [0, -1]].ravel()]) == {1}


def test_boundary_table_order_and_sizes():
    mesh = SpatialMesh.uniform(4, 3, 1.0, 1.0)
    b = build_boundary(mesh)
    assert b.count == 2 * (4 + 3)
    assert b.side_slice("left") == slice(0, 3)
    assert b.side_slice("bottom") == slice(3, 7)
    assert b.side_slice("right") == slice(7, 10)
    assert b.side_slice("top") == slice(10, 14)
    assert np.all(b.outward_sign[b.side_slice("left")] == -1)
    assert np.all(b.outward_sign[b.side_slice("top")] == 1)


def test_mesh_rejects_bad_input():
    with pytest.raises(ValueError):
        SpatialMesh.uniform(0, 3, 1.0, 1.0)
    with pytest.raises(ValueError):
        SpatialMesh(2, 2, np.array([1.0, -1.0]), np.array([1.0, 1.0]))
