import numpy as np
import pytest

from landaulab.convolve import (
    convolve_coefficients,
    convolve_coefficients_direct,
    ellipticity_floor,
    sym3_extreme_eigenvalues,
)
from landaulab.grid import (
    GridDensity,
    VelocityGrid,
    gaussian_density,
    maxwellian_equilibrium,
    maxwellian_pdf,
)
from landaulab.kernels import PotentialParams


def test_grid_validation():
    with pytest.raises(ValueError):
        VelocityGrid(0.0, 16)
    with pytest.raises(ValueError):
        VelocityGrid(6.0, 15)
    with pytest.raises(ValueError):
        VelocityGrid(6.0, 6)


def test_grid_is_symmetric():
    grid = VelocityGrid(4.0, 10)
    ax = grid.axis()
    assert np.allclose(ax, -ax[::-1])
    assert grid.h == pytest.approx(0.8)


def test_maxwellian_peak_and_moments():
    assert maxwellian_pdf(np.zeros(3)) == pytest.approx((2 * np.pi) ** -1.5)
    f = maxwellian_equilibrium(6.0, 64)
    assert f.mass() == pytest.approx(1.0, abs=1e-13)
    assert np.allclose(f.momentum(), 0.0, atol=1e-15)  # exact by symmetry
    assert f.energy() == pytest.approx(3.0, abs=2e-4)  # O(h^2) + tail
    with pytest.raises(ValueError):
        maxwellian_equilibrium(4.0, 32)


def test_maxwellian_entropy_value():
    from landaulab.functionals import entropy
    f = maxwellian_equilibrium(6.0, 64)
    assert entropy(f) == pytest.approx(-1.5 * (1.0 + np.log(2 * np.pi)), abs=1e-3)


def test_density_validation():
    grid = VelocityGrid(5.0, 8)
    with pytest.raises(ValueError):
        GridDensity(grid, -np.ones(grid.shape))
    with pytest.raises(ValueError):
        GridDensity(grid, np.ones((4, 4, 4)))


def test_gaussian_density_moments():
    grid = VelocityGrid(6.0, 48)
    f = gaussian_density(grid, (2.0, 0.5, 0.5))
    assert f.mass() == pytest.approx(1.0, abs=1e-13)
    assert f.energy() == pytest.approx(3.0, abs=1e-3)


@pytest.mark.parametrize("gamma,eps", [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0),
                                       (-3.0, 0.0), (-3.0, 0.8)])
def test_fft_convolution_equals_direct_sum(gamma, eps):
    grid = VelocityGrid(5.0, 8)
    f = gaussian_density(grid, (1.5, 0.8, 0.7))
    p = PotentialParams(gamma, eps)
    fast = convolve_coefficients(f, p)
    slow = convolve_coefficients_direct(f, p)
    assert np.max(np.abs(fast.abar - slow.abar)) < 1e-12
    assert np.max(np.abs(fast.bbar - slow.bbar)) < 1e-12
    assert np.max(np.abs(fast.cbar - slow.cbar)) < 1e-12


def test_maxwellian_fields_match_moment_identities():
    # gamma=0: abar = (|v|^2+2) Id - v v^T, bbar = -2v, cbar = -6
    f = maxwellian_equilibrium(6.0, 32)
    fields = convolve_coefficients(f, PotentialParams(0.0))
    v = f.grid.nodes()
    r2 = f.grid.radius2()
    pred_a = (r2[..., None, None] + 2.0) * np.eye(3) \
        - v[..., :, None] * v[..., None, :]
    assert np.max(np.abs(fields.abar - pred_a)) < 5e-4
    assert np.max(np.abs(fields.bbar + 2.0 * v)) < 5e-4
    assert np.max(np.abs(fields.cbar + 6.0)) < 5e-4


def test_coulomb_cbar_is_pointwise_density():
    f = gaussian_density(VelocityGrid(6.0, 16), (1.0, 1.2, 0.9))
    fields = convolve_coefficients(f, PotentialParams(-3.0))
    assert np.array_equal(fields.cbar, -8.0 * np.pi * f.values)


def test_abar_psd_at_nodes():
    f = gaussian_density(VelocityGrid(6.0, 16), (2.0, 0.5, 0.5))
    for gamma in (-3.0, 0.0, 1.0):
        fields = convolve_coefficients(f, PotentialParams(gamma))
        lmin = fields.min_eigenvalue_field()
        assert lmin.min() >= -1e-10


def test_sym3_eigen_formula_matches_eigvalsh():
    gen = np.random.default_rng(7)
    a = gen.standard_normal((500, 3, 3))
    a = a + a.swapaxes(1, 2)
    lmin, lmax = sym3_extreme_eigenvalues(a)
    w = np.linalg.eigvalsh(a)
    assert np.allclose(lmin, w[:, 0], atol=1e-10)
    assert np.allclose(lmax, w[:, 2], atol=1e-10)


def test_ellipticity_floor_maxwellian():
    f = maxwellian_equilibrium(6.0, 32)
    fields = convolve_coefficients(f, PotentialParams(0.0))
    c0 = ellipticity_floor(fields, 0.0, f.grid)
    assert c0 == pytest.approx(2.0, rel=0.02)


def test_ellipticity_floor_positive_for_mixture():
    grid = VelocityGrid(6.0, 24)
    shifted1 = gaussian_density(grid, (1.0, 1.0, 1.0), mean=(1.0, 0.0, 0.0))
    shifted2 = gaussian_density(grid, (1.0, 1.0, 1.0), mean=(-1.0, 0.0, 0.0))
    mix = GridDensity(grid, 0.5 * (shifted1.values + shifted2.values)).normalized()
    fields = convolve_coefficients(mix, PotentialParams(0.0))
    assert ellipticity_floor(fields, 0.0, grid) > 0.0


def test_ellipticity_floor_grid_stability():
    vals = []
    for m in (24, 48):
        f = maxwellian_equilibrium(6.0, m)
        fields = convolve_coefficients(f, PotentialParams(-1.0))
        vals.append(ellipticity_floor(fields, -1.0, f.grid))
    assert abs(vals[1] - vals[0]) <= 0.05 * abs(vals[0])
