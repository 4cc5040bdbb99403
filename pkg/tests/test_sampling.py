import numpy as np
import pytest
from scipy import stats

from landaulab import rng as rngmod
from landaulab.grid import VelocityGrid, gaussian_density, maxwellian_equilibrium
from landaulab.sampling import (
    DensitySpec,
    mollified_initial_data,
    normalize_spec,
    sample,
    sample_grid_density,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        DensitySpec(kind="nope")
    with pytest.raises(ValueError):
        DensitySpec(kind="gaussian_aniso", variances=(1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        DensitySpec(kind="mixture", components=((0.5, (0, 0, 0), 1.0),))


def test_normalize_iso_and_aniso_unchanged():
    iso = normalize_spec(DensitySpec(kind="gaussian_iso"))
    assert iso.normalized
    aniso = normalize_spec(DensitySpec(kind="gaussian_aniso",
                                       variances=(2.0, 0.5, 0.5)))
    assert np.allclose(aniso.variances, (2.0, 0.5, 0.5))


def test_normalize_mixture_moment_arithmetic():
    spec = DensitySpec(kind="mixture", components=(
        (0.5, (1.5, 0.0, 0.0), 1.0), (0.5, (-1.5, 0.0, 0.0), 1.0)))
    out = normalize_spec(spec)
    assert np.allclose(out.mean(), 0.0, atol=1e-14)
    assert out.second_moment() == pytest.approx(3.0, abs=1e-14)
    # scale factor is sqrt(3 / 5.25)
    m0 = out.components[0][1]
    assert abs(m0[0]) == pytest.approx(1.5 * np.sqrt(3.0 / 5.25), rel=1e-14)


def test_normalize_idempotent():
    spec = DensitySpec(kind="mixture", components=(
        (0.3, (1.0, 0.5, 0.0), 2.0), (0.7, (-0.5, 0.0, 0.2), 0.7)))
    once = normalize_spec(spec)
    twice = normalize_spec(once)
    for a, b in zip(once.components, twice.components):
        assert a[0] == pytest.approx(b[0])
        assert np.allclose(a[1], b[1], atol=1e-13)
        assert a[2] == pytest.approx(b[2], rel=1e-12)


def test_sampler_determinism_and_moments():
    spec = normalize_spec(DensitySpec(kind="gaussian_iso"))
    a = sample(spec, 4096, rngmod.stream(5, rngmod.TAG_SAMPLER))
    b = sample(spec, 4096, rngmod.stream(5, rngmod.TAG_SAMPLER))
    assert np.array_equal(a, b)
    n = len(a)
    assert np.max(np.abs(a.mean(axis=0))) < 4.0 / np.sqrt(n)
    assert abs((a * a).sum(axis=1).mean() - 3.0) < 4.0 * 3.0 / np.sqrt(n)


def test_mixture_sampler_moments():
    spec = normalize_spec(DensitySpec(kind="mixture", components=(
        (0.5, (1.5, 0.0, 0.0), 1.0), (0.5, (-1.5, 0.0, 0.0), 1.0))))
    draws = sample(spec, 20000, rngmod.stream(8, rngmod.TAG_SAMPLER))
    assert abs((draws ** 2).sum(axis=1).mean() - 3.0) < 0.1


def test_grid_rejection_sampler_ks():
    f = maxwellian_equilibrium(6.0, 32)
    draws, acc = sample_grid_density(f, 10_000,
                                     rngmod.stream(3, rngmod.TAG_SAMPLER))
    assert acc > 0.2
    exact = rngmod.stream(4, rngmod.TAG_SAMPLER).standard_normal((10_000, 3))
    # two-sample KS per axis below the 1% critical value
    crit = 1.628 * np.sqrt(2.0 / 10_000)
    for ax in range(3):
        ks = stats.ks_2samp(draws[:, ax], exact[:, ax]).statistic
        assert ks < crit


def test_grid_sampler_histogram_consistency():
    grid = VelocityGrid(6.0, 16)
    f = gaussian_density(grid, (2.0, 0.5, 0.5))
    n = 100_000
    draws, _ = sample_grid_density(f, n, rngmod.stream(9, rngmod.TAG_SAMPLER))
    # coarse marginal histogram along x vs the grid marginal
    fx = f.values.sum(axis=(1, 2)) * grid.h ** 3
    edges = np.concatenate([grid.axis() - grid.h / 2,
                            [grid.axis()[-1] + grid.h / 2]])
    counts, _ = np.histogram(draws[:, 0], bins=edges)
    expect = fx / grid.h * n * grid.h
    sel = expect > 25
    dev = np.abs(counts[sel] - expect[sel]) / np.sqrt(expect[sel])
    assert np.quantile(dev, 0.95) < 4.0


def test_rng_streams_distinct_and_uncorrelated():
    a = rngmod.stream(1, 1, 2, 3).standard_normal(100_000)
    b = rngmod.stream(1, 1, 2, 4).standard_normal(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
    assert abs(np.corrcoef(a[:-1], a[1:])[0, 1]) < 0.01


def test_mollified_data_positive_and_close():
    grid = VelocityGrid(6.0, 24)
    f0 = maxwellian_equilibrium(6.0, 24)
    for eps in (0.5, 0.25):
        out = mollified_initial_data(f0, eps)
        assert out.values.min() > 0.0
        assert out.mass() == pytest.approx(1.0, abs=1e-13)
    d_big = np.abs(mollified_initial_data(f0, 0.5).values - f0.values).sum() \
        * grid.cell_volume
    d_small = np.abs(mollified_initial_data(f0, 0.25).values - f0.values).sum() \
        * grid.cell_volume
    assert d_small < d_big
    with pytest.raises(ValueError):
        mollified_initial_data(f0, 0.0)
