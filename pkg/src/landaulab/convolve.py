"""Convolution coefficients abar = a*f, bbar = b*f, cbar = c*f on the grid.

The discrete convolution is the plain double sum over nodes,

    abar(v_i) = h^3 sum_j a(v_i - v_j) f_j,

evaluated in O(M^3 log M) by zero-padded FFTs.  Kernels are tabulated once
per (grid, potential) on the offset lattice; even components have real
transforms and odd (vector) components purely imaginary ones, which halves
the spectral multiply cost.  The inverse transforms are pruned axis by axis
since only the leading M-slab of the padded result is needed.

Special cells and cases:
  * the zero offset uses the self-interaction convention a(0) = 0, b(0) = 0;
  * gamma in (-3, 0): the scalar kernel's singular cell gets an analytic
    cell average (inscribed-ball radial integral plus midpoint remainder);
  * gamma = -3 unregularized: cbar = -8 pi f exactly (Coulomb point mass);
  * epsilon_cutoff > 0: the truncated family a_eps, b_eps, c_eps replaces
    a, b, c, and no cell is singular.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .grid import GridDensity, VelocityGrid
from .kernels import (
    PotentialParams,
    kernel_a,
    kernel_a_regularized,
    kernel_b,
    kernel_b_regularized,
    kernel_c_regularized,
)

__all__ = [
    "ConvolvedFields",
    "CoefficientConvolver",
    "convolve_coefficients",
    "convolve_coefficients_direct",
    "ellipticity_floor",
    "sym3_extreme_eigenvalues",
]

_WORKERS = 2

# (row, col) of the six independent entries of a symmetric 3x3 matrix
_SYM_IDX = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


@dataclass
class ConvolvedFields:
    """Fields a*f (matrix), b*f (vector), c*f (scalar) at the grid nodes."""

    abar: np.ndarray  # (M, M, M, 3, 3)
    bbar: np.ndarray  # (M, M, M, 3)
    cbar: np.ndarray  # (M, M, M)

    _lambda_max: float = None
    _lambda_min_field: np.ndarray = None

    def max_eigenvalue(self) -> float:
        """Largest eigenvalue of abar over all nodes (diffusion CFL scale)."""
        if self._lambda_max is None:
            _, lmax = sym3_extreme_eigenvalues(self.abar)
            self._lambda_max = float(lmax.max())
        return self._lambda_max

    def min_eigenvalue_field(self) -> np.ndarray:
        if self._lambda_min_field is None:
            lmin, _ = sym3_extreme_eigenvalues(self.abar)
            self._lambda_min_field = lmin
        return self._lambda_min_field


def sym3_extreme_eigenvalues(a):
    """(lambda_min, lambda_max) of symmetric 3x3 matrices, vectorized.

    Closed-form trigonometric solution of the characteristic cubic; inputs
    of shape (..., 3, 3).
    """
    a = np.asarray(a, dtype=float)
    a00, a11, a22 = a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]
    a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]
    q = (a00 + a11 + a22) / 3.0
    d0, d1, d2 = a00 - q, a11 - q, a22 - q
    p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * (a01 * a01 + a02 * a02 + a12 * a12)
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    safe_p = np.where(p > 0.0, p, 1.0)
    # det((A - q I)/p) / 2
    detb = (
        d0 * (d1 * d2 - a12 * a12)
        - a01 * (a01 * d2 - a12 * a02)
        + a02 * (a01 * a12 - d1 * a02)
    ) / safe_p**3
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lmax = q + 2.0 * p * np.cos(phi)
    lmin = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    return np.where(p2 > 0.0, lmin, q), np.where(p2 > 0.0, lmax, q)


def _singular_cell_average(gamma: float, h: float) -> float:
    """Cell average of |z|^gamma over the h-cube at the origin, gamma in (-3, 0).

    Exact radial integral over the inscribed ball plus a one-point
    (midpoint) estimate for the cube-minus-ball remainder, evaluated at the
    mean of the inscribed and circumscribed radii.
    """
    rb = 0.5 * h
    ball = 4.0 * np.pi * rb ** (gamma + 3.0) / (gamma + 3.0)
    vol_ball = 4.0 * np.pi * rb**3 / 3.0
    r_mid = 0.5 * (rb + np.sqrt(3.0) * rb)
    remainder = (h**3 - vol_ball) * r_mid**gamma
    return (ball + remainder) / h**3


class CoefficientConvolver:
    """Precomputed FFT tables for one (grid, potential) pair."""

    def __init__(self, grid: VelocityGrid, p: PotentialParams):
        self.grid = grid
        self.p = p
        m = grid.points_per_axis
        h = grid.h
        self.pad = sfft.next_fast_len(2 * m - 1, real=True)
        offsets = np.arange(-(m - 1), m) * h
        zx, zy, zz = np.meshgrid(offsets, offsets, offsets, indexing="ij")
        z = np.stack([zx, zy, zz], axis=-1)
        pos = np.arange(-(m - 1), m) % self.pad
        scatter = np.ix_(pos, pos, pos)

        if p.epsilon_cutoff > 0.0:
            amat = kernel_a_regularized(z, p)
            bvec = kernel_b_regularized(z, p)
            cval = kernel_c_regularized(z, p)
        else:
            amat = kernel_a(z, p)
            bvec = kernel_b(z, p)
            cval = self._plain_c_table(z, p, h)

        def pad_fft(tab):
            buf = np.zeros((self.pad,) * 3)
            buf[scatter] = tab
            return sfft.rfftn(buf, workers=_WORKERS)

        # even kernels have real spectra, odd ones purely imaginary
        self._a_hat = [pad_fft(amat[..., i, j]).real.copy() for i, j in _SYM_IDX]
        self._b_hat = [pad_fft(bvec[..., i]).imag.copy() for i in range(3)]
        self._c_hat = None if cval is None else pad_fft(cval).real.copy()

    def _plain_c_table(self, z, p, h):
        """Tabulate c(z) with the singular cell averaged; None for gamma = -3."""
        if p.gamma == -3.0:
            return None  # cbar = -8 pi f, handled in fields()
        r2 = np.einsum("...i,...i->...", z, z)
        zero = r2 == 0.0
        if p.gamma < 0.0:
            safe = np.where(zero, 1.0, r2)
            cval = -2.0 * (p.gamma + 3.0) * safe ** (p.gamma / 2.0)
            cell = _singular_cell_average(p.gamma, h)
            cval[zero] = -2.0 * (p.gamma + 3.0) * cell
            mid = z.shape[0] // 2  # zero offset sits at the table center
            if abs(cval[mid, mid, mid]) > 40.0 * abs(cval[mid + 1, mid, mid]):
                warnings.warn(
                    "grid too coarse to resolve the |z|^gamma cell integral "
                    f"(gamma={p.gamma}, h={h:g})", RuntimeWarning)
        elif p.gamma == 0.0:
            cval = np.full(z.shape[:-1], -6.0)
        else:
            cval = -2.0 * (p.gamma + 3.0) * r2 ** (p.gamma / 2.0)
        return cval

    def _pruned_inverse(self, prod):
        m = self.grid.points_per_axis
        x = sfft.ifft(prod, axis=0, workers=_WORKERS)[:m]
        x = sfft.ifft(x, axis=1, workers=_WORKERS)[:, :m]
        return sfft.irfft(x, n=self.pad, axis=2, workers=_WORKERS)[:, :, :m]

    def fields(self, f: GridDensity) -> ConvolvedFields:
        if f.grid != self.grid:
            raise ValueError("density grid does not match convolver grid")
        m = self.grid.points_per_axis
        w = self.grid.cell_volume
        fpad = np.zeros((self.pad,) * 3)
        fpad[:m, :m, :m] = f.values
        fhat = sfft.rfftn(fpad, workers=_WORKERS)

        abar = np.empty(self.grid.shape + (3, 3))
        for k, (i, j) in enumerate(_SYM_IDX):
            conv = self._pruned_inverse(self._a_hat[k] * fhat) * w
            abar[..., i, j] = conv
            if i != j:
                abar[..., j, i] = conv
        bbar = np.empty(self.grid.shape + (3,))
        for i in range(3):
            bbar[..., i] = self._pruned_inverse((1j * self._b_hat[i]) * fhat) * w
        if self._c_hat is None:
            cbar = -8.0 * np.pi * f.values
        else:
            cbar = self._pruned_inverse(self._c_hat * fhat) * w
        return ConvolvedFields(abar=abar, bbar=bbar, cbar=cbar)


_CONVOLVER_CACHE: dict = {}


def get_convolver(grid: VelocityGrid, p: PotentialParams) -> CoefficientConvolver:
    key = (grid.half_width, grid.points_per_axis, p.gamma, p.epsilon_cutoff)
    conv = _CONVOLVER_CACHE.get(key)
    if conv is None:
        conv = CoefficientConvolver(grid, p)
        if len(_CONVOLVER_CACHE) > 6:
            _CONVOLVER_CACHE.clear()
        _CONVOLVER_CACHE[key] = conv
    return conv


def convolve_coefficients(f: GridDensity, p: PotentialParams) -> ConvolvedFields:
    """Production path: FFT convolution of the kernels against f."""
    return get_convolver(f.grid, p).fields(f)


def convolve_coefficients_direct(f: GridDensity, p: PotentialParams) -> ConvolvedFields:
    """O(M^6) double-loop oracle; only sensible for small grids."""
    grid = f.grid
    m = grid.points_per_axis
    if m > 16:
        raise ValueError("direct convolution is an oracle for M <= 16")
    conv = get_convolver(grid, p)
    nodes = grid.nodes().reshape(-1, 3)
    fvals = f.values.reshape(-1)
    w = grid.cell_volume
    if p.epsilon_cutoff > 0.0:
        a_of = lambda z: kernel_a_regularized(z, p)
        b_of = lambda z: kernel_b_regularized(z, p)
        c_tab = kernel_c_regularized
    else:
        a_of = lambda z: kernel_a(z, p)
        b_of = lambda z: kernel_b(z, p)
        c_tab = None
    abar = np.zeros((len(nodes), 3, 3))
    bbar = np.zeros((len(nodes), 3))
    cbar = np.zeros(len(nodes))
    # reuse the tabulated (cell-averaged) scalar kernel for exact agreement
    offsets = np.arange(-(m - 1), m) * grid.h
    zg = np.stack(np.meshgrid(offsets, offsets, offsets, indexing="ij"), axis=-1)
    if p.epsilon_cutoff > 0.0:
        ctab = c_tab(zg, p)
    else:
        ctab = conv._plain_c_table(zg, p, grid.h)
    idx = np.arange(m)
    ii, jj, kk = np.meshgrid(idx, idx, idx, indexing="ij")
    flat_ijk = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    for row, (i0, j0, k0) in enumerate(flat_ijk):
        z = nodes[row] - nodes
        abar[row] = np.einsum("nij,n->ij", a_of(z), fvals) * w
        bbar[row] = np.einsum("ni,n->i", b_of(z), fvals) * w
        if ctab is not None:
            di = i0 - flat_ijk[:, 0] + (m - 1)
            dj = j0 - flat_ijk[:, 1] + (m - 1)
            dk = k0 - flat_ijk[:, 2] + (m - 1)
            cbar[row] = np.dot(ctab[di, dj, dk], fvals) * w
    if ctab is None:
        cbar = -8.0 * np.pi * f.values
    else:
        cbar = cbar.reshape(grid.shape)
    return ConvolvedFields(
        abar=abar.reshape(grid.shape + (3, 3)),
        bbar=bbar.reshape(grid.shape + (3,)),
        cbar=cbar,
    )


def ellipticity_floor(fields: ConvolvedFields, gamma: float,
                      grid: VelocityGrid) -> float:
    """min over nodes of lambda_min(abar(v)) / <v>^gamma; positive for
    normalized finite-entropy densities."""
    lmin = fields.min_eigenvalue_field()
    c0 = float((lmin / grid.bracket(gamma)).min())
    if c0 <= 0.0:
        raise ValueError(
            "nonpositive ellipticity floor: density violates the normalization "
            "or the quadrature failed")
    return c0
