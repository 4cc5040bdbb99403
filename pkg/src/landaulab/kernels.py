"""Landau interaction coefficients for power-law potentials.

The pairwise interaction is encoded by the matrix kernel

    a(z) = |z|^gamma (|z|^2 Id - z (x) z),        gamma in [-3, 1],

together with its divergence b(z) = -2 |z|^gamma z, the scalar
c(z) = div b(z), and the matrix square root sigma(z) with
sigma sigma^T = a.  ``a`` is symmetric positive semidefinite with
null space spanned by z; the convention a(0) = 0, b(0) = 0 removes
self-interaction terms everywhere downstream.

For gamma = -3 (Coulomb) the scalar coefficient degenerates to a point
mass at the origin; :data:`COULOMB_DIRAC` marks that case and callers
must use the convolution identity  c * f = -8 pi f  instead of pointwise
values.

All functions broadcast over leading axes: ``z`` may be shape (3,) or
(..., 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PotentialParams",
    "COULOMB_DIRAC",
    "SingularPointError",
    "kernel_a",
    "kernel_b",
    "kernel_c",
    "kernel_sqrt_a",
    "kernel_a_regularized",
    "kernel_b_regularized",
    "kernel_c_regularized",
    "smooth_cutoff",
    "smooth_cutoff_derivative",
]


class SingularPointError(ValueError):
    """Pointwise evaluation requested where the kernel is not a function."""


class _CoulombDirac:
    """Marker for the Dirac mass -8 pi delta_0 arising at gamma = -3."""

    __slots__ = ()

    def __repr__(self):
        return "COULOMB_DIRAC"


COULOMB_DIRAC = _CoulombDirac()


@dataclass(frozen=True)
class PotentialParams:
    """Power-law exponent and optional truncation radius.

    ``gamma`` selects the potential family (hard: (0,1], Maxwellian: 0,
    soft: [-3,0), Coulomb: -3).  ``epsilon_cutoff > 0`` activates the
    truncated kernel used to tame the origin singularity.
    """

    gamma: float
    epsilon_cutoff: float = 0.0

    def __post_init__(self):
        if not -3.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [-3, 1], got {self.gamma}")
        if self.epsilon_cutoff < 0.0:
            raise ValueError("epsilon_cutoff must be >= 0")


def _norms(z):
    z = np.asarray(z, dtype=float)
    r2 = np.einsum("...i,...i->...", z, z)
    return z, r2


def _pow_r(r2, exponent):
    # r^exponent computed as (r^2)^(exponent/2); r = 0 entries must be
    # masked by the caller before use.
    safe = np.where(r2 > 0.0, r2, 1.0)
    return safe ** (exponent / 2.0)


def kernel_a(z, p: PotentialParams):
    """Matrix coefficient a(z) = |z|^gamma(|z|^2 Id - z (x) z); a(0) = 0."""
    z, r2 = _norms(z)
    rg = _pow_r(r2, p.gamma)
    outer = z[..., :, None] * z[..., None, :]
    eye = np.eye(3)
    a = rg[..., None, None] * (r2[..., None, None] * eye - outer)
    return np.where((r2 > 0.0)[..., None, None], a, 0.0)


def kernel_b(z, p: PotentialParams):
    """Vector coefficient b(z) = div a(z) = -2 |z|^gamma z; b(0) = 0."""
    z, r2 = _norms(z)
    rg = _pow_r(r2, p.gamma)
    b = -2.0 * rg[..., None] * z
    return np.where((r2 > 0.0)[..., None], b, 0.0)


def kernel_c(z, p: PotentialParams):
    """Scalar coefficient c(z) = -2(gamma+3)|z|^gamma for gamma > -3.

    At gamma = -3 the coefficient is the point mass -8 pi delta_0 and the
    marker :data:`COULOMB_DIRAC` is returned; use the grid identity
    c * f = -8 pi f.  For gamma in (-3, 0) the pointwise value at z = 0
    does not exist and a :class:`SingularPointError` is raised.
    """
    if p.gamma == -3.0:
        return COULOMB_DIRAC
    z, r2 = _norms(z)
    if p.gamma < 0.0 and np.any(r2 == 0.0):
        raise SingularPointError(
            "c(0) is singular for gamma in (-3, 0); integrate over the cell "
            "or use the convolution instead"
        )
    rg = _pow_r(r2, p.gamma)
    out = -2.0 * (p.gamma + 3.0) * rg
    return out if out.ndim else float(out)


def kernel_sqrt_a(z, p: PotentialParams):
    """Symmetric PSD square root sigma(z) = |z|^((gamma+2)/2)(Id - zhat (x) zhat)."""
    z, r2 = _norms(z)
    s = _pow_r(r2, (p.gamma + 2.0) / 2.0)
    safe_r2 = np.where(r2 > 0.0, r2, 1.0)
    outer_hat = z[..., :, None] * z[..., None, :] / safe_r2[..., None, None]
    sig = s[..., None, None] * (np.eye(3) - outer_hat)
    return np.where((r2 > 0.0)[..., None, None], sig, 0.0)


def smooth_cutoff(r, epsilon):
    """C^2 cutoff chi(|z|/epsilon): 0 on [0, eps], 1 on [2 eps, inf).

    The blend on (eps, 2 eps) is the quintic smoothstep
    s(u) = 6u^5 - 15u^4 + 10u^3 with u = |z|/eps - 1.
    """
    if epsilon <= 0.0:
        raise ValueError("smooth_cutoff requires epsilon > 0")
    u = np.clip(np.asarray(r, dtype=float) / epsilon - 1.0, 0.0, 1.0)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def smooth_cutoff_derivative(r, epsilon):
    """d chi / d|z| for the quintic blend (zero outside (eps, 2 eps))."""
    r = np.asarray(r, dtype=float)
    u = r / epsilon - 1.0
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    ds = 30.0 * u * u * (u - 1.0) * (u - 1.0) / epsilon
    return np.where(inside, ds, 0.0)


def kernel_a_regularized(z, p: PotentialParams):
    """Truncated kernel a_eps(z) = chi(|z|/eps) a(z); requires eps > 0."""
    if p.epsilon_cutoff <= 0.0:
        raise ValueError("kernel_a_regularized needs epsilon_cutoff > 0; "
                         "use kernel_a for the unregularized coefficient")
    z, r2 = _norms(z)
    chi = smooth_cutoff(np.sqrt(r2), p.epsilon_cutoff)
    return chi[..., None, None] * kernel_a(z, p)


def kernel_b_regularized(z, p: PotentialParams):
    """div a_eps = chi(|z|/eps) b(z), exact because a(z) z = 0 kills the chi gradient."""
    if p.epsilon_cutoff <= 0.0:
        raise ValueError("kernel_b_regularized needs epsilon_cutoff > 0")
    z, r2 = _norms(z)
    chi = smooth_cutoff(np.sqrt(r2), p.epsilon_cutoff)
    return chi[..., None] * kernel_b(z, p)


def kernel_c_regularized(z, p: PotentialParams):
    """div b_eps = chi c - 2 |z|^(gamma+1) chi' / eps (a genuine function for all gamma).

    For gamma = -3 the pointwise part vanishes and what remains is a smooth
    bump supported on eps <= |z| <= 2 eps with total integral -8 pi: the
    mollified Coulomb point mass.
    """
    eps = p.epsilon_cutoff
    if eps <= 0.0:
        raise ValueError("kernel_c_regularized needs epsilon_cutoff > 0")
    z, r2 = _norms(z)
    r = np.sqrt(r2)
    chi = smooth_cutoff(r, eps)
    dchi = smooth_cutoff_derivative(r, eps)
    rg = _pow_r(r2, p.gamma)
    rg1 = _pow_r(r2, p.gamma + 1.0)
    out = -2.0 * (p.gamma + 3.0) * rg * chi - 2.0 * rg1 * dchi
    out = np.where(r2 > 0.0, out, 0.0)
    return out if out.ndim else float(out)
