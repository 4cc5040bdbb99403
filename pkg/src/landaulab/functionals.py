"""Scalar diagnostics: entropy, Fisher information, dissipation, the
two-variable duality test function, Fokker-Planck-type inequalities, and
sample Wasserstein-2 distances.

Log-derivatives are central differences of log f restricted to a support
mask (f above a floor on the full 3x3x3 stencil).  The ratio field
hess(f)/f is assembled from the elementary identity

    hess(f)/f = hess(log f) + grad(log f) (x) grad(log f),

which the continuum objects satisfy exactly and which keeps the tail
numerics of the duality function as tame as the log-derivatives themselves.

Monte-Carlo pair integrals draw grid nodes weighted by cell mass, so they
estimate exactly the double sums whose small-grid evaluation serves as the
oracle; for very soft potentials, pairs closer than the guard radius are
evaluated with the truncated kernel (and counted).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment
from scipy.special import xlogy

from . import rng as rngmod
from .convolve import ConvolvedFields, convolve_coefficients, get_convolver
from .grid import GridDensity
from .kernels import PotentialParams, smooth_cutoff

__all__ = [
    "LogDerivatives",
    "log_derivatives",
    "entropy",
    "fisher",
    "weighted_fisher",
    "second_order_fisher",
    "weighted_gradient_fourth",
    "moment_L1",
    "DissipationEstimate",
    "entropy_dissipation",
    "duality_test_function",
    "duality_cancellation_residual",
    "duality_square_norm",
    "InequalityReport",
    "fokker_planck_check",
    "hessian_comparison_check",
    "weighted_fisher_derivative_check",
    "wasserstein2_samples",
]


# --------------------------------------------------------------------------
# log-derivative fields


@dataclass
class LogDerivatives:
    """Masked finite-difference derivatives of log f on the grid."""

    grad_log_f: np.ndarray       # (M, M, M, 3)
    hess_log_f: np.ndarray       # (M, M, M, 3, 3)
    hess_f_over_f: np.ndarray    # (M, M, M, 3, 3)
    mask: np.ndarray             # (M, M, M) bool
    floor: float
    masked_mass: float           # density mass excluded by the mask


def log_derivatives(f: GridDensity, floor: float = None) -> LogDerivatives:
    """Central differences of log f where f clears the floor on the stencil.

    The default floor is 1e-12 times the peak value.  Boundary nodes are
    always masked (no one-sided formulas enter any functional).
    """
    vals = f.values
    if floor is None:
        floor = 1e-12 * float(vals.max())
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    h = f.grid.h
    above = vals > floor
    mask = ndimage.minimum_filter(above, size=3, mode="constant", cval=False)
    if not mask.any():
        raise ValueError("degenerate density: support mask is empty")

    lg = np.where(above, np.log(np.maximum(vals, floor * 1e-30)), 0.0)
    m = vals.shape[0]
    grad = np.zeros(vals.shape + (3,))
    hess = np.zeros(vals.shape + (3, 3))
    inner = slice(1, -1)
    core = (inner, inner, inner)

    def shifted(ax, off, bx=None, ob=0):
        s = [inner, inner, inner]
        s[ax] = slice(1 + off, m - 1 + off)
        if bx is not None:
            s[bx] = slice(1 + ob, m - 1 + ob)
        return tuple(s)

    for ax in range(3):
        plus, minus = shifted(ax, 1), shifted(ax, -1)
        grad[core + (ax,)] = (lg[plus] - lg[minus]) / (2.0 * h)
        hess[core + (ax, ax)] = (lg[plus] - 2.0 * lg[core] + lg[minus]) / h**2
    for ax in range(3):
        for bx in range(ax + 1, 3):
            mixed = (lg[shifted(ax, 1, bx, 1)] - lg[shifted(ax, 1, bx, -1)]
                     - lg[shifted(ax, -1, bx, 1)] + lg[shifted(ax, -1, bx, -1)]
                     ) / (4.0 * h**2)
            hess[core + (ax, bx)] = mixed
            hess[core + (bx, ax)] = mixed

    grad[~mask] = 0.0
    hess[~mask] = 0.0
    ratio = hess + grad[..., :, None] * grad[..., None, :]
    masked_mass = float(vals[~mask].sum() * f.grid.cell_volume)
    return LogDerivatives(grad_log_f=grad, hess_log_f=hess, hess_f_over_f=ratio,
                          mask=mask, floor=floor, masked_mass=masked_mass)


# --------------------------------------------------------------------------
# pointwise functionals


def entropy(f: GridDensity) -> float:
    """H(f) = integral of f log f (midpoint quadrature, 0 log 0 = 0)."""
    return float(xlogy(f.values, f.values).sum() * f.grid.cell_volume)


def _masked_quadrature(f, derivs, integrand):
    w = np.where(derivs.mask, f.values, 0.0)
    return float((integrand * w).sum() * f.grid.cell_volume)


def fisher(f: GridDensity, derivs: LogDerivatives = None) -> float:
    """I(f) = integral of |grad log f|^2 f over the support mask."""
    derivs = derivs or log_derivatives(f)
    g2 = np.einsum("...i,...i->...", derivs.grad_log_f, derivs.grad_log_f)
    return _masked_quadrature(f, derivs, g2)


def weighted_fisher(f: GridDensity, theta: float,
                    derivs: LogDerivatives = None) -> float:
    """I_phi(f) with weight phi = <v>^theta."""
    derivs = derivs or log_derivatives(f)
    g2 = np.einsum("...i,...i->...", derivs.grad_log_f, derivs.grad_log_f)
    return _masked_quadrature(f, derivs, g2 * f.grid.bracket(theta))


def second_order_fisher(f: GridDensity, theta: float = 0.0,
                        derivs: LogDerivatives = None) -> float:
    """J_theta(f) = integral of <v>^theta |hess log f|_F^2 f."""
    derivs = derivs or log_derivatives(f)
    h2 = np.einsum("...ij,...ij->...", derivs.hess_log_f, derivs.hess_log_f)
    w = f.grid.bracket(theta) if theta != 0.0 else 1.0
    return _masked_quadrature(f, derivs, h2 * w)


def weighted_gradient_fourth(f: GridDensity, theta: float,
                             derivs: LogDerivatives = None) -> float:
    """integral of <v>^theta |grad log f|^4 f."""
    derivs = derivs or log_derivatives(f)
    g2 = np.einsum("...i,...i->...", derivs.grad_log_f, derivs.grad_log_f)
    w = f.grid.bracket(theta) if theta != 0.0 else 1.0
    return _masked_quadrature(f, derivs, g2 * g2 * w)


def moment_L1(f: GridDensity, m: float) -> float:
    """Weighted norm ||f||_{L^1_m} = integral of <v>^m f."""
    return float((f.grid.bracket(m) * f.values).sum() * f.grid.cell_volume)


# --------------------------------------------------------------------------
# pair sampling and the entropy dissipation functional


def _draw_cells(f: GridDensity, n: int, gen: np.random.Generator):
    """Cell indices distributed as the grid density (mass-weighted nodes)."""
    p = (f.values / f.values.sum()).ravel()
    flat = gen.choice(p.size, size=n, p=p)
    return np.column_stack(np.unravel_index(flat, f.values.shape))


def _guard_factor(r2, gamma, guard_radius):
    """Truncation factor chi(|z| / eps) with eps = guard_radius, gamma < -2 only.

    chi vanishes for |z| <= eps and is 1 for |z| >= 2 eps; returns
    (factors, number of damped pairs).
    """
    if gamma >= -2.0 or guard_radius <= 0.0:
        return 1.0, 0
    near = r2 < (2.0 * guard_radius) ** 2
    guarded = int(near.sum())
    if not guarded:
        return 1.0, 0
    chi = np.ones(r2.shape)
    chi[near] = smooth_cutoff(np.sqrt(r2[near]), guard_radius)
    return chi, guarded


def _pair_quadratic_form(z, du, gamma, guard_radius):
    """a(z) : du (x) du = |z|^gamma (|z|^2 |du|^2 - (z . du)^2), guarded."""
    r2 = np.einsum("ij,ij->i", z, z)
    du2 = np.einsum("ij,ij->i", du, du)
    zdu = np.einsum("ij,ij->i", z, du)
    safe = np.where(r2 > 0.0, r2, 1.0)
    q = safe ** (gamma / 2.0) * (r2 * du2 - zdu * zdu)
    q = np.where(r2 > 0.0, q, 0.0)
    chi, guarded = _guard_factor(r2, gamma, guard_radius)
    return q * chi, guarded


@dataclass
class DissipationEstimate:
    value: float
    stderr: float
    method: str
    samples: int
    guarded_fraction: float = 0.0


def entropy_dissipation(f: GridDensity, p: PotentialParams,
                        method: str = "montecarlo", samples: int = 10**6,
                        seed: int = 0, derivs: LogDerivatives = None,
                        guard_radius: float = None) -> DissipationEstimate:
    """D(f) = 1/2 iint a(v-w) : (grad log f(v) - grad log f(w))^2 f f.

    Monte Carlo averages over pairs from f (x) f; the grid method is the
    O(M^6) masked double sum retained as an oracle for M <= 16.
    """
    derivs = derivs or log_derivatives(f)
    grid = f.grid
    if guard_radius is None:
        guard_radius = grid.h
    if method == "grid":
        if grid.points_per_axis > 16:
            raise ValueError("grid dissipation is an oracle for M <= 16")
        idx = np.argwhere(derivs.mask)
        nodes = grid.nodes()[derivs.mask]
        u = derivs.grad_log_f[derivs.mask]
        fw = f.values[derivs.mask] * grid.cell_volume
        total = 0.0
        for i in range(len(idx)):
            z = nodes[i] - nodes
            q, _ = _pair_quadratic_form(z, u[i] - u, p.gamma, 0.0)
            total += fw[i] * np.dot(q, fw)
        return DissipationEstimate(0.5 * total, 0.0, "grid", len(idx) ** 2)

    gen = rngmod.stream(seed, rngmod.TAG_MC, 1)
    cells = _draw_cells(f, 2 * samples, gen)
    nodes = f.grid.nodes()
    pos = nodes[cells[:, 0], cells[:, 1], cells[:, 2]]
    v, w = pos[:samples], pos[samples:]
    cv, cw = cells[:samples], cells[samples:]
    uv = derivs.grad_log_f[cv[:, 0], cv[:, 1], cv[:, 2]]
    uw = derivs.grad_log_f[cw[:, 0], cw[:, 1], cw[:, 2]]
    mv = derivs.mask[cv[:, 0], cv[:, 1], cv[:, 2]]
    mw = derivs.mask[cw[:, 0], cw[:, 1], cw[:, 2]]
    ok = mv & mw
    q, guarded = _pair_quadratic_form(v[ok] - w[ok], uv[ok] - uw[ok],
                                      p.gamma, guard_radius)
    vals = np.zeros(samples)
    vals[ok] = 0.5 * q
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples))
    return DissipationEstimate(mean, stderr, "montecarlo", samples,
                               guarded_fraction=guarded / samples)


# --------------------------------------------------------------------------
# duality test function


class SupportError(ValueError):
    """A node outside the density's support mask was requested."""


def _vf_lines(z, ratio_v, grad_v, grad_w, ratio_scalar_v, cbar_v, gamma,
              guard_radius: float = 0.0):
    """Vectorized three-line evaluation of the duality test function.

    z : (..., 3) offsets v - w;  *_v, *_w are fields at the endpoints.
    Line 1: -a(v-w) : (hess f / f (v) - grad log f(v) (x) grad log f(w))
    Line 2: -b(v-w) . (grad log f(v) - grad log f(w))
    Line 3: +abar(v) : hess f / f (v) - cbar(v)   [precontracted]

    A positive guard radius truncates the kernel lines for very soft
    potentials (never the convolution line).
    """
    r2 = np.einsum("...i,...i->...", z, z)
    safe = np.where(r2 > 0.0, r2, 1.0)
    rg = safe ** (gamma / 2.0)
    chi, _ = _guard_factor(np.atleast_1d(r2), gamma, guard_radius)
    rg = rg * chi
    m = ratio_v - grad_v[..., :, None] * grad_w[..., None, :]
    tr = np.einsum("...ii->...", m)
    zmz = np.einsum("...i,...ij,...j->...", z, m, z)
    line1 = -rg * (r2 * tr - zmz)
    line1 = np.where(r2 > 0.0, line1, 0.0)
    zdu = np.einsum("...i,...i->...", z, grad_v - grad_w)
    line2 = 2.0 * rg * zdu
    line2 = np.where(r2 > 0.0, line2, 0.0)
    line3 = ratio_scalar_v - cbar_v
    return line1 + line2 + line3


def duality_test_function(f: GridDensity, derivs: LogDerivatives,
                          fields: ConvolvedFields, v_index, w_index,
                          p: PotentialParams) -> float:
    """The two-variable test function at a pair of grid nodes."""
    vi, wi = tuple(v_index), tuple(w_index)
    if not (derivs.mask[vi] and derivs.mask[wi]):
        raise SupportError("both nodes must lie in the support mask")
    nodes = f.grid.nodes()
    z = nodes[vi] - nodes[wi]
    ratio_scalar = np.einsum("ij,ij->", fields.abar[vi], derivs.hess_f_over_f[vi])
    val = _vf_lines(z, derivs.hess_f_over_f[vi], derivs.grad_log_f[vi],
                    derivs.grad_log_f[wi], ratio_scalar,
                    fields.cbar[vi], p.gamma)
    return float(np.squeeze(val))


def duality_cancellation_residual(f: GridDensity, p: PotentialParams, w_index,
                                  derivs: LogDerivatives = None,
                                  fields: ConvolvedFields = None) -> float:
    """Quadrature of V(., w) against f over the mask; zero in the continuum."""
    derivs = derivs or log_derivatives(f)
    fields = fields if fields is not None else convolve_coefficients(f, p)
    wi = tuple(w_index)
    if not derivs.mask[wi]:
        raise SupportError("w node outside the support mask")
    mask = derivs.mask
    nodes = f.grid.nodes()
    z = nodes[mask] - nodes[wi]
    ratio_scalar = np.einsum("nij,nij->n", fields.abar[mask],
                             derivs.hess_f_over_f[mask])
    vals = _vf_lines(z, derivs.hess_f_over_f[mask], derivs.grad_log_f[mask],
                     derivs.grad_log_f[wi], ratio_scalar,
                     fields.cbar[mask], p.gamma)
    return float((vals * f.values[mask]).sum() * f.grid.cell_volume)


def duality_square_norm(f: GridDensity, p: PotentialParams,
                        method: str = "montecarlo", samples: int = 200_000,
                        seed: int = 0, guard_radius: float = None,
                        derivs: LogDerivatives = None,
                        fields: ConvolvedFields = None):
    """(off-diagonal mean, stderr, diagonal value) of the squared test function.

    Off-diagonal: Monte-Carlo estimate of iint |V(v,w)|^2 f f with the very
    soft near-diagonal guard.  Diagonal: exact grid quadrature of
    int |V(v,v)|^2 f, where only the third line survives (a(0) = b(0) = 0).
    """
    if method != "montecarlo":
        raise ValueError("only the montecarlo method is implemented")
    derivs = derivs or log_derivatives(f)
    fields = fields if fields is not None else convolve_coefficients(f, p)
    grid = f.grid
    if guard_radius is None:
        guard_radius = grid.h
    gen = rngmod.stream(seed, rngmod.TAG_MC, 2)
    cells = _draw_cells(f, 2 * samples, gen)
    nodes = f.grid.nodes()
    pos = nodes[cells[:, 0], cells[:, 1], cells[:, 2]]
    v, w = pos[:samples], pos[samples:]
    cv, cw = cells[:samples], cells[samples:]
    ok = (derivs.mask[cv[:, 0], cv[:, 1], cv[:, 2]]
          & derivs.mask[cw[:, 0], cw[:, 1], cw[:, 2]])
    cv, cw, v, w = cv[ok], cw[ok], v[ok], w[ok]
    ratio_v = derivs.hess_f_over_f[cv[:, 0], cv[:, 1], cv[:, 2]]
    grad_v = derivs.grad_log_f[cv[:, 0], cv[:, 1], cv[:, 2]]
    grad_w = derivs.grad_log_f[cw[:, 0], cw[:, 1], cw[:, 2]]
    abar_v = fields.abar[cv[:, 0], cv[:, 1], cv[:, 2]]
    cbar_v = fields.cbar[cv[:, 0], cv[:, 1], cv[:, 2]]
    ratio_scalar = np.einsum("nij,nij->n", abar_v, ratio_v)
    vf = _vf_lines(v - w, ratio_v, grad_v, grad_w, ratio_scalar, cbar_v,
                   p.gamma, guard_radius=guard_radius)
    sq = np.zeros(samples)
    sq[ok] = vf * vf
    off_mean = float(sq.mean())
    off_err = float(sq.std(ddof=1) / math.sqrt(samples))

    diag_field = np.einsum("...ij,...ij->...", fields.abar,
                           derivs.hess_f_over_f) - fields.cbar
    diag_sq = np.where(derivs.mask, diag_field**2 * f.values, 0.0)
    diag = float(diag_sq.sum() * grid.cell_volume)
    return off_mean, off_err, diag


# --------------------------------------------------------------------------
# Fokker-Planck inequalities


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    params: dict = field(default_factory=dict)
    density_label: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def valid(self) -> bool:
        return bool(np.isfinite(self.lhs) and np.isfinite(self.rhs))


def fokker_planck_check(f: GridDensity, theta: float, lam: float = 0.0,
                        derivs: LogDerivatives = None, label: str = ""):
    """Both weighted Fokker-Planck inequalities as an InequalityReport pair.

    quartic:  int <v>^t |grad log f|^4 f
                <= 24 int <v>^t |hess log f|^2 f + 16 t^4 ||f||_{L1_{t-4}}
    quadratic: int <v>^t |grad log f|^2 f
                <= 6 int <v>^{t-l} |hess log f|^2 f + (1 + 4 t^4) ||f||_{L1_{t+l}}
    """
    derivs = derivs or log_derivatives(f)
    lhs4 = weighted_gradient_fourth(f, theta, derivs)
    rhs4 = (24.0 * second_order_fisher(f, theta, derivs)
            + 16.0 * theta**4 * moment_L1(f, theta - 4.0))
    rep4 = InequalityReport("weighted_second_order_fisher", lhs4, rhs4,
                            {"theta": theta}, label)
    lhs2 = weighted_fisher(f, theta, derivs)
    rhs2 = (6.0 * second_order_fisher(f, theta - lam, derivs)
            + (1.0 + 4.0 * theta**4) * moment_L1(f, theta + lam))
    rep2 = InequalityReport("weighted_fisher", lhs2, rhs2,
                            {"theta": theta, "lambda": lam}, label)
    return rep4, rep2


def _masked_hessian_sq(f: GridDensity, values: np.ndarray,
                       derivs: LogDerivatives) -> np.ndarray:
    """|hess g|_F^2 by central differences of g = values, on the mask."""
    h = f.grid.h
    m = values.shape[0]
    out = np.zeros_like(values)
    inner = (slice(1, -1),) * 3

    def sh(ax, off, bx=None, ob=0):
        s = [slice(1, -1)] * 3
        s[ax] = slice(1 + off, m - 1 + off)
        if bx is not None:
            s[bx] = slice(1 + ob, m - 1 + ob)
        return tuple(s)

    for ax in range(3):
        d2 = (values[sh(ax, 1)] - 2.0 * values[inner] + values[sh(ax, -1)]) / h**2
        out[inner] += d2 * d2
    for ax in range(3):
        for bx in range(ax + 1, 3):
            mixed = (values[sh(ax, 1, bx, 1)] - values[sh(ax, 1, bx, -1)]
                     - values[sh(ax, -1, bx, 1)] + values[sh(ax, -1, bx, -1)]
                     ) / (4.0 * h**2)
            out[inner] += 2.0 * mixed * mixed
    out[~derivs.mask] = 0.0
    return out


def hessian_comparison_check(f: GridDensity, derivs: LogDerivatives = None,
                             label: str = ""):
    """The two square-root/ratio corollaries of the quartic inequality:

    int |hess sqrt(f)|^2 <= 4 int |hess log f|^2 f,
    int |hess f|^2 / f  <= 50 int |hess log f|^2 f.

    The left sides are independent finite differences of sqrt(f) and f.
    """
    derivs = derivs or log_derivatives(f)
    w = f.grid.cell_volume
    j2 = second_order_fisher(f, 0.0, derivs)
    hs = _masked_hessian_sq(f, np.sqrt(f.values), derivs)
    lhs_sqrt = float(hs.sum() * w)
    hf = _masked_hessian_sq(f, f.values, derivs)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(derivs.mask, hf / np.maximum(f.values, 1e-300), 0.0)
    lhs_ratio = float(ratio.sum() * w)
    return (
        InequalityReport("hessian_sqrt", lhs_sqrt, 4.0 * j2, {}, label),
        InequalityReport("hessian_ratio", lhs_ratio, 50.0 * j2, {}, label),
    )


# --------------------------------------------------------------------------
# time derivative of the weighted Fisher information


def _field_gradient(arr: np.ndarray, h: float) -> np.ndarray:
    """np.gradient over the three leading axes, stacked on a new first axis."""
    return np.stack([np.gradient(arr, h, axis=ax) for ax in range(3)])


@dataclass
class FisherDerivativeReport:
    theta: float
    lhs: float              # centered finite difference of I_phi
    rhs: float              # seven-term quadrature
    terms: tuple
    mismatch: float         # |lhs - rhs| / max(|lhs|, |rhs|)
    skipped: bool = False
    reason: str = ""


def weighted_fisher_derivative_check(run, theta: float,
                                     index: int = None) -> FisherDerivativeReport:
    """Compare d/dt of I_phi along a stored run against the production-term
    quadrature (phi = <v>^theta).

    ``run`` must hold at least three checkpoints with uniform spacing around
    the tested index (default: the middle one).  Very soft potentials are
    skipped: the gradient of abar is too singular for the grid.
    """
    p = run.potential
    if p.gamma < -2.0:
        return FisherDerivativeReport(theta, np.nan, np.nan, (), np.nan,
                                      skipped=True,
                                      reason="gamma < -2: grad(abar) too singular")
    if len(run.times) < 3:
        raise ValueError("need at least three checkpoints")
    i = len(run.times) // 2 if index is None else index
    t0, t1, t2 = run.times[i - 1], run.times[i], run.times[i + 1]
    if abs((t2 - t1) - (t1 - t0)) > 1e-9 * max(t2 - t0, 1e-30):
        raise ValueError("checkpoints around the test index must be uniform")
    dt = t2 - t1
    f_prev, f_mid, f_next = run.densities[i - 1], run.densities[i], run.densities[i + 1]

    lhs = (weighted_fisher(f_next, theta) - weighted_fisher(f_prev, theta)) / (2 * dt)

    derivs = log_derivatives(f_mid)
    fields = convolve_coefficients(f_mid, p)
    grid = f_mid.grid
    h = grid.h
    w = grid.cell_volume
    fm = np.where(derivs.mask, f_mid.values, 0.0)
    u = derivs.grad_log_f
    hess = derivs.hess_log_f
    br2 = 1.0 + grid.radius2()
    phi = br2 ** (0.5 * theta)
    nodes = grid.nodes()
    gphi = theta * br2[..., None] ** (0.5 * theta - 1.0) * nodes
    eye = np.eye(3)
    g2phi = (theta * br2[..., None, None] ** (0.5 * theta - 1.0) * eye
             + theta * (theta - 2.0)
             * br2[..., None, None] ** (0.5 * theta - 2.0)
             * nodes[..., :, None] * nodes[..., None, :])

    da = _field_gradient(fields.abar, h)      # (3, M, M, M, 3, 3): d_j abar_ik
    db = _field_gradient(fields.bbar, h)      # (3, M, M, M, 3)
    dc = _field_gradient(fields.cbar, h)      # (3, M, M, M)

    u2 = np.einsum("...i,...i->...", u, u)
    t1_ = -2.0 * float(np.einsum("xyzij,xyzik,xyzkj,xyz,xyz->",
                                 hess, fields.abar, hess, fm, phi)) * w
    t2_ = -2.0 * float(np.einsum("xyzi,jxyzik,xyzk,xyzj,xyz->",
                                 u, da, u, gphi, fm)) * w
    t3_ = float(np.einsum("xyz,xyzij,xyzij,xyz->", u2, fields.abar, g2phi, fm)) * w
    t4_ = 2.0 * float(np.einsum("xyz,xyzi,xyzi,xyz->", u2, fields.bbar, gphi, fm)) * w
    t5_ = -2.0 * float(np.einsum("xyzij,jxyzik,xyzk,xyz,xyz->",
                                 hess, da, u, fm, phi)) * w
    t6_ = -2.0 * float(np.einsum("xyzi,jxyzi,xyzj,xyz,xyz->",
                                 u, db, u, fm, phi)) * w
    t7_ = -2.0 * float(np.einsum("xyzi,ixyz,xyz,xyz->", u, dc, fm, phi)) * w
    terms = (t1_, t2_, t3_, t4_, t5_, t6_, t7_)
    rhs = sum(terms)
    mismatch = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    return FisherDerivativeReport(theta, lhs, rhs, terms, mismatch)


# --------------------------------------------------------------------------
# Wasserstein-2 between samples


def wasserstein2_samples(x: np.ndarray, y: np.ndarray, method: str = "exact",
                         directions: int = 64, seed: int = 0) -> float:
    """W2 between two equally weighted point clouds.

    exact: square root of the optimal assignment mean squared cost
    (sizes must match, n <= 2048).  sliced: average over random directions
    of the squared 1D quantile distance, square-rooted.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if method == "exact":
        if len(x) != len(y):
            raise ValueError("exact method needs equally many samples")
        if len(x) > 2048:
            raise ValueError("exact method capped at n = 2048; use sliced")
        dx = x[:, None, :] - y[None, :, :]
        cost = np.einsum("ijk,ijk->ij", dx, dx)
        rows, cols = linear_sum_assignment(cost)
        return float(np.sqrt(cost[rows, cols].mean()))
    if method != "sliced":
        raise ValueError(f"unknown method {method!r}")
    if directions < 16:
        warnings.warn("fewer than 16 slicing directions is noisy", RuntimeWarning)
    gen = rngmod.stream(seed, rngmod.TAG_SLICED)
    dirs = gen.standard_normal((directions, x.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    px = x @ dirs.T
    py = y @ dirs.T
    if len(x) == len(y):
        qx = np.sort(px, axis=0)
        qy = np.sort(py, axis=0)
    else:
        k = max(len(x), len(y))
        q = (np.arange(k) + 0.5) / k
        qx = np.quantile(px, q, axis=0)
        qy = np.quantile(py, q, axis=0)
    return float(np.sqrt(np.mean((qx - qy) ** 2)))
