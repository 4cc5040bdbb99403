"""Cluster-expansion combinatorics and the chaos-gap estimator.

The transform pair between weighted marginals M_n and correlation
(cumulant) functions C_n,

    C_n(x[1..n]) = sum_{m<=n} (-1)^(n-m) sum_{S in P_m^n} M_m(x^S),
    M_n(x[1..n]) = sum_{m<=n}            sum_{S in P_m^n} C_m(x^S),

is linear-algebraic and independent of the underlying space, so it is
exercised exactly on symmetric tabulations over a finite alphabet with a
probability weight standing in for the density.  Rational arithmetic
(Fraction entries) makes the identity tests exact.

The chaos gap compares the replica average of the k-th order U-statistic
of a test observable against the k-th power of its value under the limit
density, which is what the duality pairing equates it to.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import functionals
from .grid import GridDensity

__all__ = [
    "subsets",
    "SymmetricTabulation",
    "random_dual_tabulation",
    "marginals_from_function",
    "cumulants_from_marginals",
    "marginals_from_cumulants",
    "u_statistic",
    "cumulant_final_data",
    "alternating_identity",
    "combinatorial_identity_check",
    "ChaosReport",
    "chaos_gap",
    "TEST_OBSERVABLES",
]


def subsets(n: int, m: int):
    """Lexicographic enumeration of the m-element subsets of {0..n-1}."""
    if not (0 <= m <= n <= 20):
        raise ValueError("subsets requires 0 <= m <= n <= 20")
    return list(itertools.combinations(range(n), m))


@dataclass
class SymmetricTabulation:
    """Exchangeable function of ``arity`` variables over {0..alphabet-1}.

    Values are stored once per sorted multi-index; the weight vector is the
    probability standing in for the underlying density.  Entries may be
    floats or Fractions (exact mode).
    """

    arity: int
    alphabet: int
    weight: tuple
    table: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arity < 0 or self.alphabet < 1:
            raise ValueError("arity must be >= 0 and alphabet >= 1")
        total = sum(self.weight)
        if abs(float(total) - 1.0) > 1e-12:
            raise ValueError("weight must sum to 1")

    def __call__(self, idx):
        key = tuple(sorted(idx))
        if len(key) != self.arity:
            raise ValueError(f"expected {self.arity} arguments, got {len(key)}")
        return self.table[key]

    def keys(self):
        return itertools.combinations_with_replacement(range(self.alphabet),
                                                       self.arity)

    @classmethod
    def from_function(cls, arity, alphabet, weight, fn):
        tab = cls(arity, alphabet, tuple(weight))
        for key in tab.keys():
            tab.table[key] = fn(key)
        return tab

    def expectation_last_slot(self, prefix):
        """sum_a weight[a] * value(prefix + (a,))."""
        return sum(w * self((*prefix, a))
                   for a, w in enumerate(self.weight))

    def weighted_square_norm(self):
        """sum over full index space of weight^(x)arity * value^2."""
        total = 0
        for idx in itertools.product(range(self.alphabet), repeat=self.arity):
            w = math.prod((self.weight[i] for i in idx), start=Fraction(1)) \
                if isinstance(self.weight[0], Fraction) else \
                math.prod(self.weight[i] for i in idx)
            total += w * self(idx) ** 2
        return total


def random_dual_tabulation(arity, alphabet, gen, exact=True):
    """Random symmetric function of top arity plus a random weight vector.

    Marginalizing it against the weight produces a consistent marginal
    family, mirroring how weighted marginals arise from one symmetric dual
    solution.
    """
    raw = gen.integers(1, 20, size=alphabet)
    if exact:
        weight = tuple(Fraction(int(x), int(raw.sum())) for x in raw)
        rand = lambda: Fraction(int(gen.integers(-50, 50)), int(gen.integers(1, 9)))
    else:
        weight = tuple(float(x) / float(raw.sum()) for x in raw)
        rand = lambda: float(gen.standard_normal())
    top = SymmetricTabulation.from_function(arity, alphabet, weight,
                                            lambda key: rand())
    return top


def marginals_from_function(top: SymmetricTabulation):
    """Weighted marginals M_0..M_n of a symmetric function of n variables.

    M_m integrates out the last n - m variables against the weight.
    """
    out = [top]
    cur = top
    for m in range(top.arity - 1, -1, -1):
        nxt = SymmetricTabulation(m, top.alphabet, cur.weight)
        for key in nxt.keys():
            nxt.table[key] = cur.expectation_last_slot(key)
        out.append(nxt)
        cur = nxt
    out.reverse()
    return out


def _check_consistency(marginals, tol=1e-12):
    for m in range(len(marginals) - 1):
        lo, hi = marginals[m], marginals[m + 1]
        for key in lo.keys():
            diff = hi.expectation_last_slot(key) - lo(key)
            if abs(float(diff)) > tol:
                raise ValueError(
                    f"inconsistent marginal family at arity {m + 1}: "
                    f"residual {float(diff):.2e}")


def cumulants_from_marginals(marginals, check=True):
    """Alternating-sum transform; output C_n has zero weight-expectation in
    every slot.  ``marginals`` is the list [M_0, ..., M_n]."""
    if check:
        _check_consistency(marginals)
    out = []
    for n, mn in enumerate(marginals):
        cn = SymmetricTabulation(n, mn.alphabet, mn.weight)
        for key in cn.keys():
            acc = 0
            for m in range(n + 1):
                sign = (-1) ** (n - m)
                for sigma in subsets(n, m):
                    sub = tuple(key[i] for i in sigma)
                    acc += sign * marginals[m](sub)
            cn.table[key] = acc
        out.append(cn)
    return out


def marginals_from_cumulants(cumulants):
    """Inverse transform (no signs); exact round trip with the above."""
    out = []
    for n, cn in enumerate(cumulants):
        mn = SymmetricTabulation(n, cn.alphabet, cn.weight)
        for key in mn.keys():
            acc = 0
            for m in range(n + 1):
                for sigma in subsets(n, m):
                    sub = tuple(key[i] for i in sigma)
                    acc += cumulants[m](sub)
            mn.table[key] = acc
        out.append(mn)
    return out


def u_statistic(values, k: int) -> float:
    """Mean of the products over all k-subsets, via the elementary
    symmetric polynomial recurrence (O(N k))."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={n}")
    e = np.zeros(k + 1)
    e[0] = 1.0
    for x in values:
        e[1:k + 1] = e[1:k + 1] + x * e[0:k]
    return float(e[k] / math.comb(n, k))


def u_statistic_bruteforce(values, k: int) -> float:
    values = list(values)
    n = len(values)
    total = sum(math.prod(values[i] for i in sigma)
                for sigma in itertools.combinations(range(n), k))
    return total / math.comb(n, k)


def cumulant_final_data(N: int, k: int, n: int, phi_moment, phi_values):
    """Closed form of the n-th correlation function at the final time.

    (C_N^n)^{-1} C_k^n  sum_{l<=n} (-1)^{n+l} sum_{tau in P_l^n}
        phi_moment^{k-l} prod_{i in tau} phi_values[i],
    and 0 for n > k.  Exact when fed Fractions.
    """
    if not (N >= k >= 0 and n >= 0):
        raise ValueError("need N >= k >= 0 and n >= 0")
    if n > k:
        return 0 * phi_moment
    phi_values = list(phi_values)
    if len(phi_values) != n:
        raise ValueError(f"need {n} observable values, got {len(phi_values)}")
    acc = 0
    for l in range(n + 1):
        sign = (-1) ** (n + l)
        for tau in subsets(n, l):
            prod = phi_moment ** (k - l)
            for i in tau:
                prod = prod * phi_values[i]
            acc += sign * prod
    return acc * math.comb(k, n) / math.comb(N, n) if not isinstance(acc, Fraction) \
        else acc * Fraction(math.comb(k, n), math.comb(N, n))


def final_marginal(N: int, k: int, m: int, phi_moment, phi_values):
    """Final-time weighted marginal of the k-th order U-statistic:

    M_m = (C_N^k)^{-1} sum_{l <= min(k, m)} phi_moment^{k-l} C_{N-m}^{k-l}
              sum_{sigma in P_l^m} prod phi_values[sigma].
    """
    phi_values = list(phi_values)
    acc = 0
    for l in range(min(k, m) + 1):
        coeff = math.comb(N - m, k - l)
        inner = 0
        for sigma in subsets(m, l):
            prod = phi_moment ** (k - l)
            for i in sigma:
                prod = prod * phi_values[i]
            inner += prod
        acc += coeff * inner
    if isinstance(acc, Fraction):
        return acc * Fraction(1, math.comb(N, k))
    return acc / math.comb(N, k)


def cumulant_final_data_bruteforce(N, k, n, phi_moment, phi_values):
    """Alternating sum of the exact final marginals (oracle)."""
    phi_values = list(phi_values)
    acc = 0
    for m in range(n + 1):
        sign = (-1) ** (n - m)
        for sigma in subsets(n, m):
            sub = [phi_values[i] for i in sigma]
            acc += sign * final_marginal(N, k, m, phi_moment, sub)
    return acc


# --------------------------------------------------------------------------
# the alternating binomial identities behind the hierarchy bookkeeping


def alternating_identity(n: int, l: int, m: int, weight=None, N: int = None):
    """sum_{j=l}^n (-1)^{n-j} weight(j) C(n-l-m, n-j) in exact arithmetic.

    weight=None is the plain family; otherwise one of "linear"
    ((N-j)/N), "quadratic" ((N-j)(N-j-1)/N), "crossed" ((j+1)(N-j)/N),
    the three weighted families appearing in the hierarchy reduction
    (the latter two arise with m = 0).
    """
    if not (0 <= l and 0 <= m and l + m <= n <= 20):
        raise ValueError("need 0 <= l, 0 <= m, l + m <= n <= 20")
    total = Fraction(0)
    for j in range(l, n + 1):
        cnt = math.comb(n - l - m, n - j) if 0 <= n - j <= n - l - m else 0
        if cnt == 0:
            continue
        if weight is None:
            w = Fraction(1)
        elif weight == "linear":
            w = Fraction(N - j, N)
        elif weight == "quadratic":
            w = Fraction((N - j) * (N - j - 1), N)
        elif weight == "crossed":
            w = Fraction((j + 1) * (N - j), N)
        else:
            raise ValueError(f"unknown weight {weight!r}")
        total += (-1) ** (n - j) * w * cnt
    return total


def _expected_identity(n, l, m, weight, N):
    if weight is None:
        return Fraction(1) if l == n - m else Fraction(0)
    if weight == "linear":
        if l == n - m:
            return Fraction(N - n, N)
        if l == n - m - 1:
            return Fraction(-1, N)
        return Fraction(0)
    if weight == "quadratic":  # m = 0 family
        if l == n:
            return Fraction((N - n) * (N - n - 1), N)
        if l == n - 1:
            return Fraction(-2 * (N - n), N)
        if l == n - 2:
            return Fraction(2, N)
        return Fraction(0)
    if weight == "crossed":    # m = 0 family
        if l == n:
            return Fraction((n + 1) * (N - n), N)
        if l == n - 1:
            return Fraction(N - 2 * n, N)
        if l == n - 2:
            return Fraction(-2, N)
        return Fraction(0)
    raise ValueError(weight)


def combinatorial_identity_check(n: int, l: int, m: int, weight=None,
                                 N: int = None) -> bool:
    """Exact comparison of the alternating sum against its case values."""
    got = alternating_identity(n, l, m, weight=weight, N=N)
    want = _expected_identity(n, l, m, weight, N)
    return got == want


# --------------------------------------------------------------------------
# chaos gap


TEST_OBSERVABLES = {
    "gauss": lambda v: np.exp(-0.5 * np.einsum("...i,...i->...", v, v)),
    "coswave": lambda v: np.cos(v[..., 0]) * np.exp(
        -0.25 * np.einsum("...i,...i->...", v, v)),
}


@dataclass
class ChaosReport:
    N: int
    k: int
    phi_label: str
    t: float
    u_stat_mean: float
    reference: float
    gap: float
    stderr: float
    w2: float
    replicas: int

    def row(self):
        return {"N": self.N, "R": self.replicas, "k": self.k, "t": self.t,
                "phi_label": self.phi_label, "u_stat_mean": self.u_stat_mean,
                "reference": self.reference, "gap": self.gap,
                "stderr": self.stderr, "w2": self.w2}


def observable_reference(f_t: GridDensity, phi) -> float:
    """Grid quadrature of the observable against the limit density."""
    vals = phi(f_t.grid.nodes())
    return float((vals * f_t.values).sum() * f_t.grid.cell_volume)


def chaos_gap(velocities: np.ndarray, t: float, f_t: GridDensity, phi,
              k: int, phi_label: str = "phi", w2_seed: int = 0,
              reference_sampler=None, w2_cap: int = 2048) -> ChaosReport:
    """Gap between the replica-averaged U-statistic and the tensorized
    reference, plus the pooled-marginal Wasserstein-2 distance.

    ``velocities``: (R, N, 3) ensemble snapshot at time t with R >= 30.
    ``reference_sampler``: callable (count, seed) -> samples from f_t; by
    default rejection sampling off the grid density.
    """
    v = np.asarray(velocities, dtype=float)
    if v.ndim != 3 or v.shape[2] != 3:
        raise ValueError("velocities must have shape (R, N, 3)")
    replicas, n = v.shape[0], v.shape[1]
    if replicas < 30:
        raise ValueError("need at least 30 replicas for a powered estimate")
    stats = np.array([u_statistic(phi(v[r]), k) for r in range(replicas)])
    mean = float(stats.mean())
    stderr = float(stats.std(ddof=1) / math.sqrt(replicas))
    reference = observable_reference(f_t, phi) ** k
    gap = abs(mean - reference)

    pooled = v.reshape(-1, 3)
    if reference_sampler is None:
        from . import rng as rngmod
        from .sampling import sample_grid_density
        def reference_sampler(count, seed):
            gen = rngmod.stream(seed, rngmod.TAG_SAMPLER, 99)
            return sample_grid_density(f_t, count, gen)[0]
    if len(pooled) <= w2_cap:
        ref = reference_sampler(len(pooled), w2_seed)
        w2 = functionals.wasserstein2_samples(pooled, ref, method="exact")
    else:
        ref = reference_sampler(len(pooled), w2_seed)
        w2 = functionals.wasserstein2_samples(pooled, ref, method="sliced",
                                              seed=w2_seed)
    return ChaosReport(N=n, k=k, phi_label=phi_label, t=t, u_stat_mean=mean,
                       reference=reference, gap=gap, stderr=stderr, w2=w2,
                       replicas=replicas)
