import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from landaulab import cumulants as cu


def test_subsets_examples():
    assert cu.subsets(3, 2) == [(0, 1), (0, 2), (1, 2)]
    assert cu.subsets(5, 0) == [()]
    assert len(cu.subsets(10, 4)) == 210
    with pytest.raises(ValueError):
        cu.subsets(25, 2)


def exact_family(arity, alphabet, seed):
    gen = np.random.default_rng(seed)
    top = cu.random_dual_tabulation(arity, alphabet, gen, exact=True)
    return cu.marginals_from_function(top)


def test_constant_function_has_trivial_cumulants():
    w = (Fraction(1, 4),) * 4
    top = cu.SymmetricTabulation.from_function(3, 4, w, lambda key: Fraction(7, 2))
    margs = cu.marginals_from_function(top)
    cums = cu.cumulants_from_marginals(margs)
    assert cums[0].table[()] == Fraction(7, 2)
    for n in range(1, 4):
        assert all(v == 0 for v in cums[n].table.values())


def test_first_cumulant_formula():
    margs = exact_family(3, 3, seed=5)
    cums = cu.cumulants_from_marginals(margs)
    for a in range(3):
        assert cums[1].table[(a,)] == margs[1].table[(a,)] - margs[0].table[()]


@pytest.mark.parametrize("arity,alphabet,seed", [(4, 3, 0), (5, 4, 1), (6, 3, 2)])
def test_zero_mean_and_roundtrip_exact(arity, alphabet, seed):
    margs = exact_family(arity, alphabet, seed)
    cums = cu.cumulants_from_marginals(margs)
    # zero weight-expectation in the last slot (symmetry covers the rest)
    for n in range(1, arity + 1):
        for prefix in itertools.combinations_with_replacement(
                range(alphabet), n - 1):
            assert cums[n].expectation_last_slot(prefix) == 0
    back = cu.marginals_from_cumulants(cums)
    for n in range(arity + 1):
        assert back[n].table == margs[n].table


def test_inconsistent_marginals_rejected():
    w = (0.5, 0.5)
    m0 = cu.SymmetricTabulation.from_function(0, 2, w, lambda k: 1.0)
    m1 = cu.SymmetricTabulation.from_function(1, 2, w, lambda k: float(k[0]))
    with pytest.raises(ValueError, match="inconsistent"):
        cu.cumulants_from_marginals([m0, m1])


@pytest.mark.parametrize("N", [4, 5, 6])
def test_orthogonality_expansion(N):
    # ||Phi||^2 under the product weight equals the binomially weighted sum
    # of cumulant square norms: all cross terms vanish
    gen = np.random.default_rng(100 + N)
    top = cu.random_dual_tabulation(N, 3, gen, exact=True)
    margs = cu.marginals_from_function(top)
    cums = cu.cumulants_from_marginals(margs)
    lhs = top.weighted_square_norm()
    rhs = sum(math.comb(N, n) * cums[n].weighted_square_norm()
              for n in range(N + 1))
    assert lhs == rhs


def test_u_statistic_small_examples():
    assert cu.u_statistic([1.0, 2.0, 3.0, 4.0], 1) == pytest.approx(2.5)
    assert cu.u_statistic([1.0, 2.0, 3.0, 4.0], 4) == pytest.approx(24.0)
    assert cu.u_statistic([1.0, 2.0, 3.0, 4.0], 2) == pytest.approx(35.0 / 6.0)
    with pytest.raises(ValueError):
        cu.u_statistic([1.0, 2.0], 3)


def test_u_statistic_matches_bruteforce():
    gen = np.random.default_rng(3)
    for n, k in [(6, 2), (9, 3), (12, 5)]:
        x = gen.standard_normal(n)
        assert cu.u_statistic(x, k) == pytest.approx(
            cu.u_statistic_bruteforce(x, k), rel=1e-12)


def test_u_statistic_homogeneity():
    gen = np.random.default_rng(4)
    x = gen.standard_normal(40)
    for k in (1, 2, 3):
        assert cu.u_statistic(3.0 * x, k) == pytest.approx(
            3.0**k * cu.u_statistic(x, k), rel=1e-12)


def test_final_data_cases():
    m = Fraction(1, 2)
    assert cu.cumulant_final_data(5, 2, 3, m, [m] * 3) == 0  # n > k
    assert cu.cumulant_final_data(5, 3, 0, m, []) == m**3
    val = cu.cumulant_final_data(5, 2, 1, Fraction(1, 2), [Fraction(4, 5)])
    assert val == Fraction(3, 50)  # = 0.06
    assert float(val) == pytest.approx(0.06)


@pytest.mark.parametrize("N,k", [(5, 2), (8, 3), (6, 1)])
def test_final_data_matches_bruteforce(N, k):
    gen = np.random.default_rng(10 * N + k)
    m = Fraction(int(gen.integers(1, 9)), 10)
    for n in range(0, min(N, 8) + 1):
        phis = [Fraction(int(gen.integers(-9, 9)), 7) for _ in range(n)]
        closed = cu.cumulant_final_data(N, k, n, m, phis)
        brute = cu.cumulant_final_data_bruteforce(N, k, n, m, phis)
        assert closed == brute


def test_combinatorial_identities_plain():
    assert cu.alternating_identity(4, 3, 1) == 1
    assert cu.alternating_identity(4, 2, 1) == 0
    for n in range(0, 13):
        for m in range(0, n + 1):
            for l in range(0, n - m + 1):
                assert cu.combinatorial_identity_check(n, l, m)


@pytest.mark.parametrize("N", [5, 9, 17])
def test_combinatorial_identities_weighted(N):
    assert cu.alternating_identity(4, 2, 1, weight="linear", N=7) == Fraction(-1, 7)
    for n in range(0, 13):
        for m in range(0, n + 1):
            for l in range(0, n - m + 1):
                assert cu.combinatorial_identity_check(n, l, m, weight="linear", N=N)
    for n in range(0, 13):
        for l in range(0, n + 1):
            assert cu.combinatorial_identity_check(n, l, 0, weight="quadratic", N=N)
            assert cu.combinatorial_identity_check(n, l, 0, weight="crossed", N=N)
