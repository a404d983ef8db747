import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macstate.probcore import (
    EntropyCache,
    JointPMF,
    ProbError,
    binary_convolution,
    binary_entropy,
    entropy,
    is_strongly_typical,
    marginalize,
    mutual_information,
    type_counts,
    typical_mask,
)

from conftest import random_joint


def brute_mi(p, a, b, c):
    """I(A;B|C) by explicit summation over all cells (independent of the library)."""
    axes = list(range(p.ndim))
    def marg(keep):
        drop = tuple(i for i in axes if i not in keep)
        return p.sum(axis=drop, keepdims=True) if drop else p
    pabc, pac, pbc = marg(a + b + c), marg(a + c), marg(b + c)
    pc = marg(c) if c else np.ones([1] * p.ndim)
    total = 0.0
    for idx in itertools.product(*(range(n) for n in p.shape)):
        def at(m):
            return m[tuple(i if m.shape[k] > 1 else 0 for k, i in enumerate(idx))]
        pj = at(pabc)
        if pj <= 0:
            continue
        total += p[idx] * math.log2(pj * at(pc) / (at(pac) * at(pbc)))
    return total


def pmf(probs, names=None):
    names = names or tuple("ABCD"[: np.ndim(probs)])
    return JointPMF.from_array(names, probs)


joints = st.builds(
    lambda seed, shape: random_joint(np.random.default_rng(seed), shape, alpha=0.5),
    st.integers(0, 2 ** 32 - 1),
    st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)),
)


class TestJointPMF:
    def test_rejects_bad_tables(self):
        with pytest.raises(ProbError):
            pmf(np.array([0.5, 0.6]))
        with pytest.raises(ProbError):
            pmf(np.array([1.5, -0.5]))
        with pytest.raises(ProbError):
            JointPMF((("A", 2), ("A", 2)), np.full((2, 2), 0.25))
        with pytest.raises(ProbError):
            JointPMF((("A", 3),), np.full(2, 0.5))

    def test_marginal_order_follows_request(self, rng):
        p = random_joint(rng, (2, 3, 4))
        j = pmf(p)
        np.testing.assert_allclose(j.marginal_array(("C", "A")), p.sum(axis=1).T)
        m = marginalize(j, ("B",))
        assert m.names == ("B",)
        np.testing.assert_allclose(m.probs, p.sum(axis=(0, 2)))

    def test_unknown_axis(self, rng):
        j = pmf(random_joint(rng, (2, 2)))
        with pytest.raises(ProbError):
            entropy(j, "Z")


class TestEntropy:
    def test_uniform(self):
        assert entropy(pmf(np.full(8, 1 / 8)), "A") == pytest.approx(3.0, abs=1e-15)

    def test_deterministic_is_zero(self):
        p = np.zeros((3, 3))
        p[1, 2] = 1.0
        assert entropy(pmf(p), ("A", "B")) == 0.0

    def test_matches_explicit_sum(self, rng):
        p = random_joint(rng, (3, 4))
        expected = -sum(x * math.log2(x) for x in p.ravel() if x > 0)
        assert entropy(pmf(p), ("A", "B")) == pytest.approx(expected, abs=1e-12)


class TestMutualInformation:
    @pytest.mark.parametrize("groups", [((0,), (1,), ()), ((0,), (1,), (2,)),
                                        ((0, 2), (1,), ()), ((1,), (2,), (0,))])
    def test_against_brute_force(self, rng, groups):
        a, b, c = groups
        for _ in range(5):
            p = random_joint(rng, (2, 3, 2), alpha=0.7)
            names = "ABC"
            got = mutual_information(pmf(p), [names[i] for i in a], [names[i] for i in b],
                                     [names[i] for i in c])
            assert got == pytest.approx(brute_mi(p, list(a), list(b), list(c)), abs=1e-12)

    def test_independent_is_zero(self, rng):
        p = np.einsum("i,j->ij", rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4)))
        assert mutual_information(pmf(p / p.sum()), "A", "B") == pytest.approx(0.0, abs=1e-12)

    def test_copy_gives_entropy(self, rng):
        q = rng.dirichlet(np.ones(4))
        p = np.diag(q)
        j = pmf(p)
        assert mutual_information(j, "A", "B") == pytest.approx(entropy(j, "A"), abs=1e-12)

    def test_overlap_rejected(self, rng):
        j = pmf(random_joint(rng, (2, 2, 2)))
        with pytest.raises(ProbError):
            mutual_information(j, ("A", "B"), "B")
        with pytest.raises(ProbError):
            mutual_information(j, "A", "B", "A")

    @settings(max_examples=60, deadline=None)
    @given(joints)
    def test_nonnegative_and_symmetric(self, p):
        j = pmf(p)
        ab = mutual_information(j, "A", "B", "C")
        assert ab >= 0
        assert ab == pytest.approx(mutual_information(j, "B", "A", "C"), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(joints)
    def test_chain_rule(self, p):
        j = pmf(p)
        lhs = mutual_information(j, "A", ("B", "C"))
        rhs = mutual_information(j, "A", "B") + mutual_information(j, "A", "C", "B")
        assert lhs == pytest.approx(rhs, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_data_processing(self, seed):
        r = np.random.default_rng(seed)
        pa = r.dirichlet(np.ones(3))
        b_a = r.dirichlet(np.ones(3), size=3)
        c_b = r.dirichlet(np.ones(2), size=3)
        p = np.einsum("a,ab,bc->abc", pa, b_a, c_b)
        j = pmf(p / p.sum())
        assert mutual_information(j, "A", "C") <= mutual_information(j, "A", "B") + 1e-12


class TestEntropyCache:
    def test_matches_named_path(self, rng):
        p = random_joint(rng, (2, 3, 2))
        cache = EntropyCache(p)
        j = pmf(p)
        assert cache.mi([0], [1], [2]) == pytest.approx(mutual_information(j, "A", "B", "C"), abs=1e-12)
        assert cache.h([0, 2]) == pytest.approx(entropy(j, ("A", "C")), abs=1e-12)
        assert cache.h([]) == 0.0


class TestBinary:
    def test_values(self):
        assert binary_entropy(0.5) == 1.0
        assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
        assert binary_entropy(0.1) == pytest.approx(0.4689955935892812, abs=1e-15)
        assert binary_convolution(0.1, 0.2) == pytest.approx(0.26)
        assert binary_convolution(0.3, 0.5) == pytest.approx(0.5)

    def test_range_checked(self):
        with pytest.raises(ProbError):
            binary_entropy(1.5)
        with pytest.raises(ProbError):
            binary_convolution(-0.1, 0.2)


class TestTypicality:
    def test_exact_type_is_typical(self):
        ref = pmf(np.array([0.25, 0.75]))
        assert is_strongly_typical([0, 1, 1, 1], ref, 0.01)
        assert not is_strongly_typical([0, 0, 1, 1], ref, 0.2)

    def test_boundary_frequency_counts(self):
        # 3/8 vs 0.5 is exactly 0.125 away
        ref = pmf(np.array([0.5, 0.5]))
        assert is_strongly_typical([0, 0, 0, 1, 1, 1, 1, 1], ref, 0.125)

    def test_zero_probability_symbol_rejected(self):
        p = np.array([[0.5, 0.0], [0.0, 0.5]])
        ref = pmf(p)
        assert not is_strongly_typical([(0, 0), (1, 1), (0, 1), (1, 1)] * 25, ref, 0.5)
        assert is_strongly_typical([(0, 0), (1, 1)] * 5, ref, 0.01)

    def test_vacuous_delta(self, rng):
        ref = pmf(np.full(4, 0.25))
        assert is_strongly_typical(rng.integers(4, size=7), ref, 1.0)

    def test_bad_arguments(self):
        ref = pmf(np.full(2, 0.5))
        with pytest.raises(ProbError):
            is_strongly_typical([0, 1], ref, 0.0)
        with pytest.raises(ProbError):
            is_strongly_typical([0, 2], ref, 0.1)

    def test_mask_matches_scalar_path(self, rng):
        ref = random_joint(rng, (2, 3))
        seqs = rng.integers(6, size=(200, 10))
        mask = typical_mask(seqs, ref.ravel(), 0.15)
        j = pmf(ref)
        for row, m in zip(seqs, mask):
            pairs = [divmod(int(x), 3) for x in row]
            assert is_strongly_typical(pairs, j, 0.15) == bool(m)

    def test_type_counts(self):
        np.testing.assert_array_equal(type_counts(np.array([[0, 2, 2], [1, 1, 1]]), 3),
                                      [[1, 0, 2], [0, 3, 0]])
