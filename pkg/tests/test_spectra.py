"""Unfolding and singular-spectrum tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genprobe.spectra import (
    NonFinite,
    SingularSpectrum,
    STORAGE_EPS,
    UnsupportedShape,
    WeightTensor,
    numerical_rank,
    singular_values,
    unfold,
)


def tensor(shape, values, **kw):
    return WeightTensor(name="t", shape=shape, data=np.asarray(values, dtype=np.float64).reshape(-1), **kw)


class TestWeightTensor:
    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError, match="values for shape"):
            tensor((2, 2), [1.0, 2.0, 3.0])

    def test_rejects_nan(self):
        with pytest.raises(NonFinite):
            tensor((2, 2), [1.0, np.nan, 0.0, 1.0])

    def test_rejects_rank3(self):
        with pytest.raises(UnsupportedShape):
            tensor((2, 2, 2), np.zeros(8))

    def test_rejects_zero_dim(self):
        with pytest.raises(UnsupportedShape):
            tensor((0, 4), np.zeros(0))


class TestUnfold:
    def test_2d_identity_case(self):
        a = np.arange(15, dtype=np.float64).reshape(3, 5)
        (out,) = unfold(tensor((3, 5), a))
        np.testing.assert_array_equal(out, a)

    def test_k1_reduces_to_matrix_and_transpose(self):
        out, inn = unfold(tensor((2, 3, 1, 1), np.arange(1, 7)))
        np.testing.assert_array_equal(out, [[1, 2, 3], [4, 5, 6]])
        np.testing.assert_array_equal(inn, [[1, 4], [2, 5], [3, 6]])

    def test_2x2x2x2_against_index_oracle(self):
        # oracle: enumerate (o, i, h, w) positions of the row-major tensor
        vals = np.arange(1, 17, dtype=np.float64)
        t = tensor((2, 2, 2, 2), vals)
        expect_out = np.zeros((2, 8))
        expect_in = np.zeros((2, 8))
        for o in range(2):
            for i in range(2):
                for h in range(2):
                    for w in range(2):
                        v = vals[o * 8 + i * 4 + h * 2 + w]
                        expect_out[o, i * 4 + h * 2 + w] = v
                        expect_in[i, o * 4 + h * 2 + w] = v
        out, inn = unfold(t)
        np.testing.assert_array_equal(out, expect_out)
        np.testing.assert_array_equal(inn, expect_in)
        np.testing.assert_array_equal(out[0], np.arange(1, 9))
        np.testing.assert_array_equal(inn[0], [1, 2, 3, 4, 9, 10, 11, 12])

    def test_rejects_1d(self):
        with pytest.raises(UnsupportedShape):
            unfold(tensor((4,), np.zeros(4)))

    @given(
        shape=st.tuples(*(st.integers(1, 4) for _ in range(4))),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_unfoldings_preserve_entry_multiset(self, shape, seed):
        data = np.random.default_rng(seed).standard_normal(int(np.prod(shape)))
        out, inn = unfold(tensor(shape, data))
        assert sorted(out.reshape(-1)) == sorted(data)
        assert sorted(inn.reshape(-1)) == sorted(data)


class TestSingularValues:
    def test_identity(self):
        s = singular_values(np.eye(3))
        np.testing.assert_allclose(s.values, [1.0, 1.0, 1.0], atol=1e-14)

    def test_golden_ratio_matrix(self):
        # oracle: roots of the Gram characteristic polynomial x^2 - 3x + 1
        roots = np.sort(np.roots([1.0, -3.0, 1.0]))[::-1]
        expected = np.sqrt(roots)
        s = singular_values(np.array([[1.0, 1.0], [0.0, 1.0]]))
        np.testing.assert_allclose(s.values, expected, rtol=1e-12)

    def test_zero_matrix(self):
        s = singular_values(np.zeros((2, 4)))
        np.testing.assert_array_equal(s.values, [0.0, 0.0])
        assert s.zero_tol == 0.0

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            singular_values(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    def test_zero_tol_formula(self):
        a = np.diag([5.0, 1.0, 0.5])
        s = singular_values(a)
        assert s.zero_tol == STORAGE_EPS["f64"] * 3 * 5.0
        s32 = singular_values(a, storage_eps=STORAGE_EPS["f32"])
        assert s32.zero_tol == STORAGE_EPS["f32"] * 3 * 5.0

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((6, 9))
        u = np.linalg.qr(rng.standard_normal((6, 6)))[0]
        v = np.linalg.qr(rng.standard_normal((9, 9)))[0]
        s = singular_values(a)
        s2 = singular_values(u @ a @ v)
        np.testing.assert_allclose(s2.values, s.values, atol=1e-8 * s.values[0])

    def test_scaling(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((5, 7))
        c = -3.25
        s = singular_values(a)
        s2 = singular_values(c * a)
        np.testing.assert_allclose(s2.values, abs(c) * s.values, atol=1e-8 * abs(c) * s.values[0])

    @given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 8), n=st.integers(1, 8))
    @settings(max_examples=50, deadline=None)
    def test_frobenius_reconstruction(self, seed, m, n):
        a = np.random.default_rng(seed).standard_normal((m, n))
        s = singular_values(a)
        np.testing.assert_allclose(np.sum(s.values**2), np.sum(a**2), rtol=1e-8)


class TestNumericalRank:
    def test_identity(self):
        assert numerical_rank(singular_values(np.eye(3))) == 3

    def test_zero(self):
        assert numerical_rank(singular_values(np.zeros((3, 3)))) == 0

    def test_rank2_outer_product_construction(self):
        rng = np.random.default_rng(5)
        u1, u2 = rng.standard_normal((2, 4))
        v1, v2 = rng.standard_normal((2, 4))
        a = np.outer(u1, v1) + np.outer(u2, v2)
        assert numerical_rank(singular_values(a)) == 2


class TestSpectrumInvariants:
    def test_length_must_match(self):
        with pytest.raises(ValueError, match="values for a"):
            SingularSpectrum(values=np.array([1.0]), m=2, n=3)

    def test_descending_enforced(self):
        with pytest.raises(ValueError, match="descending"):
            SingularSpectrum(values=np.array([1.0, 2.0]), m=2, n=2)

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            SingularSpectrum(values=np.array([1.0, -0.5]), m=2, n=2)
