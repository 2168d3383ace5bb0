import itertools

import numpy as np
import pytest

from pgflow import oracles


class TestGaussianClosedForms:
    def test_w2_identical(self):
        assert oracles.gaussian_w2_squared([0, 0], [1, 1], [0, 0], [1, 1]) == 0.0

    def test_w2_mean_shift(self):
        assert oracles.gaussian_w2_squared([0, 0], [1, 1], [3, 0], [1, 1]) == 9.0

    def test_w2_variance_only(self):
        # (sqrt(4) - sqrt(1))^2 = 1
        assert oracles.gaussian_w2_squared([0], [1], [0], [4]) == 1.0

    def test_kl_identical(self):
        assert oracles.gaussian_kl([1, 2], [3, 4], [1, 2], [3, 4]) == 0.0

    def test_kl_unit_mean_shift(self):
        assert abs(oracles.gaussian_kl([0], [1], [1], [1]) - 0.5) < 1e-15

    def test_kl_asymmetric(self):
        a = oracles.gaussian_kl([0], [1], [0], [2])
        b = oracles.gaussian_kl([0], [2], [0], [1])
        assert a != b and a > 0 and b > 0

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            oracles.gaussian_w2_squared([0], [0.0], [0], [1])
        with pytest.raises(ValueError):
            oracles.gaussian_kl([0], [1], [0], [-1])


class TestEmpiricalW1:
    def test_identical_sets(self):
        X = np.random.default_rng(0).standard_normal((20, 3))
        assert oracles.empirical_w1_exact(X, X) == 0.0

    def test_single_pair(self):
        assert abs(oracles.empirical_w1_exact([[0.0, 0.0]], [[3.0, 4.0]]) - 5.0) < 1e-12

    def test_matches_permutation_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            A = rng.standard_normal((5, 2))
            B = rng.standard_normal((5, 2))
            got = oracles.empirical_w1_exact(A, B)
            best = min(
                np.mean(np.linalg.norm(A - B[list(perm)], axis=1))
                for perm in itertools.permutations(range(5))
            )
            assert abs(got - best) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((12, 2))
        B = rng.standard_normal((12, 2))
        assert abs(oracles.empirical_w1_exact(A, B) - oracles.empirical_w1_exact(B, A)) < 1e-12

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            A, B, C = (rng.standard_normal((8, 2)) for _ in range(3))
            ab = oracles.empirical_w1_exact(A, B)
            bc = oracles.empirical_w1_exact(B, C)
            ac = oracles.empirical_w1_exact(A, C)
            assert ac <= ab + bc + 1e-12

    def test_translation_invariance(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((10, 2))
        B = rng.standard_normal((10, 2))
        c = np.array([5.0, -2.0])
        assert abs(oracles.empirical_w1_exact(A + c, B + c)
                   - oracles.empirical_w1_exact(A, B)) < 1e-10

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            oracles.empirical_w1_exact(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_size_cap(self):
        with pytest.raises(ValueError):
            oracles.empirical_w1_exact(np.zeros((257, 2)), np.zeros((257, 2)))


class TestTwoDiracValue:
    def test_zero_distance(self):
        assert oracles.fgamma_two_dirac("reverse_kl", 1.0, 0.0) == 0.0

    def test_kl_is_linear(self):
        assert oracles.fgamma_two_dirac("kl", 2.0, 1.5) == 3.0

    def test_reverse_kl_small_distance(self):
        # below L*d = 1 the endpoint a=1 wins: value L*d
        assert abs(oracles.fgamma_two_dirac("reverse_kl", 1.0, 0.5) - 0.5) < 1e-9

    def test_reverse_kl_at_e(self):
        # L*d = e > 1: interior optimum, value 1 + log(L*d) = 2
        assert abs(oracles.fgamma_two_dirac("reverse_kl", 1.0, np.e) - 2.0) < 1e-9

    def test_reverse_kl_scales_with_L(self):
        assert abs(oracles.fgamma_two_dirac("reverse_kl", 2.0, 0.25) - 0.5) < 1e-9

    def test_monotone_in_distance(self):
        vals = [oracles.fgamma_two_dirac("reverse_kl", 1.0, d)
                for d in (0.1, 0.5, 1.0, 2.0, 5.0)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            oracles.fgamma_two_dirac("reverse_kl", 1.0, -1.0)


class TestConjugateCheck:
    def test_reverse_kl_in_domain(self):
        # sup_x {x y + log x} = -1 - log(-y) at y = -2
        got = oracles.conjugate_check("reverse_kl", -2.0)
        assert abs(got - (-1.0 - np.log(2.0))) < 1e-4

    def test_kl_at_zero(self):
        got = oracles.conjugate_check("kl", 0.0)
        assert abs(got - np.exp(-1.0)) < 1e-4

    def test_out_of_domain_diverges(self):
        assert oracles.conjugate_check("reverse_kl", 0.1) == np.inf

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            oracles.conjugate_check("hellinger", -1.0)


def test_finite_diff_grad_quadratic():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    x = np.array([0.3, -0.7])
    g = oracles.finite_diff_grad(lambda v: float(v @ A @ v), x)
    assert np.allclose(g, 2 * A @ x, atol=1e-8)
