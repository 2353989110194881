import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import expit

import ormachine as om
from ormachine import datagen


def naive_count_correct(trits, z, u):
    """Independent oracle: cell-by-cell double loop."""
    n_rows, n_cols = trits.shape
    width = z.shape[1]
    correct = 0
    for n in range(n_rows):
        for d in range(n_cols):
            if trits[n, d] == 0:
                continue
            product = int(any(z[n, l] == 1 and u[d, l] == 1 for l in range(width)))
            if trits[n, d] == (2 * product - 1):
                correct += 1
    return correct


def naive_log_likelihood(trits, z, u, lam):
    """Independent oracle: per-cell log factors of the signed-agreement form."""
    total = 0.0
    n_rows, n_cols = trits.shape
    width = z.shape[1]
    for n in range(n_rows):
        for d in range(n_cols):
            if trits[n, d] == 0:
                continue
            # +1 when some l has z = u = 1, else -1
            inner = 1 if any(z[n, l] * u[d, l] for l in range(width)) else -1
            total += np.log(expit(lam * trits[n, d] * inner))
    return total


def random_instance(rng, n, d, width, missing=0.2):
    trits = rng.choice([-1, 1], size=(n, d)).astype(np.int8)
    trits[rng.random((n, d)) < missing] = 0
    z = rng.integers(0, 2, size=(n, width), dtype=np.int8)
    u = rng.integers(0, 2, size=(d, width), dtype=np.int8)
    return trits, z, u


class TestBooleanProduct:
    def test_single_active_code_selects_support(self):
        z = np.array([[1, 0]], dtype=np.int8)
        u = np.array([[1, 0], [1, 0], [0, 1]], dtype=np.int8)
        assert om.boolean_product(z, u).tolist() == [[1, 1, 0]]

    def test_all_zero_latents(self):
        z = np.zeros((3, 2), dtype=np.int8)
        u = np.ones((4, 2), dtype=np.int8)
        assert not om.boolean_product(z, u).any()

    def test_digit_eight_is_union_of_all_segments(self):
        digits = datagen.calculator_digits()
        segments = digits.segments
        union = (segments.sum(axis=0) > 0).astype(np.int8)
        eight = om.boolean_product(np.ones((1, 7), dtype=np.int8), segments.T)
        assert np.array_equal(eight[0], union)
        assert np.array_equal(digits.matrix[8], union)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="widths differ"):
            om.boolean_product(np.zeros((2, 3), dtype=np.int8), np.zeros((2, 2), dtype=np.int8))

    def test_role_symmetry_via_transpose(self):
        rng = np.random.default_rng(7)
        z = rng.integers(0, 2, (6, 3), dtype=np.int8)
        u = rng.integers(0, 2, (5, 3), dtype=np.int8)
        assert np.array_equal(om.boolean_product(z, u), om.boolean_product(u, z).T)


class TestDeterministicResidual:
    def test_active_pair_confirms_one(self):
        assert om.deterministic_residual(1, [1, 0], [1, 1]) == 1

    def test_missing_is_zero(self):
        assert om.deterministic_residual(0, [1, 1], [1, 1]) == 0

    def test_observed_zero_with_no_active_pair(self):
        assert om.deterministic_residual(-1, [1, 0], [0, 1]) == 1

    def test_contradiction(self):
        assert om.deterministic_residual(-1, [1], [1]) == -1
        assert om.deterministic_residual(1, [0], [1]) == -1


class TestCountCorrect:
    def test_perfect_fit_counts_everything(self):
        rng = np.random.default_rng(0)
        z = rng.integers(0, 2, (6, 2), dtype=np.int8)
        u = rng.integers(0, 2, (5, 2), dtype=np.int8)
        x = om.ObservedMatrix.from_binary(om.boolean_product(z, u))
        assert om.count_correct(x, z, u) == 30

    def test_complement_counts_nothing(self):
        rng = np.random.default_rng(1)
        z = rng.integers(0, 2, (6, 2), dtype=np.int8)
        u = rng.integers(0, 2, (5, 2), dtype=np.int8)
        x = om.ObservedMatrix.from_binary(1 - om.boolean_product(z, u))
        assert om.count_correct(x, z, u) == 0

    def test_matches_naive_oracle_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            trits, z, u = random_instance(rng, 20, 20, rng.integers(1, 6))
            assert om.count_correct(trits, z, u) == naive_count_correct(trits, z, u)

    def test_bounded_by_observed_count(self):
        rng = np.random.default_rng(3)
        trits, z, u = random_instance(rng, 15, 9, 3, missing=0.5)
        p = om.count_correct(trits, z, u)
        assert 0 <= p <= np.count_nonzero(trits)


class TestLogLikelihood:
    def test_flat_at_zero_dispersion(self):
        rng = np.random.default_rng(5)
        trits, z, u = random_instance(rng, 8, 8, 2, missing=0.3)
        observed = np.count_nonzero(trits)
        assert om.log_likelihood(trits, z, u, 0.0) == pytest.approx(observed * np.log(0.5))

    def test_all_correct_at_lambda_max(self):
        z = np.array([[1], [0]], dtype=np.int8)
        u = np.array([[1], [0], [1]], dtype=np.int8)
        x = om.ObservedMatrix.from_binary(om.boolean_product(z, u))
        ll = om.log_likelihood(x, z, u, om.LAMBDA_MAX)
        assert ll == pytest.approx(6 * np.log(expit(om.LAMBDA_MAX)))
        assert ll > 6 * np.log(1 - 1e-6) - 1e-9

    def test_matches_per_cell_oracle(self):
        rng = np.random.default_rng(11)
        for lam in (0.3, 1.0, 2.5):
            trits, z, u = random_instance(rng, 10, 10, 3, missing=0.25)
            assert om.log_likelihood(trits, z, u, lam) == pytest.approx(
                naive_log_likelihood(trits, z, u, lam)
            )

    def test_maximised_at_logit_hit_rate(self):
        # grid scan around the closed-form dispersion optimum
        rng = np.random.default_rng(13)
        trits, z, u = random_instance(rng, 12, 12, 3)
        p = om.count_correct(trits, z, u)
        observed = np.count_nonzero(trits)
        if p / observed <= 0.5:
            trits = -trits  # flip labels to land in the informative regime
            p = om.count_correct(trits, z, u)
        lam_hat = om.logit(p / observed)
        best = om.log_likelihood(trits, z, u, lam_hat)
        for lam in np.linspace(0.0, om.LAMBDA_MAX, 100):
            assert best >= om.log_likelihood(trits, z, u, float(lam)) - 1e-9


class TestDomainTypes:
    def test_observed_matrix_validates_cells(self):
        with pytest.raises(ValueError, match="-1, 0, \\+1"):
            om.ObservedMatrix(np.array([[2, 0]]))
        with pytest.raises(ValueError, match="2-D"):
            om.ObservedMatrix(np.array([1, -1]))

    def test_observed_count(self):
        x = om.ObservedMatrix(np.array([[1, 0], [-1, 0]], dtype=np.int8))
        assert x.observed_count == 2
        assert x.missing_mask.sum() == 2

    def test_factor_matrix_validates_bits(self):
        with pytest.raises(ValueError, match="\\{0, 1\\}"):
            om.FactorMatrix(np.array([[2]]))
        fm = om.FactorMatrix(np.array([[1, 0]]), role="code")
        assert fm.signed.tolist() == [[1, -1]]

    def test_dispersion_bounds(self):
        assert om.Dispersion(0.0).sigma == 0.5
        with pytest.raises(ValueError):
            om.Dispersion(-0.1)
        with pytest.raises(ValueError):
            om.Dispersion(om.LAMBDA_MAX + 1.0)

    def test_bernoulli_prior_logit(self):
        assert om.BernoulliPrior(0.5).eta == 0.0
        assert om.BernoulliPrior(0.75).eta == pytest.approx(np.log(3))
        with pytest.raises(ValueError):
            om.BernoulliPrior(0.0)

    @given(st.integers(min_value=0, max_value=1))
    def test_tilde_round_trip(self, b):
        assert (2 * b - 1 + 1) // 2 == b

    def test_signed_view_is_tilde(self):
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, (4, 3), dtype=np.int8)
        fm = om.FactorMatrix(bits)
        assert np.array_equal(fm.signed, 2 * bits - 1)
