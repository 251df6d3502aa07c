import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from brokensample import loss
from brokensample.core import Dataset
from brokensample.errors import BatchTooLarge, NonFiniteLoss, ParamOutOfDomain, StateSpaceTooLarge
from brokensample.models import DiscreteTabularModel
from brokensample.optimize import finite_diff_grad
from brokensample.sampling import generate_dataset


class TestTableExamples:
    def test_pseudo_loss(self, table_model, table_dataset):
        expected = -(math.log(1.5) + math.log(0.75) + math.log(1.25) + math.log(1.0))
        assert loss.pseudo_loss(table_model, 0.5, table_dataset).value == pytest.approx(
            expected, abs=1e-15)
        assert expected == pytest.approx(-0.3409265, abs=1e-7)

    def test_mixture(self, table_model, table_dataset):
        expected = -(math.log(1.75) + math.log(0.75))
        assert loss.mixture_pseudo_loss(table_model, 0.5, table_dataset).value == pytest.approx(
            expected, abs=1e-15)
        assert expected == pytest.approx(-0.2719337, abs=1e-7)

    def test_permanent_nll(self, table_model, table_dataset):
        value = loss.full_nll_permanent(table_model, 0.5, table_dataset).value
        assert value == pytest.approx(-math.log(1.375), abs=1e-15)
        assert value == pytest.approx(-0.3184537, abs=1e-7)

    def test_single_pair(self, table_model):
        ds = Dataset.from_arrays([[0.0]], [[1.0]])
        for f in (loss.pseudo_loss, loss.mixture_pseudo_loss, loss.full_nll_permanent):
            assert f(table_model, 0.5, ds).value == -math.log(0.5)
        ones = Dataset.from_arrays([[1.0]], [[1.0]])
        assert loss.pseudo_loss(table_model, 0.5, ones).value == 0.0


class TestBivariateIndependence:
    def test_losses_vanish_at_zero(self, bivariate, seed):
        ds = generate_dataset(bivariate, 6, 4, seed.stream(0, 1))
        assert loss.pseudo_loss(bivariate, 0.0, ds).value == 0.0
        assert abs(loss.mixture_pseudo_loss(bivariate, 0.0, ds).value) < 1e-15
        assert abs(loss.full_nll_permanent(bivariate, 0.0, ds).value) < 1e-12

    def test_gradient_at_zero(self, bivariate, seed):
        ds = generate_dataset(bivariate, 6, 4, seed.stream(0, 2))
        # denominators are 1 at rho=0, so the gradient is -(1/NM) sum dp/drho
        g = bivariate.grad_density(0.0, ds.xs[:, :, None, :], ds.ys[:, None, :, :])
        expected = -g.sum() / (ds.N * ds.M)
        assert_allclose(loss.pseudo_loss_grad(bivariate, 0.0, ds).gradient, [expected],
                        rtol=1e-12)


class TestGradient:
    @pytest.mark.parametrize("name", ["torus", "bivariate", "discrete3"])
    def test_against_finite_differences(self, name, request, seed):
        model = request.getfixturevalue(name)
        ds = generate_dataset(model, 10, 5, seed.stream(0, 3))
        lo, hi = model.domain.lower[0] + 1e-3, model.domain.upper[0] - 1e-3
        for th in np.random.default_rng(8).uniform(lo, hi, size=10):
            g = loss.pseudo_loss_grad(model, th, ds).gradient
            fd = finite_diff_grad(lambda t: loss.pseudo_loss(model, t, ds).value, th, 1e-5)
            assert_allclose(g, fd, rtol=1e-6, atol=1e-10)

    def test_m1_is_nll_gradient(self, bivariate, seed):
        ds = generate_dataset(bivariate, 1, 7, seed.stream(0, 4))
        g = bivariate.grad_log_density(0.3, ds.xs[:, 0], ds.ys[:, 0])
        assert_allclose(loss.pseudo_loss_grad(bivariate, 0.3, ds).gradient,
                        -g.sum(axis=0) / 7, rtol=1e-13)

    def test_boundary_rejected(self, torus, small_torus_data):
        with pytest.raises(ParamOutOfDomain):
            loss.pseudo_loss_grad(torus, 0.5, small_torus_data)


class TestKernelPaths:
    @pytest.mark.parametrize("sigma", [0.02, 0.04, 0.1, 0.3, 0.5])
    def test_fast_matches_generic(self, torus, seed, sigma):
        ds = generate_dataset(torus, 17, 3, seed.stream(0, 5))
        fast = loss.pseudo_loss(torus, sigma, ds).value
        ref = loss.pseudo_loss(torus, sigma, ds, generic=True).value
        assert fast == pytest.approx(ref, rel=1e-12)


class TestInvariants:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 6))
    def test_permutation_invariance(self, torus, s, M):
        rng = np.random.default_rng(s)
        ds = generate_dataset(torus, M, 3, rng)
        xs = np.array([x[rng.permutation(M)] for x in ds.xs])
        ys = np.array([y[rng.permutation(M)] for y in ds.ys])
        sh = Dataset.from_arrays(xs, ys)
        for f in (loss.pseudo_loss, loss.mixture_pseudo_loss, loss.full_nll_permanent):
            a, b = f(torus, 0.13, ds).value, f(torus, 0.13, sh).value
            assert abs(a - b) <= 1e-10 * abs(a)

    def test_m1_collapse_bit_exact(self, torus, bivariate, discrete3, seed):
        for idx, (model, th) in enumerate([(torus, 0.2), (bivariate, -0.3), (discrete3, 1.1)]):
            ds = generate_dataset(model, 1, 9, seed.stream(0, 6, idx))
            a = loss.pseudo_loss(model, th, ds).value
            assert loss.mixture_pseudo_loss(model, th, ds).value == a
            assert loss.full_nll_permanent(model, th, ds).value == a

    def test_nonfinite_density(self):
        m = DiscreteTabularModel(np.eye(2) * 0, [0.5, 0.5], [0.5, 0.5], ([-1], [1]), [0])
        ds = Dataset.from_arrays([[0.0]], [[0.0]])

        class Zero(type(m)):
            def log_density(self, theta, x, y):
                return np.full(np.broadcast(np.asarray(x)[..., 0], np.asarray(y)[..., 0]).shape,
                               -np.inf)

        z = Zero(np.eye(2) * 0, [0.5, 0.5], [0.5, 0.5], ([-1], [1]), [0])
        with pytest.raises(NonFiniteLoss):
            loss.pseudo_loss(z, 0.0, ds)
        assert loss.pseudo_loss(m, 0.0, ds).value == pytest.approx(0.0, abs=1e-13)


class TestPermanent:
    def test_small_matrices(self):
        assert loss.permanent(np.ones((4, 4))) == pytest.approx(24.0)
        assert loss.permanent([[2.0, 0.5], [1.5, 1.0]]) == pytest.approx(2.75)

    def test_against_enumeration(self):
        rng = np.random.default_rng(1)
        for n in range(1, 7):
            A = rng.uniform(0.1, 2, size=(n, n))
            brute = math.fsum(math.prod(A[i, s[i]] for i in range(n))
                              for s in itertools.permutations(range(n)))
            assert loss.permanent(A) == pytest.approx(brute, rel=1e-12)

    def test_log_permanent_large_scale(self):
        logA = np.full((5, 5), 400.0)
        assert_allclose(loss.log_permanent(logA), 5 * 400 + math.log(120), rtol=1e-14)

    def test_batch_limit(self, torus, seed):
        ds = generate_dataset(torus, 13, 1, seed.stream(0, 7))
        with pytest.raises(BatchTooLarge):
            loss.full_nll_permanent(torus, 0.1, ds)


class TestExpectedLoss:
    def test_documented_2x2_case(self, discrete2):
        # p^theta = [[1.2, 0.8], [0.8, 1.2]] solves tanh(theta) = 0.2 on this family
        th = math.atanh(0.2)
        assert_allclose(discrete2.table(th), [[1.2, 0.8], [0.8, 1.2]], rtol=1e-12)
        assert abs(loss.expected_loss_exact(discrete2, th, 2)
                   - loss.expected_loss_bruteforce(discrete2, th, 2)) < 1e-12

    def test_bruteforce_agreement(self, discrete2, discrete3):
        for model in (discrete2, discrete3):
            for M in (1, 2, 3):
                for th in np.linspace(-1.6, 1.6, 5):
                    assert abs(loss.expected_loss_exact(model, th, M)
                               - loss.expected_loss_bruteforce(model, th, M)) < 1e-12

    def test_zero_tilt_gives_zero(self, discrete3):
        assert loss.expected_loss_exact(discrete3, 0.0, 4) == pytest.approx(0.0, abs=1e-13)
        assert loss.expected_loss_bruteforce(discrete3, 0.0, 2) == pytest.approx(0.0, abs=1e-13)

    def test_minimised_at_truth(self, discrete3):
        base = loss.expected_loss_exact(discrete3, 0.8, 5)
        for th in (-1.0, 0.0, 0.7, 0.9, 1.8):
            assert loss.expected_loss_exact(discrete3, th, 5) > base

    def test_state_space_guard(self, discrete3):
        with pytest.raises(StateSpaceTooLarge):
            loss.expected_loss_bruteforce(discrete3, 0.0, 7)

    def test_kl(self, discrete3):
        assert loss.mixture_kl(discrete3, 0.8, 3) == pytest.approx(0.0, abs=1e-15)
        for th in (-1.5, 0.1, 1.9):
            assert loss.mixture_kl(discrete3, th, 3) > 0
        lhs = loss.expected_loss_exact(discrete3, -1.0, 3) - loss.expected_loss_exact(discrete3, 1.5, 3)
        rhs = 9 * (loss.mixture_kl(discrete3, -1.0, 3) - loss.mixture_kl(discrete3, 1.5, 3))
        assert abs(lhs - rhs) < 1e-10

    def test_limit_loss_needs_closed_form(self, table_model):
        from brokensample.errors import NoClosedForm
        with pytest.raises(NoClosedForm):
            loss.limit_loss(table_model, 0.5)
