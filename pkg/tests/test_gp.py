"""GP core: kernel values, posterior against a naive oracle, conditioning laws."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldsense.gp import (
    IncrementalConditioner,
    KernelParams,
    gram,
    kernel,
    pointwise_conditional,
    posterior,
    posterior_mean_and_variance,
)

UNIT = KernelParams(1.0, 1.0)


def naive_kernel(a, b, params):
    d2 = sum((x - y) ** 2 for x, y in zip(a, b))
    return params.signal_variance * math.exp(-d2 / (2 * params.length_scale**2))


def naive_posterior(obs, values, targets, params, noise):
    """Textbook conditioning via an explicit matrix inverse and scalar loops."""
    n, m = len(obs), len(targets)
    k00 = np.array([[naive_kernel(a, b, params) for b in obs] for a in obs])
    k01 = np.array([[naive_kernel(a, b, params) for b in targets] for a in obs])
    k11 = np.array([[naive_kernel(a, b, params) for b in targets] for a in targets])
    if n == 0:
        return np.zeros(m), k11
    inv = np.linalg.inv(k00 + noise * np.eye(n))
    mean = k01.T @ inv @ np.asarray(values, dtype=float)
    cov = k11 - k01.T @ inv @ k01
    return mean, cov


def random_instance(rng, max_obs=12, max_targets=12):
    d = int(rng.integers(1, 3))
    n = int(rng.integers(0, max_obs + 1))
    m = int(rng.integers(1, max_targets + 1))
    obs = rng.uniform(-5, 5, size=(n, d))
    targets = rng.uniform(-5, 5, size=(m, d))
    values = rng.normal(size=n)
    noise = float(rng.uniform(1e-3, 1.0))
    return obs, values, targets, noise


class TestKernel:
    def test_zero_distance_gives_signal_variance(self):
        assert kernel([0.3], [0.3], UNIT) == 1.0
        assert kernel([0.3], [0.3], KernelParams(2.0, 3.5)) == 3.5

    def test_unit_separation(self):
        assert kernel([0.0], [1.0], UNIT) == pytest.approx(math.exp(-0.5), abs=1e-15)

    def test_2d_three_four_five(self):
        assert kernel([0.0, 0.0], [3.0, 4.0], UNIT) == pytest.approx(
            math.exp(-12.5), rel=1e-12
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel([0.0], [1.0, 2.0], UNIT)

    @given(st.integers(0, 2**32 - 1))
    def test_symmetry_exact(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-10, 10, size=(2, 2))
        assert kernel(a, b, UNIT) == kernel(b, a, UNIT)

    def test_range(self):
        params = KernelParams(0.7, 2.0)
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.uniform(-3, 3, size=(2, 1))
            v = kernel(a, b, params)
            assert 0 < v <= params.signal_variance


class TestGram:
    def test_single_point(self):
        np.testing.assert_array_equal(gram([[0.0]], [[0.0]], UNIT), [[1.0]])

    def test_two_point_matrix(self):
        e = math.exp(-0.5)
        got = gram([0.0, 1.0], [0.0, 1.0], UNIT)
        np.testing.assert_allclose(got, [[1.0, e], [e, 1.0]], atol=1e-15)

    def test_rectangular(self):
        got = gram([0.0], [0.0, 2.0], UNIT)
        np.testing.assert_allclose(got, [[1.0, math.exp(-2.0)]], atol=1e-15)

    def test_empty_rows(self):
        assert gram([], [0.0, 1.0], UNIT).shape == (0, 2)
        assert gram([0.0], [], UNIT).shape == (1, 0)

    def test_square_is_symmetric_psd(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 10, size=(20, 2))
        k = gram(pts, pts, UNIT)
        assert np.max(np.abs(k - k.T)) == 0.0
        eigs = np.linalg.eigvalsh(k)
        assert eigs.min() > -1e-10


class TestPosterior:
    def test_no_observations_is_prior(self):
        post = posterior([], [], [[0.0]], UNIT, 0.01)
        np.testing.assert_array_equal(post.mean, [0.0])
        np.testing.assert_array_equal(post.covariance, [[1.0]])

    def test_scalar_case(self):
        y = 0.37
        post = posterior([0.0], [y], [0.0], UNIT, 0.01)
        assert post.mean[0] == pytest.approx(y / 1.01, rel=1e-12)
        assert post.covariance[0, 0] == pytest.approx(1 - 1 / 1.01, rel=1e-10)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(60):
            obs, values, targets, noise = random_instance(rng)
            want_mean, want_cov = naive_posterior(obs, values, targets, UNIT, noise)
            post = posterior(obs, values, targets, UNIT, noise)
            np.testing.assert_allclose(post.mean, want_mean, atol=1e-8)
            np.testing.assert_allclose(post.covariance, want_cov, atol=1e-8)

    def test_empty_targets_rejected(self):
        with pytest.raises(ValueError):
            posterior([0.0], [1.0], [], UNIT, 0.1)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            posterior([np.nan], [1.0], [0.0], UNIT, 0.1)
        with pytest.raises(ValueError):
            posterior([0.0], [np.inf], [0.0], UNIT, 0.1)

    def test_bad_noise_rejected(self):
        for noise in (0.0, -1.0, np.nan):
            with pytest.raises(ValueError):
                posterior([0.0], [1.0], [1.0], UNIT, noise)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            posterior([0.0, 1.0], [1.0], [0.5], UNIT, 0.1)

    def test_duplicate_locations_survive_via_noise(self):
        # Observations at the same spot make K singular; the sigma^2 ridge
        # (plus jitter escalation if needed) must keep the solve alive.
        post = posterior([0.5, 0.5, 0.5], [1.0, 1.1, 0.9], [0.5, 2.0], UNIT, 1e-3)
        assert np.all(np.isfinite(post.mean))
        assert np.all(np.isfinite(post.covariance))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_variance_never_exceeds_prior(self, seed):
        rng = np.random.default_rng(seed)
        obs, values, targets, noise = random_instance(rng, max_obs=8, max_targets=8)
        post = posterior(obs, values, targets, UNIT, noise)
        assert np.all(np.diag(post.covariance) <= UNIT.signal_variance + 1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_extra_observation_shrinks_variance(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 3))
        n = int(rng.integers(1, 8))
        obs = rng.uniform(-4, 4, size=(n, d))
        values = rng.normal(size=n)
        targets = rng.uniform(-4, 4, size=(5, d))
        noise = float(rng.uniform(1e-3, 1.0))
        _, before = posterior_mean_and_variance(obs[:-1], values[:-1], targets, UNIT, noise)
        _, after = posterior_mean_and_variance(obs, values, targets, UNIT, noise)
        assert np.all(after <= before + 1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        obs, values, targets, noise = random_instance(rng, max_obs=8, max_targets=6)
        if len(obs) < 2:
            return
        perm = rng.permutation(len(obs))
        base = posterior(obs, values, targets, UNIT, noise)
        shuffled = posterior(obs[perm], values[perm], targets, UNIT, noise)
        np.testing.assert_allclose(base.mean, shuffled.mean, atol=1e-10)
        np.testing.assert_allclose(base.covariance, shuffled.covariance, atol=1e-10)


class TestPointwiseConditional:
    def test_prior(self):
        assert pointwise_conditional([], [], [0.0], UNIT, 0.01) == (0.0, 1.0)

    def test_observed_at_target(self):
        _, var = pointwise_conditional([0.0], [1.0], [0.0], UNIT, 0.01)
        assert var == pytest.approx(1 - 1 / 1.01, rel=1e-10)

    def test_agrees_with_posterior(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            obs, values, targets, noise = random_instance(rng, max_obs=6, max_targets=1)
            mean, var = pointwise_conditional(obs, values, targets[0], UNIT, noise)
            post = posterior(obs, values, targets, UNIT, noise)
            assert mean == pytest.approx(post.mean[0], abs=1e-12)
            assert var == pytest.approx(post.covariance[0, 0], abs=1e-12)

    def test_flat_2d_coordinate_is_one_point(self):
        mean, var = pointwise_conditional(
            [[0.0, 0.0]], [1.0], (0.0, 0.0), UNIT, 0.01
        )
        assert var == pytest.approx(1 - 1 / 1.01, rel=1e-10)


class TestKernelParams:
    @pytest.mark.parametrize("ls,sv", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (np.inf, 1.0)])
    def test_invalid(self, ls, sv):
        with pytest.raises(ValueError):
            KernelParams(ls, sv)


class TestIncrementalConditioner:
    def test_tracks_from_scratch_solves(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 10, size=(30, 1))
        values = rng.normal(size=30)
        cond = IncrementalConditioner(pts, UNIT, 0.05)
        seen = []
        for step, idx in enumerate(rng.permutation(30)[:20]):
            cond.observe(int(idx), float(values[idx]))
            seen.append(int(idx))
            mean, var = posterior_mean_and_variance(
                pts[seen], values[seen], pts, UNIT, 0.05
            )
            np.testing.assert_allclose(cond.mean, mean, atol=1e-8)
            np.testing.assert_allclose(cond.variance, var, atol=1e-8)

    def test_hypothetical_reduction_matches_commit(self):
        rng = np.random.default_rng(6)
        pts = rng.uniform(0, 5, size=(12, 2))
        cond = IncrementalConditioner(pts, UNIT, 0.1)
        cond.observe(3, 1.2)
        predicted = cond.hypothetical_reduction(7)
        before = cond.variance.copy()
        cond.observe(7, -0.4)
        np.testing.assert_allclose(before - cond.variance, predicted, atol=1e-12)

    def test_rejects_bad_input(self):
        cond = IncrementalConditioner([[0.0], [1.0]], UNIT, 0.1)
        with pytest.raises(IndexError):
            cond.observe(5, 1.0)
        with pytest.raises(ValueError):
            cond.observe(0, np.nan)
