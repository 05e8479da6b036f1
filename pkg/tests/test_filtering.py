"""Forward filter: single-component kernels against hand values and
independent formulations, and the full pass against exact oracles."""

import numpy as np
import pytest

from jmlsid import (
    Dataset,
    FilterDegeneracyError,
    GaussianComponent,
    HybridPrior,
    JmlsParams,
    ModelMatrices,
    decorrelate,
    forward_filter,
    kalman_correct,
    kalman_predict,
    log_mvn_pdf,
    rng_stream,
    simulate,
)
from jmlsid.filtering import _correct, _correct_general, _make_workspace

from oracles import (
    enumerate_filtered_ref,
    info_correct_ref,
    joint_filter_ref,
    joint_loglik_ref,
    kalman_filter_ref,
)
from systems import random_params, random_stable_mode, two_mode_scalar_system


def _single_mode_params(mode: ModelMatrices) -> JmlsParams:
    return JmlsParams(models=(mode,), T=np.eye(1))


# ---------------------------------------------------------------------------
# correction kernel

def test_correct_scalar_hand_values():
    mode = ModelMatrices(A=1.0, B=0.0, C=1.0, D=0.0, Q=1.0, R=1.0, S=0.0)
    bar = decorrelate(_single_mode_params(mode))[0]
    comp = GaussianComponent(log_weight=0.0, mean=np.zeros(1), cov=np.eye(1))
    out = kalman_correct(comp, bar, np.zeros(2), np.array([1.0]))
    assert np.isclose(out.mean[0], 0.5)
    assert np.isclose(out.cov[0, 0], 0.5)
    assert np.isclose(out.log_weight, log_mvn_pdf([1.0], [0.0], [[2.0]]))


def test_correct_uninformative_measurement_limit():
    mode = ModelMatrices(A=0.9, B=0.0, C=1.0, D=0.0, Q=1.0, R=1e9, S=0.0)
    bar = decorrelate(_single_mode_params(mode))[0]
    comp = GaussianComponent(log_weight=0.0, mean=np.array([0.3]), cov=np.array([[2.0]]))
    out = kalman_correct(comp, bar, np.zeros(2), np.array([0.3]))  # y equals the prediction
    assert abs(out.mean[0] - 0.3) < 1e-6
    assert abs(out.cov[0, 0] - 2.0) < 1e-6


def test_correct_matches_information_filter():
    rng = rng_stream(30, 0)
    for _ in range(20):
        mode = random_stable_mode(rng, n_x=3, n_u=2, n_y=2)
        bar = decorrelate(_single_mode_params(mode))[0]
        root = rng.standard_normal((3, 3))
        cov = root @ root.T + 0.5 * np.eye(3)
        mean = rng.standard_normal(3)
        ubar = rng.standard_normal(4)  # [u; y] for the decorrelated form
        y_k = rng.standard_normal(2)
        out = kalman_correct(GaussianComponent(0.0, mean, cov), bar, ubar, y_k)
        ref_mean, ref_cov = info_correct_ref(mean, cov, bar.C, bar.D, bar.R, ubar, y_k)
        assert np.allclose(out.mean, ref_mean, atol=1e-9)
        assert np.allclose(out.cov, ref_cov, atol=1e-9)


def test_scalar_and_general_correction_agree():
    params = two_mode_scalar_system()
    rng = rng_stream(30, 1)
    u = rng.standard_normal((1, 1))
    y = rng.standard_normal((1, 1))
    data = Dataset(u=u, y=y)
    ws = _make_workspace(params, data.augmented_inputs)
    mode = np.array([0, 1, 0])
    log_w = np.log(np.array([0.5, 0.3, 0.2]))
    means = rng.standard_normal((3, 1))
    covs = rng.uniform(0.5, 2.0, size=3)[:, None, None]
    fast = _correct(mode, log_w, means, covs, ws, 0, y[0], 1)
    slow = _correct_general(mode, log_w, means, covs, ws.stacked, ws.d_offsets[0], y[0], 1)
    for a, b in zip(fast, slow):
        assert np.allclose(a, b, atol=1e-12)


# ---------------------------------------------------------------------------
# prediction kernel

def test_predict_identity_dynamics():
    mode = ModelMatrices(A=1.0, B=0.0, C=1.0, D=0.0, Q=1e-300, R=1.0, S=0.0)
    bar = decorrelate(_single_mode_params(mode))[0]
    comp = GaussianComponent(0.0, np.array([0.7]), np.array([[1.3]]))
    out = kalman_predict(comp, bar, np.zeros(2), 1.0)
    assert np.isclose(out.mean[0], 0.7)
    assert np.isclose(out.cov[0, 0], 1.3)


def test_predict_scalar_hand_values():
    mode = ModelMatrices(A=0.5, B=0.0, C=1.0, D=0.0, Q=0.1, R=1.0, S=0.0)
    bar = decorrelate(_single_mode_params(mode))[0]
    comp = GaussianComponent(0.0, np.array([2.0]), np.array([[1.0]]))
    out = kalman_predict(comp, bar, np.zeros(2), 1.0)
    assert np.isclose(out.mean[0], 1.0)
    assert np.isclose(out.cov[0, 0], 0.35)


def test_predict_zero_transition_probability():
    mode = ModelMatrices(A=0.5, B=0.0, C=1.0, D=0.0, Q=0.1, R=1.0, S=0.0)
    bar = decorrelate(_single_mode_params(mode))[0]
    comp = GaussianComponent(0.0, np.array([2.0]), np.array([[1.0]]))
    out = kalman_predict(comp, bar, np.zeros(2), 0.0)
    assert out.log_weight == -np.inf
    with pytest.raises(ValueError):
        kalman_predict(comp, bar, np.zeros(2), 1.5)


# ---------------------------------------------------------------------------
# full pass against oracles

def _run_filter(params, data, prior, max_components, seed=1):
    rng = rng_stream(seed, 77)
    conditioned = rng.integers(0, params.m, size=data.n_steps + 1)
    return forward_filter(params, data, prior, max_components, conditioned, rng_stream(seed, 78))


def test_single_mode_matches_kalman_oracle():
    for n_x, seed in ((1, 0), (3, 1)):
        rng = rng_stream(31, seed)
        mode = random_stable_mode(rng, n_x=n_x)
        params = _single_mode_params(mode)
        u = rng.standard_normal((50, 1))
        y, _, _ = simulate(params, u, (np.zeros(n_x), 0), rng)
        data = Dataset(u=u, y=y)
        prior = HybridPrior.diffuse(1, n_x)
        history = _run_filter(params, data, prior, 64, seed=seed)
        loglik, filt_means, filt_covs, _, _ = kalman_filter_ref(
            mode.A, mode.B, mode.C, mode.D, mode.Q, mode.R,
            prior.means[0], prior.covs[0], u, y,
        )
        assert abs(history.log_likelihood - loglik) < 1e-8
        for k in range(50):
            mix = history.filtered[k]
            assert mix.size == 1
            assert np.allclose(mix.means[0], filt_means[k], atol=1e-8)
            assert np.allclose(mix.covs[0], filt_covs[k], atol=1e-8)


def test_filter_handles_cross_covariance_exactly():
    # short record, one mode, S != 0: marginal likelihood against the dense
    # joint-Gaussian oracle, moments against generic Gaussian conditioning
    rng = rng_stream(31, 5)
    mode = random_stable_mode(rng, n_x=2, n_u=1, n_y=1, cross=True)
    assert np.any(mode.S != 0.0)
    params = _single_mode_params(mode)
    u = rng.standard_normal((5, 1))
    y, _, _ = simulate(params, u, (np.zeros(2), 0), rng)
    data = Dataset(u=u, y=y)
    prior = HybridPrior.diffuse(1, 2)
    history = _run_filter(params, data, prior, 16, seed=9)
    dense = joint_loglik_ref(
        mode.A, mode.B, mode.C, mode.D, mode.Q, mode.R, mode.S,
        prior.means[0], prior.covs[0], u, y,
    )
    assert abs(history.log_likelihood - dense) < 1e-8
    _, filt_means, filt_covs, _, _, _ = joint_filter_ref(
        mode.A, mode.B, mode.C, mode.D, mode.Q, mode.R, mode.S,
        prior.means[0], prior.covs[0], u, y,
    )
    for k in range(5):
        assert np.allclose(history.filtered[k].means[0], filt_means[k], atol=1e-8)
        assert np.allclose(history.filtered[k].covs[0], filt_covs[k], atol=1e-8)


def _grouped_filter_components(mixture, n_modes):
    grouped = {}
    weights = np.exp(mixture.log_weights)
    for mode in range(n_modes):
        members = np.flatnonzero(mixture.model == mode)
        entries = [(weights[i], mixture.means[i], mixture.covs[i]) for i in members]
        grouped[mode] = sorted(entries, key=lambda e: e[0])
    return grouped


def test_two_mode_filter_matches_enumeration_at_every_step():
    rng = rng_stream(31, 7)
    params = random_params(rng, m=2, n_x=1)
    u = rng.standard_normal((4, 1))
    y, _, _ = simulate(params, u, (np.zeros(1), 0), rng)
    data = Dataset(u=u, y=y)
    prior = HybridPrior.diffuse(2, 1)
    history = _run_filter(params, data, prior, 32, seed=3)
    for k in range(1, 5):
        exact = enumerate_filtered_ref(params, prior, data, k)
        approx = _grouped_filter_components(history.filtered[k - 1], 2)
        for mode in range(2):
            reference = sorted(exact[mode], key=lambda e: e[0])
            assert len(reference) == len(approx[mode])
            for (w_ref, m_ref, c_ref), (w_got, m_got, c_got) in zip(reference, approx[mode]):
                assert abs(w_ref - w_got) < 1e-10
                assert np.allclose(m_ref, m_got, atol=1e-8)
                assert np.allclose(c_ref, c_got, atol=1e-8)


def test_conditioned_component_is_tracked_everywhere():
    params = two_mode_scalar_system()
    rng = rng_stream(31, 9)
    u = rng.standard_normal((40, 1))
    y, _, _ = simulate(params, u, (np.zeros(1), 0), rng)
    data = Dataset(u=u, y=y)
    conditioned = rng.integers(0, 2, size=41)
    history = forward_filter(params, data, None, 5, conditioned, rng_stream(31, 10))
    for k, mixture in enumerate(history.filtered):
        assert mixture.ancestor is not None
        mode, _ = mixture.ancestor_position
        assert mode == conditioned[k]
        # normalisation across all components
        assert abs(mixture.total_log_weight()) < 1e-9
    assert history.predicted.ancestor_position[0] == conditioned[40]


def test_reduction_caps_component_count():
    params = two_mode_scalar_system()
    rng = rng_stream(31, 11)
    u = rng.standard_normal((60, 1))
    y, _, _ = simulate(params, u, (np.zeros(1), 0), rng)
    data = Dataset(u=u, y=y)
    conditioned = rng.integers(0, 2, size=61)
    history = forward_filter(params, data, None, 5, conditioned, rng_stream(31, 12))
    # pre-reduction mixtures may exceed the cap, but never m * cap
    for mixture in history.filtered:
        assert mixture.size <= 10
    assert history.predicted.size <= 10
    # at steady state the pre-reduction size equals m * cap minus any pruning
    assert history.filtered[-1].size >= 5


def test_filter_degeneracy_raises():
    params = two_mode_scalar_system()
    u = np.zeros((2, 1))
    y = np.array([[0.1], [np.inf]])
    data = Dataset(u=u, y=y)
    with pytest.raises(FilterDegeneracyError, match="step 2"):
        forward_filter(params, data, None, 5, np.zeros(3, dtype=int), rng_stream(31, 13))


def test_filter_rejects_bad_arguments():
    params = two_mode_scalar_system()
    data = Dataset(u=np.zeros((3, 1)), y=np.zeros((3, 1)))
    rng = rng_stream(31, 14)
    with pytest.raises(ValueError, match="max_components"):
        forward_filter(params, data, None, 1, np.zeros(4, dtype=int), rng)
    with pytest.raises(ValueError, match="length"):
        forward_filter(params, data, None, 5, np.zeros(3, dtype=int), rng)
    with pytest.raises(ValueError, match="out of range"):
        forward_filter(params, data, None, 5, np.full(4, 5), rng)


def test_every_stored_covariance_is_positive_definite():
    rng = rng_stream(31, 15)
    params = random_params(rng, m=2, n_x=2)
    u = rng.standard_normal((30, 1))
    y, _, _ = simulate(params, u, (np.zeros(2), 0), rng)
    data = Dataset(u=u, y=y)
    conditioned = rng.integers(0, 2, size=31)
    history = forward_filter(params, data, None, 4, conditioned, rng_stream(31, 16))
    for mixture in history.filtered + [history.predicted]:
        for cov in mixture.covs:
            assert np.array_equal(cov, cov.T)
            assert np.all(np.linalg.eigvalsh(cov) > -1e-12)
