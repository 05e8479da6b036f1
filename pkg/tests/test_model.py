"""Model containers, validation, simulation, and the decorrelation rewrite."""

import numpy as np
import pytest

from jmlsid import (
    Dataset,
    HybridPrior,
    JmlsParams,
    ModelMatrices,
    decorrelate,
    rng_stream,
    simulate,
    validate_params,
)

from oracles import stationary_distribution
from systems import two_mode_scalar_system


def test_benchmark_params_are_valid():
    assert validate_params(two_mode_scalar_system()) == []


def test_identity_transition_is_valid():
    mode = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.3, S=0.0)
    params = JmlsParams(models=(mode, mode), T=np.eye(2))
    assert validate_params(params) == []


def test_column_sum_violation_is_reported():
    mode = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.3, S=0.0)
    params = JmlsParams(models=(mode, mode), T=np.array([[0.6, 0.5], [0.3, 0.5]]))
    issues = validate_params(params)
    assert len(issues) == 1 and "column 0 sums to 0.9" in issues[0]


def test_indefinite_joint_noise_is_reported():
    # |S| too large for the R/Q pair makes the joint covariance indefinite
    mode = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.3, S=1.0)
    params = JmlsParams(models=(mode,), T=np.eye(1))
    assert any("positive semi-definite" in issue for issue in validate_params(params))


def test_singular_r_is_reported():
    mode = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.0, S=0.0)
    params = JmlsParams(models=(mode,), T=np.eye(1))
    assert any("R of model 0" in issue for issue in validate_params(params))


def test_dimension_mismatch_is_reported():
    small = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.3, S=0.0)
    big = ModelMatrices(
        A=0.5 * np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), D=0.0,
        Q=0.2 * np.eye(2), R=0.3, S=np.zeros((2, 1)),
    )
    params = JmlsParams(models=(small, big), T=np.full((2, 2), 0.5))
    assert any("dimensions" in issue for issue in validate_params(params))


def test_matrices_are_immutable():
    mode = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.3, S=0.0)
    with pytest.raises(ValueError):
        mode.A[0, 0] = 1.0


def test_noise_blocks_are_symmetrised():
    q = np.array([[1.0, 0.3], [0.1, 1.0]])
    mode = ModelMatrices(
        A=np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), D=0.0,
        Q=q, R=0.3, S=np.zeros((2, 1)),
    )
    assert np.array_equal(mode.Q, mode.Q.T)


# ---------------------------------------------------------------------------
# simulation

def test_simulate_noise_free_integrator():
    mode = ModelMatrices(A=1.0, B=0.0, C=1.0, D=0.0, Q=1e-20, R=1e-20, S=0.0)
    params = JmlsParams(models=(mode,), T=np.eye(1))
    rng = rng_stream(0, 1)
    y, x, z = simulate(params, np.zeros((50, 1)), (np.ones(1), 0), rng)
    assert np.all(np.abs(y - 1.0) < 1e-8)
    assert np.all(np.abs(x - 1.0) < 1e-8)
    assert np.all(z == 0)


def test_simulate_mode_occupancy_matches_stationary_law():
    params = two_mode_scalar_system()
    rng = rng_stream(7, 2)
    u = rng.standard_normal((2000, 1))
    _, _, z = simulate(params, u, (np.zeros(1), 0), rng)
    target = stationary_distribution(params.T)
    occupancy = np.bincount(z, minlength=2) / z.size
    assert np.allclose(target, [0.625, 0.375], atol=1e-9)
    assert np.all(np.abs(occupancy - target) < 0.05)


def test_simulate_single_mode_matches_reference_simulator():
    mode = ModelMatrices(A=0.8, B=0.5, C=1.0, D=0.2, Q=0.05, R=0.1, S=0.0)
    params = JmlsParams(models=(mode,), T=np.eye(1))
    n_steps = 4000
    rng = rng_stream(3, 4)
    u = rng.standard_normal((n_steps, 1))
    y, _, _ = simulate(params, u, (np.zeros(1), 0), rng_stream(3, 5))

    # straight-line reference simulator, independent draws
    ref_rng = np.random.default_rng(99)
    state = 0.0
    ref = np.zeros(n_steps)
    for k in range(n_steps):
        ref[k] = 1.0 * state + 0.2 * u[k, 0] + ref_rng.normal(0.0, np.sqrt(0.1))
        state = 0.8 * state + 0.5 * u[k, 0] + ref_rng.normal(0.0, np.sqrt(0.05))
    spread = np.sqrt(y.var() + ref.var())
    assert abs(y.mean() - ref.mean()) < 3.0 * spread / np.sqrt(n_steps)


def test_simulate_is_reproducible():
    params = two_mode_scalar_system()
    u = rng_stream(11, 0).standard_normal((100, 1))
    first = simulate(params, u, (np.zeros(1), 0), rng_stream(11, 1))
    second = simulate(params, u, (np.zeros(1), 0), rng_stream(11, 1))
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_simulate_rejects_invalid_params():
    mode = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.3, S=0.0)
    params = JmlsParams(models=(mode, mode), T=np.array([[0.6, 0.5], [0.3, 0.5]]))
    with pytest.raises(ValueError, match="invalid parameters"):
        simulate(params, np.zeros((5, 1)), (np.zeros(1), 0), rng_stream(0, 0))


# ---------------------------------------------------------------------------
# decorrelation

def test_decorrelate_identity_without_cross_covariance():
    params = two_mode_scalar_system()
    for mod, bar in zip(params.models, decorrelate(params)):
        assert np.allclose(bar.A, mod.A)
        assert np.allclose(bar.Q, mod.Q)
        assert np.allclose(bar.B, np.hstack([mod.B, np.zeros((1, 1))]))
        assert np.allclose(bar.D, np.hstack([mod.D, np.zeros((1, 1))]))


def test_decorrelate_scalar_hand_values():
    mode = ModelMatrices(A=1.0, B=0.0, C=1.0, D=0.0, Q=3.0, R=2.0, S=1.0)
    params = JmlsParams(models=(mode,), T=np.eye(1))
    bar = decorrelate(params)[0]
    assert np.isclose(bar.A[0, 0], 0.5)
    assert np.isclose(bar.Q[0, 0], 2.5)
    assert np.allclose(bar.B, [[0.0, 0.5]])


def test_decorrelate_singular_r_names_model():
    good = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.3, S=0.0)
    bad = ModelMatrices(A=0.5, B=1.0, C=1.0, D=0.0, Q=0.2, R=0.0, S=0.0)
    params = JmlsParams(models=(good, bad), T=np.full((2, 2), 0.5))
    with pytest.raises(ValueError, match="model 1"):
        decorrelate(params)


# ---------------------------------------------------------------------------
# containers

def test_dataset_checks_lengths():
    with pytest.raises(ValueError):
        Dataset(u=np.zeros((3, 1)), y=np.zeros((4, 1)))
    with pytest.raises(ValueError):
        Dataset(u=np.zeros((0, 1)), y=np.zeros((0, 1)))
    data = Dataset(u=np.zeros(5), y=np.ones(5))
    assert data.n_steps == 5 and data.n_u == 1 and data.n_y == 1
    assert data.augmented_inputs.shape == (5, 2)


def test_diffuse_prior_layout():
    prior = HybridPrior.diffuse(3, 2)
    assert prior.model.tolist() == [0, 1, 2]
    assert np.allclose(prior.weights, 1.0 / 3.0)
    assert np.allclose(prior.covs[1], 10.0 * np.eye(2))


def test_prior_rejects_bad_weights():
    with pytest.raises(ValueError):
        HybridPrior(model=[0], weights=[0.5], means=np.zeros((1, 1)), covs=np.ones((1, 1, 1)))
    with pytest.raises(ValueError):
        HybridPrior(model=[0, 1], weights=[1.5, -0.5], means=np.zeros((2, 1)), covs=np.ones((2, 1, 1)))
