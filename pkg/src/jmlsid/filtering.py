"""Conditional hybrid forward filter: per-component Kalman updates across
all mode hypotheses, global weight normalisation, discrete-particle
reduction, and conditioned-ancestor tracking.

The filter runs on the decorrelated form of the system (augmented input
[u_k; y_k]) and records, for every step, the filtered mixture *before*
reduction plus the one-step-ahead predicted mixture past the data; the
per-step log normalising constants sum to the marginal data log
likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import (
    DEAD_LOG_WEIGHT,
    LOG_TWO_PI,
    batch_cholesky_pd,
    log_normalize,
    logsumexp,
    symmetrize,
)
from .dpf import _reduce_arrays
from .mixtures import GaussianComponent, HybridMixture
from .model import Dataset, DecorrelatedModel, HybridPrior, JmlsParams, decorrelate, validate_params

__all__ = [
    "FilterDegeneracyError",
    "FilterHistory",
    "kalman_correct",
    "kalman_predict",
    "forward_filter",
]


class FilterDegeneracyError(RuntimeError):
    """Every mixture weight collapsed to zero at some time step."""


@dataclass
class FilterHistory:
    """Everything the trajectory sampler needs from a forward pass.

    filtered : pre-reduction filtered mixture at each step k = 1..N
    predicted : predicted mixture one step past the data (k = N+1)
    log_normalizers : per-step log normalising constants, shape (N,)
    augmented_inputs : [u_k; y_k] rows, shape (N, n_u + n_y)
    conditioned : the mode sequence the pass was conditioned on, (N+1,)
    """

    filtered: list[HybridMixture]
    predicted: HybridMixture
    log_normalizers: np.ndarray
    augmented_inputs: np.ndarray
    conditioned: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.filtered)

    @property
    def log_likelihood(self) -> float:
        return float(np.sum(self.log_normalizers))


@dataclass(frozen=True)
class _StackedModels:
    """Decorrelated mode matrices stacked along a leading mode axis, with
    flat scalar views for the single-state single-output fast path."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    log_T: np.ndarray

    @property
    def scalar(self) -> bool:
        return self.A.shape[1] == 1 and self.C.shape[1] == 1 and self.C.shape[2] == 1


def _stack_models(params: JmlsParams) -> _StackedModels:
    modes = decorrelate(params)
    with np.errstate(divide="ignore"):
        log_T = np.log(params.T)
    return _StackedModels(
        A=np.stack([d.A for d in modes]),
        B=np.stack([d.B for d in modes]),
        C=np.stack([d.C for d in modes]),
        D=np.stack([d.D for d in modes]),
        Q=np.stack([d.Q for d in modes]),
        R=np.stack([d.R for d in modes]),
        log_T=log_T,
    )


@dataclass(frozen=True)
class _Workspace:
    """Per-run precomputation: stacked matrices, per-step deterministic
    offsets D_bar @ ubar_k and B_bar @ ubar_k, and flat scalar views."""

    stacked: _StackedModels
    d_offsets: np.ndarray  # (N, m, n_y)
    b_offsets: np.ndarray  # (N, m, n_x)
    scalar: bool
    a_flat: np.ndarray | None = None
    c_flat: np.ndarray | None = None
    q_flat: np.ndarray | None = None
    r_flat: np.ndarray | None = None


def _make_workspace(params: JmlsParams, augmented_inputs: np.ndarray) -> _Workspace:
    stacked = _stack_models(params)
    d_offsets = np.einsum("mya,ka->kmy", stacked.D, augmented_inputs)
    b_offsets = np.einsum("mxa,ka->kmx", stacked.B, augmented_inputs)
    scalar = stacked.scalar
    return _Workspace(
        stacked=stacked,
        d_offsets=d_offsets,
        b_offsets=b_offsets,
        scalar=scalar,
        a_flat=stacked.A[:, 0, 0].copy() if scalar else None,
        c_flat=stacked.C[:, 0, 0].copy() if scalar else None,
        q_flat=stacked.Q[:, 0, 0].copy() if scalar else None,
        r_flat=stacked.R[:, 0, 0].copy() if scalar else None,
    )


def _correct_general(mode, log_w, means, covs, stacked, d_off_k, y_k, step):
    C = stacked.C[mode]
    resid = y_k - (C @ means[..., None])[..., 0] - d_off_k[mode]
    cross = covs @ np.swapaxes(C, 1, 2)  # P C^T
    innov_cov = symmetrize(C @ cross + stacked.R[mode])
    n_y = y_k.size
    factors, innov_cov = batch_cholesky_pd(innov_cov, f"innovation covariance at step {step}")
    log_det = 2.0 * np.sum(np.log(np.diagonal(factors, axis1=1, axis2=2)), axis=1)
    white = np.linalg.solve(innov_cov, resid[..., None])[..., 0]
    quad = np.einsum("ni,ni->n", resid, white)
    log_lik = -0.5 * (n_y * LOG_TWO_PI + log_det + quad)
    gain = np.swapaxes(np.linalg.solve(innov_cov, np.swapaxes(cross, 1, 2)), 1, 2)
    means_f = means + (gain @ resid[..., None])[..., 0]
    covs_f = symmetrize(covs - gain @ (C @ covs))
    return log_w + log_lik, means_f, covs_f


def _correct(mode, log_w, means, covs, ws: _Workspace, k: int, y_k, step):
    if not ws.scalar:
        return _correct_general(mode, log_w, means, covs, ws.stacked, ws.d_offsets[k], y_k, step)
    c = ws.c_flat[mode]
    resid = y_k[0] - c * means[:, 0] - ws.d_offsets[k, :, 0][mode]
    variance = c * c * covs[:, 0, 0] + ws.r_flat[mode]
    if variance.min() <= 0:
        bad = int(np.argmin(variance))
        raise np.linalg.LinAlgError(
            f"component {bad} innovation covariance not positive definite at step {step}"
        )
    gain = c * covs[:, 0, 0] / variance
    log_lik = -0.5 * (LOG_TWO_PI + np.log(variance) + resid * resid / variance)
    means_f = (means[:, 0] + gain * resid)[:, None]
    covs_f = ((1.0 - gain * c) * covs[:, 0, 0])[:, None, None]
    return log_w + log_lik, means_f, covs_f


def _predict_moments(mode, means, covs, ws: _Workspace, k: int):
    if ws.scalar:
        a = ws.a_flat[mode]
        means_p = (a * means[:, 0] + ws.b_offsets[k, :, 0][mode])[:, None]
        covs_p = (a * a * covs[:, 0, 0] + ws.q_flat[mode])[:, None, None]
        return means_p, covs_p
    A = ws.stacked.A[mode]
    means_p = (A @ means[..., None])[..., 0] + ws.b_offsets[k][mode]
    covs_p = symmetrize(A @ covs @ np.swapaxes(A, 1, 2) + ws.stacked.Q[mode])
    return means_p, covs_p


def kalman_correct(
    comp: GaussianComponent,
    model: DecorrelatedModel,
    augmented_input: np.ndarray,
    observation: np.ndarray,
) -> GaussianComponent:
    """Measurement update of a single predicted component.

    Adds the log innovation likelihood to the component's log weight and
    returns the corrected mean and (symmetrised) covariance.
    """
    stacked = _StackedModels(
        A=model.A[None], B=model.B[None], C=model.C[None], D=model.D[None],
        Q=model.Q[None], R=model.R[None], log_T=np.zeros((1, 1)),
    )
    y_k = np.asarray(observation, dtype=float).ravel()
    ubar_k = np.asarray(augmented_input, dtype=float).ravel()
    log_w, means, covs = _correct_general(
        np.zeros(1, dtype=int),
        np.array([float(comp.log_weight)]),
        np.atleast_2d(np.asarray(comp.mean, dtype=float)),
        np.atleast_2d(np.asarray(comp.cov, dtype=float))[None],
        stacked,
        (model.D @ ubar_k)[None],
        y_k,
        step="-",
    )
    return GaussianComponent(float(log_w[0]), means[0], covs[0])


def kalman_predict(
    comp: GaussianComponent,
    model: DecorrelatedModel,
    augmented_input: np.ndarray,
    transition_prob: float,
) -> GaussianComponent:
    """Time update of a single filtered component into one target mode.

    The log weight picks up log(transition_prob); a zero transition
    probability yields a -inf log weight.
    """
    if not 0.0 <= transition_prob <= 1.0:
        raise ValueError(f"transition probability must lie in [0, 1], got {transition_prob}")
    ubar_k = np.asarray(augmented_input, dtype=float).ravel()
    mean = np.asarray(comp.mean, dtype=float).ravel()
    cov = np.atleast_2d(np.asarray(comp.cov, dtype=float))
    mean_p = model.A @ mean + model.B @ ubar_k
    cov_p = symmetrize(model.A @ cov @ model.A.T + model.Q)
    with np.errstate(divide="ignore"):
        log_w = comp.log_weight + float(np.log(transition_prob))
    return GaussianComponent(log_w, mean_p, cov_p)


def forward_filter(
    params: JmlsParams,
    data: Dataset,
    prior: HybridPrior | None,
    max_components: int,
    conditioned_modes,
    rng: np.random.Generator,
) -> FilterHistory:
    """Run the conditioned hybrid forward filter over a data record.

    At every step each component is corrected against the observation,
    weights are normalised across all (mode, component) pairs, the mixture
    is reduced through DPF resampling whenever it exceeds
    ``max_components`` (the component tracking ``conditioned_modes`` always
    survives), and the survivors are predicted into every target mode.
    Components whose predicted weight is exactly zero are dropped, except
    the conditioned one, which is retained (flagged dead) so indices stay
    valid.

    Raises FilterDegeneracyError if all weights vanish at some step.
    """
    issues = validate_params(params)
    if issues:
        raise ValueError("invalid parameters: " + "; ".join(issues))
    if max_components < 2:
        raise ValueError(f"max_components must be at least 2, got {max_components}")
    n_modes = params.m
    n_steps = data.n_steps
    if data.n_u != params.n_u or data.n_y != params.n_y:
        raise ValueError("dataset dimensions do not match the parameters")
    conditioned = np.asarray(conditioned_modes, dtype=int)
    if conditioned.shape != (n_steps + 1,):
        raise ValueError(f"conditioned mode sequence must have length {n_steps + 1}")
    if conditioned.min() < 0 or conditioned.max() >= n_modes:
        raise ValueError("conditioned mode index out of range")
    if prior is None:
        prior = HybridPrior.diffuse(n_modes, params.n_x)
    if prior.n_x != params.n_x:
        raise ValueError("state prior dimension does not match the parameters")

    ws = _make_workspace(params, data.augmented_inputs)
    log_T = ws.stacked.log_T
    y = data.y

    mode = prior.model.astype(int)
    with np.errstate(divide="ignore"):
        log_w = np.log(prior.weights)
    means = prior.means.copy()
    covs = prior.covs.copy()
    anchor_candidates = np.flatnonzero(mode == conditioned[0])
    if anchor_candidates.size == 0:
        raise ValueError(f"state prior has no component for conditioned mode {conditioned[0]}")
    ancestor = int(anchor_candidates[0])
    ancestor_dead = False

    filtered: list[HybridMixture] = []
    log_norm = np.empty(n_steps)
    mode_range = np.arange(n_modes)
    tiling: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    for k in range(n_steps):
        log_w, means, covs = _correct(mode, log_w, means, covs, ws, k, y[k], k + 1)
        total = logsumexp(log_w)
        if not np.isfinite(total):
            raise FilterDegeneracyError(f"filter degeneracy at step {k + 1}")
        log_norm[k] = total
        log_w = log_w - total
        if not ancestor_dead and log_w[ancestor] < DEAD_LOG_WEIGHT:
            ancestor_dead = True
        if ancestor_dead and np.isfinite(log_w[ancestor]):
            log_w[ancestor] = -np.inf
            log_w = log_w - logsumexp(log_w)

        mixture = HybridMixture(
            model=mode, log_weights=log_w, means=means, covs=covs,
            ancestor=ancestor, ancestor_dead=ancestor_dead,
        )
        filtered.append(mixture)

        if mode.size > max_components:
            chosen, new_w = _reduce_arrays(np.exp(log_w), ancestor, max_components, rng)
            mode = mode[chosen]
            means = means[chosen]
            covs = covs[chosen]
            log_w = log_normalize(new_w)
            ancestor = 0  # the reduction places the ancestor first

        # predict the survivors into every target mode
        means_p, covs_p = _predict_moments(mode, means, covs, ws, k)
        n_src = mode.size
        cached = tiling.get(n_src)
        if cached is None:
            cached = (np.tile(np.arange(n_src), n_modes), np.repeat(mode_range, n_src))
            tiling[n_src] = cached
        parent, new_mode = cached
        new_log_w = log_T[new_mode, mode[parent]] + log_w[parent]
        flat_ancestor = int(conditioned[k + 1]) * n_src + ancestor
        if not np.isfinite(new_log_w[flat_ancestor]):
            ancestor_dead = True
        if new_log_w.min() == -np.inf:
            keep = np.isfinite(new_log_w)
            keep[flat_ancestor] = True
            kept_idx = np.flatnonzero(keep)
            ancestor = int(np.searchsorted(kept_idx, flat_ancestor))
            mode = new_mode[kept_idx]
            log_w = new_log_w[kept_idx]
            kept_parent = parent[kept_idx]
            means = means_p[kept_parent]
            covs = covs_p[kept_parent]
        else:
            ancestor = flat_ancestor
            mode = new_mode
            log_w = new_log_w
            means = means_p[parent]
            covs = covs_p[parent]

    predicted = HybridMixture(
        model=mode.copy(), log_weights=log_w - logsumexp(log_w), means=means, covs=covs,
        ancestor=ancestor, ancestor_dead=ancestor_dead,
    )
    return FilterHistory(
        filtered=filtered,
        predicted=predicted,
        log_normalizers=log_norm,
        augmented_inputs=data.augmented_inputs,
        conditioned=conditioned.copy(),
    )
