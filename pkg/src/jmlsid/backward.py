"""Backward trajectory sampling from a stored forward-filter history.

A full hybrid path is drawn by sampling (mode, component, state) at the
final predicted step, then walking backwards: each stored pre-reduction
filtered mixture is re-weighted against the freshly sampled next state and
sampled from in the same mode/component/state order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import LOG_TWO_PI, batch_cholesky_pd, cholesky_with_jitter, logsumexp, symmetrize
from .filtering import FilterDegeneracyError, FilterHistory, _make_workspace, _Workspace
from .mixtures import HybridMixture
from .model import JmlsParams

__all__ = ["Trajectory", "backward_smooth_step", "sample_trajectory"]


@dataclass
class Trajectory:
    """A sampled hybrid path.

    x : states, (N+1, n_x); z : mode indices, (N+1,);
    b : within-mode component index chosen at each step (diagnostic only).
    """

    x: np.ndarray
    z: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return self.z.size


def _smooth(mode, log_w, means, covs, ws: _Workspace, k: int, x_next, z_next, step):
    stacked = ws.stacked
    if ws.scalar:
        a = ws.a_flat[mode]
        p = covs[:, 0, 0]
        resid = x_next[0] - a * means[:, 0] - ws.b_offsets[k, :, 0][mode]
        variance = a * a * p + ws.q_flat[mode]
        if variance.min() <= 0:
            bad = int(np.argmin(variance))
            raise np.linalg.LinAlgError(
                f"component {bad} smoothing covariance not positive definite at step {step}"
            )
        gain = a * p / variance
        log_lik = -0.5 * (LOG_TWO_PI + np.log(variance) + resid * resid / variance)
        means_s = (means[:, 0] + gain * resid)[:, None]
        covs_s = ((1.0 - gain * a) * p)[:, None, None]
    else:
        A = stacked.A[mode]
        resid = x_next - (A @ means[..., None])[..., 0] - ws.b_offsets[k][mode]
        cross = covs @ np.swapaxes(A, 1, 2)  # P A^T
        pred_cov = symmetrize(A @ cross + stacked.Q[mode])
        n_x = x_next.size
        factors, pred_cov = batch_cholesky_pd(pred_cov, f"smoothing covariance at step {step}")
        log_det = 2.0 * np.sum(np.log(np.diagonal(factors, axis1=1, axis2=2)), axis=1)
        white = np.linalg.solve(pred_cov, resid[..., None])[..., 0]
        quad = np.einsum("ni,ni->n", resid, white)
        log_lik = -0.5 * (n_x * LOG_TWO_PI + log_det + quad)
        gain = np.swapaxes(np.linalg.solve(pred_cov, np.swapaxes(cross, 1, 2)), 1, 2)
        means_s = means + (gain @ resid[..., None])[..., 0]
        covs_s = symmetrize(covs - gain @ (A @ covs))
    log_w_s = stacked.log_T[z_next, mode] + log_w + log_lik
    return log_w_s, means_s, covs_s


def backward_smooth_step(
    filtered: HybridMixture,
    x_next: np.ndarray,
    z_next: int,
    params: JmlsParams,
    augmented_input: np.ndarray,
) -> HybridMixture:
    """One backward re-weighting of a filtered mixture against the sampled
    next hybrid state, returning the normalised smoothed mixture.

    Each component is conditioned on x_next through its own mode's
    dynamics; weights pick up the transition probability into z_next and
    the predictive density of x_next.
    """
    x_next = np.asarray(x_next, dtype=float).ravel()
    ubar_k = np.asarray(augmented_input, dtype=float).ravel()
    ws = _make_workspace(params, ubar_k[None, :])
    log_w, means, covs = _smooth(
        filtered.model, filtered.log_weights, filtered.means, filtered.covs,
        ws, 0, x_next, int(z_next), step="-",
    )
    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise FilterDegeneracyError("smoothed mixture has no mass")
    return HybridMixture(
        model=filtered.model.copy(),
        log_weights=log_w - total,
        means=means,
        covs=covs,
    )


def _draw_component(mode, log_w, means, covs, n_modes, rng, step):
    w = np.exp(log_w)
    mode_edges = np.cumsum(np.bincount(mode, weights=w, minlength=n_modes))
    z = min(int(np.searchsorted(mode_edges, rng.uniform() * mode_edges[-1], side="left")),
            n_modes - 1)
    members = np.flatnonzero(mode == z)
    member_edges = np.cumsum(w[members])
    b = min(int(np.searchsorted(member_edges, rng.uniform() * member_edges[-1], side="left")),
            members.size - 1)
    flat = int(members[b])
    if means.shape[1] == 1:
        # tiny negative variances from float cancellation are clamped to zero
        spread = np.sqrt(max(float(covs[flat, 0, 0]), 0.0))
        x = means[flat] + spread * rng.standard_normal()
    else:
        factor = cholesky_with_jitter(covs[flat], f"sampled covariance at step {step}")
        x = means[flat] + factor @ rng.standard_normal(means.shape[1])
    return z, b, x


def sample_trajectory(history: FilterHistory, params: JmlsParams, rng: np.random.Generator) -> Trajectory:
    """Draw one hybrid trajectory from the smoothing distribution implied by
    a forward-filter history.

    The final (mode, component, state) triple comes from the predicted
    mixture; earlier steps re-weight the stored pre-reduction filtered
    mixtures against the sampled next state.  Deterministic under a fixed
    generator state.
    """
    ws = _make_workspace(params, history.augmented_inputs)
    n_modes = params.m
    n_steps = history.n_steps
    n_x = history.predicted.means.shape[1]
    x = np.empty((n_steps + 1, n_x))
    z = np.empty(n_steps + 1, dtype=int)
    b = np.empty(n_steps + 1, dtype=int)

    final = history.predicted
    total = final.total_log_weight()
    if not np.isfinite(total):
        raise FilterDegeneracyError(f"dead predicted mixture at step {n_steps + 1}")
    z[n_steps], b[n_steps], x[n_steps] = _draw_component(
        final.model, final.log_weights - total, final.means, final.covs,
        n_modes, rng, n_steps + 1,
    )

    for k in range(n_steps - 1, -1, -1):
        filt = history.filtered[k]
        log_w, means_s, covs_s = _smooth(
            filt.model, filt.log_weights, filt.means, filt.covs,
            ws, k, x[k + 1], int(z[k + 1]), k + 1,
        )
        total = logsumexp(log_w)
        if not np.isfinite(total):
            raise FilterDegeneracyError(f"dead smoothed mixture at step {k + 1}")
        z[k], b[k], x[k] = _draw_component(
            filt.model, log_w - total, means_s, covs_s, n_modes, rng, k + 1,
        )
    return Trajectory(x=x, z=z, b=b)
