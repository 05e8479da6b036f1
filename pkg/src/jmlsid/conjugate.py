"""Conjugate hyperparameter updates and parameter resampling.

Sufficient statistics accumulated from a sampled hybrid trajectory update a
Dirichlet / Matrix-Normal / Inverse-Wishart prior in closed form; fresh
system parameters are then drawn mode by mode.  Statistics are formed on
the original (non-decorrelated) system: per active step they stack
[y_k; x_{k+1}] against [x_k; u_k].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import cholesky_with_jitter, symmetrize
from .backward import Trajectory
from .distributions import (
    DirichletColumns,
    InverseWishartParams,
    MatrixNormalParams,
    sample_dirichlet_columns,
    sample_inverse_wishart,
    sample_matrix_normal,
)
from .model import Dataset, JmlsParams, ModelMatrices

__all__ = ["ConjugateHyper", "SufficientStats", "sufficient_stats", "posterior_hyperparams", "sample_parameters"]


@dataclass(frozen=True)
class ConjugateHyper:
    """Hyperparameters of the conjugate family, for prior and posterior alike.

    Per mode i: ``mean[i]`` (n, p) and ``col_cov[i]`` (p, p) parametrise the
    Matrix-Normal over the stacked gain given the noise covariance;
    ``iw_scale[i]`` (n, n) and ``iw_dof[i]`` parametrise the Inverse-Wishart
    over the noise covariance, with n = n_y + n_x and p = n_x + n_u.
    ``concentration`` is the (m, m) Dirichlet concentration matrix for the
    transition columns.
    """

    mean: np.ndarray
    col_cov: np.ndarray
    iw_scale: np.ndarray
    iw_dof: np.ndarray
    concentration: np.ndarray
    n_x: int
    n_u: int
    n_y: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        col_cov = np.asarray(self.col_cov, dtype=float)
        iw_scale = np.asarray(self.iw_scale, dtype=float)
        iw_dof = np.asarray(self.iw_dof, dtype=float)
        concentration = np.asarray(self.concentration, dtype=float)
        n = self.n_y + self.n_x
        p = self.n_x + self.n_u
        m = mean.shape[0]
        if mean.shape != (m, n, p):
            raise ValueError(f"mean must have shape {(m, n, p)}, got {mean.shape}")
        if col_cov.shape != (m, p, p):
            raise ValueError(f"col_cov must have shape {(m, p, p)}, got {col_cov.shape}")
        if iw_scale.shape != (m, n, n):
            raise ValueError(f"iw_scale must have shape {(m, n, n)}, got {iw_scale.shape}")
        if iw_dof.shape != (m,):
            raise ValueError(f"iw_dof must have shape {(m,)}, got {iw_dof.shape}")
        if concentration.shape != (m, m):
            raise ValueError(f"concentration must have shape {(m, m)}, got {concentration.shape}")
        if np.any(concentration <= 0):
            raise ValueError("concentration entries must be positive")
        if np.any(iw_dof <= n - 1):
            raise ValueError(f"degrees of freedom must exceed {n - 1}")
        for i in range(m):
            try:
                cholesky_with_jitter(col_cov[i])
                cholesky_with_jitter(iw_scale[i])
            except np.linalg.LinAlgError:
                raise ValueError(f"hyperparameters of model {i} are not positive definite") from None
        for name, arr in (
            ("mean", mean), ("col_cov", col_cov), ("iw_scale", iw_scale),
            ("iw_dof", iw_dof), ("concentration", concentration),
        ):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def uninformative(
        cls,
        n_modes: int,
        n_x: int,
        n_u: int,
        n_y: int,
        col_cov_scale: float = 13.0,
        iw_scale_eps: float = 1e-10,
    ) -> "ConjugateHyper":
        """Wide data-driven prior: zero gain means, col_cov_scale * I column
        covariances, near-zero Inverse-Wishart scales with the minimal
        integer degrees of freedom, and unit Dirichlet concentrations."""
        n = n_y + n_x
        p = n_x + n_u
        return cls(
            mean=np.zeros((n_modes, n, p)),
            col_cov=np.stack([col_cov_scale * np.eye(p)] * n_modes),
            iw_scale=np.stack([iw_scale_eps * np.eye(n)] * n_modes),
            iw_dof=np.full(n_modes, float(n)),
            concentration=np.ones((n_modes, n_modes)),
            n_x=n_x,
            n_u=n_u,
            n_y=n_y,
        )


@dataclass(frozen=True)
class SufficientStats:
    """Per-mode trajectory statistics.

    outer_out[i] sums [y_k; x_{k+1}] outer products over steps with mode i,
    cross[i] sums [y_k; x_{k+1}] [x_k; u_k]^T, outer_in[i] sums
    [x_k; u_k] outer products, counts[i] is the number of such steps, and
    transition_counts[j, i] counts moves from mode i to mode j.
    """

    outer_out: np.ndarray
    cross: np.ndarray
    outer_in: np.ndarray
    counts: np.ndarray
    transition_counts: np.ndarray


def sufficient_stats(traj: Trajectory, data: Dataset, n_modes: int) -> SufficientStats:
    """Accumulate conjugate-update statistics from a sampled trajectory.

    Steps k = 1..N contribute to the mode active at k; transitions are
    counted for k = 1..N, so the move into the final mode index is
    included.
    """
    n_steps = data.n_steps
    z = np.asarray(traj.z, dtype=int)
    x = np.asarray(traj.x, dtype=float)
    if z.size != n_steps + 1 or x.shape[0] != n_steps + 1:
        raise ValueError(f"trajectory length {z.size} does not match data length {n_steps}")
    if z.min() < 0 or z.max() >= n_modes:
        raise ValueError("trajectory mode index out of range")
    out_rows = np.hstack([data.y, x[1:]])
    in_rows = np.hstack([x[:n_steps], data.u])
    n = out_rows.shape[1]
    p = in_rows.shape[1]
    outer_out = np.zeros((n_modes, n, n))
    cross = np.zeros((n_modes, n, p))
    outer_in = np.zeros((n_modes, p, p))
    counts = np.zeros(n_modes, dtype=int)
    active = z[:n_steps]
    for i in range(n_modes):
        mask = active == i
        if not mask.any():
            continue
        rows_o = out_rows[mask]
        rows_i = in_rows[mask]
        outer_out[i] = rows_o.T @ rows_o
        cross[i] = rows_o.T @ rows_i
        outer_in[i] = rows_i.T @ rows_i
        counts[i] = int(mask.sum())
    transitions = np.zeros((n_modes, n_modes))
    np.add.at(transitions, (z[1:], active), 1.0)
    return SufficientStats(
        outer_out=outer_out, cross=cross, outer_in=outer_in,
        counts=counts, transition_counts=transitions,
    )


def posterior_hyperparams(prior: ConjugateHyper, stats: SufficientStats) -> ConjugateHyper:
    """Closed-form conjugate update of the hyperparameters.

    Modes with no assigned steps keep their prior entries exactly.  All
    inverses go through Cholesky factors, and the Inverse-Wishart scale is
    assembled from a triangular half-solve to avoid cancellation.
    """
    m = prior.m
    p = prior.n_x + prior.n_u
    mean = np.array(prior.mean)
    col_cov = np.array(prior.col_cov)
    iw_scale = np.array(prior.iw_scale)
    iw_dof = np.array(prior.iw_dof)
    eye_p = np.eye(p)
    for i in range(m):
        if stats.counts[i] == 0:
            continue
        v_factor = cholesky_with_jitter(prior.col_cov[i], f"column covariance of model {i}")
        v_half_inv = np.linalg.solve(v_factor, eye_p)
        v_inv = v_half_inv.T @ v_half_inv
        sig_bar = symmetrize(stats.outer_in[i] + v_inv)
        psi_bar = stats.cross[i] + prior.mean[i] @ v_inv
        phi_bar = symmetrize(stats.outer_out[i] + prior.mean[i] @ v_inv @ prior.mean[i].T)
        s_factor = cholesky_with_jitter(sig_bar, f"updated input Gram matrix of model {i}")
        half = np.linalg.solve(s_factor, psi_bar.T)  # L^-1 Psi^T, shape (p, n)
        iw_scale[i] = symmetrize(prior.iw_scale[i] + phi_bar - half.T @ half)
        iw_dof[i] = prior.iw_dof[i] + stats.counts[i]
        mean[i] = np.linalg.solve(s_factor.T, half).T
        s_half_inv = np.linalg.solve(s_factor, eye_p)
        col_cov[i] = symmetrize(s_half_inv.T @ s_half_inv)
    return ConjugateHyper(
        mean=mean,
        col_cov=col_cov,
        iw_scale=iw_scale,
        iw_dof=iw_dof,
        concentration=prior.concentration + stats.transition_counts,
        n_x=prior.n_x,
        n_u=prior.n_u,
        n_y=prior.n_y,
    )


def sample_parameters(hyper: ConjugateHyper, rng: np.random.Generator) -> JmlsParams:
    """Draw a full parameter set from the hyperparameters.

    Per mode: noise covariance from the Inverse-Wishart, then the stacked
    gain from the Matrix-Normal given that covariance; finally the
    transition matrix from Gamma-normalised Dirichlet columns.  The result
    always passes validate_params.
    """
    n_y, n_x = hyper.n_y, hyper.n_x
    models = []
    for i in range(hyper.m):
        noise = sample_inverse_wishart(
            InverseWishartParams(scale=hyper.iw_scale[i], dof=float(hyper.iw_dof[i])), rng
        )
        gain = sample_matrix_normal(
            MatrixNormalParams(mean=hyper.mean[i], row_cov=noise, col_cov=hyper.col_cov[i]), rng
        )
        models.append(
            ModelMatrices(
                A=gain[n_y:, :n_x],
                B=gain[n_y:, n_x:],
                C=gain[:n_y, :n_x],
                D=gain[:n_y, n_x:],
                Q=noise[n_y:, n_y:],
                R=noise[:n_y, :n_y],
                S=noise[n_y:, :n_y],
            )
        )
    transition = sample_dirichlet_columns(DirichletColumns(hyper.concentration), rng)
    return JmlsParams(models=tuple(models), T=transition)
