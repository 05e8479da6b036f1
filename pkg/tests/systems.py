"""Shared system builders for the test suite."""

from __future__ import annotations

import numpy as np

from jmlsid import ConjugateHyper, JmlsParams, ModelMatrices

from oracles import transfer_function_realization


def two_mode_scalar_system() -> JmlsParams:
    """The univariate two-mode benchmark system used across the suite."""
    first = ModelMatrices(A=0.4766, B=-1.207, C=0.233, D=-0.8935, Q=1e-3, R=0.0202, S=0.0)
    second = ModelMatrices(A=-0.1721, B=1.5330, C=-0.1922, D=1.7449, Q=0.0340, R=0.0439, S=0.0)
    return JmlsParams(models=(first, second), T=np.array([[0.7, 0.5], [0.3, 0.5]]))


def two_mode_scalar_prior() -> ConjugateHyper:
    """Wide prior matching the univariate benchmark: zero means, 13*I column
    covariance, 1e-10*I scales, 2 degrees of freedom, unit concentrations."""
    return ConjugateHyper(
        mean=np.zeros((2, 2, 2)),
        col_cov=np.stack([13.0 * np.eye(2)] * 2),
        iw_scale=np.stack([1e-10 * np.eye(2)] * 2),
        iw_dof=np.array([2.0, 2.0]),
        concentration=np.ones((2, 2)),
        n_x=1,
        n_u=1,
        n_y=1,
    )


#: Transfer-function coefficients of the three-mode third-order benchmark
#: (numerator, denominator), highest power of z first.
THREE_MODE_TFS = [
    ([217.4, 212.9, -0.003827, 4.603e-20], [1.0, -1.712, 0.9512, -1.481e-6]),
    ([0.4184, 0.008764, 0.1669, -0.01542], [1.0, -2.374, 1.929, -0.5321]),
    ([0.2728, -0.9506, 1.066, -0.3881], [1.0, -2.374, 1.929, -0.5321]),
]

THREE_MODE_T = np.array(
    [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]]
)


def three_mode_tf_system(process_noise: float = 1e-2, measurement_noise: float = 1e-2) -> JmlsParams:
    """Three-mode three-state SISO benchmark realised from its transfer
    functions in controllable canonical form; the noise covariances are a
    documented choice (the benchmark specifies only the deterministic part)."""
    models = []
    for num, den in THREE_MODE_TFS:
        A, B, C, D = transfer_function_realization(num, den)
        models.append(
            ModelMatrices(
                A=A, B=B, C=C, D=D,
                Q=process_noise * np.eye(3),
                R=np.array([[measurement_noise]]),
                S=np.zeros((3, 1)),
            )
        )
    return JmlsParams(models=tuple(models), T=THREE_MODE_T)


def three_mode_prior() -> ConjugateHyper:
    """Wide prior for the three-mode benchmark (4x4 blocks, dof 4)."""
    return ConjugateHyper(
        mean=np.zeros((3, 4, 4)),
        col_cov=np.stack([13.0 * np.eye(4)] * 3),
        iw_scale=np.stack([1e-10 * np.eye(4)] * 3),
        iw_dof=np.array([4.0, 4.0, 4.0]),
        concentration=np.ones((3, 3)),
        n_x=3,
        n_u=1,
        n_y=1,
    )


def random_stable_mode(rng, n_x, n_u=1, n_y=1, cross=False) -> ModelMatrices:
    """Random stable single mode with well-conditioned noise."""
    A = rng.standard_normal((n_x, n_x))
    radius = max(np.abs(np.linalg.eigvals(A)))
    A = 0.85 * A / max(radius, 1e-6)
    B = rng.standard_normal((n_x, n_u))
    C = rng.standard_normal((n_y, n_x))
    D = rng.standard_normal((n_y, n_u))
    root_q = rng.standard_normal((n_x, n_x)) * 0.4
    Q = root_q @ root_q.T + 0.1 * np.eye(n_x)
    root_r = rng.standard_normal((n_y, n_y)) * 0.4
    R = root_r @ root_r.T + 0.1 * np.eye(n_y)
    if cross:
        # shrink S against the R/Q scale to keep the joint covariance PSD
        S = 0.25 * rng.standard_normal((n_x, n_y)) * np.sqrt(0.1)
    else:
        S = np.zeros((n_x, n_y))
    return ModelMatrices(A=A, B=B, C=C, D=D, Q=Q, R=R, S=S)


def random_params(rng, m, n_x, n_u=1, n_y=1, cross=False) -> JmlsParams:
    models = tuple(random_stable_mode(rng, n_x, n_u, n_y, cross) for _ in range(m))
    raw = rng.uniform(0.2, 1.0, size=(m, m))
    return JmlsParams(models=models, T=raw / raw.sum(axis=0, keepdims=True))
