"""Densities and exact samplers for the distribution families the sampler
touches: multivariate Normal, Matrix-Normal, Inverse-Wishart, per-column
Dirichlet (through Gamma draws), and Categorical.

All samplers are deterministic given a generator and draw order, and all
covariance-like outputs are symmetric positive definite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import LOG_TWO_PI, cholesky_with_jitter, symmetrize

__all__ = [
    "MatrixNormalParams",
    "InverseWishartParams",
    "DirichletColumns",
    "log_mvn_pdf",
    "sample_matrix_normal",
    "sample_inverse_wishart",
    "sample_dirichlet_columns",
    "sample_categorical",
]


def log_mvn_pdf(x, mean, cov) -> float:
    """Log density of N(x | mean, cov).

    Evaluated through a Cholesky factor (never an explicit inverse); a
    single jitter retry of 1e-12 * tr(cov)/n on the diagonal is attempted
    before raising.
    """
    x = np.asarray(x, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    dim = x.size
    if mean.size != dim or cov.shape != (dim, dim):
        raise ValueError(f"dimension mismatch: x {dim}, mean {mean.size}, cov {cov.shape}")
    factor = cholesky_with_jitter(cov, "normal density covariance")
    white = np.linalg.solve(factor, x - mean)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
    return -0.5 * (dim * LOG_TWO_PI + log_det + float(white @ white))


@dataclass(frozen=True)
class MatrixNormalParams:
    """Matrix-Normal parameters: mean (n, p), row covariance (n, n) and
    column covariance (p, p), both positive definite."""

    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        row_cov = np.atleast_2d(np.asarray(self.row_cov, dtype=float))
        col_cov = np.atleast_2d(np.asarray(self.col_cov, dtype=float))
        n, p = mean.shape
        if row_cov.shape != (n, n):
            raise ValueError(f"row covariance must be {(n, n)}, got {row_cov.shape}")
        if col_cov.shape != (p, p):
            raise ValueError(f"column covariance must be {(p, p)}, got {col_cov.shape}")
        for name, arr in (("row", row_cov), ("column", col_cov)):
            try:
                cholesky_with_jitter(arr)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} covariance is not positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "row_cov", row_cov)
        object.__setattr__(self, "col_cov", col_cov)


@dataclass(frozen=True)
class InverseWishartParams:
    """Inverse-Wishart parameters: positive definite scale (n, n) and
    degrees of freedom strictly greater than n - 1."""

    scale: np.ndarray
    dof: float

    def __post_init__(self):
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        n = scale.shape[0]
        if scale.shape != (n, n):
            raise ValueError(f"scale must be square, got {scale.shape}")
        try:
            cholesky_with_jitter(scale)
        except np.linalg.LinAlgError:
            raise ValueError("scale matrix is not positive definite") from None
        dof = float(self.dof)
        if not dof > n - 1:
            raise ValueError(f"degrees of freedom must exceed {n - 1}, got {dof}")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "dof", dof)


@dataclass(frozen=True)
class DirichletColumns:
    """Concentration matrix for independent Dirichlet columns; every entry
    must be strictly positive."""

    concentration: np.ndarray

    def __post_init__(self):
        conc = np.atleast_2d(np.asarray(self.concentration, dtype=float))
        if np.any(conc <= 0):
            raise ValueError("all concentration entries must be positive")
        object.__setattr__(self, "concentration", conc)


def sample_matrix_normal(params: MatrixNormalParams, rng: np.random.Generator) -> np.ndarray:
    """Draw from the Matrix-Normal law.

    Scales an i.i.d. standard normal matrix with the lower Cholesky factor
    of the row covariance and the upper factor of the column covariance, so
    vec of the draw has covariance col_cov (x) row_cov.
    """
    n, p = params.mean.shape
    noise = rng.standard_normal((n, p))
    row_factor = cholesky_with_jitter(params.row_cov, "matrix normal row covariance")
    col_factor_upper = cholesky_with_jitter(params.col_cov, "matrix normal column covariance").T
    return params.mean + row_factor @ noise @ col_factor_upper


def sample_inverse_wishart(params: InverseWishartParams, rng: np.random.Generator) -> np.ndarray:
    """Draw a symmetric positive definite matrix from IW(scale, dof).

    Uses the Bartlett factorisation of a Wishart draw on the inverse scale,
    inverted implicitly through a triangular solve; the scale matrix is
    factorised once per call and the output is symmetrised exactly.
    """
    n = params.scale.shape[0]
    bartlett = np.zeros((n, n))
    for i in range(n):
        bartlett[i, i] = np.sqrt(rng.chisquare(params.dof - i))
    lower = np.tril_indices(n, -1)
    if lower[0].size:
        bartlett[lower] = rng.standard_normal(lower[0].size)
    scale_factor = cholesky_with_jitter(params.scale, "inverse Wishart scale")
    half = np.linalg.solve(bartlett, scale_factor.T)
    return symmetrize(half.T @ half)


def sample_dirichlet_columns(params: DirichletColumns, rng: np.random.Generator) -> np.ndarray:
    """Column-stochastic matrix with independent Dirichlet columns, built
    from Gamma(shape, 1) draws normalised within each column."""
    raw = rng.gamma(shape=params.concentration)
    totals = raw.sum(axis=0, keepdims=True)
    if np.any(totals <= 0):
        raise RuntimeError("all gamma draws in a column were zero; concentrations too small")
    return raw / totals


def sample_categorical(weights, rng: np.random.Generator) -> int:
    """Index draw with P(i) = weights[i], by inverse CDF on one uniform."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("empty weight vector")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {total!r}, not 1")
    edges = np.cumsum(w)
    draw = rng.uniform()
    return int(min(np.searchsorted(edges, draw, side="left"), w.size - 1))
