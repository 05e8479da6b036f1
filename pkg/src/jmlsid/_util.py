"""Small shared numerics: seeded RNG streams, jittered Cholesky, log-sum-exp."""

from __future__ import annotations

import numpy as np

LOG_TWO_PI = float(np.log(2.0 * np.pi))

#: Log-weights below this are treated as numerically zero ("dead").
DEAD_LOG_WEIGHT = float(np.log(np.finfo(np.float64).tiny) + 50.0)


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key path), stable across runs.

    Every consumer of randomness derives its stream from one root seed plus
    an integer key path, so draw order cannot be perturbed by how callers
    interleave work.
    """
    spawn_key = tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def logsumexp(a) -> float:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return -np.inf
    peak = a.max()
    if not np.isfinite(peak):
        # all -inf stays -inf; a +inf peak propagates
        return float(peak)
    return float(peak + np.log(np.exp(a - peak).sum()))


def log_normalize(weights: np.ndarray) -> np.ndarray:
    """Log of weights normalised to sum one; zero weights map to -inf
    without floating warnings."""
    total = weights.sum()
    if weights.min() > 0:
        return np.log(weights / total)
    out = np.full(weights.size, -np.inf)
    positive = weights > 0
    out[positive] = np.log(weights[positive] / total)
    return out


def cholesky_with_jitter(mat: np.ndarray, context: str = "") -> np.ndarray:
    """Lower Cholesky factor with one retry adding 1e-12 * tr(mat)/n to the
    diagonal; raises LinAlgError if the retry also fails."""
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    n = mat.shape[-1]
    bump = 1e-12 * float(np.trace(mat)) / n
    try:
        return np.linalg.cholesky(mat + bump * np.eye(n))
    except np.linalg.LinAlgError:
        suffix = f": {context}" if context else ""
        raise np.linalg.LinAlgError(
            f"matrix not positive definite after jitter retry{suffix}"
        ) from None


def batch_cholesky_pd(mats: np.ndarray, context: str = "") -> tuple[np.ndarray, np.ndarray]:
    """Batched lower Cholesky with per-matrix jitter fallback.

    Returns (factors, matrices) where the matrices may carry the jitter that
    was needed, keeping later solves consistent with the factors.
    """
    try:
        return np.linalg.cholesky(mats), mats
    except np.linalg.LinAlgError:
        pass
    n = mats.shape[-1]
    fixed = np.array(mats, copy=True)
    factors = np.empty_like(fixed)
    eye = np.eye(n)
    for i in range(fixed.shape[0]):
        try:
            factors[i] = np.linalg.cholesky(fixed[i])
            continue
        except np.linalg.LinAlgError:
            pass
        bump = 1e-12 * float(np.trace(fixed[i])) / n
        fixed[i] = fixed[i] + bump * eye
        try:
            factors[i] = np.linalg.cholesky(fixed[i])
        except np.linalg.LinAlgError:
            suffix = f" ({context})" if context else ""
            raise np.linalg.LinAlgError(
                f"component {i} covariance not positive definite after jitter retry{suffix}"
            ) from None
    return factors, fixed
