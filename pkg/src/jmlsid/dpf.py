"""Discrete-particle-filter mixture reduction: the deterministic-keep
threshold, systematic residual sampling, and the ancestor-preserving
resampling wrapper.

Reduction keeps the highest-weight components at their original weights
(how many is decided by the threshold rule), fills the remaining slots with
systematic draws from the residual that each carry an equal share of the
residual mass, and always keeps the conditioned ancestor component.  The
scheme is unbiased: the expected output mass attributed to any component
equals its input weight.
"""

from __future__ import annotations

import logging

import numpy as np

from ._util import log_normalize
from .mixtures import HybridMixture

__all__ = ["dpf_threshold", "systematic_sample", "dpf_resample"]

_log = logging.getLogger(__name__)


def _threshold_sorted(w: np.ndarray, max_kept: int, total: float) -> int:
    # scale-invariant form of the keep condition, so callers can pass
    # unnormalised weights along with their total
    kept = 0
    tail = total
    values = w[:max_kept].tolist()
    for j, value in enumerate(values, start=1):
        tail -= value
        if value * (max_kept - j) >= tail:
            kept = j
        else:
            break
    return kept


def dpf_threshold(weights, max_kept: int) -> int:
    """Number of leading components to keep deterministically.

    ``weights`` must be normalised and sorted in descending order; at most
    ``max_kept`` components may be kept.  Walking down the sorted weights,
    component j stays deterministic while w_j * (max_kept - j) is at least
    the total weight below it (non-strict, so boundary ties are kept).  A
    result of zero means every component goes through resampling, which is
    exactly the all-equal-weights case.
    """
    w = np.asarray(weights, dtype=float).ravel()
    n = w.size
    kept_max = int(max_kept)
    if not 1 <= kept_max <= n:
        raise ValueError(f"max_kept must be in [1, {n}], got {kept_max}")
    if np.any(np.diff(w) > 0):
        raise ValueError("weights must be sorted in descending order")
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {total!r}, not 1")
    return _threshold_sorted(w, kept_max, total)


def systematic_sample(weights, draws: int, u: float) -> np.ndarray:
    """Indices of ``draws`` components chosen by systematic sampling.

    Stratum j (1-based) selects the smallest index whose cumulative weight
    reaches (j - 1 + u) / draws.  Duplicates are allowed; the expected
    number of times index i appears is draws * weights[i].
    """
    w = np.asarray(weights, dtype=float).ravel()
    n_draws = int(draws)
    if n_draws < 1:
        raise ValueError(f"draws must be at least 1, got {draws}")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {total!r}, not 1")
    edges = np.cumsum(w)
    points = (np.arange(n_draws) + u) / n_draws
    picks = np.searchsorted(edges, points, side="left")
    return np.minimum(picks, w.size - 1)


_ARANGE_CACHE: dict[int, np.ndarray] = {}


def _arange(n: int) -> np.ndarray:
    cached = _ARANGE_CACHE.get(n)
    if cached is None:
        cached = np.arange(n)
        _ARANGE_CACHE[n] = cached
    return cached


def _reduce_arrays(w: np.ndarray, ancestor: int, target: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Core reduction on a flat weight array.

    Returns (chosen indices, their new unnormalised weights); the ancestor
    is first with its original weight.  Consumes one uniform draw whenever
    residual slots are sampled.
    """
    n = w.size
    idx = _arange(n)
    others = idx[idx != ancestor]
    w_others = w[others]
    other_mass = float(w_others.sum())

    if other_mass <= 0.0:
        # everything except the ancestor is dead; keep zero-weight fillers
        _log.error("degenerate reduction: all non-ancestor components have zero weight")
        chosen = np.concatenate(([ancestor], others[: target - 1]))
        return chosen, w[chosen]

    order = np.argsort(-w_others, kind="stable")
    sorted_w = w_others[order]
    kept_count = _threshold_sorted(sorted_w, target - 1, other_mass)
    residual_mass = float(sorted_w[kept_count:].sum())
    draws = target - kept_count - 1
    if draws == 0:
        if residual_mass > 0.0:
            _log.debug(
                "degenerate reduction: dropping residual mass %.3g across %d components",
                residual_mass, sorted_w.size - kept_count,
            )
        picks = np.empty(0, dtype=int)
        pick_w = np.empty(0)
    elif kept_count >= sorted_w.size:
        # unreachable while n > target; kept as a guard
        _log.error("empty residual set with %d draws requested", draws)
        picks = np.empty(0, dtype=int)
        pick_w = np.empty(0)
    else:
        # scale-invariant systematic strata over the unnormalised residual
        edges = np.cumsum(sorted_w[kept_count:])
        points = (np.arange(draws) + rng.uniform()) * (residual_mass / draws)
        strata = np.minimum(np.searchsorted(edges, points, side="left"),
                            edges.size - 1)
        picks = order[kept_count:][strata]
        pick_w = np.full(draws, residual_mass / draws)

    chosen = np.concatenate(([ancestor], others[order[:kept_count]], others[picks]))
    new_w = np.concatenate(([w[ancestor]], sorted_w[:kept_count], pick_w))
    return chosen, new_w


def dpf_resample(mixture: HybridMixture, max_components: int, rng: np.random.Generator) -> HybridMixture:
    """Reduce a hybrid mixture to exactly ``max_components`` entries.

    The ancestor is moved first into the output with its original weight;
    the threshold rule (with budget max_components - 1) selects components
    kept deterministically at their original weights; the remaining slots
    are filled by systematic draws from the renormalised residual, each
    carrying residual_mass / draws.  Output weights are left unnormalised
    for the caller to renormalise.
    """
    size = mixture.size
    target = int(max_components)
    if target < 2:
        raise ValueError(f"max_components must be at least 2, got {target}")
    if size <= target:
        raise ValueError(f"reduction needs more than {target} components, mixture has {size}")
    if mixture.ancestor is None:
        raise ValueError("mixture has no ancestor component")

    w = np.exp(mixture.log_weights)
    chosen, new_w = _reduce_arrays(w, int(mixture.ancestor), target, rng)
    with np.errstate(divide="ignore"):
        new_log_w = np.log(new_w)
    return HybridMixture(
        model=mixture.model[chosen].copy(),
        log_weights=new_log_w,
        means=mixture.means[chosen].copy(),
        covs=mixture.covs[chosen].copy(),
        ancestor=0,
        ancestor_dead=mixture.ancestor_dead,
    )
