"""Post-hoc chain analysis: frequency responses, mode relabelling against a
reference, posterior summaries, and Bode magnitude envelopes.

Markov-switching samplers are invariant to permutations of the mode labels,
so raw chains mix labels freely.  Samples are put into a common order by
matching each sampled mode's magnitude response to a reference response
(either a supplied truth or the chain's own posterior-mean models).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .gibbs import Chain
from .model import JmlsParams, ModelMatrices

__all__ = [
    "FrequencyResponse",
    "ChainSummary",
    "default_grid",
    "frequency_response",
    "relabel_sample",
    "apply_relabeling",
    "summarize",
]

_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class FrequencyResponse:
    """Frequency response of one mode on a grid of normalised radian
    frequencies; magnitude and phase have shape (grid, n_y, n_u) and
    ``flagged`` marks grid points where the resolvent was singular."""

    frequencies: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray
    flagged: np.ndarray


def default_grid(points: int = 64) -> np.ndarray:
    """Logarithmic grid of normalised frequencies spanning (1e-3*pi, pi]."""
    return np.logspace(np.log10(np.pi * 1e-3), np.log10(np.pi), points)


def frequency_response(model: ModelMatrices, frequencies=None) -> FrequencyResponse:
    """Evaluate C (e^{jw} I - A)^{-1} B + D over the grid.

    Grid points where the resolvent is singular are flagged and filled with
    NaN rather than raising.
    """
    freqs = default_grid() if frequencies is None else np.asarray(frequencies, dtype=float)
    if freqs.ndim != 1 or freqs.size == 0 or np.any(np.diff(freqs) <= 0):
        raise ValueError("frequency grid must be one-dimensional and strictly increasing")
    n_x, n_u, n_y = model.n_x, model.n_u, model.n_y
    n_f = freqs.size
    lhs = np.exp(1j * freqs)[:, None, None] * np.eye(n_x) - model.A
    rhs = np.broadcast_to(model.B.astype(complex), (n_f, n_x, n_u))
    flagged = np.zeros(n_f, dtype=bool)
    try:
        resolvent = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        resolvent = np.empty((n_f, n_x, n_u), dtype=complex)
        for i in range(n_f):
            try:
                resolvent[i] = np.linalg.solve(lhs[i], rhs[i])
            except np.linalg.LinAlgError:
                resolvent[i] = np.nan
                flagged[i] = True
    response = model.C @ resolvent + model.D
    return FrequencyResponse(
        frequencies=freqs.copy(),
        magnitude=np.abs(response),
        phase=np.angle(response),
        flagged=flagged,
    )


def _log_magnitude_distance(a: FrequencyResponse, b: FrequencyResponse) -> float:
    log_a = np.log10(np.maximum(a.magnitude, _LOG_FLOOR))
    log_b = np.log10(np.maximum(b.magnitude, _LOG_FLOOR))
    diff = (log_a - log_b) ** 2
    usable = ~(a.flagged | b.flagged)
    return float(np.nansum(diff[usable]))


def relabel_sample(theta: JmlsParams, reference: list[FrequencyResponse]) -> np.ndarray:
    """Permutation assigning each sampled mode to a reference slot.

    ``perm[i]`` is the reference index matched to sampled mode i, chosen to
    minimise the summed squared log-magnitude distance on the reference
    grid.  Exhaustive search up to six modes, greedy beyond; ties break
    toward lower indices.
    """
    n_modes = theta.m
    if len(reference) != n_modes:
        raise ValueError(f"need {n_modes} reference responses, got {len(reference)}")
    grid = reference[0].frequencies
    for ref in reference[1:]:
        if ref.frequencies.shape != grid.shape or not np.allclose(ref.frequencies, grid):
            raise ValueError("reference responses use mismatched frequency grids")
    responses = [frequency_response(mod, grid) for mod in theta.models]
    cost = np.empty((n_modes, n_modes))
    for i, resp in enumerate(responses):
        for j, ref in enumerate(reference):
            cost[i, j] = _log_magnitude_distance(resp, ref)
    if n_modes <= 6:
        best = None
        best_cost = np.inf
        for perm in permutations(range(n_modes)):
            c = float(sum(cost[i, perm[i]] for i in range(n_modes)))
            if c < best_cost:
                best_cost = c
                best = perm
        return np.asarray(best, dtype=int)
    assigned = np.full(n_modes, -1, dtype=int)
    free = np.ones(n_modes, dtype=bool)
    for i in range(n_modes):
        masked = np.where(free, cost[i], np.inf)
        pick = int(np.argmin(masked))
        assigned[i] = pick
        free[pick] = False
    return assigned


def apply_relabeling(theta: JmlsParams, perm: np.ndarray) -> JmlsParams:
    """Reorder modes so sampled mode i lands in slot perm[i], permuting the
    transition matrix rows and columns to match."""
    perm = np.asarray(perm, dtype=int)
    n_modes = theta.m
    if sorted(perm.tolist()) != list(range(n_modes)):
        raise ValueError(f"{perm} is not a permutation of 0..{n_modes - 1}")
    models: list[ModelMatrices | None] = [None] * n_modes
    for i, slot in enumerate(perm):
        models[int(slot)] = theta.models[i]
    matrix = np.zeros((n_modes, n_modes))
    matrix[perm, np.arange(n_modes)] = 1.0
    return JmlsParams(models=tuple(models), T=matrix @ theta.T @ matrix.T)


@dataclass
class ChainSummary:
    """Posterior summary tables.

    scalars maps a quantity name to its histogram (edges, density), mean,
    median and central 95%/99% intervals; bode maps a mode index to the
    per-grid-point magnitude mean and the three-standard-deviation band.
    """

    scalars: dict[str, dict]
    bode: dict[int, dict]
    relabeled: bool
    reference: list[FrequencyResponse] | None


def _posterior_mean_params(samples: list[JmlsParams]) -> JmlsParams:
    n_modes = samples[0].m
    mean_T = np.mean([s.T for s in samples], axis=0)
    models = []
    for i in range(n_modes):
        blocks = {
            name: np.mean([getattr(s.models[i], name) for s in samples], axis=0)
            for name in ("A", "B", "C", "D", "Q", "R", "S")
        }
        models.append(ModelMatrices(**blocks))
    return JmlsParams(models=tuple(models), T=mean_T)


def _scalar_summary(trace: np.ndarray, bins) -> dict:
    density, edges = np.histogram(trace, bins=bins, density=True)
    lo95, hi95 = np.quantile(trace, [0.025, 0.975])
    lo99, hi99 = np.quantile(trace, [0.005, 0.995])
    return {
        "mean": float(trace.mean()),
        "median": float(np.median(trace)),
        "interval95": (float(lo95), float(hi95)),
        "interval99": (float(lo99), float(hi99)),
        "hist_edges": edges,
        "hist_density": density,
    }


def summarize(
    chain: Chain,
    relabel: bool = True,
    reference: list[FrequencyResponse] | None = None,
    frequencies=None,
    bins="fd",
) -> ChainSummary:
    """Build posterior summary tables from a chain.

    Scalar quantities are every transition entry plus, for scalar-state
    systems, the similarity-invariant per-mode entries of A, D and R.  Per
    mode the Bode table holds the magnitude mean and mean +/- 3 standard
    deviations at each grid point.  With ``relabel`` (default) every sample
    is permuted to match ``reference`` responses; the reference defaults to
    the responses of the posterior-mean models.
    """
    if not chain.samples:
        raise ValueError("chain holds no samples")
    grid = default_grid() if frequencies is None else np.asarray(frequencies, dtype=float)
    samples = chain.samples
    used_reference = reference
    if relabel:
        if used_reference is None:
            mean_params = _posterior_mean_params(samples)
            used_reference = [frequency_response(mod, grid) for mod in mean_params.models]
        samples = [apply_relabeling(s, relabel_sample(s, used_reference)) for s in samples]

    first = samples[0]
    n_modes = first.m
    scalars: dict[str, dict] = {}
    stacked_T = np.stack([s.T for s in samples])
    for i in range(n_modes):
        for j in range(n_modes):
            scalars[f"T_{i}_{j}"] = _scalar_summary(stacked_T[:, i, j], bins)
    if first.n_x == 1:
        for idx in range(n_modes):
            for name in ("A", "D", "R"):
                block = np.stack([getattr(s.models[idx], name) for s in samples])
                rows, cols = block.shape[1:]
                for r in range(rows):
                    for c in range(cols):
                        label = f"m{idx}_{name}" if rows == cols == 1 else f"m{idx}_{name}_{r}_{c}"
                        scalars[label] = _scalar_summary(block[:, r, c], bins)

    bode: dict[int, dict] = {}
    for idx in range(n_modes):
        mags = np.stack([frequency_response(s.models[idx], grid).magnitude for s in samples])
        mean = mags.mean(axis=0)
        spread = 3.0 * mags.std(axis=0)
        bode[idx] = {
            "frequencies": grid.copy(),
            "mean": mean,
            "lo3sd": mean - spread,
            "hi3sd": mean + spread,
        }
    return ChainSummary(scalars=scalars, bode=bode, relabeled=relabel, reference=used_reference)
