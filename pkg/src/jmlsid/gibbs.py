"""Particle Gibbs driver: alternates trajectory and parameter draws while
threading the conditioned mode sequence, plus chain diagnostics.

Every sweep draws from an independent RNG stream keyed by (seed, sweep
index), so a chain is bit-reproducible from its configuration alone and a
stored sample's sweep index doubles as its RNG checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import rng_stream
from .backward import Trajectory, sample_trajectory
from .conjugate import ConjugateHyper, posterior_hyperparams, sample_parameters, sufficient_stats
from .filtering import forward_filter
from .model import Dataset, HybridPrior, JmlsParams, validate_params

__all__ = [
    "GibbsConfig",
    "Chain",
    "GibbsError",
    "run_particle_gibbs",
    "chain_scalars",
    "chain_diagnostics",
    "effective_sample_size",
    "autocorrelation",
]

_INIT_STREAM = 0
_SWEEP_STREAM = 1


@dataclass
class GibbsConfig:
    """Settings for one particle Gibbs run.

    burn_in defaults to 10% of the iterations; init_params defaults to a
    draw from the prior.  max_components is the total mixture size budget
    of the forward filter.
    """

    iterations: int
    max_components: int
    seed: int
    prior: ConjugateHyper
    burn_in: int | None = None
    thin: int = 1
    state_prior: HybridPrior | None = None
    init_params: JmlsParams | None = None
    store_trajectories: bool = False

    def __post_init__(self):
        if self.burn_in is None:
            self.burn_in = self.iterations // 10
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.max_components < 2:
            raise ValueError("max_components must be at least 2")

    @property
    def n_stored(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)


@dataclass
class Chain:
    """Stored parameter samples plus per-sweep bookkeeping.

    ``sample_iterations[i]`` is the sweep that produced ``samples[i]``;
    together with ``seed`` it is the RNG checkpoint for that sweep.
    ``accepted`` equals the number of completed sweeps (Gibbs steps always
    accept; recorded for diagnostics only).
    """

    samples: list[JmlsParams]
    sample_iterations: list[int]
    log_likelihoods: np.ndarray
    seed: int
    accepted: int
    trajectories: list[Trajectory] | None = None
    last_trajectory: Trajectory | None = None

    def __len__(self) -> int:
        return len(self.samples)


class GibbsError(RuntimeError):
    """A sweep failed; carries the partial chain and the failing sweep."""

    def __init__(self, iteration: int, chain: Chain, cause: BaseException):
        super().__init__(f"particle Gibbs sweep {iteration} failed: {cause}")
        self.iteration = iteration
        self.chain = chain


def run_particle_gibbs(config: GibbsConfig, data: Dataset, on_sample=None) -> Chain:
    """Run the particle Gibbs sampler over a data record.

    Sweep l filters forward conditioned on the mode sequence sampled at
    sweep l-1 (a random valid sequence before the first sweep), draws a
    hybrid trajectory backwards, updates the conjugate posterior from it,
    and draws fresh parameters.  The parameter draw of sweep l is recorded
    once past burn-in on the thinning stride; ``on_sample(iteration,
    params)`` fires for each retained sample (used for streaming output).

    Identical (config, data) pairs produce bit-identical chains.  A failing
    sweep raises GibbsError carrying the chain built so far.
    """
    prior = config.prior
    n_modes = prior.m
    if data.n_u != prior.n_u or data.n_y != prior.n_y:
        raise ValueError("dataset dimensions do not match the prior")
    state_prior = config.state_prior or HybridPrior.diffuse(n_modes, prior.n_x)

    init_rng = rng_stream(config.seed, _INIT_STREAM)
    if config.init_params is not None:
        theta = config.init_params
        issues = validate_params(theta)
        if issues:
            raise ValueError("invalid initial parameters: " + "; ".join(issues))
    else:
        theta = sample_parameters(prior, init_rng)
    conditioned = init_rng.integers(0, n_modes, size=data.n_steps + 1)

    samples: list[JmlsParams] = []
    sample_iterations: list[int] = []
    log_likelihoods = np.zeros(config.iterations)
    trajectories: list[Trajectory] | None = [] if config.store_trajectories else None
    last_trajectory: Trajectory | None = None

    for iteration in range(1, config.iterations + 1):
        rng = rng_stream(config.seed, _SWEEP_STREAM, iteration)
        try:
            history = forward_filter(
                theta, data, state_prior, config.max_components, conditioned, rng
            )
            trajectory = sample_trajectory(history, theta, rng)
            stats = sufficient_stats(trajectory, data, n_modes)
            posterior = posterior_hyperparams(prior, stats)
            theta = sample_parameters(posterior, rng)
        except Exception as err:
            partial = Chain(
                samples=samples,
                sample_iterations=sample_iterations,
                log_likelihoods=log_likelihoods[: iteration - 1],
                seed=config.seed,
                accepted=iteration - 1,
                trajectories=trajectories,
                last_trajectory=last_trajectory,
            )
            raise GibbsError(iteration, partial, err) from err
        log_likelihoods[iteration - 1] = history.log_likelihood
        conditioned = trajectory.z
        last_trajectory = trajectory
        if iteration > config.burn_in and (iteration - config.burn_in - 1) % config.thin == 0:
            samples.append(theta)
            sample_iterations.append(iteration)
            if trajectories is not None:
                trajectories.append(trajectory)
            if on_sample is not None:
                on_sample(iteration, theta)

    return Chain(
        samples=samples,
        sample_iterations=sample_iterations,
        log_likelihoods=log_likelihoods,
        seed=config.seed,
        accepted=config.iterations,
        trajectories=trajectories,
        last_trajectory=last_trajectory,
    )


def chain_scalars(chain: Chain) -> dict[str, np.ndarray]:
    """Named scalar traces across the stored samples: every transition
    entry (``T_i_j``) and every model matrix entry (``m<i>_<name>_<r>_<c>``)."""
    if not chain.samples:
        raise ValueError("chain holds no samples")
    first = chain.samples[0]
    n_modes = first.m
    traces: dict[str, np.ndarray] = {}
    stacked_T = np.stack([s.T for s in chain.samples])
    for i in range(n_modes):
        for j in range(n_modes):
            traces[f"T_{i}_{j}"] = stacked_T[:, i, j]
    for idx in range(n_modes):
        for name in ("A", "B", "C", "D", "Q", "R", "S"):
            block = np.stack([getattr(s.models[idx], name) for s in chain.samples])
            rows, cols = block.shape[1:]
            for r in range(rows):
                for c in range(cols):
                    traces[f"m{idx}_{name}_{r}_{c}"] = block[:, r, c]
    return traces


def autocorrelation(trace: np.ndarray, lag: int) -> float:
    """Sample autocorrelation at one lag (nan when the lag exhausts the
    trace or the trace has zero variance)."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    if lag >= n:
        return float("nan")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        return float("nan")
    return float(centered[: n - lag] @ centered[lag:]) / denom


def _autocovariances(centered: np.ndarray) -> np.ndarray:
    n = centered.size
    nfft = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, nfft)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), nfft)[:n].real
    return acov / n


def effective_sample_size(trace: np.ndarray) -> float:
    """Effective sample size by the initial-monotone-sequence estimator.

    Pairwise sums of autocorrelations are accumulated while positive and
    forced non-increasing; a constant trace reports its own length.
    """
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 2:
        return float(n)
    centered = x - x.mean()
    acov = _autocovariances(centered)
    if acov[0] <= 0.0:
        return float(n)
    rho = acov / acov[0]
    tau = -1.0
    previous = np.inf
    for m in range(0, n // 2):
        pair = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < n else 0.0)
        if pair <= 0.0:
            break
        pair = min(pair, previous)
        previous = pair
        tau += 2.0 * pair
    tau = max(tau, 1.0 / n)
    return float(n / tau)


def trace_diagnostics(trace: np.ndarray, lags: tuple[int, ...] = (1, 10, 100)) -> dict:
    """Mean, variance, autocorrelations and ESS for one scalar trace."""
    x = np.asarray(trace, dtype=float)
    zero_variance = bool(x.size > 0 and x.min() == x.max())
    variance = 0.0 if zero_variance else float(x.var())
    return {
        "mean": float(x.mean()),
        "variance": variance,
        "autocorrelation": {lag: autocorrelation(x, lag) for lag in lags},
        "ess": float(x.size) if zero_variance else effective_sample_size(x),
        "zero_variance": zero_variance,
    }


def chain_diagnostics(chain: Chain, lags: tuple[int, ...] = (1, 10, 100)) -> dict[str, dict]:
    """Per-scalar trace diagnostics over all stored parameter entries."""
    return {name: trace_diagnostics(trace, lags) for name, trace in chain_scalars(chain).items()}
