"""Containers for weighted Gaussian mixtures over hybrid (mode, state)
hypotheses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import logsumexp

__all__ = ["GaussianComponent", "HybridMixture"]


@dataclass
class GaussianComponent:
    """One weighted Gaussian hypothesis: log weight, mean, covariance."""

    log_weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class HybridMixture:
    """Flat component arrays labelled by mode index.

    ``ancestor``, when set, is the flat index of the conditioned component
    the filter must never discard.  ``ancestor_dead`` marks an ancestor
    whose weight collapsed to numerical zero; it stays in the arrays so
    indices remain valid but carries no probability mass.
    """

    model: np.ndarray
    log_weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    ancestor: int | None = None
    ancestor_dead: bool = False

    @property
    def size(self) -> int:
        return self.model.size

    def counts(self, n_modes: int) -> np.ndarray:
        """Number of components per mode."""
        return np.bincount(self.model, minlength=n_modes)

    def components(self, mode: int) -> list[GaussianComponent]:
        """Components of one mode, in storage order."""
        idx = np.flatnonzero(self.model == mode)
        return [
            GaussianComponent(float(self.log_weights[i]), self.means[i].copy(), self.covs[i].copy())
            for i in idx
        ]

    @property
    def ancestor_position(self) -> tuple[int, int] | None:
        """(mode, index within that mode's components) of the ancestor."""
        if self.ancestor is None:
            return None
        mode = int(self.model[self.ancestor])
        within = int(np.sum(self.model[: self.ancestor] == mode))
        return mode, within

    def total_log_weight(self) -> float:
        return logsumexp(self.log_weights)

    def normalized(self) -> "HybridMixture":
        """Copy with log weights shifted to sum to one."""
        return HybridMixture(
            model=self.model.copy(),
            log_weights=self.log_weights - self.total_log_weight(),
            means=self.means.copy(),
            covs=self.covs.copy(),
            ancestor=self.ancestor,
            ancestor_dead=self.ancestor_dead,
        )
