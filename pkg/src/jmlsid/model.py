"""Jump Markov linear system models: parameter containers, validation,
simulation, and the cross-covariance decorrelation rewrite used by the
filtering and smoothing passes.

A system with m modes maps [x_k; u_k] to [y_k; x_{k+1}] through a per-mode
stacked gain [[C, D], [A, B]] plus jointly Gaussian noise with covariance
[[R, S^T], [S, Q]]; the active mode follows a Markov chain with a
column-stochastic transition matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import cholesky_with_jitter, symmetrize

__all__ = [
    "ModelMatrices",
    "JmlsParams",
    "DecorrelatedModel",
    "Dataset",
    "HybridPrior",
    "validate_params",
    "decorrelate",
    "simulate",
]


def _mat(value) -> np.ndarray:
    return np.atleast_2d(np.asarray(value, dtype=float)).copy()


def _freeze(*arrays: np.ndarray) -> None:
    for arr in arrays:
        arr.flags.writeable = False


@dataclass(frozen=True)
class ModelMatrices:
    """Matrices of a single linear mode.

    Q and R are symmetrised on construction and all arrays are stored
    read-only.  Scalars and 1-d inputs are promoted to 2-d.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        A = _mat(self.A)
        B = _mat(self.B)
        C = _mat(self.C)
        D = _mat(self.D)
        Q = symmetrize(_mat(self.Q))
        R = symmetrize(_mat(self.R))
        S = _mat(self.S)
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != n_x:
            raise ValueError(f"B must have {n_x} rows, got shape {B.shape}")
        n_u = B.shape[1]
        if C.shape[1] != n_x:
            raise ValueError(f"C must have {n_x} columns, got shape {C.shape}")
        n_y = C.shape[0]
        expected = {"D": (D, (n_y, n_u)), "Q": (Q, (n_x, n_x)), "R": (R, (n_y, n_y)), "S": (S, (n_x, n_y))}
        for name, (arr, shape) in expected.items():
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
        _freeze(A, B, C, D, Q, R, S)
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D), ("Q", Q), ("R", R), ("S", S)):
            object.__setattr__(self, name, arr)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def gain(self) -> np.ndarray:
        """Stacked gain [[C, D], [A, B]] acting on [x_k; u_k]."""
        return np.block([[self.C, self.D], [self.A, self.B]])

    @property
    def noise_cov(self) -> np.ndarray:
        """Joint noise covariance [[R, S^T], [S, Q]] of [y_k; x_{k+1}]."""
        return np.block([[self.R, self.S.T], [self.S, self.Q]])


@dataclass(frozen=True)
class JmlsParams:
    """Full parameter set: one ModelMatrices per mode plus the transition
    matrix T, where T[i, j] is the probability of moving from mode j to
    mode i (columns sum to one).

    Construction only checks shapes; numeric requirements are reported by
    :func:`validate_params` so that deliberately broken sets can be built
    and inspected.
    """

    models: tuple[ModelMatrices, ...]
    T: np.ndarray

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ValueError("at least one mode is required")
        T = _mat(self.T)
        if T.shape != (len(models), len(models)):
            raise ValueError(f"T must have shape {(len(models), len(models))}, got {T.shape}")
        _freeze(T)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "T", T)

    @property
    def m(self) -> int:
        return len(self.models)

    @property
    def n_x(self) -> int:
        return self.models[0].n_x

    @property
    def n_u(self) -> int:
        return self.models[0].n_u

    @property
    def n_y(self) -> int:
        return self.models[0].n_y


def validate_params(params: JmlsParams) -> list[str]:
    """Check a parameter set and return a list of violation messages.

    An empty list means the set is usable: all modes share dimensions, T
    columns are nonnegative and sum to one within 1e-9, every joint noise
    covariance is positive semi-definite (minimum eigenvalue above
    -1e-10 times its norm), and every R is positive definite.
    """
    issues: list[str] = []
    first = params.models[0]
    for i, mod in enumerate(params.models[1:], start=1):
        dims = (mod.n_x, mod.n_u, mod.n_y)
        ref = (first.n_x, first.n_u, first.n_y)
        if dims != ref:
            issues.append(f"model {i} dimensions {dims} differ from model 0 dimensions {ref}")
    for j in range(params.m):
        col = params.T[:, j]
        if np.any(col < 0):
            issues.append(f"T column {j} has negative entries")
        total = float(col.sum())
        if abs(total - 1.0) > 1e-9:
            issues.append(f"T column {j} sums to {total:.12g}")
    for i, mod in enumerate(params.models):
        joint = mod.noise_cov
        eigs = np.linalg.eigvalsh(joint)
        if eigs[0] < -1e-10 * np.linalg.norm(joint):
            issues.append(
                f"joint noise covariance of model {i} is not positive semi-definite "
                f"(min eigenvalue {eigs[0]:.3g})"
            )
        try:
            np.linalg.cholesky(mod.R)
        except np.linalg.LinAlgError:
            issues.append(f"R of model {i} is not positive definite")
    return issues


@dataclass(frozen=True)
class DecorrelatedModel:
    """One mode rewritten so process and measurement noise are independent.

    The rewritten dynamics consume the augmented input [u_k; y_k].  With
    zero cross covariance the rewrite leaves A, C, Q, R untouched and only
    pads B and D with zero columns.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        _freeze(self.A, self.B, self.C, self.D, self.Q, self.R)


def decorrelate(params: JmlsParams) -> list[DecorrelatedModel]:
    """Rewrite every mode to remove the noise cross covariance.

    A_bar = A - S R^-1 C, B_bar = [B - S R^-1 D, S R^-1], C_bar = C,
    D_bar = [D, 0], Q_bar = Q - S R^-1 S^T, R_bar = R.  Raises ValueError
    naming the offending mode if any R is singular.
    """
    out = []
    for idx, mod in enumerate(params.models):
        try:
            np.linalg.cholesky(mod.R)
        except np.linalg.LinAlgError:
            raise ValueError(f"R is singular (not positive definite) for model {idx}") from None
        gain = np.linalg.solve(mod.R, mod.S.T).T  # S R^-1, via symmetric solve
        out.append(
            DecorrelatedModel(
                A=mod.A - gain @ mod.C,
                B=np.hstack([mod.B - gain @ mod.D, gain]),
                C=mod.C.copy(),
                D=np.hstack([mod.D, np.zeros((mod.n_y, mod.n_y))]),
                Q=symmetrize(mod.Q - gain @ mod.S.T),
                R=mod.R.copy(),
            )
        )
    return out


@dataclass(frozen=True)
class Dataset:
    """Input/output record of equal length: u is (N, n_u), y is (N, n_y)."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if u.ndim != 2 or y.ndim != 2:
            raise ValueError("u and y must be (N, dim) arrays")
        if u.shape[0] != y.shape[0]:
            raise ValueError(f"u has {u.shape[0]} rows but y has {y.shape[0]}")
        if u.shape[0] < 1:
            raise ValueError("dataset must contain at least one time step")
        u = u.copy()
        y = y.copy()
        _freeze(u, y)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def n_steps(self) -> int:
        return self.u.shape[0]

    @property
    def n_u(self) -> int:
        return self.u.shape[1]

    @property
    def n_y(self) -> int:
        return self.y.shape[1]

    @property
    def augmented_inputs(self) -> np.ndarray:
        """Per-step augmented input [u_k; y_k], shape (N, n_u + n_y)."""
        return np.hstack([self.u, self.y])


@dataclass(frozen=True)
class HybridPrior:
    """Gaussian-mixture prior over the initial hybrid state (x_1, z_1).

    Stored as flat component arrays: ``model[i]`` is the mode of component
    i, and the weights sum to one across all components of all modes.
    """

    model: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        model = np.asarray(self.model, dtype=int).copy()
        weights = np.asarray(self.weights, dtype=float).copy()
        means = np.atleast_2d(np.asarray(self.means, dtype=float)).copy()
        covs = np.asarray(self.covs, dtype=float).copy()
        if covs.ndim == 2:
            covs = covs[None, :, :]
        n = model.size
        if weights.shape != (n,) or means.shape[0] != n or covs.shape[0] != n:
            raise ValueError("component arrays have inconsistent lengths")
        if np.any(weights < 0):
            raise ValueError("prior weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"prior weights sum to {weights.sum()!r}, not 1")
        if np.any(model < 0):
            raise ValueError("mode indices must be nonnegative")
        for i in range(n):
            cholesky_with_jitter(covs[i], f"prior covariance of component {i}")
        _freeze(model, weights, means, covs)
        for name, arr in (("model", model), ("weights", weights), ("means", means), ("covs", covs)):
            object.__setattr__(self, name, arr)

    @property
    def n_x(self) -> int:
        return self.means.shape[1]

    @classmethod
    def diffuse(cls, n_modes: int, n_x: int, scale: float = 10.0) -> "HybridPrior":
        """One zero-mean component per mode with weight 1/m and scale*I
        covariance; the fallback when no explicit state prior is given."""
        eye = np.eye(n_x)
        return cls(
            model=np.arange(n_modes),
            weights=np.full(n_modes, 1.0 / n_modes),
            means=np.zeros((n_modes, n_x)),
            covs=np.stack([scale * eye] * n_modes),
        )


def simulate(
    params: JmlsParams,
    inputs: np.ndarray,
    init: tuple[np.ndarray, int],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate a noisy trajectory through the switched system.

    Parameters
    ----------
    params : JmlsParams
        System parameters; rejected (ValueError) if validate_params reports
        any violation.
    inputs : array, shape (N, n_u)
        Deterministic input sequence.
    init : (x1, z1)
        Initial continuous state and mode index.
    rng : numpy Generator
        Source of randomness; fixed seed gives a bit-identical trajectory.

    Returns
    -------
    y : (N, n_y), x : (N+1, n_x), z : (N+1,) int
    """
    issues = validate_params(params)
    if issues:
        raise ValueError("invalid parameters: " + "; ".join(issues))
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[1] != params.n_u:
        raise ValueError(f"inputs must have {params.n_u} columns, got {u.shape[1]}")
    n_steps = u.shape[0]
    n_x, n_y = params.n_x, params.n_y
    x0, z0 = init
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != n_x:
        raise ValueError(f"initial state must have dimension {n_x}")
    z0 = int(z0)
    if not 0 <= z0 < params.m:
        raise ValueError(f"initial mode {z0} out of range")

    gains = [mod.gain for mod in params.models]
    noise_chols = [cholesky_with_jitter(mod.noise_cov, f"noise covariance of model {i}")
                   for i, mod in enumerate(params.models)]
    transition_cdf = np.cumsum(params.T, axis=0)

    x = np.empty((n_steps + 1, n_x))
    y = np.empty((n_steps, n_y))
    z = np.empty(n_steps + 1, dtype=int)
    x[0] = x0
    z[0] = z0
    for k in range(n_steps):
        mode = z[k]
        noise = noise_chols[mode] @ rng.standard_normal(n_y + n_x)
        stacked = gains[mode] @ np.concatenate([x[k], u[k]]) + noise
        y[k] = stacked[:n_y]
        x[k + 1] = stacked[n_y:]
        draw = rng.uniform()
        z[k + 1] = min(int(np.searchsorted(transition_cdf[:, mode], draw, side="left")), params.m - 1)
    return y, x, z
