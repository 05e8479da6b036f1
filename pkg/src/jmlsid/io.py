"""File formats and persistence.

Parameters and priors travel as JSON, rectangular data as CSV, and chains
as JSON lines (one parameter record per line, streamable and append-safe).
Floats are serialized with Python's shortest round-trip representation, so
every finite value survives a write/read cycle exactly.  Whole-file writes
go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conjugate import ConjugateHyper
from .model import Dataset, JmlsParams, ModelMatrices

__all__ = [
    "ConfigError",
    "RunConfig",
    "atomic_write_text",
    "save_params",
    "load_params",
    "save_prior",
    "load_prior",
    "save_dataset",
    "load_dataset",
    "save_ground_truth",
    "chain_record",
    "format_chain_line",
    "parse_chain_line",
    "load_run_config",
]

DATA_FILE = "data.csv"
TRUTH_FILE = "trajectory.csv"
CHAIN_FILE = "chain.jsonl"
LOGLIK_FILE = "loglik.csv"
META_FILE = "run_meta.json"

_MODEL_KEYS = ("A", "B", "C", "D", "Q", "R", "S")


class ConfigError(Exception):
    """A configuration or usage problem the user must fix (exit code 2)."""


def atomic_write_text(path, text: str) -> None:
    """Write a whole file through a temp file plus rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# parameters and priors

def params_to_dict(params: JmlsParams) -> dict:
    return {
        "T": params.T.tolist(),
        "models": [
            {key: getattr(mod, key).tolist() for key in _MODEL_KEYS}
            for mod in params.models
        ],
    }


def params_from_dict(payload: dict) -> JmlsParams:
    models = tuple(
        ModelMatrices(**{key: np.asarray(entry[key], dtype=float) for key in _MODEL_KEYS})
        for entry in payload["models"]
    )
    return JmlsParams(models=models, T=np.asarray(payload["T"], dtype=float))


def save_params(path, params: JmlsParams) -> None:
    atomic_write_text(path, json.dumps(params_to_dict(params), indent=2) + "\n")


def load_params(path) -> JmlsParams:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"parameter file not found: {path}")
    try:
        payload = json.loads(path.read_text())
        return params_from_dict(payload)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"cannot parse parameter file {path}: {err}") from err


def save_prior(path, prior: ConjugateHyper) -> None:
    payload = {
        "mean": prior.mean.tolist(),
        "col_cov": prior.col_cov.tolist(),
        "iw_scale": prior.iw_scale.tolist(),
        "iw_dof": prior.iw_dof.tolist(),
        "concentration": prior.concentration.tolist(),
        "n_x": prior.n_x,
        "n_u": prior.n_u,
        "n_y": prior.n_y,
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_prior(path) -> ConjugateHyper:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"prior file not found: {path}")
    try:
        payload = json.loads(path.read_text())
        return ConjugateHyper(
            mean=np.asarray(payload["mean"], dtype=float),
            col_cov=np.asarray(payload["col_cov"], dtype=float),
            iw_scale=np.asarray(payload["iw_scale"], dtype=float),
            iw_dof=np.asarray(payload["iw_dof"], dtype=float),
            concentration=np.asarray(payload["concentration"], dtype=float),
            n_x=int(payload["n_x"]),
            n_u=int(payload["n_u"]),
            n_y=int(payload["n_y"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"cannot parse prior file {path}: {err}") from err


# ---------------------------------------------------------------------------
# rectangular data

def _format_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_dataset(path, dataset: Dataset) -> None:
    """data.csv: header k,u_1..u_{n_u},y_1..y_{n_y}; k starts at 1."""
    header = (
        "k,"
        + ",".join(f"u_{i + 1}" for i in range(dataset.n_u))
        + ","
        + ",".join(f"y_{i + 1}" for i in range(dataset.n_y))
    )
    lines = [header]
    for k in range(dataset.n_steps):
        lines.append(f"{k + 1}," + _format_row(dataset.u[k]) + "," + _format_row(dataset.y[k]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")
    lines = path.read_text().strip().splitlines()
    if len(lines) < 2:
        raise ConfigError(f"data file {path} holds no rows")
    header = lines[0].split(",")
    n_u = sum(1 for name in header if name.startswith("u_"))
    n_y = sum(1 for name in header if name.startswith("y_"))
    if header[0] != "k" or n_u == 0 or n_y == 0 or len(header) != 1 + n_u + n_y:
        raise ConfigError(f"data file {path} has an unexpected header: {lines[0]}")
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if rows.shape[1] != len(header):
        raise ConfigError(f"data file {path} has ragged rows")
    return Dataset(u=rows[:, 1 : 1 + n_u], y=rows[:, 1 + n_u :])


def save_ground_truth(path, x: np.ndarray, z: np.ndarray) -> None:
    """trajectory.csv: header k,z,x_1..x_{n_x}; rows k = 1..N+1 with the
    simulated mode index (0-based) and state."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    header = "k,z," + ",".join(f"x_{i + 1}" for i in range(x.shape[1]))
    lines = [header]
    for k in range(x.shape[0]):
        lines.append(f"{k + 1},{int(z[k])}," + _format_row(x[k]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_loglik(path, log_likelihoods: np.ndarray) -> None:
    lines = ["iter,loglik"]
    for i, value in enumerate(log_likelihoods, start=1):
        lines.append(f"{i},{float(value)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# chains

def chain_record(iteration: int, params: JmlsParams) -> dict:
    """One chain record: T flattened column-major, model matrices row-major."""
    return {
        "iter": int(iteration),
        "T": params.T.ravel(order="F").tolist(),
        "models": [
            {key: getattr(mod, key).ravel(order="C").tolist() for key in _MODEL_KEYS}
            for mod in params.models
        ],
    }


def format_chain_line(iteration: int, params: JmlsParams) -> str:
    return json.dumps(chain_record(iteration, params), separators=(",", ":"))


def parse_chain_line(line: str, n_x: int, n_u: int, n_y: int, m: int) -> tuple[int, JmlsParams]:
    payload = json.loads(line)
    T = np.asarray(payload["T"], dtype=float).reshape((m, m), order="F")
    shapes = {
        "A": (n_x, n_x), "B": (n_x, n_u), "C": (n_y, n_x), "D": (n_y, n_u),
        "Q": (n_x, n_x), "R": (n_y, n_y), "S": (n_x, n_y),
    }
    models = []
    for entry in payload["models"]:
        blocks = {
            key: np.asarray(entry[key], dtype=float).reshape(shapes[key], order="C")
            for key in _MODEL_KEYS
        }
        models.append(ModelMatrices(**blocks))
    if len(models) != m:
        raise ValueError(f"record holds {len(models)} models, expected {m}")
    return int(payload["iter"]), JmlsParams(models=tuple(models), T=T)


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    """Identification run settings loaded from a JSON file.

    Paths are resolved relative to the config file.  ``prior_path`` and
    ``init_params_path`` are optional; a missing prior means the wide
    default built from the data dimensions.
    """

    data_path: Path
    output_dir: Path
    n_x: int
    m: int
    iterations: int
    max_components: int
    seed: int
    burn_in: int | None = None
    thin: int = 1
    prior_path: Path | None = None
    init_params_path: Path | None = None
    store_trajectories: bool = False


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"cannot parse config file {path}: {err}") from err
    required = ("data", "output", "n_x", "m", "iterations", "max_components", "seed")
    missing = [key for key in required if key not in payload]
    if missing:
        raise ConfigError(f"config file {path} is missing keys: {', '.join(missing)}")
    base = path.parent
    config = RunConfig(
        data_path=(base / payload["data"]).resolve(),
        output_dir=(base / payload["output"]).resolve(),
        n_x=int(payload["n_x"]),
        m=int(payload["m"]),
        iterations=int(payload["iterations"]),
        max_components=int(payload["max_components"]),
        seed=int(payload["seed"]),
        burn_in=int(payload["burn_in"]) if "burn_in" in payload else None,
        thin=int(payload.get("thin", 1)),
        prior_path=(base / payload["prior"]).resolve() if "prior" in payload else None,
        init_params_path=(base / payload["init_params"]).resolve() if "init_params" in payload else None,
        store_trajectories=bool(payload.get("store_trajectories", False)),
    )
    if not config.data_path.exists():
        raise ConfigError(f"data file not found: {config.data_path}")
    if config.prior_path is not None and not config.prior_path.exists():
        raise ConfigError(f"prior file not found: {config.prior_path}")
    if config.init_params_path is not None and not config.init_params_path.exists():
        raise ConfigError(f"initial parameter file not found: {config.init_params_path}")
    if config.n_x < 1 or config.m < 1:
        raise ConfigError("n_x and m must be positive")
    return config
