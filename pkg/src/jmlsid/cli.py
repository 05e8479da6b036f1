"""Command line interface: simulate datasets, run identification, summarise
chains.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage or configuration
errors.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._util import rng_stream
from .analysis import default_grid, frequency_response, relabel_sample, apply_relabeling, summarize
from .conjugate import ConjugateHyper
from .distributions import sample_categorical
from .gibbs import Chain, GibbsConfig, GibbsError, run_particle_gibbs
from .io import (
    CHAIN_FILE,
    DATA_FILE,
    LOGLIK_FILE,
    META_FILE,
    TRUTH_FILE,
    ConfigError,
    atomic_write_text,
    format_chain_line,
    load_dataset,
    load_params,
    load_prior,
    load_run_config,
    parse_chain_line,
    save_dataset,
    save_ground_truth,
    save_loglik,
)
from .model import Dataset, HybridPrior, simulate

_SIMULATE_STREAM = 2


def _cmd_simulate(args) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be at least 1, got {args.n}")
    params = load_params(args.params)
    rng = rng_stream(args.seed, _SIMULATE_STREAM)
    prior = HybridPrior.diffuse(params.m, params.n_x)
    mode0 = sample_categorical(prior.weights, rng)
    chol = np.linalg.cholesky(prior.covs[mode0])
    x0 = prior.means[mode0] + chol @ rng.standard_normal(params.n_x)
    inputs = rng.standard_normal((args.n, params.n_u))
    y, x, z = simulate(params, inputs, (x0, mode0), rng)
    out = Path(args.out)
    save_dataset(out / DATA_FILE, Dataset(u=inputs, y=y))
    save_ground_truth(out / TRUTH_FILE, x, z)
    return 0


def _cmd_identify(args) -> int:
    config = load_run_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    dataset = load_dataset(config.data_path)
    if config.prior_path is not None:
        prior = load_prior(config.prior_path)
    else:
        prior = ConjugateHyper.uninformative(config.m, config.n_x, dataset.n_u, dataset.n_y)
    if prior.m != config.m or prior.n_x != config.n_x:
        raise ConfigError(
            f"prior dimensions (m={prior.m}, n_x={prior.n_x}) do not match the "
            f"config (m={config.m}, n_x={config.n_x})"
        )
    if prior.n_u != dataset.n_u or prior.n_y != dataset.n_y:
        raise ConfigError("prior input/output dimensions do not match the data file")
    init_params = load_params(config.init_params_path) if config.init_params_path else None
    try:
        gibbs_config = GibbsConfig(
            iterations=config.iterations,
            max_components=config.max_components,
            seed=config.seed,
            prior=prior,
            burn_in=config.burn_in,
            thin=config.thin,
            init_params=init_params,
            store_trajectories=config.store_trajectories,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    meta = {
        "seed": gibbs_config.seed,
        "iterations": gibbs_config.iterations,
        "burn_in": gibbs_config.burn_in,
        "thin": gibbs_config.thin,
        "max_components": gibbs_config.max_components,
        "dimensions": {
            "n_x": config.n_x,
            "n_u": dataset.n_u,
            "n_y": dataset.n_y,
            "m": config.m,
            "n_steps": dataset.n_steps,
        },
        "versions": {
            "jmlsid": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    records = 0
    chain_path = out / CHAIN_FILE
    with open(chain_path, "w") as stream:
        def write_sample(iteration, params):
            nonlocal records
            stream.write(format_chain_line(iteration, params) + "\n")
            stream.flush()
            records += 1

        try:
            chain = run_particle_gibbs(gibbs_config, dataset, on_sample=write_sample)
        except GibbsError as err:
            meta.update(
                status="error",
                error=str(err),
                failed_iteration=err.iteration,
                records_written=records,
                timing_seconds=time.monotonic() - started,
            )
            save_loglik(out / LOGLIK_FILE, err.chain.log_likelihoods)
            atomic_write_text(out / META_FILE, json.dumps(meta, indent=2) + "\n")
            print(f"error: {err}", file=sys.stderr)
            return 1
    save_loglik(out / LOGLIK_FILE, chain.log_likelihoods)
    meta.update(status="ok", records_written=records, timing_seconds=time.monotonic() - started)
    atomic_write_text(out / META_FILE, json.dumps(meta, indent=2) + "\n")
    return 0


def _load_chain_file(chain_path: Path) -> tuple[Chain, dict]:
    if not chain_path.exists():
        raise ConfigError(f"chain file not found: {chain_path}")
    meta_path = chain_path.parent / META_FILE
    if not meta_path.exists():
        raise ConfigError(f"run metadata not found next to the chain: {meta_path}")
    meta = json.loads(meta_path.read_text())
    dims = meta["dimensions"]
    samples = []
    iterations = []
    malformed = 0
    total = 0
    with open(chain_path) as stream:
        for line in stream:
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                iteration, params = parse_chain_line(
                    line, dims["n_x"], dims["n_u"], dims["n_y"], dims["m"]
                )
            except (json.JSONDecodeError, KeyError, ValueError):
                malformed += 1
                continue
            samples.append(params)
            iterations.append(iteration)
    if malformed:
        print(f"warning: skipped {malformed} malformed chain line(s)", file=sys.stderr)
        if malformed > 0.01 * total:
            raise RuntimeError(f"{malformed} of {total} chain lines are malformed")
    if not samples:
        raise ConfigError(f"chain file {chain_path} holds no records")
    chain = Chain(
        samples=samples,
        sample_iterations=iterations,
        log_likelihoods=np.empty(0),
        seed=int(meta.get("seed", 0)),
        accepted=len(samples),
    )
    return chain, meta


def _cmd_summarize(args) -> int:
    chain, _meta = _load_chain_file(Path(args.chain))
    truth = load_params(args.truth) if args.truth else None
    grid = default_grid()
    reference = None
    if truth is not None:
        reference = [frequency_response(mod, grid) for mod in truth.models]
    summary = summarize(chain, relabel=True, reference=reference, frequencies=grid)

    out = Path(args.out)
    hist_dir = out / "histograms"
    hist_dir.mkdir(parents=True, exist_ok=True)
    for name, entry in summary.scalars.items():
        lines = ["bin_left,bin_right,density"]
        edges = entry["hist_edges"]
        for left, right, density in zip(edges[:-1], edges[1:], entry["hist_density"]):
            lines.append(f"{float(left)!r},{float(right)!r},{float(density)!r}")
        atomic_write_text(hist_dir / f"{name}.csv", "\n".join(lines) + "\n")

    lines = ["row,col,mean,median,lo95,hi95,lo99,hi99"]
    n_modes = chain.samples[0].m
    for i in range(n_modes):
        for j in range(n_modes):
            entry = summary.scalars[f"T_{i}_{j}"]
            lines.append(
                f"{i},{j},{entry['mean']!r},{entry['median']!r},"
                f"{entry['interval95'][0]!r},{entry['interval95'][1]!r},"
                f"{entry['interval99'][0]!r},{entry['interval99'][1]!r}"
            )
    atomic_write_text(out / "transition_marginals.csv", "\n".join(lines) + "\n")

    lines = ["model,out,in,freq,mean_mag,lo3sd,hi3sd"]
    for mode, table in summary.bode.items():
        freqs = table["frequencies"]
        mean = table["mean"]
        lo = table["lo3sd"]
        hi = table["hi3sd"]
        for out_ch in range(mean.shape[1]):
            for in_ch in range(mean.shape[2]):
                for f_idx in range(freqs.size):
                    lines.append(
                        f"{mode},{out_ch},{in_ch},{float(freqs[f_idx])!r},"
                        f"{float(mean[f_idx, out_ch, in_ch])!r},"
                        f"{float(lo[f_idx, out_ch, in_ch])!r},"
                        f"{float(hi[f_idx, out_ch, in_ch])!r}"
                    )
    atomic_write_text(out / "bode_envelope.csv", "\n".join(lines) + "\n")

    if truth is not None:
        coverage = {}
        truth_values = {}
        for i in range(n_modes):
            for j in range(n_modes):
                truth_values[f"T_{i}_{j}"] = float(truth.T[i, j])
        if truth.n_x == 1:
            for idx in range(n_modes):
                for name in ("A", "D", "R"):
                    block = getattr(truth.models[idx], name)
                    rows, cols = block.shape
                    for r in range(rows):
                        for c in range(cols):
                            label = f"m{idx}_{name}" if rows == cols == 1 else f"m{idx}_{name}_{r}_{c}"
                            truth_values[label] = float(block[r, c])
        for name, value in truth_values.items():
            if name not in summary.scalars:
                continue
            entry = summary.scalars[name]
            lo95, hi95 = entry["interval95"]
            lo99, hi99 = entry["interval99"]
            coverage[name] = {
                "value": value,
                "lo95": lo95,
                "hi95": hi95,
                "covered95": bool(lo95 <= value <= hi95),
                "lo99": lo99,
                "hi99": hi99,
                "covered99": bool(lo99 <= value <= hi99),
            }
        atomic_write_text(out / "coverage.json", json.dumps(coverage, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jmlsid",
        description="Bayesian identification of jump Markov linear systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a dataset from a parameter file")
    sim.add_argument("--params", required=True, help="parameter JSON file")
    sim.add_argument("--n", type=int, required=True, help="number of time steps")
    sim.add_argument("--seed", type=int, required=True, help="random seed")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    ident = sub.add_parser("identify", help="run the particle Gibbs sampler")
    ident.add_argument("--config", required=True, help="run configuration JSON file")
    ident.add_argument("--seed", type=int, default=None, help="override the config seed")
    ident.set_defaults(func=_cmd_identify)

    summ = sub.add_parser("summarize", help="summarise a stored chain")
    summ.add_argument("--chain", required=True, help="chain.jsonl file")
    summ.add_argument("--truth", default=None, help="true parameter JSON file (optional)")
    summ.add_argument("--out", required=True, help="output directory")
    summ.set_defaults(func=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failure
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
