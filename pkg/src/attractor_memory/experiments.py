"""Experiment drivers: training loops, denoising, prior sampling, capacity
sweeps, gradient checking, and CSV reporting.

Every driver takes a seed and derives per-trial streams with seed + trial
index, so trials are independent of execution order; sweeps run their trials
in a small thread pool but always emit rows in trial-index order. All CSV
floats are written with repr(), which round-trips exactly, so reruns with the
same seed produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .attractor import EnergyTrace, iterate, sample_prior
from .data import Corpus, NoiseSpec, inject_noise
from .episodic import (AdamState, Episode, bounds, prior_state, read_episode,
                       train_step, write_episode, episode_objective)
from .errors import DimensionError, DomainError
from .memory import MemoryState
from .model import ModelParams, init_params, param_arrays, trace_params, with_arrays
from .rng import PortableRng
from . import tape as T

_MAX_WORKERS = 8

TRAIN_CSV_COLUMNS = ["step", "objective", "elbo_LT", "L_AE", "kl_w_sum", "kl_M"]
TRACE_CSV_COLUMNS = ["trial", "iteration", "energy", "recon_term", "kl_term",
                     "hamming_to_reference"]
CAPACITY_CSV_COLUMNS = ["length", "n_classes", "trials", "mean_error"]
GRADCHECK_CSV_COLUMNS = ["name", "row", "col", "analytic", "fd", "abs_err", "rel_err"]


@dataclass
class RunConfig:
    K: int = 32
    C: int = 32
    T: int = 8
    seed: int = 0
    learning_rate: float = 1e-4
    train_steps: int = 2000
    batch_episodes: int = 4
    refine_iters: int = 0
    likelihood: str = "bernoulli"
    sigma_xi_sq: float = 1.0
    sigma_out_sq: float = 0.25
    noise_spec: str = "none"
    hidden: int = 64
    objective: str = "lt"

    def __post_init__(self):
        if min(self.K, self.C, self.T, self.batch_episodes, self.hidden) < 1:
            raise DomainError("K, C, T, batch_episodes, hidden must be >= 1")
        if self.train_steps < 0 or self.refine_iters < 0:
            raise DomainError("train_steps and refine_iters must be >= 0")
        if self.learning_rate < 0:
            raise DomainError("learning_rate must be >= 0")
        if self.sigma_xi_sq <= 0 or self.sigma_out_sq <= 0:
            raise DomainError("sigma_xi_sq and sigma_out_sq must be positive")
        if self.likelihood not in ("bernoulli", "gaussian"):
            raise DomainError(f"unknown likelihood {self.likelihood!r}")
        if self.objective not in ("lt", "bt"):
            raise DomainError(f"objective must be lt or bt, got {self.objective!r}")


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_config_echo(path, config: dict) -> None:
    with open(path, "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _map_trials(fn: Callable[[int], object], n: int) -> list:
    """Run fn(0..n-1) in a worker pool; results come back in trial order."""
    if n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=min(_MAX_WORKERS, n)) as pool:
        return list(pool.map(fn, range(n)))


# ------------------------------------------------------------------- training

def sample_episodes(corpus: Corpus, length: int, count: int,
                    rng: PortableRng) -> list[Episode]:
    """Seeded episode batch; patterns drawn without replacement when the
    corpus is large enough, with replacement otherwise."""
    n = len(corpus)
    out = []
    for _ in range(count):
        if length <= n:
            idx = rng.choice_no_replace(n, length)
        else:
            idx = rng.integers(n, length)
        out.append(Episode(corpus.patterns[idx]))
    return out


def init_from_config(corpus_dim: int, cfg: RunConfig) -> ModelParams:
    return init_params(dim_in=corpus_dim, code_size=cfg.C, mem_rows=cfg.K,
                       hidden=(cfg.hidden,), likelihood=cfg.likelihood,
                       seed=cfg.seed, sigma_xi_sq=cfg.sigma_xi_sq,
                       sigma_out_sq=cfg.sigma_out_sq)


def train_loop(params: ModelParams, corpus: Corpus, cfg: RunConfig,
               progress: Optional[Callable[[dict], None]] = None):
    """Run cfg.train_steps optimizer steps; returns (params, metric rows).

    One generator seeded with cfg.seed drives both batch assembly and read
    sampling, consumed in a fixed order, so the whole loop is reproducible.
    """
    rng = PortableRng(cfg.seed)
    state = AdamState()
    rows = []
    for step in range(cfg.train_steps):
        batch = sample_episodes(corpus, cfg.T, cfg.batch_episodes, rng)
        params, state, metrics = train_step(
            params, batch, state, rng, lr=cfg.learning_rate,
            refine_iters=cfg.refine_iters, objective=cfg.objective)
        row = {"step": step, **metrics}
        rows.append(row)
        if progress is not None:
            progress(row)
    return params, rows


# ----------------------------------------------------------------- retrieval

def _hamming(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.sum(a != b))


def trace_rows(trial: int, trace: EnergyTrace,
               reference: Optional[np.ndarray]) -> list[dict]:
    """Flatten one energy trace into CSV rows; the reference (if any) is the
    pattern Hamming distances are measured against."""
    rows = []
    for i, step in enumerate(trace.iterations):
        ham = _hamming(trace.states[i], reference) if reference is not None else ""
        rows.append({"trial": trial, "iteration": i, "energy": step.energy,
                     "recon_term": step.recon_neg_loglik, "kl_term": step.kl_w,
                     "hamming_to_reference": ham})
    return rows


@dataclass
class TrialSummary:
    trial: int
    initial_hamming: int
    final_hamming: int
    initial_energy: float
    final_energy: float
    frac_nonincreasing: float
    converged: bool


def _frac_nonincreasing(energies: list[float], tol: float = 1e-9) -> float:
    if len(energies) < 2:
        return 1.0
    steps = [energies[i + 1] <= energies[i] + tol for i in range(len(energies) - 1)]
    return float(np.mean(steps))


def run_denoise(params: ModelParams, written: np.ndarray, noise: NoiseSpec,
                trials: int, max_iters: int, seed: int):
    """Write the given patterns (T x D) into a fresh memory, then repeatedly
    corrupt one of them and let the attractor clean it up.

    Trial i uses the stream seed + i to pick the pattern and the corruption.
    Returns (csv rows, list of TrialSummary, memory state).
    """
    ep = Episode(written)
    mem = write_episode(params, prior_state(params), ep).memory
    base = PortableRng(seed)

    def one(i: int):
        rng = base.stream(i)
        idx = rng.integer(len(ep))
        reference = ep.patterns[idx]
        x0 = inject_noise(reference, noise, rng)
        trace = iterate(params, mem, x0, max_iters)
        rows = trace_rows(i, trace, reference)
        summary = TrialSummary(
            trial=i,
            initial_hamming=_hamming(x0, reference),
            final_hamming=_hamming(trace.final_pattern, reference),
            initial_energy=trace.energies[0],
            final_energy=trace.energies[-1],
            frac_nonincreasing=_frac_nonincreasing(trace.energies),
            converged=trace.converged)
        return rows, summary

    results = _map_trials(one, trials)
    all_rows = [r for rows, _ in results for r in rows]
    return all_rows, [s for _, s in results], mem


def run_sample(params: ModelParams, mem: MemoryState, stored: np.ndarray,
               n_samples: int, max_iters: int, seed: int):
    """Prior draws cleaned up by the attractor; Hamming is measured against
    the nearest stored pattern at each iteration.

    Returns (csv rows, list of TrialSummary (hamming = nearest-stored)).
    """
    traces = sample_prior(params, mem, n_samples, max_iters, PortableRng(seed))
    all_rows = []
    summaries = []
    for i, trace in enumerate(traces):
        rows = []
        for j, step in enumerate(trace.iterations):
            ham = min(_hamming(trace.states[j], s) for s in stored)
            rows.append({"trial": i, "iteration": j, "energy": step.energy,
                         "recon_term": step.recon_neg_loglik, "kl_term": step.kl_w,
                         "hamming_to_reference": ham})
        all_rows.extend(rows)
        summaries.append(TrialSummary(
            trial=i,
            initial_hamming=rows[0]["hamming_to_reference"],
            final_hamming=rows[-1]["hamming_to_reference"],
            initial_energy=trace.energies[0],
            final_energy=trace.energies[-1],
            frac_nonincreasing=_frac_nonincreasing(trace.energies),
            converged=trace.converged))
    return all_rows, summaries


# ------------------------------------------------------------------- capacity

def retrieval_error(params: ModelParams, episode: Episode,
                    refine_iters: int = 0) -> float:
    """Negative conditional ELBO per pattern after writing then deterministic
    reading of the episode. Lower is better retrieval."""
    mem0 = prior_state(params)
    wr = write_episode(params, mem0, episode, refine_iters=refine_iters)
    reads = read_episode(params, wr.memory, episode, sample=False)
    rep = bounds(params, mem0, wr, reads, episode)
    return -float(rep.cond_elbo_per_pattern)


def run_capacity(params: ModelParams, corpus: Corpus, episode_lengths: list[int],
                 n_classes_list: list[int], trials: int, seed: int):
    """Mean retrieval error per (episode length, class count) cell.

    Each trial picks that many classes, assembles an episode of the given
    length from their patterns (with replacement: episodes may be longer than
    the class pool), writes it, reads it back, and scores the error.
    """
    if corpus.class_ids is None:
        raise DomainError("capacity sweep needs a corpus with class ids")
    for length in episode_lengths:
        if length > len(corpus):
            raise DimensionError(
                f"episode length {length} exceeds corpus size {len(corpus)}")
    classes = sorted(set(corpus.class_ids))
    by_class = {c: np.flatnonzero(np.array(corpus.class_ids) == c) for c in classes}
    base = PortableRng(seed)
    rows = []
    for length in episode_lengths:
        for k in n_classes_list:
            if k > len(classes):
                raise DimensionError(f"{k} classes requested, corpus has {len(classes)}")

            def one(i: int, length=length, k=k):
                rng = base.stream(i)
                chosen = [classes[j] for j in rng.choice_no_replace(len(classes), k)]
                pool = np.concatenate([by_class[c] for c in chosen])
                idx = pool[rng.integers(len(pool), length)]
                return retrieval_error(params, Episode(corpus.patterns[idx]))

            errs = _map_trials(one, trials)
            rows.append({"length": length, "n_classes": k, "trials": trials,
                         "mean_error": float(np.mean(errs))})
    return rows


# ------------------------------------------------------------------ gradcheck

def run_gradcheck(dim_in: int = 6, code_size: int = 3, mem_rows: int = 4,
                  episode_len: int = 3, seed: int = 0, likelihood: str = "bernoulli",
                  hidden: tuple[int, ...] = (5,), h: float = 1e-5,
                  rel_tol: float = 1e-4, abs_floor: float = 1e-8,
                  refine_iters: int = 0, objective: str = "lt"):
    """Compare every parameter gradient of the training objective against
    central finite differences. Returns (rows, max_rel_err, passed)."""
    params = init_params(dim_in, code_size, mem_rows, hidden=hidden,
                         likelihood=likelihood, seed=seed)
    pat_rng = PortableRng(seed + 1)
    if likelihood == "bernoulli":
        pats = (pat_rng.random((episode_len, dim_in)) < 0.5).astype(np.float64)
    else:
        pats = pat_rng.normal((episode_len, dim_in))
    episode = Episode(pats)

    def objective_at(arrays: dict[str, np.ndarray]) -> float:
        p = with_arrays(params, arrays)
        obj, _ = episode_objective(p, [episode], PortableRng(seed + 2),
                                   refine_iters=refine_iters, objective=objective)
        return float(obj)

    tape = T.Tape()
    traced, leaves = trace_params(params, tape)
    obj, _ = episode_objective(traced, [episode], PortableRng(seed + 2),
                               refine_iters=refine_iters, objective=objective)
    tape.backward(obj)
    grads = {name: tape.grad(node) for name, node in leaves.items()}

    arrays = param_arrays(params)
    rows = []
    max_rel = 0.0
    passed = True
    for name, arr in arrays.items():
        for (r, c) in np.ndindex(arr.shape):
            plus = {k: v.copy() for k, v in arrays.items()}
            minus = {k: v.copy() for k, v in arrays.items()}
            plus[name][r, c] += h
            minus[name][r, c] -= h
            fd = (objective_at(plus) - objective_at(minus)) / (2.0 * h)
            g = float(grads[name][r, c])
            abs_err = abs(g - fd)
            rel_err = abs_err / max(abs(g), abs(fd), 1e-300)
            ok = abs_err <= abs_floor or rel_err <= rel_tol
            if abs_err > abs_floor:
                max_rel = max(max_rel, rel_err)
            passed = passed and ok
            rows.append({"name": name, "row": r, "col": c, "analytic": g,
                         "fd": fd, "abs_err": abs_err, "rel_err": rel_err})
    return rows, max_rel, passed
