"""Attractor dynamics: iterated retrieval, energy traces, prior sampling.

One retrieval step maps a pattern to the decoder's most likely output after
addressing and reading memory:

    x  ->  z = encode(x)  ->  mu = address(mem, z)  ->  z_hat = read(mem, mu)
       ->  x' = mode(decode(z_hat))

Iterating this map pulls noisy queries toward stored patterns. Convergence is
a fixed point of the map: exact equality for Bernoulli patterns, infinity-norm
difference <= 1e-6 for Gaussian ones. Bernoulli iteration can in principle
enter a short cycle; revisiting any earlier state other than the immediate
predecessor halts the loop as non-converged.

Patterns at this level are 1-D length-D arrays (rows of a corpus).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError
from .memory import AddressPosterior, MemoryState, address, kl_weights, read
from .model import ModelParams, decode_loglik, decode_mode, encode
from .rng import PortableRng

GAUSSIAN_FIXED_POINT_TOL = 1e-6


@dataclass
class TraceStep:
    energy: float
    recon_neg_loglik: float
    kl_w: float
    converged: bool


@dataclass
class EnergyTrace:
    iterations: list[TraceStep]
    states: list[np.ndarray]          # visited patterns, states[i] scored by iterations[i]

    @property
    def final_pattern(self) -> np.ndarray:
        return self.states[-1]

    @property
    def converged(self) -> bool:
        return self.iterations[-1].converged

    @property
    def energies(self) -> list[float]:
        return [s.energy for s in self.iterations]


def _flat(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != dim:
        raise DimensionError(f"{what}: length {arr.shape[0]}, expected {dim}")
    return arr


def predict(params: ModelParams, mem: MemoryState, x: np.ndarray):
    """One retrieval step. Returns (next pattern 1-D, address posterior,
    energy, reconstruction negative log-lik, weight KL) for the query x."""
    xq = _flat(x, params.dim_in, "predict query").reshape(-1, 1)
    z = encode(params, xq)
    mu = address(mem, z)
    q = AddressPosterior(mu_w=mu, sigma_w_sq=params.sigma_w_sq())
    ev = decode_loglik(params, read(mem, mu), xq)
    kl = kl_weights(q)
    recon_neg = -float(ev.log_prob)
    return ev.mode.reshape(-1), q, recon_neg + kl, recon_neg, kl


def _same_pattern(a: np.ndarray, b: np.ndarray, likelihood: str) -> bool:
    if likelihood == "bernoulli":
        return bool(np.array_equal(a, b))
    return bool(np.max(np.abs(a - b)) <= GAUSSIAN_FIXED_POINT_TOL)


def iterate(params: ModelParams, mem: MemoryState, x0: np.ndarray,
            max_iters: int) -> EnergyTrace:
    """Run the retrieval map from x0 for at most max_iters steps.

    The trace scores every visited state (including x0), so it holds at most
    max_iters + 1 steps. The final step's converged flag reports whether a
    fixed point was reached.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x = _flat(x0, params.dim_in, "iterate start").copy()
    iterations: list[TraceStep] = []
    states: list[np.ndarray] = []
    visited: dict[bytes, int] = {}
    prev: Optional[np.ndarray] = None
    for n in range(max_iters + 1):
        x_next, _, e, recon, kl = predict(params, mem, x)
        conv = prev is not None and _same_pattern(x, prev, params.likelihood)
        iterations.append(TraceStep(energy=e, recon_neg_loglik=recon, kl_w=kl, converged=conv))
        states.append(x)
        if conv:
            break
        if params.likelihood == "bernoulli":
            key = x.tobytes()
            seen = visited.get(key)
            if seen is not None and seen < n - 1:
                break                      # cycle: revisit that is not a fixed point
            visited[key] = n
        if n == max_iters:
            break
        prev = x
        x = x_next
    return EnergyTrace(iterations=iterations, states=states)


def sample_prior(params: ModelParams, mem: MemoryState, n_samples: int,
                 max_iters: int, rng: PortableRng) -> list[EnergyTrace]:
    """Draw w ~ N(0, I), decode its read-out to a pattern, then run the
    attractor iteration on it. Returns one trace per sample."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    traces = []
    for _ in range(n_samples):
        w = rng.normal((mem.rows, 1))
        x0 = decode_mode(params, read(mem, w)).reshape(-1)
        traces.append(iterate(params, mem, x0, max_iters))
    return traces
