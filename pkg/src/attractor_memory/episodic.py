"""Episode-level operations: writing, reading, variational bounds, training.

An episode is an ordered batch of T patterns stored into one memory state.
Writing is deterministic: each pattern is embedded, addressed against the
current memory, and folded in with the exact Bayes update, using the address
mean only. Optional refinement iterations re-address against the updated
memory but always re-apply the update to the pre-step state, so each pattern
is incorporated exactly once.

Reading re-addresses each pattern against the final memory; during training
the weights are sampled with the reparameterization w = mu + sigma_w * eps so
the gradient reaches sigma_w, otherwise the mean is used.

Two training objectives are available (see bounds):
- elbo_LT: sum_t [log p(x_t | w_t) - KL(q(w_t)||N(0,I))] - KL(q(M_T)||p(M_0)),
  the episode evidence bound with the memory KL charged once at the end;
- bound_BT: same per-pattern terms taken at the writing-phase addresses
  against the final memory, minus KL(q(M_T)||q(M_{T-1})) minus
  KL(q(M_{T-1})||p(M_0)); a looser, cheaper bound that only needs the last
  two memory states.

The overall objective adds an autoencoder term (mean reconstruction
log-likelihood straight through encode/decode) and is maximized with Adam.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import tape as T
from .errors import DimensionError, NumericalError
from .memory import (AddressPosterior, MemoryState, address, kl_memory,
                     kl_weights, read, update)
from .model import (ModelParams, autoencoder_loglik, decode_loglik, encode,
                    param_arrays, trace_params, with_arrays)
from .rng import PortableRng

Scalar = Union[float, "T.Node"]


@dataclass(frozen=True)
class Episode:
    """Ordered patterns, one per row (T x D)."""

    patterns: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.patterns, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise DimensionError(f"episode needs a non-empty T x D array, got {arr.shape}")
        object.__setattr__(self, "patterns", arr)

    def __len__(self) -> int:
        return self.patterns.shape[0]

    @property
    def dim(self) -> int:
        return self.patterns.shape[1]

    def column(self, t: int) -> np.ndarray:
        return self.patterns[t].reshape(-1, 1)


@dataclass
class WriteResult:
    memory: MemoryState                       # q(M_T)
    memory_prev: MemoryState                  # q(M_{T-1})
    addresses: list[AddressPosterior]         # one per pattern, mean-only writes
    kl_w: list[Scalar]                        # KL(q(w_t) || N(0,I)) per pattern


@dataclass
class ReadStep:
    z_hat: object                             # C x 1 reconstruction embedding
    address: AddressPosterior
    log_prob: Scalar


@dataclass
class BoundReport:
    recon_sum: Scalar
    kl_w_sum: Scalar
    kl_memory: Scalar
    elbo_LT: Scalar
    cond_elbo_per_pattern: Scalar
    bound_BT: Optional[Scalar] = None


def sigma_w_of(params: ModelParams):
    """exp(log sigma_w_sq): float, or 1x1 Node when params are traced."""
    s = T.exp(params.log_sigma_w_sq)
    return s if isinstance(s, T.Node) else float(s[0, 0])


def prior_state(params: ModelParams) -> MemoryState:
    """Memory prior implied by the trained parameters:
    R = R0, U = exp(log sigma_U_sq) * I."""
    eye = np.eye(params.mem_rows)
    U = T.mul(T.exp(params.log_sigma_U_sq), eye)
    return MemoryState(R=params.R0, U=U, sigma_xi_sq=params.sigma_xi_sq)


def write_episode(params: ModelParams, mem0: MemoryState, episode: Episode,
                  refine_iters: int = 0) -> WriteResult:
    if episode.dim != params.dim_in:
        raise DimensionError(f"episode width {episode.dim} != model dim_in {params.dim_in}")
    if refine_iters < 0:
        raise ValueError("refine_iters must be >= 0")
    sw = sigma_w_of(params)
    mem, prev = mem0, mem0
    addresses: list[AddressPosterior] = []
    kls: list[Scalar] = []
    for t in range(len(episode)):
        x = episode.column(t)
        z = encode(params, x)
        mu = address(mem, z)
        new_mem = update(mem, mu, z)
        for _ in range(refine_iters):
            mu = address(new_mem, z)
            new_mem = update(mem, mu, z)
        q = AddressPosterior(mu_w=mu, sigma_w_sq=sw)
        addresses.append(q)
        kls.append(kl_weights(q))
        prev, mem = mem, new_mem
    return WriteResult(memory=mem, memory_prev=prev, addresses=addresses, kl_w=kls)


def read_episode(params: ModelParams, mem: MemoryState, episode: Episode,
                 sample: bool = False, rng: Optional[PortableRng] = None) -> list[ReadStep]:
    if sample and rng is None:
        raise ValueError("sampled reads need an rng")
    sw = sigma_w_of(params)
    steps: list[ReadStep] = []
    for t in range(len(episode)):
        x = episode.column(t)
        z = encode(params, x)
        mu = address(mem, z)
        if sample:
            eps = rng.normal((mem.rows, 1))
            sd = T.exp(T.scale(params.log_sigma_w_sq, 0.5))
            w = T.add(mu, T.mul(sd, eps))
        else:
            w = mu
        z_hat = read(mem, w)
        ll = decode_loglik(params, z_hat, x).log_prob
        steps.append(ReadStep(z_hat=z_hat,
                              address=AddressPosterior(mu_w=mu, sigma_w_sq=sw),
                              log_prob=ll))
    return steps


def bounds(params: ModelParams, mem0: MemoryState, wr: WriteResult,
           reads: list[ReadStep], episode: Episode,
           compute_bt: bool = False) -> BoundReport:
    """Evidence bounds for one episode; see the module docstring."""
    n = len(reads)
    recon = 0.0
    klw = 0.0
    for step in reads:
        recon = T.cadd(recon, step.log_prob)
        klw = T.cadd(klw, kl_weights(step.address))
    kl_mem = kl_memory(wr.memory, mem0)
    elbo = T.csub(T.csub(recon, klw), kl_mem)
    cond = T.cscale(T.csub(recon, klw), 1.0 / n)
    bt = None
    if compute_bt:
        bt_recon = 0.0
        for t, q in enumerate(wr.addresses):
            ll = decode_loglik(params, read(wr.memory, q.mu_w), episode.column(t)).log_prob
            bt_recon = T.cadd(bt_recon, ll)
        bt_klw = 0.0
        for v in wr.kl_w:
            bt_klw = T.cadd(bt_klw, v)
        bt_klm = T.cadd(kl_memory(wr.memory, wr.memory_prev),
                        kl_memory(wr.memory_prev, mem0))
        bt = T.csub(T.csub(bt_recon, bt_klw), bt_klm)
    return BoundReport(recon_sum=recon, kl_w_sum=klw, kl_memory=kl_mem,
                       elbo_LT=elbo, cond_elbo_per_pattern=cond, bound_BT=bt)


# ---------------------------------------------------------------- optimization

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_ascent(values: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                state: AdamState, lr: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8):
    """One Adam step in the ascent direction; returns (new values, new state)."""
    t = state.step + 1
    new_vals: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, val in values.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(val))
        v = state.v.get(name, np.zeros_like(val))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_vals[name] = val + lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_vals, AdamState(step=t, m=new_m, v=new_v)


def episode_objective(params: ModelParams, episodes: list[Episode],
                      rng: PortableRng, refine_iters: int = 0,
                      objective: str = "lt", sample_reads: bool = True):
    """Batch-mean training objective (L + autoencoder term); float or Node.

    Consumes rng draws in a fixed order (episode by episode, pattern by
    pattern), so two calls with identically seeded generators see the same
    noise regardless of whether params are traced.
    """
    if objective not in ("lt", "bt"):
        raise ValueError(f"objective must be 'lt' or 'bt', got {objective!r}")
    mem0 = prior_state(params)
    total = 0.0
    reports = []
    for ep in episodes:
        wr = write_episode(params, mem0, ep, refine_iters=refine_iters)
        reads = read_episode(params, wr.memory, ep, sample=sample_reads, rng=rng)
        rep = bounds(params, mem0, wr, reads, ep, compute_bt=(objective == "bt"))
        core = rep.elbo_LT if objective == "lt" else rep.bound_BT
        ae = 0.0
        for t in range(len(ep)):
            ae = T.cadd(ae, autoencoder_loglik(params, ep.column(t)))
        ae = T.cscale(ae, 1.0 / len(ep))
        total = T.cadd(total, T.cadd(core, ae))
        reports.append((rep, T.scalar_value(ae)))
    return T.cscale(total, 1.0 / len(episodes)), reports


def train_step(params: ModelParams, episodes: list[Episode], opt_state: AdamState,
               rng: PortableRng, lr: float = 1e-4, refine_iters: int = 0,
               objective: str = "lt", beta1: float = 0.9, beta2: float = 0.999,
               adam_eps: float = 1e-8):
    """One gradient-ascent step on a batch of episodes.

    Returns (new params, new optimizer state, metrics dict). With lr == 0 the
    parameters come back bit-identical. A non-finite objective raises
    NumericalError and nothing is updated.
    """
    tape = T.Tape()
    traced, leaves = trace_params(params, tape)
    obj, reports = episode_objective(traced, episodes, rng,
                                     refine_iters=refine_iters, objective=objective)
    obj_val = T.scalar_value(obj)
    if not np.isfinite(obj_val):
        raise NumericalError(f"objective is not finite ({obj_val}); step rejected")
    tape.backward(obj)
    grads = {name: tape.grad(node) for name, node in leaves.items()}
    new_arrays, new_state = adam_ascent(param_arrays(params), grads, opt_state,
                                        lr=lr, beta1=beta1, beta2=beta2, eps=adam_eps)
    new_params = with_arrays(params, new_arrays)

    def mean_over(fn) -> float:
        return float(np.mean([T.scalar_value(fn(rep)) for rep, _ in reports]))

    metrics = {
        "objective": obj_val,
        "elbo_LT": mean_over(lambda r: r.elbo_LT),
        "L_AE": float(np.mean([ae for _, ae in reports])),
        "kl_w_sum": mean_over(lambda r: r.kl_w_sum),
        "kl_M": mean_over(lambda r: r.kl_memory),
    }
    return new_params, new_state, metrics
