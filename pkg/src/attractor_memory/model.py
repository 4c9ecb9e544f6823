"""Encoder/decoder around the memory, likelihoods, and the energy function.

The model is deliberately small: fully connected layers with tanh hidden
units, a linear read-out, and either a Bernoulli (logit) or Gaussian
(fixed-variance) observation model. Parameters live in a ModelParams record
whose array fields may be plain ndarrays (inference) or tape Nodes (training);
every function here routes through the tape ops so both cases share one code
path.

Scalars that are trained (log sigma_w_sq, log sigma_U_sq) are stored as 1x1
arrays. The observation noise sigma_xi_sq and the Gaussian output variance
sigma_out_sq are fixed hyperparameters, never trained.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.special import expit

from . import tape as T
from .errors import DimensionError, DomainError, NumericalError
from .memory import AddressPosterior, MemoryState, kl_weights, read
from .rng import PortableRng

ArrayOrNode = Union[np.ndarray, "T.Node"]

LIKELIHOODS = ("bernoulli", "gaussian")
ACTIVATIONS = ("tanh", "relu", "sigmoid", "linear")


@dataclass(frozen=True)
class Layer:
    W: ArrayOrNode          # out x in
    b: ArrayOrNode          # out x 1
    act: str                # one of ACTIVATIONS

    @property
    def out_size(self) -> int:
        return T.value(self.W).shape[0]

    @property
    def in_size(self) -> int:
        return T.value(self.W).shape[1]


@dataclass(frozen=True)
class ModelParams:
    encoder: tuple[Layer, ...]
    decoder: tuple[Layer, ...]
    likelihood: str
    R0: ArrayOrNode                  # K x C memory prior mean
    log_sigma_w_sq: ArrayOrNode      # 1x1, trained
    log_sigma_U_sq: ArrayOrNode      # 1x1, trained
    sigma_xi_sq: float = 1.0         # fixed observation noise
    sigma_out_sq: float = 0.25       # fixed Gaussian output variance

    @property
    def dim_in(self) -> int:
        return self.encoder[0].in_size

    @property
    def code_size(self) -> int:
        return self.encoder[-1].out_size

    @property
    def mem_rows(self) -> int:
        return T.value(self.R0).shape[0]

    def sigma_w_sq(self) -> float:
        return float(np.exp(T.value(self.log_sigma_w_sq)[0, 0]))


@dataclass
class LikelihoodEval:
    log_prob: Union[float, "T.Node"]
    mode: np.ndarray                 # D x 1 most likely observation


def init_params(dim_in: int, code_size: int, mem_rows: int, hidden: tuple[int, ...] = (64,),
                likelihood: str = "bernoulli", seed: int = 0,
                sigma_w_sq: float = 0.3, sigma_U_sq: float = 1.0,
                sigma_xi_sq: float = 1.0, sigma_out_sq: float = 0.25) -> ModelParams:
    """Fresh parameters: Glorot-uniform weights, zero biases, R0 ~ N(0, 1)."""
    if likelihood not in LIKELIHOODS:
        raise ValueError(f"likelihood must be one of {LIKELIHOODS}, got {likelihood!r}")
    if min(dim_in, code_size, mem_rows) < 1:
        raise DimensionError("dim_in, code_size, mem_rows must all be >= 1")
    if sigma_w_sq <= 0 or sigma_U_sq <= 0 or sigma_xi_sq <= 0 or sigma_out_sq <= 0:
        raise DomainError("variances must be positive")
    rng = PortableRng(seed)

    def glorot(n_out: int, n_in: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (n_in + n_out))
        return (rng.random((n_out, n_in)) * 2.0 - 1.0) * limit

    def stack(sizes: tuple[int, ...]) -> tuple[Layer, ...]:
        layers = []
        for i in range(len(sizes) - 1):
            act = "tanh" if i < len(sizes) - 2 else "linear"
            layers.append(Layer(W=glorot(sizes[i + 1], sizes[i]),
                                b=np.zeros((sizes[i + 1], 1)), act=act))
        return tuple(layers)

    encoder = stack((dim_in, *hidden, code_size))
    decoder = stack((code_size, *hidden, dim_in))
    R0 = rng.normal((mem_rows, code_size))
    return ModelParams(
        encoder=encoder, decoder=decoder, likelihood=likelihood, R0=R0,
        log_sigma_w_sq=T.as_cell(math.log(sigma_w_sq)),
        log_sigma_U_sq=T.as_cell(math.log(sigma_U_sq)),
        sigma_xi_sq=float(sigma_xi_sq), sigma_out_sq=float(sigma_out_sq))


def apply_layers(layers: tuple[Layer, ...], x: ArrayOrNode):
    h = x
    for layer in layers:
        h = T.add(T.matmul(layer.W, h), layer.b)
        if layer.act != "linear":
            h = T.unary(layer.act, h)
    return h


def encode(params: ModelParams, x: ArrayOrNode):
    """Embedding z = enc(x), C x 1. Bernoulli inputs must lie in [0, 1]."""
    xv = T.value(x)
    if xv.shape != (params.dim_in, 1):
        raise DimensionError(f"encode: input shape {xv.shape}, "
                             f"expected ({params.dim_in}, 1)")
    if params.likelihood == "bernoulli" and (xv.min() < 0.0 or xv.max() > 1.0):
        raise DomainError("encode: Bernoulli inputs must lie in [0, 1]")
    return apply_layers(params.encoder, x)


def decode_logits(params: ModelParams, z: ArrayOrNode):
    """Raw decoder output (logits / Gaussian mean), D x 1."""
    zv = T.value(z)
    if zv.shape != (params.code_size, 1):
        raise DimensionError(f"decode: code shape {zv.shape}, "
                             f"expected ({params.code_size}, 1)")
    out = apply_layers(params.decoder, z)
    if not np.all(np.isfinite(T.value(out))):
        raise NumericalError("decoder produced non-finite output")
    return out


def decode_mode(params: ModelParams, z: ArrayOrNode) -> np.ndarray:
    """Most likely observation under the decoder, as a plain D x 1 array."""
    out = T.value(decode_logits(params, z))
    if params.likelihood == "bernoulli":
        return np.round(expit(out))
    return out.copy()


def decode_loglik(params: ModelParams, z: ArrayOrNode, x) -> LikelihoodEval:
    """Log p(x | decode(z)) and the decoder's modal reconstruction."""
    out = decode_logits(params, z)
    xv = T.value(x)
    if xv.shape != (params.dim_in, 1):
        raise DimensionError(f"decode_loglik: target shape {xv.shape}, "
                             f"expected ({params.dim_in}, 1)")
    if params.likelihood == "bernoulli":
        lp = T.bernoulli_loglik(out, xv)
        mode = np.round(expit(T.value(out)))
    else:
        resid = T.sub(out, xv)
        quad = T.sum_all(T.mul(resid, resid))
        const = -0.5 * params.dim_in * math.log(2.0 * math.pi * params.sigma_out_sq)
        lp = T.add(T.scale(quad, -0.5 / params.sigma_out_sq), T.as_cell(const))
        mode = T.value(out).copy()
    log_prob = lp if isinstance(lp, T.Node) else float(lp[0, 0])
    return LikelihoodEval(log_prob=log_prob, mode=mode)


def autoencoder_loglik(params: ModelParams, x):
    """Log-likelihood of x reconstructed straight through encode/decode,
    bypassing the memory."""
    return decode_loglik(params, encode(params, x), x).log_prob


def energy_terms(params: ModelParams, mem: MemoryState, x, q: AddressPosterior):
    """(energy, reconstruction negative log-lik, weight KL).

    energy = -log p(x | decode(R^T mu_w)) + KL(q(w) || N(0, I)), evaluated at
    the posterior means; lower is better. Terms are floats (or 1x1 Nodes when
    anything upstream is traced).
    """
    ll = decode_loglik(params, read(mem, q.mu_w), x).log_prob
    kl = kl_weights(q)
    return T.csub(kl, ll), T.cscale(ll, -1.0), kl


def energy(params: ModelParams, mem: MemoryState, x, q: AddressPosterior):
    return energy_terms(params, mem, x, q)[0]


# ------------------------------------------------------- parameter plumbing

def param_arrays(params: ModelParams) -> dict[str, np.ndarray]:
    """Named flat view of every trained array, in a fixed order."""
    out: dict[str, np.ndarray] = {}
    for prefix, layers in (("enc", params.encoder), ("dec", params.decoder)):
        for i, layer in enumerate(layers):
            out[f"{prefix}{i}.W"] = T.value(layer.W)
            out[f"{prefix}{i}.b"] = T.value(layer.b)
    out["R0"] = T.value(params.R0)
    out["log_sigma_w_sq"] = T.value(params.log_sigma_w_sq)
    out["log_sigma_U_sq"] = T.value(params.log_sigma_U_sq)
    return out


def _rebuild(params: ModelParams, pick) -> ModelParams:
    """Clone params with each named array replaced by pick(name, current)."""
    def rebuild_stack(prefix: str, layers: tuple[Layer, ...]) -> tuple[Layer, ...]:
        return tuple(
            Layer(W=pick(f"{prefix}{i}.W", layer.W), b=pick(f"{prefix}{i}.b", layer.b),
                  act=layer.act)
            for i, layer in enumerate(layers))

    return replace(
        params,
        encoder=rebuild_stack("enc", params.encoder),
        decoder=rebuild_stack("dec", params.decoder),
        R0=pick("R0", params.R0),
        log_sigma_w_sq=pick("log_sigma_w_sq", params.log_sigma_w_sq),
        log_sigma_U_sq=pick("log_sigma_U_sq", params.log_sigma_U_sq))


def with_arrays(params: ModelParams, arrays: dict[str, np.ndarray]) -> ModelParams:
    return _rebuild(params, lambda name, cur: arrays[name])


def trace_params(params: ModelParams, tape: "T.Tape"):
    """Copy of params whose arrays are leaves on the tape, plus name -> Node."""
    leaves: dict[str, T.Node] = {}

    def pick(name: str, cur):
        node = tape.leaf(T.value(cur))
        leaves[name] = node
        return node

    return _rebuild(params, pick), leaves
