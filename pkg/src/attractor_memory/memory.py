"""Matrix-normal memory: prior, exact Bayesian writes, least-squares addressing.

The memory over a K x C matrix M is kept as a matrix normal with mean R
(K x C), shared row covariance U (K x K), and identity column covariance, i.e.
vec(M) ~ N(vec(R), I_C (x) U). Observations are z = M^T w + noise with fixed
isotropic variance sigma_xi_sq, which keeps the posterior in the same family
and makes the update below exact (rank-one Sherman-Morrison form):

    delta   = z - R^T w            innovation, C x 1
    Sigma_c = U w                  K x 1
    Sigma_z = w^T U w + sigma_xi_sq    innovation variance, scalar
    R'      = R + Sigma_c Sigma_z^{-1} delta^T
    U'      = U - Sigma_c Sigma_z^{-1} Sigma_c^T

U is re-symmetrized as (U + U^T)/2 after every update so round-off cannot
accumulate across a long episode.

All functions take either plain ndarrays or tape Nodes (see tape.py) so the
same code serves training and inference. Vectors are column matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import tape as T
from .errors import DimensionError, DomainError, NumericalError
from .rng import PortableRng

ArrayOrNode = Union[np.ndarray, "T.Node"]


@dataclass(frozen=True)
class MemoryState:
    """Posterior over the memory matrix: mean R (K x C), row covariance U
    (K x K), fixed observation noise sigma_xi_sq."""

    R: ArrayOrNode
    U: ArrayOrNode
    sigma_xi_sq: float

    @property
    def rows(self) -> int:
        return T.value(self.R).shape[0]

    @property
    def code_size(self) -> int:
        return T.value(self.R).shape[1]


@dataclass(frozen=True)
class AddressPosterior:
    """Gaussian over addressing weights: mean mu_w (K x 1), shared scalar
    variance sigma_w_sq (float, or 1x1 Node during training)."""

    mu_w: ArrayOrNode
    sigma_w_sq: Union[float, "T.Node"]


def prior(rows: int, code_size: int, sigma_U_sq: float = 1.0,
          sigma_xi_sq: float = 1.0, seed: int = 0) -> MemoryState:
    """Standard-normal mean, isotropic row covariance sigma_U_sq * I."""
    if rows < 1 or code_size < 1:
        raise DimensionError(f"prior: need rows, code_size >= 1, got {rows}, {code_size}")
    if sigma_U_sq <= 0 or sigma_xi_sq <= 0:
        raise DomainError("prior: variances must be positive")
    rng = PortableRng(seed)
    R = rng.normal((rows, code_size))
    U = sigma_U_sq * np.eye(rows)
    return MemoryState(R=R, U=U, sigma_xi_sq=float(sigma_xi_sq))


def validate(mem: MemoryState) -> None:
    """Check the state invariants on plain values; raises on violation."""
    R, U = T.value(mem.R), T.value(mem.U)
    if R.ndim != 2 or U.shape != (R.shape[0], R.shape[0]):
        raise DimensionError(f"memory shapes inconsistent: R {R.shape}, U {U.shape}")
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(U))):
        raise DomainError("memory state has non-finite entries")
    if mem.sigma_xi_sq <= 0:
        raise DomainError("sigma_xi_sq must be positive")
    T._check_spd_operand(U, "memory U")
    T._cholesky(0.5 * (U + U.T), "memory U")


def read(mem: MemoryState, w: ArrayOrNode):
    """Posterior-mean reconstruction z = R^T w (noise-free read), C x 1."""
    wv = T.value(w)
    if wv.shape != (mem.rows, 1):
        raise DimensionError(f"read: weights shape {wv.shape}, expected ({mem.rows}, 1)")
    return T.matmul(T.transpose(mem.R), w)


def update(mem: MemoryState, w: ArrayOrNode, z: ArrayOrNode) -> MemoryState:
    """Exact Bayes update of (R, U) after observing z at address weights w."""
    wv, zv = T.value(w), T.value(z)
    if wv.shape != (mem.rows, 1):
        raise DimensionError(f"update: weights shape {wv.shape}, expected ({mem.rows}, 1)")
    if zv.shape != (mem.code_size, 1):
        raise DimensionError(f"update: observation shape {zv.shape}, "
                             f"expected ({mem.code_size}, 1)")
    delta = T.sub(z, T.matmul(T.transpose(mem.R), w))
    sigma_c = T.matmul(mem.U, w)
    sigma_z = T.add(T.matmul(T.transpose(w), sigma_c), T.as_cell(mem.sigma_xi_sq))
    if T.scalar_value(sigma_z) <= 0.0:
        raise NumericalError(
            f"update: innovation variance {T.scalar_value(sigma_z):g} is not positive")
    gain = T.reciprocal(sigma_z)
    R_new = T.add(mem.R, T.mul(gain, T.matmul(sigma_c, T.transpose(delta))))
    U_new = T.sub(mem.U, T.mul(gain, T.matmul(sigma_c, T.transpose(sigma_c))))
    U_new = T.scale(T.add(U_new, T.transpose(U_new)), 0.5)
    return MemoryState(R=R_new, U=U_new, sigma_xi_sq=mem.sigma_xi_sq)


def address(mem: MemoryState, z: ArrayOrNode):
    """Least-squares addressing weights for an embedding z.

    Returns the K x 1 minimizer of
        ||z - R^T mu||^2 / (2 sigma_xi_sq) + ||mu||^2 / 2,
    i.e. mu = (R R^T + sigma_xi_sq I)^{-1} R z, computed by an SPD solve
    (never an explicit inverse).
    """
    zv = T.value(z)
    if zv.shape != (mem.code_size, 1):
        raise DimensionError(f"address: embedding shape {zv.shape}, "
                             f"expected ({mem.code_size}, 1)")
    gram = T.matmul(mem.R, T.transpose(mem.R))
    A = T.add(gram, mem.sigma_xi_sq * np.eye(mem.rows))
    return T.solve_spd(A, T.matmul(mem.R, z))


def kl_weights(q: AddressPosterior):
    """KL(q(w) || N(0, I)) for q = N(mu_w, sigma_w_sq I); float or 1x1 Node."""
    mu = q.mu_w
    k = T.value(mu).shape[0]
    sig = q.sigma_w_sq
    if not isinstance(sig, T.Node):
        sig = T.as_cell(sig)
    if T.scalar_value(sig) <= 0.0:
        raise DomainError(f"kl_weights: sigma_w_sq {T.scalar_value(sig):g} must be positive")
    quad = T.sum_all(T.mul(mu, mu))
    total = T.add(T.add(T.scale(sig, k), quad), T.scale(T.log(sig), -k))
    out = T.scale(T.add(total, T.as_cell(-float(k))), 0.5)
    return out if isinstance(out, T.Node) else float(out[0, 0])


def kl_memory(q: MemoryState, p: MemoryState):
    """KL between two matrix-normal memory states (q from p), float or 1x1 Node.

    With shared identity column covariance this reduces to
        0.5 * [ C tr(U_p^{-1} U_q) - K C + C (logdet U_p - logdet U_q)
                + tr((R_q - R_p)^T U_p^{-1} (R_q - R_p)) ].
    """
    K, C = q.rows, q.code_size
    if (p.rows, p.code_size) != (K, C):
        raise DimensionError(
            f"kl_memory: mismatched shapes ({K},{C}) vs ({p.rows},{p.code_size})")
    tr_term = T.scale(T.trace(T.solve_spd(p.U, q.U)), float(C))
    logdet_term = T.scale(T.sub(T.logdet_spd(p.U), T.logdet_spd(q.U)), float(C))
    D = T.sub(q.R, p.R)
    quad_term = T.sum_all(T.mul(D, T.solve_spd(p.U, D)))
    total = T.add(T.add(tr_term, logdet_term), quad_term)
    out = T.scale(T.add(total, T.as_cell(-float(K * C))), 0.5)
    return out if isinstance(out, T.Node) else float(out[0, 0])
