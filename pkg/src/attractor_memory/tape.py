"""Reverse-mode differentiation over dense float64 matrices.

Everything on the tape is a 2-D float64 array; scalars are 1x1 matrices and
column vectors are n x 1. The op functions below accept any mix of Node and
plain ndarray operands: with no Node argument they are ordinary numpy calls
(nothing is recorded), with a Node argument the result is recorded on that
Node's tape and plain operands are treated as constants. This keeps a single
implementation of the math for both traced training and plain inference.

A Tape owns its nodes; combining Nodes from two tapes is an error. backward()
walks the record once in strict reverse creation order, accumulating adjoints
into zero-initialized buffers, so gradients are deterministic for a fixed
graph (same op order, same accumulation order, bitwise identical reruns).
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import lapack
from scipy.special import expit

from .errors import DimensionError, DomainError, NotPositiveDefinite

SYMMETRY_TOL = 1e-10
BERNOULLI_EPS = 1e-7


class Node:
    """One recorded value. Treat as immutable; hold, don't mutate."""

    __slots__ = ("tape", "nid", "value")

    def __init__(self, tape: "Tape", nid: int, value: np.ndarray):
        self.tape = tape
        self.nid = nid
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(nid={self.nid}, shape={self.value.shape})"


class Tape:
    def __init__(self):
        self._values: list[np.ndarray] = []
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[tuple[Callable, ...]] = []
        self.grads: list[np.ndarray] | None = None

    def __len__(self):
        return len(self._values)

    def _push(self, value: np.ndarray, parents=(), vjps=()) -> Node:
        nid = len(self._values)
        self._values.append(value)
        self._parents.append(parents)
        self._vjps.append(vjps)
        return Node(self, nid, value)

    def leaf(self, value) -> Node:
        """Differentiable input. Copies, so later mutation of the argument
        cannot corrupt the record."""
        return self._push(_as_matrix(value).copy())

    def constant(self, value) -> Node:
        """Recorded non-differentiable value. Rarely needed: ops treat plain
        ndarray operands as constants without recording them."""
        return self._push(_as_matrix(value))

    def backward(self, root: Node) -> None:
        """Accumulate d(root)/d(node) for every node into self.grads."""
        if root.tape is not self:
            raise ValueError("backward root belongs to a different tape")
        if root.value.shape != (1, 1):
            raise DimensionError(
                f"backward root must be scalar (1x1), got shape {root.value.shape}")
        grads = [np.zeros_like(v) for v in self._values]
        grads[root.nid][0, 0] = 1.0
        for nid in range(root.nid, -1, -1):
            parents = self._parents[nid]
            if not parents:
                continue
            g = grads[nid]
            if not g.any():
                continue
            for pid, vjp in zip(parents, self._vjps[nid]):
                grads[pid] += vjp(g)
        self.grads = grads

    def grad(self, node: Node) -> np.ndarray:
        if self.grads is None:
            raise ValueError("backward() has not run on this tape")
        return self.grads[node.nid]


def value(x) -> np.ndarray:
    """Forward value of a Node, or the operand itself."""
    return x.value if isinstance(x, Node) else x


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix has non-finite entries")
    return arr


def _tape_of(*operands) -> Tape | None:
    tape = None
    for x in operands:
        if isinstance(x, Node):
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise ValueError("operands belong to different tapes")
    return tape


def _emit(tape: Tape, out: np.ndarray, sources) -> Node:
    """sources: (operand, vjp) pairs; only Node operands are wired up."""
    parents = []
    vjps = []
    for op, vjp in sources:
        if isinstance(op, Node):
            parents.append(op.nid)
            vjps.append(vjp)
    return tape._push(out, tuple(parents), tuple(vjps))


def _shape(v) -> tuple[int, int]:
    return v.shape if isinstance(v, np.ndarray) else (1, 1)


def _elementwise_shapes(av, bv, opname: str) -> None:
    sa, sb = _shape(av), _shape(bv)
    if sa != sb and sa != (1, 1) and sb != (1, 1):
        raise DimensionError(f"{opname}: shapes {sa} and {sb} do not match")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Adjoint of broadcasting a 1x1 up to g's shape."""
    if g.shape == shape:
        return g
    return g.sum().reshape(1, 1)


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    av, bv = value(a), value(b)
    _elementwise_shapes(av, bv, "add")
    out = np.asarray(av + bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return _emit(tape, out, [
        (a, lambda g: _reduce_to(g, _shape(av))),
        (b, lambda g: _reduce_to(g, _shape(bv))),
    ])


def sub(a, b):
    av, bv = value(a), value(b)
    _elementwise_shapes(av, bv, "sub")
    out = np.asarray(av - bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return _emit(tape, out, [
        (a, lambda g: _reduce_to(g, _shape(av))),
        (b, lambda g: _reduce_to(-g, _shape(bv))),
    ])


def mul(a, b):
    """Elementwise product; a 1x1 operand broadcasts (scalar scaling)."""
    av, bv = value(a), value(b)
    _elementwise_shapes(av, bv, "mul")
    out = np.asarray(av * bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return _emit(tape, out, [
        (a, lambda g: _reduce_to(g * bv, _shape(av))),
        (b, lambda g: _reduce_to(g * av, _shape(bv))),
    ])


def scale(a, c: float):
    """Multiply by a plain float constant."""
    c = float(c)
    av = value(a)
    out = av * c
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: g * c)])


def matmul(a, b):
    av, bv = value(a), value(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {av.shape} x {bv.shape}")
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return _emit(tape, out, [
        (a, lambda g: g @ bv.T),
        (b, lambda g: av.T @ g),
    ])


def transpose(a):
    av = value(a)
    out = av.T.copy()
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: g.T.copy())])


def sum_all(a):
    """Sum of all entries, as a 1x1 matrix."""
    av = value(a)
    out = np.array([[av.sum()]])
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: np.full(av.shape, g[0, 0]))])


def trace(a):
    av = value(a)
    if av.shape[0] != av.shape[1]:
        raise DimensionError(f"trace: matrix must be square, got {av.shape}")
    out = np.array([[np.trace(av)]])
    tape = _tape_of(a)
    if tape is None:
        return out
    n = av.shape[0]
    return _emit(tape, out, [(a, lambda g: g[0, 0] * np.eye(n))])


def reciprocal(a):
    av = value(a)
    if np.any(av == 0.0):
        raise DomainError("reciprocal of zero")
    out = 1.0 / av
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: -g * out * out)])


# ------------------------------------------------------------- elementwise fns

def sigmoid(a):
    av = value(a)
    out = expit(av)
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: g * out * (1.0 - out))])


def tanh(a):
    av = value(a)
    out = np.tanh(av)
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: g * (1.0 - out * out))])


def relu(a):
    av = value(a)
    out = np.maximum(av, 0.0)
    tape = _tape_of(a)
    if tape is None:
        return out
    mask = av > 0.0
    return _emit(tape, out, [(a, lambda g: g * mask)])


def log(a):
    av = value(a)
    if np.any(av <= 0.0):
        idx = tuple(int(i) for i in np.argwhere(av <= 0.0)[0])
        raise DomainError(f"log domain violation at index {idx}: {av[idx]!r}")
    out = np.log(av)
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: g / av)])


def exp(a):
    av = value(a)
    out = np.exp(av)
    tape = _tape_of(a)
    if tape is None:
        return out
    return _emit(tape, out, [(a, lambda g: g * out)])


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "log": log, "exp": exp}


def unary(kind: str, a):
    try:
        fn = _UNARY[kind]
    except KeyError:
        raise ValueError(f"unknown unary kind {kind!r}; choose from {sorted(_UNARY)}")
    return fn(a)


# --------------------------------------------------------------- linear algebra

def _check_spd_operand(av: np.ndarray, opname: str) -> None:
    if av.ndim != 2 or av.shape[0] != av.shape[1]:
        raise DimensionError(f"{opname}: matrix must be square, got {av.shape}")
    asym = float(np.max(np.abs(av - av.T))) if av.size else 0.0
    if asym > SYMMETRY_TOL:
        raise DomainError(
            f"{opname}: matrix not symmetric within {SYMMETRY_TOL:g} "
            f"(max asymmetry {asym:.3e})")


def _cholesky(av: np.ndarray, opname: str) -> np.ndarray:
    # No pivoting; positive-definiteness is exactly "the factorization succeeds".
    c, info = lapack.dpotrf(av, lower=1)
    if info > 0:
        raise NotPositiveDefinite(info, context=opname)
    if info < 0:
        raise ValueError(f"{opname}: illegal argument {-info} to dpotrf")
    return c


def solve_spd(a, b):
    """X = A^{-1} B for symmetric positive definite A, via Cholesky."""
    av, bv = value(a), value(b)
    _check_spd_operand(av, "solve_spd")
    if bv.ndim != 2 or bv.shape[0] != av.shape[0]:
        raise DimensionError(
            f"solve_spd: rhs shape {bv.shape} incompatible with matrix {av.shape}")
    c = _cholesky(av, "solve_spd")
    out = lapack.dpotrs(c, bv, lower=1)[0]
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def vjp_b(g):
        return lapack.dpotrs(c, g, lower=1)[0]

    def vjp_a(g):
        gb = lapack.dpotrs(c, g, lower=1)[0]
        ga = -gb @ out.T
        return 0.5 * (ga + ga.T)

    return _emit(tape, out, [(a, vjp_a), (b, vjp_b)])


def logdet_spd(a):
    """log det A for symmetric positive definite A, as a 1x1 matrix."""
    av = value(a)
    _check_spd_operand(av, "logdet_spd")
    c = _cholesky(av, "logdet_spd")
    out = np.array([[2.0 * float(np.sum(np.log(np.diag(c))))]])
    tape = _tape_of(a)
    if tape is None:
        return out

    def vjp(g):
        inv, info = lapack.dpotri(c, lower=1)
        if info != 0:
            raise ValueError(f"logdet_spd: dpotri failed with info={info}")
        full = np.tril(inv) + np.tril(inv, -1).T
        return g[0, 0] * full

    return _emit(tape, out, [(a, vjp)])


# ------------------------------------------------------------------ likelihoods

def bernoulli_loglik(logits, x):
    """Sum of Bernoulli log-likelihoods, as a 1x1 matrix.

    Probabilities are clamped to [eps, 1-eps] inside the log terms only; the
    gradient is x - sigmoid(logits) and is exactly zero where the clamp is
    active. x is data: it is never differentiated.
    """
    lv, xv = value(logits), value(x)
    if _shape(lv) != _shape(xv):
        raise DimensionError(
            f"bernoulli_loglik: logits {_shape(lv)} vs targets {_shape(xv)}")
    p = expit(lv)
    pc = np.clip(p, BERNOULLI_EPS, 1.0 - BERNOULLI_EPS)
    ll = xv * np.log(pc) + (1.0 - xv) * np.log(1.0 - pc)
    out = np.array([[float(ll.sum())]])
    tape = _tape_of(logits)
    if tape is None:
        return out
    live = (p > BERNOULLI_EPS) & (p < 1.0 - BERNOULLI_EPS)
    inner = np.where(live, xv - p, 0.0)
    return _emit(tape, out, [(logits, lambda g: g[0, 0] * inner)])


# ------------------------------------------------- scalar graph conveniences

def as_cell(x) -> np.ndarray:
    """Plain float -> 1x1 matrix."""
    return np.array([[float(x)]])


def scalar_value(x) -> float:
    """Float content of a 1x1 Node / 1x1 array / plain number."""
    v = value(x)
    if isinstance(v, np.ndarray):
        if v.shape != (1, 1):
            raise DimensionError(f"expected 1x1, got {v.shape}")
        return float(v[0, 0])
    return float(v)


def _cellify(x):
    return x if isinstance(x, Node) else as_cell(x)


def cadd(a, b):
    """a + b where each side is a float or a 1x1 Node."""
    if isinstance(a, Node) or isinstance(b, Node):
        return add(_cellify(a), _cellify(b))
    return float(a) + float(b)


def csub(a, b):
    if isinstance(a, Node) or isinstance(b, Node):
        return sub(_cellify(a), _cellify(b))
    return float(a) - float(b)


def cscale(a, c: float):
    if isinstance(a, Node):
        return scale(a, c)
    return float(a) * float(c)
