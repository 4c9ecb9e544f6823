"""Corpora: synthetic generation, noise injection, and the text file format.

Corpus files are plain text so they diff cleanly:

    DKM-CORPUS 1 <N> <D> <binary|real>
    CLASSES <id> <id> ...          (optional)
    <D space-separated values>     (N lines)

Binary corpora hold strictly 0/1 entries; real values round-trip through 17
significant digits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError, FormatError
from .rng import PortableRng


@dataclass
class Corpus:
    kind: str                        # "binary" | "real"
    patterns: np.ndarray             # N x D
    class_ids: Optional[list[int]] = None

    def __post_init__(self):
        if self.kind not in ("binary", "real"):
            raise DomainError(f"corpus kind must be binary or real, got {self.kind!r}")
        arr = np.asarray(self.patterns, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise DimensionError(f"corpus needs a non-empty N x D array, got {arr.shape}")
        if self.kind == "binary" and not np.all((arr == 0.0) | (arr == 1.0)):
            raise DomainError("binary corpus entries must all be 0 or 1")
        if self.class_ids is not None:
            self.class_ids = [int(c) for c in self.class_ids]
            if len(self.class_ids) != arr.shape[0]:
                raise DimensionError(
                    f"{len(self.class_ids)} class ids for {arr.shape[0]} patterns")
        object.__setattr__(self, "patterns", arr)

    def __len__(self) -> int:
        return self.patterns.shape[0]

    @property
    def dim(self) -> int:
        return self.patterns.shape[1]


def synthetic_prototypes(n_classes: int, dim: int, seed: int) -> np.ndarray:
    """The class prototypes generate_synthetic builds instances from; the
    first n_classes * dim uniform draws of the seed, thresholded at 0.5."""
    rng = PortableRng(seed)
    return (rng.random((n_classes, dim)) < 0.5).astype(np.float64)


def generate_synthetic(n_classes: int, per_class: int, dim: int,
                       flip_prob: float, seed: int) -> Corpus:
    """Binary corpus of noisy prototype copies.

    Each of n_classes random prototypes yields per_class instances with i.i.d.
    bit flips at flip_prob. Patterns are grouped by class, class_ids recorded.
    """
    if dim < 4:
        raise DimensionError(f"generate_synthetic needs D >= 4, got {dim}")
    if not (0.0 <= flip_prob <= 0.5):
        raise DomainError(f"flip_prob must be in [0, 0.5], got {flip_prob}")
    if n_classes < 1 or per_class < 1:
        raise DomainError("n_classes and per_class must be >= 1")
    rng = PortableRng(seed)
    protos = (rng.random((n_classes, dim)) < 0.5).astype(np.float64)
    rows = []
    ids = []
    for c in range(n_classes):
        flips = rng.random((per_class, dim)) < flip_prob
        rows.append(np.abs(protos[c] - flips.astype(np.float64)))
        ids.extend([c] * per_class)
    return Corpus(kind="binary", patterns=np.vstack(rows), class_ids=ids)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str                        # "salt_pepper" | "gaussian" | "none"
    amount: float = 0.0              # flip probability, or noise std


def parse_noise_spec(text: str) -> NoiseSpec:
    """Parse "salt_pepper:0.15", "gaussian:0.15", or "none"."""
    text = text.strip()
    if text == "none":
        return NoiseSpec(kind="none")
    parts = text.split(":")
    if len(parts) != 2 or parts[0] not in ("salt_pepper", "gaussian"):
        raise FormatError(f"bad noise spec {text!r}; "
                          f"expected salt_pepper:<p>, gaussian:<sigma>, or none")
    try:
        amount = float(parts[1])
    except ValueError:
        raise FormatError(f"bad noise amount in {text!r}")
    if parts[0] == "salt_pepper" and not (0.0 <= amount <= 1.0):
        raise FormatError(f"salt_pepper probability must be in [0, 1], got {amount}")
    if parts[0] == "gaussian" and amount < 0.0:
        raise FormatError(f"gaussian noise std must be >= 0, got {amount}")
    return NoiseSpec(kind=parts[0], amount=amount)


def inject_noise(x: np.ndarray, spec: NoiseSpec, rng: PortableRng) -> np.ndarray:
    """Corrupt one pattern. salt_pepper flips each bit with probability p and
    requires binary data; gaussian adds N(0, amount^2) per entry."""
    arr = np.asarray(x, dtype=np.float64)
    if spec.kind == "none":
        return arr.copy()
    if spec.kind == "salt_pepper":
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise DomainError("salt_pepper noise needs binary data")
        flips = (rng.random(arr.shape) < spec.amount).astype(np.float64)
        return np.abs(arr - flips)
    if spec.kind == "gaussian":
        return arr + spec.amount * rng.normal(arr.shape)
    raise DomainError(f"unknown noise kind {spec.kind!r}")


def save_corpus(path, corpus: Corpus) -> None:
    lines = [f"DKM-CORPUS 1 {len(corpus)} {corpus.dim} {corpus.kind}"]
    if corpus.class_ids is not None:
        lines.append("CLASSES " + " ".join(str(c) for c in corpus.class_ids))
    for row in corpus.patterns:
        if corpus.kind == "binary":
            lines.append(" ".join(str(int(v)) for v in row))
        else:
            lines.append(" ".join(format(v, ".17g") for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_corpus(path) -> Corpus:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty corpus file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "DKM-CORPUS":
        raise FormatError(f"{path}: bad header line {lines[0]!r}")
    if head[1] != "1":
        raise FormatError(f"{path}: unsupported corpus version {head[1]}")
    try:
        n, dim = int(head[2]), int(head[3])
    except ValueError:
        raise FormatError(f"{path}: non-integer N or D in header")
    kind = head[4]
    if kind not in ("binary", "real"):
        raise FormatError(f"{path}: kind must be binary or real, got {kind!r}")
    body = lines[1:]
    class_ids = None
    if body and body[0].startswith("CLASSES"):
        fields = body[0].split()[1:]
        try:
            class_ids = [int(c) for c in fields]
        except ValueError:
            raise FormatError(f"{path}: non-integer class id")
        body = body[1:]
    if len(body) != n:
        raise FormatError(f"{path}: header claims {n} patterns, found {len(body)}")
    rows = []
    for i, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != dim:
            raise FormatError(f"{path}: line {i + 1} has {len(vals)} values, expected {dim}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError:
            raise FormatError(f"{path}: non-numeric value on pattern line {i + 1}")
    arr = np.array(rows, dtype=np.float64)
    if kind == "binary" and not np.all((arr == 0.0) | (arr == 1.0)):
        raise FormatError(f"{path}: binary corpus has non-binary entries")
    if class_ids is not None and len(class_ids) != n:
        raise FormatError(f"{path}: {len(class_ids)} class ids for {n} patterns")
    try:
        return Corpus(kind=kind, patterns=arr, class_ids=class_ids)
    except (DomainError, DimensionError) as exc:
        raise FormatError(f"{path}: {exc}")
