"""Binary model container.

Layout:

    bytes 0-3    magic "DKMM"
    bytes 4-7    version, uint32 little-endian (currently 1)
    bytes 8-15   header length H, uint64 little-endian
    H bytes      UTF-8 JSON header
    payload      arrays named in the header manifest, row-major float64
                 little-endian, concatenated in manifest order
    4 bytes      CRC32 of the payload, uint32 little-endian

The header records dims, hyperparameters, layer specs, the array manifest
(name, rows, cols per array), and whether a memory state is included. All
arrays round-trip bit-exactly.
"""
from __future__ import annotations

import json
import struct
import zlib
from typing import Optional

import numpy as np

from .errors import FormatError
from .memory import MemoryState, validate
from .model import Layer, ModelParams
from . import tape as T

MAGIC = b"DKMM"
VERSION = 1
_MAX_HEADER = 1 << 20


def _manifest(params: ModelParams, mem: Optional[MemoryState]):
    arrays: list[tuple[str, np.ndarray]] = []
    for prefix, layers in (("enc", params.encoder), ("dec", params.decoder)):
        for i, layer in enumerate(layers):
            arrays.append((f"{prefix}{i}.W", T.value(layer.W)))
            arrays.append((f"{prefix}{i}.b", T.value(layer.b)))
    arrays.append(("R0", T.value(params.R0)))
    arrays.append(("log_sigma_w_sq", T.value(params.log_sigma_w_sq)))
    arrays.append(("log_sigma_U_sq", T.value(params.log_sigma_U_sq)))
    if mem is not None:
        arrays.append(("mem.R", T.value(mem.R)))
        arrays.append(("mem.U", T.value(mem.U)))
    return arrays


def save_model(path, params: ModelParams, mem: Optional[MemoryState] = None) -> None:
    arrays = _manifest(params, mem)
    header = {
        "dims": {"D": params.dim_in, "C": params.code_size, "K": params.mem_rows},
        "likelihood": params.likelihood,
        "sigma_xi_sq": params.sigma_xi_sq,
        "sigma_out_sq": params.sigma_out_sq,
        "encoder": [{"rows": l.out_size, "cols": l.in_size, "act": l.act}
                    for l in params.encoder],
        "decoder": [{"rows": l.out_size, "cols": l.in_size, "act": l.act}
                    for l in params.decoder],
        "arrays": [[name, arr.shape[0], arr.shape[1]] for name, arr in arrays],
        "has_memory": mem is not None,
    }
    if mem is not None:
        header["mem_sigma_xi_sq"] = mem.sigma_xi_sq
    header_bytes = json.dumps(header).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes("C")
                       for _, arr in arrays)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_model(path):
    """Returns (params, mem) where mem is None unless the file stored one."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    header_len = struct.unpack("<Q", blob[8:16])[0]
    if header_len > _MAX_HEADER or 16 + header_len > len(blob):
        raise FormatError(f"{path}: header length {header_len} out of range")
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad header ({exc})")
    try:
        manifest = [(str(n), int(r), int(c)) for n, r, c in header["arrays"]]
        dims = header["dims"]
        enc_spec = header["encoder"]
        dec_spec = header["decoder"]
        likelihood = header["likelihood"]
        has_memory = header["has_memory"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: header missing or malformed field ({exc})")

    payload_len = sum(r * c * 8 for _, r, c in manifest)
    expected = 16 + header_len + payload_len + 4
    if len(blob) != expected:
        raise FormatError(f"{path}: file length {len(blob)} != expected {expected} "
                          f"(truncated or padded payload)")
    payload = blob[16 + header_len:16 + header_len + payload_len]
    crc_stored = struct.unpack("<I", blob[-4:])[0]
    crc_actual = zlib.crc32(payload) & 0xFFFFFFFF
    if crc_stored != crc_actual:
        raise FormatError(f"{path}: payload checksum mismatch "
                          f"(stored {crc_stored:#010x}, computed {crc_actual:#010x})")

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, r, c in manifest:
        nbytes = r * c * 8
        arrays[name] = np.frombuffer(payload[offset:offset + nbytes],
                                     dtype="<f8").reshape(r, c).astype(np.float64)
        offset += nbytes

    def build_stack(prefix: str, specs) -> tuple[Layer, ...]:
        layers = []
        for i, s in enumerate(specs):
            try:
                W = arrays[f"{prefix}{i}.W"]
                b = arrays[f"{prefix}{i}.b"]
            except KeyError as exc:
                raise FormatError(f"{path}: manifest missing array {exc}")
            if W.shape != (s["rows"], s["cols"]) or b.shape != (s["rows"], 1):
                raise FormatError(f"{path}: layer {prefix}{i} dims inconsistent "
                                  f"with manifest")
            layers.append(Layer(W=W, b=b, act=str(s["act"])))
        return tuple(layers)

    try:
        params = ModelParams(
            encoder=build_stack("enc", enc_spec),
            decoder=build_stack("dec", dec_spec),
            likelihood=str(likelihood),
            R0=arrays["R0"],
            log_sigma_w_sq=arrays["log_sigma_w_sq"],
            log_sigma_U_sq=arrays["log_sigma_U_sq"],
            sigma_xi_sq=float(header["sigma_xi_sq"]),
            sigma_out_sq=float(header["sigma_out_sq"]))
    except KeyError as exc:
        raise FormatError(f"{path}: missing array or field {exc}")
    if (params.dim_in, params.code_size, params.mem_rows) != \
            (dims.get("D"), dims.get("C"), dims.get("K")):
        raise FormatError(f"{path}: declared dims {dims} inconsistent with arrays")

    mem = None
    if has_memory:
        try:
            mem = MemoryState(R=arrays["mem.R"], U=arrays["mem.U"],
                              sigma_xi_sq=float(header["mem_sigma_xi_sq"]))
        except KeyError as exc:
            raise FormatError(f"{path}: memory flagged but array/field {exc} missing")
        try:
            validate(mem)
        except Exception as exc:
            raise FormatError(f"{path}: stored memory state invalid ({exc})")
    return params, mem
