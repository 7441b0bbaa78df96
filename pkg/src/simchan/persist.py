"""Binary dataset and model files.

Both formats are a 10-byte magic string, one version byte, a block of
little-endian int64 header fields and then raw little-endian float64 data.
Complex arrays are written interleaved (re, im).

Dataset (``SIMCHAN-DS``)::

    L, N, S, input_dim, T, task_tag, n_subset, subset[n_subset]
    split            L bytes (0 train, 1 validation)
    inputs           L * input_dim complex
    targets          L * T float

Model (``SIMCHAN-MD``)::

    kind_tag, then per kind:
    simnet  input_dim, target_dim, L, k, self_exclusion | D (complex) | P
    mlp     input_dim, hidden, out_dim | W1 b1 W2 b2 W3 b3 | offset, scale
    elm     input_dim, hidden, out_dim | ridge | hidden weights | output weights
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .baselines import ElmModel, MlpModel
from .chanscene import TASKS, LabeledDataset
from .simnet import SimilarityModel

DS_MAGIC = b"SIMCHAN-DS"
MD_MAGIC = b"SIMCHAN-MD"
VERSION = 1

MODEL_KINDS = {"simnet": 1, "mlp": 2, "elm": 3}
_KIND_NAMES = {v: k for k, v in MODEL_KINDS.items()}


class FormatError(ValueError):
    pass


def _ints(*vals) -> bytes:
    return struct.pack(f"<{len(vals)}q", *vals)


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _c128(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<c16").tobytes()


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def need(self, n: int):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated {self.what}: expected at least {self.pos + n} bytes, "
                f"file has {len(self.buf)}"
            )

    def ints(self, n: int) -> tuple[int, ...]:
        self.need(8 * n)
        out = struct.unpack_from(f"<{n}q", self.buf, self.pos)
        self.pos += 8 * n
        return out

    def raw(self, n: int) -> bytes:
        self.need(n)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def f64(self, *shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.raw(8 * n), dtype="<f8").astype(np.float64).reshape(shape)

    def c128(self, *shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.raw(16 * n), dtype="<c16").astype(np.complex128).reshape(shape)

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(
                f"corrupt {self.what}: expected {self.pos} bytes, file has {len(self.buf)}"
            )


def _open(path, magic: bytes, what: str) -> _Reader:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(magic) or buf[: len(magic)] != magic:
        raise FormatError(f"not a {magic.decode()} file: {os.fspath(path)}")
    r = _Reader(buf, what)
    r.pos = len(magic)
    (version,) = r.raw(1)
    if version != VERSION:
        raise FormatError(
            f"unsupported {magic.decode()} version {version} (this build reads version {VERSION})"
        )
    return r


def save_dataset(ds: LabeledDataset, path) -> None:
    subset = ds.antenna_subset or ()
    parts = [
        DS_MAGIC,
        bytes([VERSION]),
        _ints(len(ds), ds.n_antennas, ds.n_subcarriers, ds.input_dim, ds.target_dim,
              TASKS.index(ds.task), len(subset) if ds.antenna_subset is not None else -1),
        _ints(*subset) if subset else b"",
        np.ascontiguousarray(ds.split, dtype=np.uint8).tobytes(),
        _c128(ds.inputs),
        _f64(ds.targets),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_dataset(path) -> LabeledDataset:
    r = _open(path, DS_MAGIC, "dataset")
    L, N, S, in_dim, T, tag, n_sub = r.ints(7)
    if not 0 <= tag < len(TASKS):
        raise FormatError(f"unknown task tag {tag}")
    if min(L, N, S, in_dim, T) < 0 or n_sub < -1:
        raise FormatError("negative dimension in dataset header")
    subset = tuple(r.ints(n_sub)) if n_sub >= 0 else None
    # check the full payload size before touching it
    expected = r.pos + L + 16 * L * in_dim + 8 * L * T
    if len(r.buf) != expected:
        raise FormatError(
            f"truncated dataset: expected {expected} bytes, file has {len(r.buf)}"
            if len(r.buf) < expected
            else f"corrupt dataset: expected {expected} bytes, file has {len(r.buf)}"
        )
    split = np.frombuffer(r.raw(L), dtype=np.uint8).copy()
    inputs = r.c128(L, in_dim)
    targets = r.f64(L, T)
    r.finish()
    return LabeledDataset(inputs=inputs, targets=targets, task=TASKS[tag], n_antennas=N,
                          n_subcarriers=S, antenna_subset=subset, split=split)


def model_kind(model) -> str:
    if isinstance(model, SimilarityModel):
        return "simnet"
    if isinstance(model, MlpModel):
        return "mlp"
    if isinstance(model, ElmModel):
        return "elm"
    raise TypeError(f"cannot serialise {type(model).__name__}")


def save_model(model, path) -> None:
    kind = model_kind(model)
    parts = [MD_MAGIC, bytes([VERSION]), _ints(MODEL_KINDS[kind])]
    if kind == "simnet":
        parts += [_ints(model.input_dim, model.target_dim, model.L, model.k, int(model.self_exclusion)),
                  _c128(model.D), _f64(model.P)]
    elif kind == "mlp":
        hidden = model.weights[0].shape[0]
        parts += [_ints(model.input_dim, hidden, model.weights[2].shape[0])]
        for w, b in zip(model.weights, model.biases):
            parts += [_f64(w), _f64(b)]
        parts += [_f64(model.target_offset), _f64([model.target_scale])]
    else:
        parts += [_ints(model.input_dim, model.hidden, model.output_weights.shape[1]),
                  _f64([model.ridge]), _f64(model.hidden_weights), _f64(model.output_weights)]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path, kind: str | None = None):
    """Read a model file; ``kind`` ('simnet', 'mlp', 'elm') enforces its type."""
    r = _open(path, MD_MAGIC, "model")
    (tag,) = r.ints(1)
    if tag not in _KIND_NAMES:
        raise FormatError(f"unknown model kind tag {tag}")
    found = _KIND_NAMES[tag]
    if kind is not None and kind != found:
        raise FormatError(f"model kind mismatch: file holds {found!r}, expected {kind!r}")
    if found == "simnet":
        in_dim, t_dim, L, k, excl = r.ints(5)
        D = r.c128(in_dim, L)
        P = r.f64(t_dim, L)
        r.finish()
        return SimilarityModel(D, P, k, self_exclusion=bool(excl))
    if found == "mlp":
        in_dim, hidden, out = r.ints(3)
        dims = [in_dim, hidden, hidden, out]
        ws, bs = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            ws.append(r.f64(b, a))
            bs.append(r.f64(b))
        offset = r.f64(out)
        (scale,) = r.f64(1)
        r.finish()
        return MlpModel(ws, bs, offset, float(scale))
    in_dim, hidden, out = r.ints(3)
    (ridge,) = r.f64(1)
    W = r.f64(hidden, in_dim)
    B = r.f64(hidden, out)
    r.finish()
    return ElmModel(W, B, float(ridge))
