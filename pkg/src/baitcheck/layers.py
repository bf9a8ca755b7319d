"""Network building blocks: contextual encoder, multi-head attention,
Conv1D, (Bi)LSTM, pooling, dense and dropout.

All functions accept a leading batch axis; the sequence functions also
accept a bare (L, d) input and return an unbatched result for it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, IngestionError, ShapeError
from .tensor import Tensor

PAD_ID = 0
ENCODER_MODES = ("hash_embedding", "precomputed_file")
EMBEDDING_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# initialization


def glorot(rng: np.random.Generator, shape, fan_in: int | None = None, fan_out: int | None = None) -> Tensor:
    fan_in = shape[-2] if fan_in is None else fan_in
    fan_out = shape[-1] if fan_out is None else fan_out
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


# ---------------------------------------------------------------------------
# contextual encoder


@dataclass(frozen=True)
class EncoderConfig:
    vocab_buckets: int = 2 ** 15
    d_model: int = 64
    max_len: int = 64
    mode: str = "hash_embedding"
    heads: int = 4

    def __post_init__(self):
        if self.d_model <= 0 or self.heads <= 0 or self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} must be positive and divisible by heads={self.heads}")
        if self.max_len <= 0:
            raise ConfigError("max_len must be positive")
        if self.vocab_buckets < 2:
            raise ConfigError("vocab_buckets must be at least 2 (one is the pad id)")
        if self.mode not in ENCODER_MODES:
            raise ConfigError(f"unknown encoder mode {self.mode!r}")


def fnv1a_32(token: str) -> int:
    h = 0x811C9DC5
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


def token_id(token: str, vocab_buckets: int) -> int:
    """Bucket id in [1, vocab_buckets); 0 is reserved for padding."""
    return 1 + fnv1a_32(token) % (vocab_buckets - 1)


def encode_ids(token_lists, config: EncoderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Hash, then pad/truncate (keeping the head) to ``max_len``.

    Returns ``(ids, mask)``, both (N, max_len); mask is 1.0 on real tokens.
    """
    n = len(token_lists)
    ids = np.full((n, config.max_len), PAD_ID, dtype=np.int64)
    mask = np.zeros((n, config.max_len))
    for r, toks in enumerate(token_lists):
        toks = list(toks)[: config.max_len]
        for c, tok in enumerate(toks):
            ids[r, c] = token_id(tok, config.vocab_buckets)
        mask[r, : len(toks)] = 1.0
    return ids, mask


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def init_embedding(rng: np.random.Generator, config: EncoderConfig) -> Tensor:
    return Tensor(rng.uniform(-0.05, 0.05, size=(config.vocab_buckets, config.d_model)), requires_grad=True)


def encode(token_ids, config: EncoderConfig, table: Tensor, mask=None) -> Tensor:
    """Table lookup plus fixed sinusoidal positions; pad positions are zero."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_buckets):
        raise ShapeError("token id outside the bucket range")
    if mask is None:
        mask = (ids != PAD_ID).astype(np.float64)
    pe = positional_encoding(ids.shape[-1], config.d_model)
    out = T.embedding(table, ids) + pe
    return out * np.asarray(mask, dtype=np.float64)[..., None]


class EmbeddingStore:
    """Precomputed contextual embeddings keyed by record index.

    Binary layout: one JSON header line (``format_version``, ``count``,
    ``L``, ``d_model``, ``dtype``) terminated by ``\\n``, then ``count * L *
    d_model`` little-endian float32 values, row-major. A CSV with header
    ``record,position,e0,...`` is accepted for tiny fixtures.
    """

    def __init__(self, array: np.ndarray):
        if array.ndim != 3:
            raise IngestionError(f"embedding array must be (count, L, d_model), got {array.shape}")
        self.array = np.asarray(array, dtype=np.float64)

    @property
    def shape(self):
        return self.array.shape

    def rows(self, indices) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.array)):
            bad = [int(i) for i in idx if not 0 <= i < len(self.array)]
            raise IngestionError(f"no precomputed embedding for record(s) {bad[:5]}")
        out = self.array[idx]
        mask = (np.abs(out).sum(axis=-1) > 0).astype(np.float64)
        return out, mask

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        path = Path(path)
        if not path.exists():
            raise IngestionError(f"embedding file {path} does not exist")
        if path.suffix.lower() == ".csv":
            return cls._load_csv(path)
        raw = path.read_bytes()
        head, sep, payload = raw.partition(b"\n")
        if not sep:
            raise IngestionError("embedding file has no header line")
        try:
            header = json.loads(head.decode("utf-8"))
            count, L, d = int(header["count"]), int(header["L"]), int(header["d_model"])
        except (ValueError, KeyError) as exc:
            raise IngestionError(f"bad embedding header: {exc}") from exc
        if header.get("dtype", "float32") not in ("float32", "float32-le", "<f4"):
            raise IngestionError(f"unsupported dtype {header.get('dtype')!r}")
        expected = count * L * d * 4
        if len(payload) != expected:
            raise IngestionError(f"payload is {len(payload)} bytes, header implies {expected}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(count, L, d)
        return cls(arr.astype(np.float64))

    @classmethod
    def _load_csv(cls, path: Path) -> "EmbeddingStore":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise IngestionError("embedding CSV has no data rows")
        d = len(rows[0]) - 2
        data = [(int(r[0]), int(r[1]), [float(v) for v in r[2:]]) for r in rows[1:] if r]
        count = 1 + max(r for r, _, _ in data)
        L = 1 + max(p for _, p, _ in data)
        arr = np.zeros((count, L, d))
        for r, p, vec in data:
            arr[r, p] = vec
        return cls(arr)


def write_embedding_file(path, array) -> None:
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim != 3:
        raise ShapeError("embedding array must be (count, L, d_model)")
    header = {
        "format_version": EMBEDDING_FORMAT_VERSION,
        "count": arr.shape[0],
        "L": arr.shape[1],
        "d_model": arr.shape[2],
        "dtype": "float32-le",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(arr.tobytes(order="C"))


# ---------------------------------------------------------------------------
# multi-head attention


@dataclass
class MhaParams:
    wq: Tensor  # (h, d_model, d_k)
    wk: Tensor
    wv: Tensor
    wo: Tensor  # (h * d_k, d_model)
    gain: Tensor  # (d_model,)
    bias: Tensor

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d_model: int, heads: int = 4) -> "MhaParams":
        if d_model % heads:
            raise ConfigError(f"d_model={d_model} is not divisible by heads={heads}")
        dk = d_model // heads
        return cls(
            wq=glorot(rng, (heads, d_model, dk)),
            wk=glorot(rng, (heads, d_model, dk)),
            wv=glorot(rng, (heads, d_model, dk)),
            wo=glorot(rng, (heads * dk, d_model)),
            gain=Tensor(np.ones(d_model), requires_grad=True),
            bias=zeros(d_model),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo, "gain": self.gain, "bias": self.bias}


MASK_LOGIT = -1e9


def mha_forward(X, mask, params: MhaParams, return_weights: bool = False):
    """LayerNorm(X + Concat(head_1..head_h) W_o) with scaled dot-product heads.

    ``X`` is (N, L, d_model) or (L, d_model); ``mask`` is 1 for real tokens.
    Masked keys get an additive -1e9 logit before the softmax.
    """
    X = T.constant(X)
    single = X.ndim == 2
    if single:
        X = T.reshape(X, (1,) + X.shape)
    N, L, d = X.shape
    h = params.heads
    if d % h:
        raise ConfigError(f"d_model={d} is not divisible by heads={h}")
    dk = d // h
    mask = np.ones((N, L)) if mask is None else np.asarray(mask, dtype=np.float64).reshape(N, L)

    Xh = T.reshape(X, (N, 1, L, d))
    Q = Xh @ params.wq  # (N, h, L, dk)
    K = Xh @ params.wk
    V = Xh @ params.wv
    scores = (Q @ T.swapaxes(K, -1, -2)) * (1.0 / math.sqrt(dk))
    scores = scores + ((1.0 - mask) * MASK_LOGIT)[:, None, None, :]
    A = T.softmax(scores, axis=-1)
    heads = A @ V  # (N, h, L, dk)
    merged = T.reshape(T.transpose(heads, (0, 2, 1, 3)), (N, L, h * dk))
    Z = T.layer_norm(X + merged @ params.wo, params.gain, params.bias)
    if single:
        Z = T.reshape(Z, (L, d))
        A = T.reshape(A, (h, L, L))
    return (Z, A) if return_weights else Z


# ---------------------------------------------------------------------------
# convolution, recurrence, pooling


def conv1d_forward(U, W, b) -> Tensor:
    """ReLU(W . U[i:i+h] + b) for every window.

    A single filter ``W`` (h, d) with scalar ``b`` gives (..., L-h+1); a bank
    ``W`` (F, h, d) with ``b`` (F,) gives (..., L-h+1, F).
    """
    U, W, b = T.constant(U), T.constant(W), T.constant(b)
    single_filter = W.ndim == 2
    if single_filter:
        W = T.reshape(W, (1,) + W.shape)
        b = T.reshape(b, (1,))
    F, h, d = W.shape
    if U.shape[-1] != d:
        raise ShapeError(f"filter width {d} does not match input width {U.shape[-1]}")
    if h > U.shape[-2]:
        raise ShapeError(f"window {h} is longer than the sequence ({U.shape[-2]})")
    windows = T.unfold1d(U, h)  # (..., n, h*d)
    out = T.relu(windows @ T.transpose(T.reshape(W, (F, h * d))) + b)
    if single_filter:
        out = T.reshape(out, out.shape[:-1])
    return out


@dataclass
class LstmParams:
    W: Tensor  # (d, 4H) input weights, gate blocks (input, forget, cell, output)
    U: Tensor  # (H, 4H) recurrent weights
    b: Tensor  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: int) -> "LstmParams":
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0  # forget-gate bias
        return cls(
            W=glorot(rng, (d_in, 4 * hidden), d_in, hidden),
            U=glorot(rng, (hidden, 4 * hidden), hidden, hidden),
            b=Tensor(b, requires_grad=True),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "U": self.U, "b": self.b}


def lstm_forward(seq, params: LstmParams, direction: str = "forward") -> Tensor:
    if direction not in ("forward", "backward"):
        raise ConfigError(f"direction must be 'forward' or 'backward', got {direction!r}")
    seq = T.constant(seq)
    single = seq.ndim == 2
    if single:
        seq = T.reshape(seq, (1,) + seq.shape)
    out = T.lstm(seq, params.W, params.U, params.b, reverse=direction == "backward")
    return T.reshape(out, out.shape[1:]) if single else out


def bilstm_forward(seq, fwd: LstmParams, bwd: LstmParams) -> Tensor:
    if fwd.hidden != bwd.hidden:
        raise ConfigError(f"forward hidden {fwd.hidden} != backward hidden {bwd.hidden}")
    return T.concat([lstm_forward(seq, fwd, "forward"), lstm_forward(seq, bwd, "backward")], axis=-1)


def global_max_pool(seq) -> Tensor:
    seq = T.constant(seq)
    if seq.ndim < 2 or seq.shape[-2] == 0:
        raise ShapeError(f"cannot pool over an empty time axis, shape {seq.shape}")
    return T.max(seq, axis=-2)


def last_step(seq) -> Tensor:
    seq = T.constant(seq)
    return T.getitem(seq, (Ellipsis, -1, slice(None)))


# ---------------------------------------------------------------------------
# dense and dropout


def dropout(x, rate: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = T.constant(x)
    if not training or rate == 0.0:
        return x
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


@dataclass
class DenseParams:
    W: Tensor  # (in, out)
    b: Tensor  # (out,)

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int) -> "DenseParams":
        return cls(W=glorot(rng, (d_in, d_out)), b=zeros(d_out))

    def tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "b": self.b}


_ACTIVATIONS = {"relu": T.relu, "sigmoid": T.sigmoid, "none": lambda z: z, None: lambda z: z}


def dense_forward(x, W, b, activation: str | None = "none") -> Tensor:
    x, W, b = T.constant(x), T.constant(W), T.constant(b)
    if x.shape[-1] != W.shape[0] or b.shape[-1:] != W.shape[-1:]:
        raise ShapeError(f"dense shapes disagree: x {x.shape}, W {W.shape}, b {b.shape}")
    if activation not in _ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    return _ACTIVATIONS[activation](x @ W + b)
