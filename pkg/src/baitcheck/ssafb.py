"""Syntactic-semantic adaptive fusion network.

Pathway 1 turns the attention-refined contextual sequence into a fused
vector ``X3``; pathway 2 does the same for the selected structural features
(``Y3``); the classifier maps ``[X3 || Y3]`` to a clickbait probability.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import layers as Ly
from . import tensor as T
from .corpus import HeadlineRecord
from .errors import CheckpointError, ConfigError, NotFittedError, ShapeError
from .feats import (
    FEATURE_NAMES, POS_NAMES, SFG_NAMES, RfeSelection, ScalerParams,
    apply_scaler, feature_matrix, fit_scaler, rfe_select, select_columns,
)
from .tensor import Tensor
from .textprep import encoder_tokens

CHECKPOINT_VERSION = 1
ALPHA_MODES = ("learned_alpha", "fixed_equal")
FUSION_SITES = ("x_first", "x_second", "y_first", "y_second")


@dataclass(frozen=True)
class ModelConfig:
    # Full-scale sizes in trailing comments; defaults fit a desktop CPU.
    d_model: int = 64            # 768
    max_len: int = 64            # 64
    vocab_buckets: int = 2 ** 15
    encoder_mode: str = "hash_embedding"
    embedding_path: str | None = None
    heads: int = 4               # 4
    fusion_dim: int = 64         # 768
    x1_hidden: int = 32          # 512
    x2_hidden: int = 16          # 256
    y1_hidden: int = 16          # 128
    y2_hidden: int = 16          # 128
    bilstm_hidden: int = 8
    conv_filters: int = 8
    conv_window: int = 3
    dense_hidden: int = 32
    dropout: float = 0.4
    n_features: int = 10
    use_contextual: bool = True
    use_sfg: bool = True
    use_pos: bool = True
    use_mha: bool = True
    use_ssafb: bool = True
    alpha_mode: str = "learned_alpha"

    def __post_init__(self):
        if not (self.use_contextual or self.use_sfg or self.use_pos):
            raise ConfigError("at least one of use_contextual / use_sfg / use_pos must be on")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(f"alpha_mode must be one of {ALPHA_MODES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if not 1 <= self.n_features < len(FEATURE_NAMES):
            raise ConfigError(f"n_features must be in [1, {len(FEATURE_NAMES) - 1}]")
        if not 1 <= self.conv_window <= self.n_features:
            raise ConfigError("conv_window must fit inside the feature sequence")
        for name in ("fusion_dim", "x1_hidden", "x2_hidden", "y1_hidden", "y2_hidden",
                     "bilstm_hidden", "conv_filters", "dense_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.encoder_mode == "precomputed_file" and not self.embedding_path:
            raise ConfigError("precomputed_file mode needs embedding_path")
        self.encoder()  # validates d_model / heads / max_len / mode

    def encoder(self) -> Ly.EncoderConfig:
        return Ly.EncoderConfig(self.vocab_buckets, self.d_model, self.max_len, self.encoder_mode, self.heads)

    @property
    def use_structural(self) -> bool:
        return self.use_sfg or self.use_pos

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def ablation_tag(self) -> str:
        for name, overrides in ABLATIONS.items():
            if all(getattr(self, k) == v for k, v in {**_FULL, **overrides}.items()):
                return name
        return "custom"


_FULL = dict(use_contextual=True, use_sfg=True, use_pos=True, use_mha=True,
             use_ssafb=True, alpha_mode="learned_alpha")

# One entry per ablation variant, keyed by the CLI name.
ABLATIONS = {
    "contextual-only": dict(use_sfg=False, use_pos=False, alpha_mode="fixed_equal"),
    "sfg-only": dict(use_contextual=False, use_pos=False),
    "pos-only": dict(use_contextual=False, use_sfg=False),
    "structural-only": dict(use_contextual=False),
    "no-mha": dict(use_mha=False, use_ssafb=False),
    "mha": dict(use_ssafb=False),
    "ssafb-no-alpha": dict(alpha_mode="fixed_equal"),
    "full": {},
}
ABLATION_ROWS = {
    "contextual-only": "encoder path alone, equal fusion weights",
    "sfg-only": "five surface counts alone",
    "pos-only": "thirteen tag/lexicon counts alone",
    "structural-only": "all 18 handcrafted counts, no encoder",
    "no-mha": "both inputs, attention off, no fusion block",
    "mha": "both inputs with attention, no fusion block",
    "ssafb-no-alpha": "both inputs, fusion block, equal weights",
    "full": "both inputs, fusion block, learned weights",
}


def with_ablation(config: ModelConfig, name: str) -> ModelConfig:
    if name not in ABLATIONS:
        raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
    return replace(config, **{**_FULL, **ABLATIONS[name]})


# ---------------------------------------------------------------------------
# parameters


def _lstm_shapes(prefix, d_in, hidden):
    return {f"{prefix}.W": (d_in, 4 * hidden), f"{prefix}.U": (hidden, 4 * hidden), f"{prefix}.b": (4 * hidden,)}


def _dense_shapes(prefix, d_in, d_out):
    return {f"{prefix}.W": (d_in, d_out), f"{prefix}.b": (d_out,)}


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every learnable tensor, computed from the config alone."""
    c = config
    dk = c.d_model // c.heads
    fd = c.fusion_dim
    shapes: dict[str, tuple[int, ...]] = {}
    if c.encoder_mode == "hash_embedding":
        shapes["encoder.table"] = (c.vocab_buckets, c.d_model)
    for w in ("wq", "wk", "wv"):
        shapes[f"mha.{w}"] = (c.heads, c.d_model, dk)
    shapes["mha.wo"] = (c.heads * dk, c.d_model)
    shapes["mha.gain"] = (c.d_model,)
    shapes["mha.bias"] = (c.d_model,)
    shapes.update(_lstm_shapes("p1.lstm_x1", c.d_model, c.x1_hidden))
    shapes.update(_lstm_shapes("p1.lstm_x2", c.x1_hidden, c.x2_hidden))
    shapes.update(_dense_shapes("p1.fdiff", c.d_model, fd))
    shapes.update(_dense_shapes("p1.adj_x1", c.x1_hidden, fd))
    shapes.update(_dense_shapes("p1.adj_x2", c.x2_hidden, fd))
    shapes["p2.conv.W"] = (c.conv_filters, c.conv_window, 1)
    shapes["p2.conv.b"] = (c.conv_filters,)
    shapes.update(_lstm_shapes("p2.bilstm_fwd", c.conv_filters, c.bilstm_hidden))
    shapes.update(_lstm_shapes("p2.bilstm_bwd", c.conv_filters, c.bilstm_hidden))
    shapes.update(_dense_shapes("p2.processed", 2 * c.bilstm_hidden, fd))
    shapes.update(_lstm_shapes("p2.lstm_y1", 2 * c.bilstm_hidden, c.y1_hidden))
    shapes.update(_lstm_shapes("p2.lstm_y2", c.y1_hidden, c.y2_hidden))
    shapes.update(_dense_shapes("p2.adj_ypool", c.y1_hidden, fd))
    shapes.update(_dense_shapes("p2.adj_y2", c.y2_hidden, fd))
    for site in FUSION_SITES:
        shapes[f"alpha.{site}"] = (2,)
    shapes.update(_dense_shapes("head.dense", 2 * fd, c.dense_hidden))
    shapes.update(_dense_shapes("head.out", c.dense_hidden, 1))
    return shapes


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases, +1 LSTM forget bias, zero alphas."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(config).items():
        kind = name.rsplit(".", 1)[-1]
        if name == "encoder.table":
            t = Ly.init_embedding(rng, config.encoder())
        elif name.startswith("alpha."):
            t = Ly.zeros(shape)
        elif name == "mha.gain":
            t = Tensor(np.ones(shape), requires_grad=True)
        elif kind == "b" and "lstm" in name:
            hidden = shape[0] // 4
            b = np.zeros(shape)
            b[hidden:2 * hidden] = 1.0  # forget gate
            t = Tensor(b, requires_grad=True)
        elif kind in ("b", "bias"):
            t = Ly.zeros(shape)
        elif name.startswith("mha.w") and name != "mha.wo":
            t = Ly.glorot(rng, shape, config.d_model, shape[-1])
        elif name == "p2.conv.W":
            t = Ly.glorot(rng, shape, config.conv_window, config.conv_filters)
        elif kind in ("W", "U") and "lstm" in name:
            hidden = shape[1] // 4
            t = Ly.glorot(rng, shape, shape[0], hidden)
        else:
            t = Ly.glorot(rng, shape)
        params[name] = t
    return params


# ---------------------------------------------------------------------------
# adaptive weighting


@dataclass
class AdaptiveWeighting:
    """Convex two-way combination ``w1 * a + w2 * b``.

    learned_alpha: ``(w1, w2) = softmax(alphas)``; fixed_equal: (0.5, 0.5).
    """

    alphas: Tensor
    mode: str = "learned_alpha"

    def weights(self) -> Tensor:
        if self.mode == "fixed_equal":
            return T.constant(np.array([0.5, 0.5]))
        if self.mode != "learned_alpha":
            raise ConfigError(f"unknown alpha mode {self.mode!r}")
        return T.softmax(self.alphas, axis=-1)


def adaptive_weight(a, b, site: AdaptiveWeighting) -> Tensor:
    a, b = T.constant(a), T.constant(b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot fuse shapes {a.shape} and {b.shape}")
    w = site.weights()
    return a * w[0] + b * w[1]


# ---------------------------------------------------------------------------
# model


@dataclass
class ModelInputs:
    """Per-record arrays the network consumes."""

    features: np.ndarray                 # (N, n_features) selected and scaled
    raw_features: np.ndarray             # (N, 18) unscaled, before ablation masking
    token_ids: np.ndarray | None = None  # (N, max_len), hash mode
    mask: np.ndarray | None = None       # (N, max_len)
    contextual: np.ndarray | None = None  # (N, max_len, d_model), precomputed mode
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.features)

    def subset(self, idx) -> "ModelInputs":
        pick = (lambda a: None if a is None else a[idx])
        return ModelInputs(
            features=self.features[idx], raw_features=self.raw_features[idx],
            token_ids=pick(self.token_ids), mask=pick(self.mask),
            contextual=pick(self.contextual), labels=pick(self.labels),
        )

    def with_features(self, features: np.ndarray) -> "ModelInputs":
        return replace(self, features=np.asarray(features, dtype=np.float64))


@dataclass
class ClickGuardModel:
    config: ModelConfig
    params: dict[str, Tensor]
    scaler: ScalerParams | None = None
    rfe: RfeSelection | None = None
    _store: Ly.EmbeddingStore | None = field(default=None, repr=False)

    @classmethod
    def init(cls, config: ModelConfig | None = None, seed: int = 0) -> "ClickGuardModel":
        config = config or ModelConfig()
        return cls(config=config, params=init_params(config, seed))

    # -- parameter views ---------------------------------------------------
    def parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def mha_params(self) -> Ly.MhaParams:
        p = self.params
        return Ly.MhaParams(p["mha.wq"], p["mha.wk"], p["mha.wv"], p["mha.wo"], p["mha.gain"], p["mha.bias"])

    def lstm(self, prefix: str) -> Ly.LstmParams:
        p = self.params
        return Ly.LstmParams(p[f"{prefix}.W"], p[f"{prefix}.U"], p[f"{prefix}.b"])

    def dense(self, x, prefix: str, activation: str = "relu") -> Tensor:
        return Ly.dense_forward(x, self.params[f"{prefix}.W"], self.params[f"{prefix}.b"], activation)

    def site(self, name: str) -> AdaptiveWeighting:
        return AdaptiveWeighting(self.params[f"alpha.{name}"], self.config.alpha_mode)

    @property
    def is_fitted(self) -> bool:
        return self.scaler is not None and self.rfe is not None

    # -- preprocessing -----------------------------------------------------
    def group_mask(self) -> np.ndarray:
        """1 for structural columns enabled by the ablation flags, else 0."""
        on = [(n in POS_NAMES and self.config.use_pos) or (n in SFG_NAMES and self.config.use_sfg)
              for n in FEATURE_NAMES]
        return np.array(on, dtype=np.float64)

    def fit_preprocessing(self, records: Sequence[HeadlineRecord], seed: int = 0) -> None:
        """Fit RFE and the scaler on (training) records only."""
        raw = feature_matrix([r.text for r in records]) * self.group_mask()
        labels = np.array([r.label for r in records])
        self.rfe = rfe_select(raw, labels, target_count=self.config.n_features, seed=seed)
        self.scaler = fit_scaler(select_columns(raw, self.rfe))

    def structural_inputs(self, raw: np.ndarray) -> np.ndarray:
        if not self.is_fitted:
            raise NotFittedError("scaler/RFE are not fitted; call fit_preprocessing first")
        return apply_scaler(select_columns(np.asarray(raw) * self.group_mask(), self.rfe), self.scaler)

    def embedding_store(self) -> Ly.EmbeddingStore:
        if self._store is None:
            self._store = Ly.EmbeddingStore.load(self.config.embedding_path)
            if self._store.shape[1:] != (self.config.max_len, self.config.d_model):
                raise ConfigError(f"embedding file rows are {self._store.shape[1:]}, config expects "
                                  f"{(self.config.max_len, self.config.d_model)}")
        return self._store

    def prepare(self, items: Sequence[HeadlineRecord | str]) -> ModelInputs:
        texts = [it.text if isinstance(it, HeadlineRecord) else str(it) for it in items]
        raw = feature_matrix(texts)
        labels = None
        if items and all(isinstance(it, HeadlineRecord) for it in items):
            labels = np.array([it.label for it in items], dtype=np.int64)
        inputs = ModelInputs(features=self.structural_inputs(raw), raw_features=raw, labels=labels)
        if self.config.encoder_mode == "hash_embedding":
            inputs.token_ids, inputs.mask = Ly.encode_ids([encoder_tokens(t) for t in texts], self.config.encoder())
        else:
            idx = [getattr(it, "index", None) for it in items]
            if any(i is None for i in idx):
                raise NotFittedError("precomputed embeddings need records carrying their file index")
            inputs.contextual, inputs.mask = self.embedding_store().rows(idx)
        return inputs

    # -- forward -----------------------------------------------------------
    def embed(self, inputs: ModelInputs) -> Tensor:
        if self.config.encoder_mode == "hash_embedding":
            return Ly.encode(inputs.token_ids, self.config.encoder(), self.params["encoder.table"], inputs.mask)
        return T.constant(inputs.contextual)

    def contextual_features(self, inputs: ModelInputs) -> tuple[Tensor, Tensor]:
        """(raw encoder output, attention-refined output), each (N, L, d_model)."""
        E = self.embed(inputs)
        Fc = Ly.mha_forward(E, inputs.mask, self.mha_params()) if self.config.use_mha else E
        return E, Fc

    def forward(self, inputs: ModelInputs, training: bool = False, rng=None) -> Tensor:
        return forward(inputs, self, training=training, rng=rng)

    def predict_inputs(self, inputs: ModelInputs, batch_size: int = 256) -> np.ndarray:
        out = []
        for start in range(0, len(inputs), batch_size):
            part = inputs.subset(slice(start, start + batch_size))
            out.append(self.forward(part).data)
        return np.concatenate(out) if out else np.zeros(0)

    def predict_proba(self, items: Sequence[HeadlineRecord | str], batch_size: int = 256) -> np.ndarray:
        return self.predict_inputs(self.prepare(items), batch_size)

    # -- persistence -------------------------------------------------------
    def save(self, path) -> None:
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "ClickGuardModel":
        return load_checkpoint(path)


def pathway1_forward(F_c, model: ClickGuardModel) -> Tensor:
    """Contextual pathway: two stacked LSTMs, pooled summaries, two fusions."""
    F_c = T.constant(F_c)
    F_diff = model.dense(Ly.global_max_pool(F_c), "p1.fdiff")
    if not model.config.use_ssafb:
        return F_diff
    X1 = Ly.lstm_forward(F_c, model.lstm("p1.lstm_x1"))
    X2 = Ly.lstm_forward(X1, model.lstm("p1.lstm_x2"))
    X1_adj = model.dense(Ly.global_max_pool(X1), "p1.adj_x1")
    X2_adj = model.dense(Ly.global_max_pool(X2), "p1.adj_x2")
    X3 = adaptive_weight(F_diff, X1_adj, model.site("x_first"))
    return adaptive_weight(X3, X2_adj, model.site("x_second"))


def pathway2_forward(f_input, model: ClickGuardModel, training: bool = False, rng=None) -> Tensor:
    """Structural pathway: Conv1D over the feature sequence, BiLSTM, two
    stacked LSTMs, dropout, pooled summaries, two fusions."""
    f = T.constant(f_input)
    n = model.config.n_features
    if f.shape[-1] != n:
        raise ShapeError(f"structural input has {f.shape[-1]} features, model expects {n}")
    single = f.ndim == 1
    if single:
        f = T.reshape(f, (1, n))
    p = model.params
    U = T.reshape(f, (f.shape[0], n, 1))
    conv = Ly.conv1d_forward(U, p["p2.conv.W"], p["p2.conv.b"])  # (N, n-h+1, F)
    seq = Ly.bilstm_forward(conv, model.lstm("p2.bilstm_fwd"), model.lstm("p2.bilstm_bwd"))
    processed = model.dense(Ly.global_max_pool(seq), "p2.processed")
    if not model.config.use_ssafb:
        Y3 = processed
    else:
        Y1 = Ly.lstm_forward(seq, model.lstm("p2.lstm_y1"))
        Y_pool_adj = model.dense(Ly.global_max_pool(Y1), "p2.adj_ypool")
        Y2 = Ly.last_step(Ly.lstm_forward(Y1, model.lstm("p2.lstm_y2")))
        Y2 = Ly.dropout(Y2, model.config.dropout, training, rng)
        Y2_adj = model.dense(Y2, "p2.adj_y2")
        Y3 = adaptive_weight(processed, Y_pool_adj, model.site("y_first"))
        Y3 = adaptive_weight(Y3, Y2_adj, model.site("y_second"))
    return T.reshape(Y3, (Y3.shape[-1],)) if single else Y3


def classify(X3, Y3, model: ClickGuardModel) -> Tensor:
    """sigmoid(W5 relu(W4 [X3 || Y3] + b4) + b5); shape (N,) or scalar-like (1,)."""
    X3, Y3 = T.constant(X3), T.constant(Y3)
    fd = model.config.fusion_dim
    if X3.shape[-1] != fd or Y3.shape[-1] != fd or X3.shape != Y3.shape:
        raise ShapeError(f"classifier inputs must both be (..., {fd}); got {X3.shape} and {Y3.shape}")
    Z = T.concat([X3, Y3], axis=-1)
    Z_dense = model.dense(Z, "head.dense", "relu")
    Z_pred = model.dense(Z_dense, "head.out", "sigmoid")
    return T.reshape(Z_pred, Z_pred.shape[:-1] or (1,))


def forward(inputs: ModelInputs, model: ClickGuardModel, training: bool = False, rng=None) -> Tensor:
    """Probabilities (N,) for a prepared batch. Disabled pathways contribute zeros."""
    N = len(inputs)
    fd = model.config.fusion_dim
    if model.config.use_contextual:
        _, F_c = model.contextual_features(inputs)
        X3 = pathway1_forward(F_c, model)
    else:
        X3 = T.constant(np.zeros((N, fd)))
    if model.config.use_structural:
        Y3 = pathway2_forward(inputs.features, model, training, rng)
    else:
        Y3 = T.constant(np.zeros((N, fd)))
    return classify(X3, Y3, model)


# ---------------------------------------------------------------------------
# checkpoints


def _digest(envelope: dict) -> str:
    body = {k: v for k, v in envelope.items() if k != "checksum"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def checkpoint_dict(model: ClickGuardModel) -> dict:
    tensors = []
    for name, t in model.params.items():
        data = np.ascontiguousarray(t.data, dtype="<f8")
        tensors.append({
            "name": name,
            "shape": list(t.shape),
            "dtype": "float64",
            "data_base64": base64.b64encode(data.tobytes()).decode("ascii"),
        })
    env = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
        "rfe_selection": None if model.rfe is None else model.rfe.to_dict(),
        "tensors": tensors,
    }
    env["checksum"] = _digest(env)
    return env


def save_checkpoint(model: ClickGuardModel, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model)), encoding="utf-8")


def model_from_checkpoint(env: dict) -> ClickGuardModel:
    try:
        if env.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {env.get('format_version')!r}")
        if env.get("checksum") != _digest(env):
            raise CheckpointError("checksum mismatch; the checkpoint was modified")
        config = ModelConfig.from_dict(env["config"])
        expected = param_shapes(config)
        params: dict[str, Tensor] = {}
        for entry in env["tensors"]:
            name = entry["name"]
            shape = tuple(entry["shape"])
            if expected.get(name) != shape:
                raise CheckpointError(f"tensor {name!r} has shape {shape}, config implies {expected.get(name)}")
            if entry.get("dtype", "float64") != "float64":
                raise CheckpointError(f"tensor {name!r} has unsupported dtype {entry.get('dtype')!r}")
            raw = base64.b64decode(entry["data_base64"], validate=True)
            if len(raw) != 8 * int(np.prod(shape, dtype=np.int64)):
                raise CheckpointError(f"tensor {name!r} payload does not match its shape")
            params[name] = Tensor(np.frombuffer(raw, dtype="<f8").reshape(shape).copy(), requires_grad=True)
        missing = set(expected) - set(params)
        if missing:
            raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)}")
        params = {name: params[name] for name in expected}
        scaler = None if env.get("scaler") is None else ScalerParams.from_dict(env["scaler"])
        rfe = None if env.get("rfe_selection") is None else RfeSelection.from_dict(env["rfe_selection"])
        if scaler is not None and len(scaler) != config.n_features:
            raise CheckpointError("scaler width does not match n_features")
        if rfe is not None and len(rfe.kept) != config.n_features:
            raise CheckpointError("RFE selection size does not match n_features")
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    return ClickGuardModel(config=config, params=params, scaler=scaler, rfe=rfe)


def load_checkpoint(path) -> ClickGuardModel:
    try:
        env = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(env, dict):
        raise CheckpointError("checkpoint is not a JSON object")
    return model_from_checkpoint(env)
