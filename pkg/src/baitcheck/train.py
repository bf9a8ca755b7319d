"""Class-weighted training with a cosine-cycle learning rate, evaluation
metrics, and a seeded random search for the base learning rate."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .corpus import ClassWeights, DatasetSplit, HeadlineRecord, compute_class_weights, stratified_split
from .errors import ConfigError, DatasetError, DegenerateClassError, DivergenceError, ShapeError
from .ssafb import ClickGuardModel, ModelInputs
from .tensor import Tensor

CLAMP = 1e-7
OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    eta_max: float = 1e-3
    eta_min: float = 1e-6
    cycle_length: int = 200       # T, in steps (or epochs when cycle_unit == "epoch")
    cycle_unit: str = "step"
    seed: int = 0
    base_lr_search_budget: int = 8
    optimizer: str = "sgd"         # plain mini-batch gradient descent; "adam" optional
    momentum: float = 0.0         # sgd only
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    class_weighting: bool = True
    probe_epochs: int = 2
    probe_max_records: int = 2000

    def __post_init__(self):
        if not self.eta_min < self.eta_max:
            raise ConfigError(f"eta_min ({self.eta_min}) must be below eta_max ({self.eta_max})")
        if self.eta_min < 0:
            raise ConfigError("eta_min must be non-negative")
        if self.cycle_length < 2:
            raise ConfigError("cycle_length must be at least 2")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.cycle_unit not in ("step", "epoch"):
            raise ConfigError("cycle_unit must be 'step' or 'epoch'")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.base_lr_search_budget < 1:
            raise ConfigError("base_lr_search_budget must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if "adam_betas" in d:
            d["adam_betas"] = tuple(d["adam_betas"])
        return cls(**d)


@dataclass
class TrainHistory:
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)  # one entry per optimizer step
    step_loss: list[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.train_acc)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_acc", "val_acc", "train_loss", "val_loss"])
            for e in range(self.epochs):
                w.writerow([e + 1, repr(self.train_acc[e]), _opt(self.val_acc, e),
                            repr(self.train_loss[e]), _opt(self.val_loss, e)])

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def _opt(values, e):
    return repr(values[e]) if e < len(values) and values[e] is not None else ""


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    loss: float
    n: int
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# loss and schedule


def weighted_bce(p, y, weights: ClassWeights | Sequence[float] | None = None):
    """Mean of ``-w_y [y log p + (1 - y) log(1 - p)]`` with p clamped to [1e-7, 1 - 1e-7].

    Accepts a Tensor (returns a differentiable scalar Tensor) or an array
    (returns a float).
    """
    y = np.asarray(y, dtype=np.float64)
    shape = p.shape if isinstance(p, Tensor) else np.shape(p)
    if tuple(shape) != y.shape:
        raise ShapeError(f"probabilities {tuple(shape)} and labels {y.shape} differ in shape")
    if weights is None:
        w = np.ones_like(y)
    else:
        wa = weights.as_array() if isinstance(weights, ClassWeights) else np.asarray(weights, dtype=np.float64)
        w = np.where(y == 1, wa[1], wa[0])
    if isinstance(p, Tensor):
        pc = T.clip(p, CLAMP, 1.0 - CLAMP)
        ll = T.log(pc) * y + T.log(1.0 - pc) * (1.0 - y)
        return T.mean(ll * w) * -1.0
    pc = np.clip(np.asarray(p, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    ll = np.log(pc) * y + np.log(1.0 - pc) * (1.0 - y)
    return float(np.mean(ll * w) * -1.0)


def lr_at(t: int, config: TrainConfig) -> float:
    """eta_min + (eta_max - eta_min) (1 + cos(pi (t mod T) / T)) / 2."""
    T_ = config.cycle_length
    return config.eta_min + 0.5 * (config.eta_max - config.eta_min) * (1.0 + math.cos(math.pi * (t % T_) / T_))


# ---------------------------------------------------------------------------
# optimizers


class _Adam:
    def __init__(self, params: list[Tensor], betas, eps):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, params: list[Tensor], momentum: float):
        self.params = params
        self.momentum = momentum
        self.vel = [np.zeros_like(p.data) for p in params]

    def step(self, lr: float) -> None:
        for p, vel in zip(self.params, self.vel):
            if p.grad is None:
                continue
            if self.momentum:
                vel *= self.momentum
                vel += p.grad
                p.data -= lr * vel
            else:
                p.data -= lr * p.grad


def _optimizer(params, config: TrainConfig):
    if config.optimizer == "adam":
        return _Adam(params, config.adam_betas, config.adam_eps)
    return _Sgd(params, config.momentum)


def _active_params(model: ClickGuardModel) -> list[Tensor]:
    """Parameters that can receive a gradient under the model's ablation flags."""
    c = model.config
    out = []
    for name, p in model.params.items():
        if name.startswith(("encoder.", "mha.", "p1.", "alpha.x_")) and not c.use_contextual:
            continue
        if name.startswith(("p2.", "alpha.y_")) and not c.use_structural:
            continue
        if name.startswith("mha.") and not c.use_mha:
            continue
        if name.startswith("alpha.") and c.alpha_mode == "fixed_equal":
            continue
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# training


def _inputs(model: ClickGuardModel, records) -> ModelInputs:
    if isinstance(records, ModelInputs):
        return records
    return model.prepare(list(records))


def _epoch_stats(model: ClickGuardModel, inputs: ModelInputs, weights=None) -> tuple[float, float]:
    p = model.predict_inputs(inputs)
    acc = float(np.mean((p > 0.5).astype(np.int64) == inputs.labels))
    return acc, weighted_bce(p, inputs.labels, weights)


def train(model: ClickGuardModel, split: DatasetSplit, config: TrainConfig | None = None,
          on_epoch_end: Callable[[int, ClickGuardModel, TrainHistory], None] | None = None,
          validate: bool = True) -> tuple[ClickGuardModel, TrainHistory]:
    """Mini-batch training of ``model`` in place; returns (model, history).

    Scaler and RFE are fitted on ``split.train`` if the model is not yet
    fitted. Batch order and dropout masks come from two streams spawned from
    ``config.seed``, so identical inputs give bit-identical parameters.
    """
    config = config or TrainConfig()
    if not split.train:
        raise DatasetError("training split is empty")
    if not model.is_fitted:
        model.fit_preprocessing(split.train, seed=config.seed)
    history = TrainHistory()
    if config.epochs == 0:
        return model, history

    tr = _inputs(model, split.train)
    va = _inputs(model, split.test) if validate and split.test else None
    weights = None
    if config.class_weighting:
        try:
            weights = compute_class_weights(tr.labels)
        except DegenerateClassError:
            weights = None
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    params = _active_params(model)
    opt = _optimizer(params, config)
    n = len(tr)
    steps_per_epoch = math.ceil(n / config.batch_size)
    step = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            batch = tr.subset(idx)
            for p in params:
                p.grad = None
            probs = model.forward(batch, training=True, rng=dropout_rng)
            loss = weighted_bce(probs, batch.labels, weights)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(step, value)
            T.backward(loss)
            t = epoch if config.cycle_unit == "epoch" else step
            lr = lr_at(t, config)
            opt.step(lr)
            history.lr.append(lr)
            history.step_loss.append(value)
            step += 1
        acc, tl = _epoch_stats(model, tr, weights)
        if not math.isfinite(tl):
            raise DivergenceError(step, tl)
        history.train_acc.append(acc)
        history.train_loss.append(tl)
        if va is not None:
            vacc, vl = _epoch_stats(model, va)
            history.val_acc.append(vacc)
            history.val_loss.append(vl)
        if on_epoch_end is not None:
            on_epoch_end(epoch + 1, model, history)
    for p in model.params.values():
        p.grad = None
    return model, history


def metrics_from_predictions(p, y) -> Metrics:
    """Threshold rule: class 1 iff p > 0.5 (p == 0.5 goes to class 0)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if p.size == 0:
        raise DatasetError("cannot evaluate an empty record set")
    if p.shape != y.shape:
        raise ShapeError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    pred = (p > 0.5).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(accuracy=(tp + tn) / len(y), precision=precision, recall=recall, f1=f1,
                   loss=weighted_bce(p, y), n=len(y), tp=tp, fp=fp, fn=fn, tn=tn)


def evaluate(model: ClickGuardModel, records) -> Metrics:
    if not isinstance(records, ModelInputs) and not records:
        raise DatasetError("cannot evaluate an empty record set")
    inputs = _inputs(model, records)
    return metrics_from_predictions(model.predict_inputs(inputs), inputs.labels)


# ---------------------------------------------------------------------------
# base learning-rate search


def log_uniform_candidates(budget: int, low: float = 1e-7, high: float = 1e-3, seed: int = 0) -> np.ndarray:
    if budget < 1:
        raise ConfigError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    return np.exp(rng.uniform(math.log(low), math.log(high), size=budget))


def argmin_candidate(candidates: Sequence[float], scores: Sequence[float]) -> int:
    """Index of the lowest score; NaN/inf scores rank last, ties keep the earliest."""
    keyed = [(0 if math.isfinite(s) else 1, s if math.isfinite(s) else 0.0, i)
             for i, s in enumerate(scores)]
    if len(keyed) != len(candidates) or not keyed:
        raise ShapeError("need one score per candidate")
    return min(keyed)[2]


@dataclass(frozen=True)
class LrSearchResult:
    best: float
    candidates: tuple[float, ...]
    scores: tuple[float, ...]


def search_base_lr(model_factory: Callable[[], ClickGuardModel], split: DatasetSplit,
                   budget: int | None = None, config: TrainConfig | None = None,
                   seed: int | None = None,
                   score_fn: Callable[[float], float] | None = None) -> LrSearchResult:
    """Seeded random search over log-uniform rates in [1e-7, 1e-3].

    Each candidate is used as ``eta_min`` (the tunable base of the cycle) for
    a short probe run, scored by validation loss; divergent probes score NaN
    and are never selected. ``score_fn`` replaces the probe run, e.g. with a
    known objective.
    """
    config = config or TrainConfig()
    budget = config.base_lr_search_budget if budget is None else budget
    seed = config.seed if seed is None else seed
    cands = log_uniform_candidates(budget, seed=seed)
    # keep every candidate strictly below eta_max so the probe config is valid
    cands = np.minimum(cands, np.nextafter(config.eta_max, 0.0))
    if score_fn is None:
        train_recs = list(split.train)
        if len(train_recs) > config.probe_max_records:
            train_recs = stratified_split(train_recs, config.probe_max_records / len(train_recs), seed).train
        try:
            inner = stratified_split(train_recs, 0.8, seed)
            probe_split = DatasetSplit(inner.train, inner.test, seed, 0.8)
        except DegenerateClassError:
            probe_split = DatasetSplit(train_recs, list(split.test), seed, split.ratio)

        def score_fn(rate):
            model = model_factory()
            probe_cfg = replace(config, eta_min=float(rate), epochs=config.probe_epochs)
            try:
                train(model, probe_split, probe_cfg, validate=False)
                return evaluate(model, probe_split.test).loss
            except DivergenceError:
                return float("nan")

    scores = [float(score_fn(float(c))) for c in cands]
    best = argmin_candidate(cands, scores)
    return LrSearchResult(float(cands[best]), tuple(float(c) for c in cands), tuple(scores))
