"""Robustness and interpretability harness: text perturbations with average
prediction change, permutation feature importance, local linear surrogate
explanations, and per-class radar tables."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import HeadlineRecord
from .errors import ConfigError, DatasetError
from .feats import FEATURE_LABELS, FEATURE_NAMES, feature_matrix
from .ssafb import ModelInputs
from .textprep import is_stopword, load_lexicon, lexicon_digest

log = logging.getLogger(__name__)

KINDS = ("shuffle_words", "stopword_removal", "random_deletion", "typos", "synonyms")
_CORE = re.compile(r"^(\W*)(.*?)(\W*)$", re.UNICODE)


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    seed: int = 0
    deletion_prob: float = 0.1
    typo_prob: float = 0.1
    max_synonym_swaps: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}; choose from {KINDS}")
        for name in ("deletion_prob", "typo_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.max_synonym_swaps < 0:
            raise ConfigError("max_synonym_swaps must be non-negative")

    def params(self) -> dict:
        return {"deletion_prob": self.deletion_prob, "typo_prob": self.typo_prob,
                "max_synonym_swaps": self.max_synonym_swaps}


# ---------------------------------------------------------------------------
# perturbations


@lru_cache(maxsize=None)
def synonym_table() -> dict[str, tuple[str, ...]]:
    """Word -> synonyms; repeated head words are merged in file order."""
    table: dict[str, list[str]] = {}
    for line in load_lexicon("synonyms.txt"):
        head, *syns = line.split()
        bucket = table.setdefault(head, [])
        bucket.extend(s for s in syns if s not in bucket and s != head)
    return {k: tuple(v) for k, v in table.items() if v}


def _split_core(word: str) -> tuple[str, str, str]:
    m = _CORE.match(word)
    return m.group(1), m.group(2), m.group(3)


def _match_case(src: str, repl: str) -> str:
    if src.isupper() and len(src) > 1:
        return repl.upper()
    if src[:1].isupper():
        return repl[:1].upper() + repl[1:]
    return repl


def perturb(text: str, spec: PerturbationSpec, rng: np.random.Generator | None = None) -> str:
    """Apply one perturbation to the whitespace-separated words of ``text``.

    Words keep attached punctuation. The result always has at least one word
    when the input does. ``rng`` defaults to a generator seeded by ``spec.seed``.
    """
    if spec.kind not in KINDS:
        raise ConfigError(f"unknown perturbation kind {spec.kind!r}")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    words = text.split()
    if not words:
        return text

    if spec.kind == "shuffle_words":
        out = [words[i] for i in rng.permutation(len(words))]
    elif spec.kind == "stopword_removal":
        out = [w for w in words if not is_stopword(_split_core(w)[1].lower())]
        if not out:
            out = words  # an all-stop-word headline is left alone
    elif spec.kind == "random_deletion":
        keep = rng.random(len(words)) >= spec.deletion_prob
        if not keep.any():
            keep[rng.integers(len(words))] = True
        out = [w for w, k in zip(words, keep) if k]
    elif spec.kind == "typos":
        out = []
        draws = rng.random(len(words))
        for w, u in zip(words, draws):
            if u < spec.typo_prob and len(w) >= 2:
                i = int(rng.integers(len(w) - 1))
                w = w[:i] + w[i + 1] + w[i] + w[i + 2:]
            out.append(w)
    else:  # synonyms
        table = synonym_table()
        out = list(words)
        eligible = [i for i, w in enumerate(words) if _split_core(w)[1].lower() in table]
        n = min(spec.max_synonym_swaps, len(eligible))
        if n:
            chosen = sorted(rng.choice(eligible, size=n, replace=False).tolist())
            for i in chosen:
                pre, core, post = _split_core(words[i])
                options = table[core.lower()]
                out[i] = pre + _match_case(core, options[int(rng.integers(len(options)))]) + post
    return " ".join(out)


def _record_seed(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, i]))


def _texts(records) -> list[str]:
    return [r.text if isinstance(r, HeadlineRecord) else str(r) for r in records]


def _retext(item, text: str):
    return replace(item, text=text) if isinstance(item, HeadlineRecord) else text


def perturb_all(records, spec: PerturbationSpec) -> list:
    """Perturb each record with its own stream derived from (seed, position)."""
    return [_retext(r, perturb(t, spec, _record_seed(spec.seed, i)))
            for i, (r, t) in enumerate(zip(records, _texts(records)))]


def avg_prediction_change(model, records: Sequence, spec: PerturbationSpec) -> float:
    """Mean absolute change in predicted probability under ``spec``."""
    records = list(records)
    if not records:
        raise DatasetError("average prediction change needs at least one record")
    p0 = np.asarray(model.predict_proba(records), dtype=np.float64)
    p1 = np.asarray(model.predict_proba(perturb_all(records, spec)), dtype=np.float64)
    return float(np.mean(np.abs(p1 - p0)))


# ---------------------------------------------------------------------------
# permutation feature importance


@dataclass(frozen=True)
class PfiResult:
    feature_index: int
    feature: str
    importance: float
    std: float
    repeats: int
    metric: str
    baseline: float


def _metric(p: np.ndarray, y: np.ndarray, metric: str) -> float:
    if metric == "accuracy":
        return float(np.mean((p > 0.5).astype(np.int64) == y))
    if metric == "loss":
        pc = np.clip(p, 1e-7, 1 - 1e-7)
        return float(-np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc)))
    raise ConfigError(f"metric must be 'accuracy' or 'loss', got {metric!r}")


def _prepared(model, records) -> ModelInputs:
    return records if isinstance(records, ModelInputs) else model.prepare(list(records))


def _feature_names(model, width: int) -> tuple[str, ...]:
    rfe = getattr(model, "rfe", None)
    if rfe is not None and len(rfe.kept) == width:
        return tuple(rfe.kept)
    return tuple(f"f{j}" for j in range(width))


def pfi(model, records, feature_index: int, repeats: int = 5, metric: str = "accuracy",
        seed: int = 0) -> PfiResult:
    """Drop in ``metric`` when one selected-feature column is shuffled.

    For accuracy the importance is ``baseline - permuted``; for loss it is
    ``permuted - baseline``, so a positive value always means the feature
    helps. ``std`` is the population std of the per-repeat values.
    """
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    inputs = _prepared(model, records)
    width = inputs.features.shape[1]
    if not 0 <= feature_index < width:
        raise ConfigError(f"feature_index {feature_index} outside [0, {width})")
    y = inputs.labels
    base = _metric(model.predict_inputs(inputs), y, metric)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(repeats):
        feats = inputs.features.copy()
        feats[:, feature_index] = feats[rng.permutation(len(feats)), feature_index]
        score = _metric(model.predict_inputs(inputs.with_features(feats)), y, metric)
        values.append(base - score if metric == "accuracy" else score - base)
    values = np.array(values)
    return PfiResult(feature_index, _feature_names(model, width)[feature_index],
                     float(values.mean()), float(values.std()), repeats, metric, base)


def pfi_table(model, records, repeats: int = 5, metric: str = "accuracy", seed: int = 0) -> list[PfiResult]:
    inputs = _prepared(model, records)
    return [pfi(model, inputs, j, repeats, metric, seed=int(np.random.SeedSequence([seed, j]).generate_state(1)[0]))
            for j in range(inputs.features.shape[1])]


# ---------------------------------------------------------------------------
# local surrogate explanations


def default_kernel_width(n_features: int = 10) -> float:
    return 0.75 * math.sqrt(n_features)


@dataclass(frozen=True)
class LimeExplanation:
    record_id: int | str
    features: tuple[str, ...]          # top-k, by decreasing |weight|
    weights: tuple[float, ...]
    intercept: float
    prediction: float
    kernel_width: float
    n_samples: int
    all_weights: tuple[float, ...] = field(default=(), repr=False)

    def rows(self) -> list[dict]:
        return [{"rank": i + 1, "feature": f, "label": FEATURE_LABELS.get(f, f), "weight": w}
                for i, (f, w) in enumerate(zip(self.features, self.weights))]


def lime_explain(model, record, n_samples: int = 1000, kernel_width: float | None = None,
                 k: int = 5, seed: int = 0, record_id: int | str = 0) -> LimeExplanation:
    """Weighted linear surrogate over the selected, scaled structural features.

    Samples are the instance plus Gaussian noise (unit std, scaled space)
    with every other model input held fixed; sample weights are
    ``exp(-d^2 / kernel_width^2)``.
    """
    if n_samples < 50:
        raise ConfigError("n_samples must be at least 50")
    inputs = _prepared(model, [record] if not isinstance(record, ModelInputs) else record)
    x0 = inputs.features[0]
    d = x0.shape[0]
    if not 1 <= k <= d:
        raise ConfigError(f"k must be in [1, {d}]")
    kw = default_kernel_width(d) if kernel_width is None else float(kernel_width)
    if kw <= 0:
        raise ConfigError("kernel_width must be positive")
    rng = np.random.default_rng(seed)
    Z = x0 + rng.standard_normal((n_samples, d))
    Z[0] = x0
    tiled = inputs.subset(np.zeros(n_samples, dtype=np.int64)).with_features(Z)
    p = np.asarray(model.predict_inputs(tiled), dtype=np.float64)
    dist2 = ((Z - x0) ** 2).sum(axis=1)
    sw = np.sqrt(np.exp(-dist2 / kw ** 2))
    A = np.hstack([np.ones((n_samples, 1)), Z - x0])
    coef, *_ = np.linalg.lstsq(A * sw[:, None], p * sw, rcond=None)
    intercept, beta = float(coef[0]), coef[1:]
    # magnitudes equal to 12 decimals count as ties so solver noise cannot reorder them
    order = sorted(range(d), key=lambda j: (-round(abs(beta[j]), 12), j))[:k]
    names = _feature_names(model, d)
    return LimeExplanation(
        record_id=record_id,
        features=tuple(names[j] for j in order),
        weights=tuple(float(beta[j]) for j in order),
        intercept=intercept,
        prediction=float(p[0]),
        kernel_width=kw,
        n_samples=n_samples,
        all_weights=tuple(float(b) for b in beta),
    )


# ---------------------------------------------------------------------------
# radar tables


def export_radar(records=None, matrix=None, labels=None) -> list[dict]:
    """Per-class means of the 18 raw features after per-feature min-max scaling.

    Constant features normalize to 0. With a single class present a warning
    is logged and the other column is None.
    """
    if records is not None:
        records = list(records)
        matrix = feature_matrix([r.text for r in records])
        labels = [r.label for r in records]
    X = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0 or len(y) != len(X):
        raise DatasetError("radar export needs a non-empty labelled feature matrix")
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    norm = np.where(span > 0, (X - lo) / np.where(span > 0, span, 1.0), 0.0)
    present = [c for c in (0, 1) if (y == c).any()]
    if len(present) < 2:
        log.warning("radar export: only class %s present", present)
    means = {c: norm[y == c].mean(axis=0) if c in present else None for c in (0, 1)}
    rows = []
    for j, name in enumerate(FEATURE_NAMES[:X.shape[1]]):
        rows.append({
            "feature": name,
            "class0_mean": None if means[0] is None else float(means[0][j]),
            "class1_mean": None if means[1] is None else float(means[1][j]),
        })
    return rows


# ---------------------------------------------------------------------------
# report


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


@dataclass
class TrustReport:
    seed: int = 0
    perturbation: dict[str, float] = field(default_factory=dict)
    perturbation_params: dict = field(default_factory=dict)
    pfi: list[PfiResult] = field(default_factory=list)
    lime: list[LimeExplanation] = field(default_factory=list)
    radar: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "perturbation": {"average_prediction_change": dict(self.perturbation),
                             "params": self.perturbation_params,
                             "synonym_lexicon_sha256": lexicon_digest("synonyms.txt")},
            "pfi": [asdict(r) for r in self.pfi],
            "lime": [{"record_id": e.record_id, "kernel_width": e.kernel_width, "n_samples": e.n_samples,
                      "prediction": e.prediction, "intercept": e.intercept, "top": e.rows()}
                     for e in self.lime],
            "radar": self.radar,
        }

    def write(self, out_dir, json_name: str = "trust_report.json") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if self.perturbation:
            p = out / "perturbation.csv"
            _write_csv(p, ["kind", "avg_prediction_change"],
                       [[k, _num(v)] for k, v in self.perturbation.items()])
            written.append(p)
        if self.pfi:
            p = out / "pfi.csv"
            _write_csv(p, ["feature_index", "feature", "importance", "std", "repeats", "metric"],
                       [[r.feature_index, r.feature, _num(r.importance), _num(r.std), r.repeats, r.metric]
                        for r in self.pfi])
            written.append(p)
        for e in self.lime:
            p = out / f"lime_{e.record_id}.csv"
            _write_csv(p, ["rank", "feature", "label", "weight"],
                       [[r["rank"], r["feature"], r["label"], _num(r["weight"])] for r in e.rows()])
            written.append(p)
        if self.radar:
            written.append(write_radar_csv(out / "radar.csv", self.radar))
        p = out / json_name
        p.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        written.append(p)
        return written


def write_radar_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    _write_csv(path, ["feature", "class0_mean", "class1_mean"],
               [[r["feature"], _num(r["class0_mean"]), _num(r["class1_mean"])] for r in rows])
    return path


def perturbation_report(model, records, kinds: Sequence[str] = KINDS, seed: int = 0,
                        **params) -> TrustReport:
    report = TrustReport(seed=seed)
    for i, kind in enumerate(kinds):
        spec = PerturbationSpec(kind=kind, seed=seed + i, **params)
        report.perturbation[kind] = avg_prediction_change(model, records, spec)
        report.perturbation_params = spec.params()
    return report
