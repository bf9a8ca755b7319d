"""Structural feature set (13 part-of-speech + 5 sentence-surface counts),
recursive feature elimination and standard scaling."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import AlignmentError, ConfigError, DegenerateClassError, InsufficientDataError, ShapeError
from .textprep import TokenSeq, is_stopword, is_word, load_lexicon, normalize, tokenize

POS_NAMES = ("P_fp", "P_sp", "P_pn", "N", "V", "Adj", "Adv", "P", "Prep", "Punc", "D", "St_w", "Sl_w")
SFG_NAMES = ("n_char", "n_words", "n_Qm", "n_Em", "n_hash")
FEATURE_NAMES = POS_NAMES + SFG_NAMES

# long names used in explanation reports
FEATURE_LABELS = {
    "P_fp": "first_person_pronouns",
    "P_sp": "second_person_pronouns",
    "P_pn": "possessive_pronouns",
    "N": "nouns",
    "V": "verbs",
    "Adj": "adjectives",
    "Adv": "adverbs",
    "P": "pronouns",
    "Prep": "prepositions",
    "Punc": "punctuations",
    "D": "determiners",
    "St_w": "stop_words",
    "Sl_w": "slang_words",
    "n_char": "num_chars",
    "n_words": "num_words",
    "n_Qm": "question_marks",
    "n_Em": "exclamation_marks",
    "n_hash": "hashtags",
}

TAGSET = (
    "NOUN", "VERB", "ADJ", "ADV", "PRON_1P", "PRON_2P", "PRON_POSS",
    "PRON_OTHER", "PREP", "DET", "PUNCT", "OTHER",
)
PRONOUN_TAGS = frozenset({"PRON_1P", "PRON_2P", "PRON_POSS", "PRON_OTHER"})
_FIRST_POSS = frozenset({"my", "mine", "our", "ours"})
_SECOND_POSS = frozenset({"your", "yours", "ur"})

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# part-of-speech tagging


@lru_cache(maxsize=None)
def _pos_lexicon() -> dict[str, str]:
    table = {}
    for line in load_lexicon("pos_lexicon.txt"):
        word, tag = line.split()
        table.setdefault(word, tag)
    return table


@lru_cache(maxsize=None)
def _slang() -> frozenset[str]:
    return frozenset(load_lexicon("slang.txt"))


# ordered; first match wins
_SUFFIX_RULES = (
    ("ly", "ADV"),
    ("ness", "NOUN"), ("ment", "NOUN"), ("tion", "NOUN"), ("sion", "NOUN"),
    ("ity", "NOUN"), ("ship", "NOUN"), ("ism", "NOUN"), ("ist", "NOUN"),
    ("hood", "NOUN"), ("dom", "NOUN"), ("ance", "NOUN"), ("ence", "NOUN"),
    ("ful", "ADJ"), ("ous", "ADJ"), ("ive", "ADJ"), ("able", "ADJ"),
    ("ible", "ADJ"), ("less", "ADJ"), ("ish", "ADJ"), ("ical", "ADJ"),
    ("ic", "ADJ"), ("est", "ADJ"), ("ary", "ADJ"),
    ("ize", "VERB"), ("ise", "VERB"), ("ify", "VERB"), ("ing", "VERB"), ("ed", "VERB"),
)


class Tagger(Protocol):
    def __call__(self, tokens: Sequence[str]) -> list[str]: ...


def _tag_one(tok: str) -> str:
    tok = tok.replace("’", "'")
    if not is_word(tok):
        return "PUNCT"
    lex = _pos_lexicon()
    if tok in lex:
        return lex[tok]
    if any(ch.isdigit() for ch in tok):
        return "OTHER"
    base = tok[:-2] if tok.endswith("'s") else tok
    if base != tok:
        return lex.get(base, "NOUN")
    if len(tok) > 3:
        for suffix, tag in _SUFFIX_RULES:
            if tok.endswith(suffix) and len(tok) - len(suffix) >= 2:
                return tag
    return "NOUN"


def pos_tag(tokens: Iterable[str]) -> list[str]:
    """Lexicon-then-suffix tagger; one tag from TAGSET per token."""
    return [_tag_one(t) for t in tokens]


# ---------------------------------------------------------------------------
# feature extraction


@dataclass(frozen=True)
class StructuralFeatures:
    pos: dict[str, int]
    sfg: dict[str, int]

    def __getitem__(self, name: str) -> int:
        return self.pos[name] if name in self.pos else self.sfg[name]

    def vector(self) -> np.ndarray:
        return np.array([self[n] for n in FEATURE_NAMES], dtype=np.float64)


def extract_sfg(text: str, tokens: TokenSeq | Sequence[str]) -> dict[str, int]:
    return {
        "n_char": len(text),
        "n_words": sum(1 for t in tokens if is_word(t)),
        "n_Qm": text.count("?"),
        "n_Em": text.count("!"),
        "n_hash": text.count("#"),
    }


def extract_pos_counts(tags: Sequence[str], tokens: TokenSeq | Sequence[str]) -> dict[str, int]:
    tokens = [t.replace("’", "'") for t in tokens]
    if len(tags) != len(tokens):
        raise AlignmentError(f"{len(tags)} tags for {len(tokens)} tokens")
    counts = dict.fromkeys(POS_NAMES, 0)
    slang = _slang()
    for tok, tag in zip(tokens, tags):
        if tag == "PRON_1P" or (tag == "PRON_POSS" and tok in _FIRST_POSS):
            counts["P_fp"] += 1
        if tag == "PRON_2P" or (tag == "PRON_POSS" and tok in _SECOND_POSS):
            counts["P_sp"] += 1
        if tag == "PRON_POSS":
            counts["P_pn"] += 1
        if tag in PRONOUN_TAGS:
            counts["P"] += 1
        counts["N"] += tag == "NOUN"
        counts["V"] += tag == "VERB"
        counts["Adj"] += tag == "ADJ"
        counts["Adv"] += tag == "ADV"
        counts["Prep"] += tag == "PREP"
        counts["Punc"] += tag == "PUNCT"
        counts["D"] += tag == "DET"
        if is_word(tok):
            counts["St_w"] += is_stopword(tok)
            counts["Sl_w"] += tok in slang
    return counts


def extract_features(text: str, tagger: Tagger = pos_tag) -> StructuralFeatures:
    """normalize -> tokenize -> tag -> tally, all on the FEATURE view."""
    norm = normalize(text)
    toks = tokenize(norm)
    tags = tagger(toks.tokens)
    return StructuralFeatures(pos=extract_pos_counts(tags, toks), sfg=extract_sfg(norm, toks))


def feature_matrix(texts: Iterable[str], tagger: Tagger = pos_tag) -> np.ndarray:
    rows = [extract_features(t, tagger).vector() for t in texts]
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.vstack(rows)


def write_feature_csv(path, matrix: np.ndarray, labels: Sequence[int] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_NAMES + (("label",) if labels is not None else ()))
        for i, row in enumerate(matrix):
            vals = [int(v) for v in row]
            if labels is not None:
                vals.append(int(labels[i]))
            w.writerow(vals)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalerParams:
    means: np.ndarray
    stds: np.ndarray
    degenerate: np.ndarray = field(default=None)  # bool per column

    def __post_init__(self):
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(len(self.means), dtype=bool))

    def __len__(self):
        return len(self.means)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "degenerate": [bool(v) for v in self.degenerate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(
            means=np.asarray(d["means"], dtype=np.float64),
            stds=np.asarray(d["stds"], dtype=np.float64),
            degenerate=np.asarray(d["degenerate"], dtype=bool),
        )


def fit_scaler(matrix) -> ScalerParams:
    """Per-column population mean/std; zero-variance columns get std 1 and a flag."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 rows to fit a scaler, got {m.shape[0]}")
    means = m.mean(axis=0)
    stds = m.std(axis=0)
    degenerate = stds <= 1e-12 * np.maximum(1.0, np.abs(means))
    stds = np.where(degenerate, 1.0, stds)
    return ScalerParams(means, stds, degenerate)


def apply_scaler(row, params: ScalerParams) -> np.ndarray:
    x = np.asarray(row, dtype=np.float64)
    if x.shape[-1] != len(params):
        raise ShapeError(f"row has {x.shape[-1]} features, scaler expects {len(params)}")
    out = (x - params.means) / params.stds
    # a flagged column holds one constant on the fit set; map it to 0 everywhere
    return np.where(params.degenerate, 0.0, out)


def invert_scaler(row, params: ScalerParams) -> np.ndarray:
    x = np.asarray(row, dtype=np.float64)
    if x.shape[-1] != len(params):
        raise ShapeError(f"row has {x.shape[-1]} features, scaler expects {len(params)}")
    return x * params.stds + params.means


# ---------------------------------------------------------------------------
# recursive feature elimination


@dataclass(frozen=True)
class RfeSelection:
    kept: tuple[str, ...]
    elimination_order: tuple[tuple[str, int], ...]
    estimator_seed: int
    names: tuple[str, ...] = FEATURE_NAMES

    @property
    def indices(self) -> list[int]:
        return [self.names.index(n) for n in self.kept]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kept": list(self.kept),
            "elimination_order": [[n, r] for n, r in self.elimination_order],
            "estimator_seed": self.estimator_seed,
            "names": list(self.names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RfeSelection":
        return cls(
            kept=tuple(d["kept"]),
            elimination_order=tuple((n, int(r)) for n, r in d["elimination_order"]),
            estimator_seed=int(d["estimator_seed"]),
            names=tuple(d.get("names", FEATURE_NAMES)),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _logistic_weights(x: np.ndarray, y: np.ndarray, steps: int = 500, lr: float = 0.1) -> np.ndarray:
    """Full-batch gradient descent on the mean logistic loss, zero init."""
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(steps):
        z = x @ w + b
        p = 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid
        r = p - y
        w -= lr * (x.T @ r) / n
        b -= lr * r.mean()
    return w


def rfe_select(matrix, labels, target_count: int = 10, seed: int = 0,
               names: Sequence[str] = FEATURE_NAMES, steps: int = 500, lr: float = 0.1) -> RfeSelection:
    """Drop the smallest-|weight| feature of a logistic model until
    ``target_count`` remain. The model is refit on standardized surviving
    columns every round; ties go to the lowest column index."""
    x = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    names = tuple(names)
    if x.ndim != 2 or x.shape[1] != len(names):
        raise ShapeError(f"expected an (n, {len(names)}) matrix, got {x.shape}")
    if len(y) != x.shape[0]:
        raise ShapeError("labels and matrix rows differ in length")
    if not 1 <= target_count < len(names):
        raise ConfigError(f"target_count must be in [1, {len(names) - 1}], got {target_count}")
    if x.shape[0] < 20:
        raise InsufficientDataError(f"RFE needs at least 20 rows, got {x.shape[0]}")
    if len(np.unique(y)) < 2:
        raise DegenerateClassError("RFE needs both classes present")

    alive = list(range(len(names)))
    order = []
    rnd = 0
    while len(alive) > target_count:
        rnd += 1
        cols = x[:, alive]
        mu = cols.mean(axis=0)
        sd = cols.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        w = _logistic_weights((cols - mu) / sd, y, steps=steps, lr=lr)
        drop = int(np.argmin(np.abs(w)))
        order.append((names[alive[drop]], rnd))
        del alive[drop]
    return RfeSelection(
        kept=tuple(names[i] for i in alive),
        elimination_order=tuple(order),
        estimator_seed=seed,
        names=names,
    )


def select_columns(matrix, selection: RfeSelection) -> np.ndarray:
    return np.asarray(matrix, dtype=np.float64)[..., selection.indices]

