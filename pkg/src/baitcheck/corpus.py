"""Loading, labelling, class weighting and stratified splitting of headline datasets."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError, DegenerateClassError, EmptyDatasetError, InvalidLabelError

log = logging.getLogger(__name__)

SCORE_LEVELS = (0.0, 0.33, 0.66, 1.0)
SCORE_TOL = 0.005
FORMATS = ("csv", "tsv", "jsonl")
_TEXT_LABELS = {"clickbait": 1, "no-clickbait": 0, "non-clickbait": 0, "not-clickbait": 0}


@dataclass(frozen=True)
class HeadlineRecord:
    text: str
    label: int
    raw_score: float | None = None
    source: str = ""
    index: int | None = None  # position in the loaded file, keys precomputed embeddings

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise DatasetError("headline text is empty")
        if self.label not in (0, 1):
            raise InvalidLabelError(f"label must be 0 or 1, got {self.label!r}")
        if self.raw_score is not None and binarize_label(self.raw_score) != self.label:
            raise InvalidLabelError(f"label {self.label} disagrees with raw score {self.raw_score}")


class Corpus(list):
    """A list of records that also remembers what loading threw away."""

    def __init__(self, records: Iterable[HeadlineRecord] = (), dropped: int = 0, malformed: int = 0):
        super().__init__(records)
        self.dropped = dropped
        self.malformed = malformed

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self], dtype=np.int64)

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self]


@dataclass(frozen=True)
class DatasetSplit:
    train: list[HeadlineRecord]
    test: list[HeadlineRecord]
    seed: int
    ratio: float


@dataclass(frozen=True)
class ClassWeights:
    w0: float
    w1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w0, self.w1])


def binarize_label(raw_score: float) -> int:
    """0.0 / 0.33 -> 0 and 0.66 / 1.0 -> 1, within +-0.005."""
    try:
        s = float(raw_score)
    except (TypeError, ValueError) as exc:
        raise InvalidLabelError(f"score {raw_score!r} is not a number") from exc
    for level in SCORE_LEVELS:
        if abs(s - level) <= SCORE_TOL:
            return int(level > 0.5)
    raise InvalidLabelError(f"score {raw_score!r} is not one of {SCORE_LEVELS}")


def _missing(value) -> bool:
    if value is None:
        return True
    if isinstance(value, float) and math.isnan(value):
        return True
    return isinstance(value, str) and value.strip() in ("", "nan", "NaN", "null", "None", "NA")


def _parse_label(value) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, str):
        v = value.strip().lower()
        if v in _TEXT_LABELS:
            return _TEXT_LABELS[v]
        value = v
    try:
        f = float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidLabelError(f"unparseable label {value!r}") from exc
    if f in (0.0, 1.0):
        return int(f)
    raise InvalidLabelError(f"label {value!r} is not binary")


def _iter_rows(path: Path, fmt: str):
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    yield lineno, None
                    continue
                yield lineno, obj if isinstance(obj, dict) else None
        else:
            reader = csv.DictReader(fh, delimiter="\t" if fmt == "tsv" else ",")
            if reader.fieldnames is None:
                return
            for lineno, row in enumerate(reader, 2):
                yield lineno, row


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    return {"csv": "csv", "tsv": "tsv", "jsonl": "jsonl", "json": "jsonl", "txt": "tsv"}.get(suffix, "csv")


def load_dataset(path, format: str | None = None, text_column: str | None = None,
                 label_column: str | None = None, score_column: str = "truthMean",
                 source: str | None = None) -> Corpus:
    """Read labelled headlines from CSV, TSV or JSONL, in file order.

    CSV/TSV default columns are ``headline`` and ``label``; JSONL defaults
    are ``text`` and ``label``. A graded ``score_column`` value is binarized
    when the label is absent. Rows missing text or label are dropped and
    counted in ``Corpus.dropped``; rows with unparseable labels are skipped
    and counted in ``Corpus.malformed``.
    """
    path = Path(path)
    fmt = format or infer_format(path)
    if fmt not in FORMATS:
        raise DatasetError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    text_column = text_column or ("text" if fmt == "jsonl" else "headline")
    label_column = label_column or "label"
    source = path.stem if source is None else source
    try:
        rows = list(_iter_rows(path, fmt))
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    except (UnicodeDecodeError, csv.Error) as exc:
        raise DatasetError(f"cannot parse {path}: {exc}") from exc

    out = Corpus()
    for lineno, row in rows:
        if row is None:
            out.malformed += 1
            continue
        text = row.get(text_column)
        label_raw = row.get(label_column)
        score_raw = row.get(score_column)
        if _missing(text) or (_missing(label_raw) and _missing(score_raw)):
            out.dropped += 1
            continue
        try:
            score = None if _missing(score_raw) else float(score_raw)
            label = binarize_label(score) if _missing(label_raw) else _parse_label(label_raw)
            rec = HeadlineRecord(text=str(text), label=label, raw_score=score,
                                 source=source, index=len(out))
        except (InvalidLabelError, DatasetError, ValueError) as exc:
            log.warning("%s:%d skipped: %s", path, lineno, exc)
            out.malformed += 1
            continue
        out.append(rec)
    if out.dropped:
        log.info("%s: dropped %d rows with missing values", path, out.dropped)
    if not out:
        raise EmptyDatasetError(f"{path} contains no usable rows")
    return out


def filter_length(records: Sequence[HeadlineRecord], min_words: int = 1,
                  max_words: int | None = None) -> list[HeadlineRecord]:
    """Keep headlines whose whitespace word count lies in [min_words, max_words]."""
    out = []
    for r in records:
        n = len(r.text.split())
        if n >= min_words and (max_words is None or n <= max_words):
            out.append(r)
    return out


def compute_class_weights(labels: Sequence[int]) -> ClassWeights:
    """Balanced weights ``N / (2 * N_c)``."""
    y = np.asarray(labels, dtype=np.int64)
    n0 = int((y == 0).sum())
    n1 = int((y == 1).sum())
    if n0 == 0 or n1 == 0:
        raise DegenerateClassError(f"class counts ({n0}, {n1}): both classes are needed")
    n = n0 + n1
    return ClassWeights(n / (2 * n0), n / (2 * n1))


def stratified_split(records: Sequence[HeadlineRecord], ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Per-class seeded shuffle, then the first share of each class goes to train.

    Train count per class is ``round(ratio * N_c)`` (half up) except for the
    minority class, which uses the floor; every class keeps at least one
    record on each side. Both halves are returned in input order.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    labels = np.array([r.label for r in records], dtype=np.int64)
    counts = {c: int((labels == c).sum()) for c in (0, 1)}
    for c, n in counts.items():
        if n < 2:
            raise DegenerateClassError(f"class {c} has {n} record(s); at least 2 are needed")
    minority = 0 if counts[0] < counts[1] else 1 if counts[1] < counts[0] else None

    rng = np.random.default_rng(seed)
    train_idx = []
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        exact = ratio * counts[c]
        k = math.floor(exact) if c == minority else math.floor(exact + 0.5)
        k = min(max(k, 1), counts[c] - 1)
        train_idx.extend(idx[:k].tolist())
    in_train = np.zeros(len(records), dtype=bool)
    in_train[train_idx] = True
    train = [r for r, t in zip(records, in_train) if t]
    test = [r for r, t in zip(records, in_train) if not t]
    return DatasetSplit(train=train, test=test, seed=seed, ratio=ratio)
