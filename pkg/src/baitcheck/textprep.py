"""Text normalization, tokenization, lemmatization and stop words.

Each headline has two views:

* the FEATURE view, ``tokenize(normalize(text))``, keeps punctuation,
  digits and stop words so that structural counts can be taken;
* the ENCODER view, :func:`encoder_tokens`, additionally drops special
  characters, numbers and stop words and lemmatizes what is left.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

__all__ = [
    "TokenSeq",
    "normalize",
    "tokenize",
    "lemmatize",
    "is_stopword",
    "is_word",
    "encoder_tokens",
    "load_lexicon",
    "lexicon_digest",
]

_WS = re.compile(r"\s+")
# A word is a run of letters/digits, optionally joined by inner apostrophes
# ("don't", "you're"). Every other non-space character is its own token.
_TOKEN = re.compile(r"[^\W_]+(?:['’][^\W_]+)*|\S")
_VOWELS = set("aeiouy")


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


def normalize(text: str) -> str:
    """Lowercase, collapse whitespace runs to one space and trim the ends."""
    text = unicodedata.normalize("NFC", text).lower()
    return unicodedata.normalize("NFC", _WS.sub(" ", text).strip())


def tokenize(text: str) -> TokenSeq:
    tokens, spans = [], []
    for m in _TOKEN.finditer(text):
        tokens.append(m.group())
        spans.append(m.span())
    return TokenSeq(tuple(tokens), tuple(spans))


def is_word(token: str) -> bool:
    """True for tokens that contain at least one letter or digit."""
    return any(ch.isalnum() for ch in token)


# ---------------------------------------------------------------------------
# bundled lexicons


def _data_text(name: str) -> str:
    return resources.files("baitcheck").joinpath("data", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_lexicon(name: str) -> tuple[str, ...]:
    """Non-comment, non-blank lines of a bundled data file, in file order."""
    lines = []
    for line in _data_text(name).splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return tuple(lines)


def lexicon_digest(name: str) -> str:
    """SHA-256 of a bundled data file's bytes."""
    raw = resources.files("baitcheck").joinpath("data", name).read_bytes()
    return hashlib.sha256(raw).hexdigest()


@lru_cache(maxsize=None)
def _stopwords() -> frozenset[str]:
    return frozenset(load_lexicon("stopwords.txt"))


@lru_cache(maxsize=None)
def _lemma_exceptions() -> dict[str, str]:
    table = {}
    for line in load_lexicon("lemma_exceptions.txt"):
        form, lemma = line.split()
        table.setdefault(form, lemma)
    return table


def is_stopword(token: str) -> bool:
    return token.replace("’", "'") in _stopwords()


# ---------------------------------------------------------------------------
# lemmatizer


def _has_vowel(s: str) -> bool:
    return any(ch in _VOWELS for ch in s)


def _undouble(stem: str) -> str:
    # "runn" -> "run", "stopp" -> "stop"; keep ll/ss/zz ("spell", "pass")
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in "lsz" and stem[-1] not in _VOWELS:
        return stem[:-1]
    return stem


def lemmatize(token: str, pos_hint: str | None = None) -> str:
    """Reduce a lowercase token to a base form with suffix rules.

    Irregular forms come from the bundled exception lexicon. ``pos_hint``
    restricts the verbal rules (-ing, -ed) to tokens not tagged as nouns or
    adjectives when given.
    """
    exceptions = _lemma_exceptions()
    if token in exceptions:
        return exceptions[token]
    if len(token) <= 3 or not token.isalpha():
        return token

    verbal = pos_hint not in ("NOUN", "ADJ")
    if verbal and token.endswith("ing") and len(token) >= 5:
        stem = token[:-3]
        if _has_vowel(stem):
            return _undouble(stem)
    if verbal and token.endswith("ied") and len(token) >= 5:
        return token[:-3] + "y"
    if verbal and token.endswith("ed") and len(token) >= 5:
        stem = token[:-2]
        if _has_vowel(stem):
            return _undouble(stem)
    if token.endswith("ies") and len(token) >= 5:
        return token[:-3] + "y"
    if token.endswith("sses"):
        return token[:-2]
    if token.endswith(("ss", "us", "is", "ous")):
        return token
    if token.endswith("ses"):
        # "buses" -> "bus" but "causes" -> "cause", "discloses" -> "disclose"
        return token[:-2] if len(token) <= 5 else token[:-1]
    if token.endswith("es") and token[:-2].endswith(("x", "z", "ch", "sh")):
        return token[:-2]
    if token.endswith("s"):
        return token[:-1]
    return token


# ---------------------------------------------------------------------------
# encoder view


def encoder_tokens(text: str) -> list[str]:
    """ENCODER view: normalized word tokens with digits, special characters
    and stop words removed, then lemmatized."""
    out = []
    for tok in tokenize(normalize(text)):
        if not is_word(tok) or is_stopword(tok):
            continue
        word = "".join(ch for ch in tok if ch.isalpha() or ch in "'’")
        word = word.strip("'’")
        if not word or is_stopword(word):
            continue
        out.append(lemmatize(word))
    return out
