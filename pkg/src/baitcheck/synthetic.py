"""Small seeded headline corpora that are separable by construction.

Clickbait items always address the reader ("you"/"your") and end with "!"
or "?"; news items never do. Both the structural counts and the token
vocabulary therefore separate the classes.
"""

from __future__ import annotations

import numpy as np

from .corpus import HeadlineRecord

_BAIT = (
    "You Won't Believe These {n} {adj} {noun} Tricks!",
    "{n} {adj} Reasons Your {noun} Is Secretly Ruining Your Life!",
    "Can You Guess Which {noun} Changed Everything?",
    "This {adj} {noun} Will Make You Cry!",
    "What Happens Next Will Blow Your Mind!",
    "Are You Making These {n} {noun} Mistakes?",
    "{n} Things Only You Know About Your {noun}!",
    "Why Did Nobody Tell You About This {adj} {noun}?",
)
_NEWS = (
    "Government announces {adj2} budget for regional {noun2}",
    "Central bank holds interest rates amid {adj2} {noun2} data",
    "Parliament approves bill on {noun2} reform",
    "Researchers report {adj2} results in {noun2} trial",
    "Storm damages {n} {noun2} along the northern coast",
    "Court rules on {noun2} dispute between two firms",
    "Officials confirm {n} new {noun2} in the capital",
    "Trade ministers meet to discuss {adj2} {noun2} tariffs",
)
_ADJ = ("amazing", "shocking", "insane", "weird", "adorable", "unbelievable", "hilarious", "genius")
_NOUN = ("Cat", "Kitchen", "Diet", "Phone", "Celebrity", "Dog", "Morning", "Sleep")
_ADJ2 = ("annual", "revised", "quarterly", "national", "preliminary", "federal")
_NOUN2 = ("hospitals", "schools", "inflation", "railways", "energy", "housing", "fisheries", "roads")


def separable_corpus(n: int = 80, seed: int = 0, positive_share: float = 0.5) -> list[HeadlineRecord]:
    """``n`` labelled headlines, ``round(n * positive_share)`` of them clickbait, shuffled."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(n * positive_share))
    out = []
    for i in range(n):
        bait = i < n_pos
        template = (_BAIT if bait else _NEWS)[int(rng.integers(len(_BAIT if bait else _NEWS)))]
        text = template.format(
            n=int(rng.integers(3, 30)),
            adj=_ADJ[int(rng.integers(len(_ADJ)))].capitalize(),
            noun=_NOUN[int(rng.integers(len(_NOUN)))],
            adj2=_ADJ2[int(rng.integers(len(_ADJ2)))],
            noun2=_NOUN2[int(rng.integers(len(_NOUN2)))],
        )
        out.append((text, int(bait)))
    order = rng.permutation(n)
    return [HeadlineRecord(text=out[j][0], label=out[j][1], source="synthetic", index=k)
            for k, j in enumerate(order)]
