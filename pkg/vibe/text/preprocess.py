"""Tokenization and stopword handling for short social-media texts.

Preprocessing Semantics
-----------------------
- **Lowercasing**: all text is lowercased first.
- **URLs**: `http(s)://...` and `www....` spans are removed.
- **Mentions**: `@handle` spans are removed; handles never become tokens.
- **Splitting**: the remainder is split on runs of non-alphanumeric
  characters, so `#covid19` yields `covid19` and `don't` yields `don`, `t`.
- **Stopwords**: a bundled fixed list (`stopwords.txt`, versioned in-repo)
  is applied when building vocabularies, not during tokenization, so
  document token lists stay faithful to the text.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_MENTION_RE = re.compile(r"@\w+")
_SPLIT_RE = re.compile(r"[^0-9a-z]+")

STOPWORDS_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercase `text`, drop URLs and mentions, split on non-alphanumerics.

    Examples:
        >>> tokenize("Wear a MASK! https://t.co/x @cdc #covid19")
        ['wear', 'a', 'mask', 'covid19']
        >>> tokenize("")
        []
    """
    lowered = text.lower()
    lowered = _URL_RE.sub(" ", lowered)
    lowered = _MENTION_RE.sub(" ", lowered)
    return [token for token in _SPLIT_RE.split(lowered) if token]


@lru_cache
def load_stopwords() -> frozenset[str]:
    """Return the bundled English stopword list."""
    raw = resources.files("vibe.text").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(
        line.strip()
        for line in raw.splitlines()
        if line.strip() and not line.startswith("#")
    )
