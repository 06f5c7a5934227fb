"""Reference tokenization and word counting rules.

The token rule is deliberately library-free so chunk budgets are reproducible
everywhere: split on Unicode whitespace, split words on intra-word hyphens
(the hyphen itself is discarded), and count every remaining maximal run of
alphanumerics or of punctuation as one token.
"""

from __future__ import annotations

import re

# A "word" run is Unicode letters/digits; underscore counts as punctuation.
_INTRA_WORD_HYPHEN = re.compile(r"(?<=[^\W_])-(?=[^\W_])", re.UNICODE)
_TOKEN = re.compile(r"[^\W_]+|(?:[^\w\s]|_)+", re.UNICODE)


def tokenize_spans(text: str) -> list[tuple[int, int]]:
    """Return (start, end) character spans of every token in ``text``.

    Intra-word hyphens are treated as separators, so spans never cover them;
    replacing them with spaces is length-preserving, which keeps the spans
    valid offsets into the original string.
    """
    separated = _INTRA_WORD_HYPHEN.sub(" ", text)
    return [m.span() for m in _TOKEN.finditer(separated)]


def approx_token_count(text: str) -> int:
    """Count tokens under the reference rule; 0 iff there are no token chars."""
    return len(tokenize_spans(text))


def word_count(text: str) -> int:
    """Count maximal non-whitespace runs."""
    return len(text.split())


def format_metric(value: float) -> str:
    """Render a metric with the fixed 6-decimal precision used in exports."""
    return f"{value:.6f}"
