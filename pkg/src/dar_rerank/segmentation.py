"""
Sentence segmentation for passages.

Support sentences are cut out of retrieved passages, so splitting must be
deterministic and must not break on abbreviations or decimal numbers.
Boundaries are terminal punctuation (. ! ?) at the end of a whitespace
token; everything else stays inside the sentence.
"""

import re

from dar_rerank.encoder.vocab import split_words


# Abbreviations that shouldn't trigger sentence splits
_ABBREVIATIONS = {
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.",
    "vs.", "etc.", "inc.", "ltd.", "corp.",
    "e.g.", "i.e.", "fig.", "eq.", "approx.",
    "st.", "ave.", "blvd.", "no.", "u.s.",
}

_DECIMAL = re.compile(r'\d+\.\d*$')


def split_sentences(text: str) -> list[str]:
    """
    Split a passage into sentences.

    Joining the result with single spaces reconstructs the passage modulo
    whitespace. Trailing text without terminal punctuation is kept as the
    last sentence.
    """
    if not text or not text.strip():
        return []

    results = []
    current: list[str] = []
    for token in text.split():
        current.append(token)
        token_lower = token.lower().rstrip('"\')')

        if token_lower.endswith(('.', '!', '?')):
            if token_lower in _ABBREVIATIONS:
                continue
            if _DECIMAL.match(token_lower):
                continue
            results.append(' '.join(current))
            current = []

    if current:
        results.append(' '.join(current))
    return results


def normalize_text(text: str) -> str:
    """Case- and spacing-insensitive form used for dedup and containment."""
    return ' '.join(split_words(text))
