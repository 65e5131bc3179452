"""Tokenization and sentence segmentation for radiology report text.

Rules: lowercase, split on whitespace and punctuation, keep hyphenated
medical terms ("air-fluid") and decimal numbers ("5.5") intact. Sentences
split on period/semicolon, guarded against common abbreviations.
"""

import re

# decimal numbers first so "5.5" survives, then hyphen-joined word runs
_TOKEN_RE = re.compile(r"\d+\.\d+|[a-z0-9]+(?:-[a-z0-9]+)*")

# a period after these words does not end a sentence
ABBREVIATIONS = frozenset(
    ["dr", "mr", "mrs", "ms", "st", "vs", "etc", "e.g", "i.e", "a.p", "p.a"]
)


def tokenize(text: str) -> list[str]:
    """Lowercase and split one sentence into tokens."""
    return _TOKEN_RE.findall(text.lower())


def split_sentences(text: str) -> list[str]:
    """Split raw text into sentence strings on period/semicolon boundaries."""
    sentences = []
    current = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == ";":
            sentences.append("".join(current))
            current = []
        elif ch == ".":
            prev_word = _trailing_word(current)
            next_ch = text[i + 1] if i + 1 < n else " "
            if prev_word.isdigit() and next_ch.isdigit():
                current.append(ch)  # decimal number
            elif prev_word in ABBREVIATIONS:
                current.append(ch)
            else:
                sentences.append("".join(current))
                current = []
        else:
            current.append(ch)
        i += 1
    sentences.append("".join(current))
    return [s.strip() for s in sentences if s.strip()]


def _trailing_word(chars: list[str]) -> str:
    word = []
    for ch in reversed(chars):
        if ch.isspace():
            break
        word.append(ch)
    return "".join(reversed(word)).lower()


def tokenize_report(text: str) -> list[list[str]]:
    """Segment text into sentences and tokenize each; drops empty sentences."""
    out = []
    for sentence in split_sentences(text):
        tokens = tokenize(sentence)
        if tokens:
            out.append(tokens)
    return out


def detokenize(sentences: list[list[str]]) -> str:
    """Render token sentences back to text with explicit sentence periods."""
    return " ".join(" ".join(tokens) + " ." for tokens in sentences).strip()
