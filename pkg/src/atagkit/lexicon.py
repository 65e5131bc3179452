"""Rule-based clinical term extraction.

Classifies report phrases into abnormalities (clinical findings) and
attributes (descriptors), detects negated and uncertain mentions with
NegEx-style triggers, and associates attributes to their nearest finding.
The lexicon file format is line-delimited:

    canonical | category | subtype | surface1; surface2; ...

category is "clinical_finding" or "descriptor"; subtype applies to
descriptors (location, anatomical_part, status, ...; "-" when absent).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .corpus import ReportCase
from .errors import ParseError, ValidationError
from .tokenization import tokenize

CLINICAL_FINDING = "clinical_finding"
DESCRIPTOR = "descriptor"

POSITIVE = "positive"
NEGATIVE = "negative"
UNCERTAIN = "uncertain"

# trigger token sequences scoping forward over a fixed window
NEGATION_TRIGGERS = (
    ("no",),
    ("without",),
    ("not",),
    ("free", "of"),
    ("negative", "for"),
    ("absence", "of"),
    ("no", "evidence", "of"),
    ("clear", "of"),
    ("denies",),
    ("resolved",),
)
UNCERTAIN_TRIGGERS = (
    ("may",),
    ("might",),
    ("possible",),
    ("possibly",),
    ("probable",),
    ("probably",),
    ("likely",),
    ("questionable",),
    ("suspected",),
    ("suspicious", "for"),
    ("cannot", "exclude"),
    ("could", "be"),
    ("concerning", "for"),
    ("question", "of"),
    ("versus",),
)
SCOPE_BREAKERS = frozenset(["but", "however", "although", "though", "which", "whereas"])

NEGATION_WINDOW = 6
ASSOCIATION_WINDOW = 8
OTHER_PREFIX = "other,"


@dataclass(frozen=True)
class LexiconEntry:
    """One lexicon concept with its surface token sequences."""

    canonical: str
    category: str
    subtype: str | None
    surface_forms: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.category not in (CLINICAL_FINDING, DESCRIPTOR):
            raise ValidationError(f"unknown lexicon category {self.category!r}")
        if not self.surface_forms or any(not s for s in self.surface_forms):
            raise ValidationError(f"entry {self.canonical!r} needs non-empty surface forms")


@dataclass(frozen=True)
class Span:
    """Half-open token range [start, end) within one sentence."""

    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ExtractionTuple:
    """(abnormality, negation, attribute set) extracted from one sentence."""

    abnormality: str
    negation: str
    attributes: frozenset[str]
    sentence_index: int = 0

    def key(self) -> tuple:
        return (self.abnormality, self.negation, tuple(sorted(self.attributes)))


def load_lexicon(path: str) -> list[LexiconEntry]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_lexicon(fh.read())


def parse_lexicon(text: str) -> list[LexiconEntry]:
    entries = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 4:
            raise ParseError("expected 4 |-separated fields", line=lineno)
        canonical, category, subtype, surfaces = parts
        canonical = canonical.lower()
        if (category, canonical) in seen:
            raise ParseError(f"duplicate canonical {canonical!r} in {category}", line=lineno)
        seen.add((category, canonical))
        forms = tuple(
            tuple(tokenize(s)) for s in surfaces.split(";") if s.strip()
        )
        entries.append(
            LexiconEntry(
                canonical=canonical,
                category=category,
                subtype=None if subtype in ("-", "") else subtype,
                surface_forms=forms,
            )
        )
    if not entries:
        raise ValidationError("lexicon is empty")
    return entries


def default_lexicon() -> list[LexiconEntry]:
    """The small bundled lexicon (enough for tests and the synthetic corpus)."""
    text = resources.files("atagkit.data").joinpath("lexicon.txt").read_text("utf-8")
    return parse_lexicon(text)


def match_terms(
    sentence: list[str], lexicon: list[LexiconEntry]
) -> list[tuple[Span, LexiconEntry]]:
    """Greedy left-to-right longest match of lexicon surface forms.

    Returns non-overlapping (span, entry) pairs in sentence order.
    """
    by_form: dict[tuple[str, ...], LexiconEntry] = {}
    max_len = 0
    for entry in sorted(lexicon, key=lambda e: (e.category, e.canonical)):
        for form in entry.surface_forms:
            by_form.setdefault(form, entry)
            max_len = max(max_len, len(form))
    matches = []
    i = 0
    n = len(sentence)
    while i < n:
        found = None
        for width in range(min(max_len, n - i), 0, -1):
            entry = by_form.get(tuple(sentence[i : i + width]))
            if entry is not None:
                found = (Span(i, i + width), entry)
                break
        if found is not None:
            matches.append(found)
            i = found[0].end
        else:
            i += 1
    return matches


def _trigger_spans(sentence: list[str], triggers) -> list[Span]:
    spans = []
    max_len = max(len(t) for t in triggers)
    trigger_set = {tuple(t) for t in triggers}
    i = 0
    n = len(sentence)
    while i < n:
        hit = None
        for width in range(min(max_len, n - i), 0, -1):
            if tuple(sentence[i : i + width]) in trigger_set:
                hit = Span(i, i + width)
                break
        if hit is not None:
            spans.append(hit)
            i = hit.end
        else:
            i += 1
    return spans


def detect_negation(
    sentence: list[str],
    finding_span: Span,
    window: int = NEGATION_WINDOW,
) -> str:
    """Classify a finding mention as positive, negative, or uncertain.

    A trigger scopes the span when it precedes it within `window` tokens and
    no scope-breaker token sits between trigger and finding. Negation wins
    over uncertainty when both apply.
    """
    if finding_span.start < 0 or finding_span.end > len(sentence):
        raise ValidationError("finding span outside sentence")

    def scoped(trigger: Span) -> bool:
        if trigger.end > finding_span.start:
            return False
        if finding_span.start - trigger.end > window:
            return False
        between = sentence[trigger.end : finding_span.start]
        return not any(tok in SCOPE_BREAKERS for tok in between)

    if any(scoped(t) for t in _trigger_spans(sentence, NEGATION_TRIGGERS)):
        return NEGATIVE
    if any(scoped(t) for t in _trigger_spans(sentence, UNCERTAIN_TRIGGERS)):
        return UNCERTAIN
    return POSITIVE


def associate_attributes(
    sentence: list[str],
    matches: list[tuple[Span, LexiconEntry]],
    sentence_index: int = 0,
    window: int = ASSOCIATION_WINDOW,
) -> list[ExtractionTuple]:
    """Attach each descriptor to the nearest clinical finding in the sentence.

    Ties go to the earlier finding. Sentences with descriptors but no finding
    produce an "other, <anatomical-part>" tuple when an anatomical-part
    descriptor is present, and nothing otherwise. Uncertain mentions are
    dropped.
    """
    findings = [(s, e) for s, e in matches if e.category == CLINICAL_FINDING]
    descriptors = [(s, e) for s, e in matches if e.category == DESCRIPTOR]

    if not findings and descriptors:
        parts = [(s, e) for s, e in descriptors if e.subtype == "anatomical_part"]
        if not parts:
            return []
        part_span, part_entry = parts[0]
        rest = frozenset(
            e.canonical for s, e in descriptors if (s, e) != (part_span, part_entry)
        )
        negation = detect_negation(sentence, part_span)
        if negation == UNCERTAIN:
            return []
        return [
            ExtractionTuple(
                abnormality=f"{OTHER_PREFIX} {part_entry.canonical}",
                negation=negation,
                attributes=rest,
                sentence_index=sentence_index,
            )
        ]

    attrs_for: dict[int, set[str]] = {i: set() for i in range(len(findings))}
    for d_span, d_entry in descriptors:
        best = None
        for f_idx, (f_span, _) in enumerate(findings):
            if d_span.start >= f_span.end:
                dist = d_span.start - f_span.end
            elif f_span.start >= d_span.end:
                dist = f_span.start - d_span.end
            else:
                dist = 0
            if dist > window:
                continue
            if best is None or dist < best[0]:  # strict: ties keep earlier finding
                best = (dist, f_idx)
        if best is not None:
            attrs_for[best[1]].add(d_entry.canonical)

    tuples = []
    for f_idx, (f_span, f_entry) in enumerate(findings):
        negation = detect_negation(sentence, f_span)
        if negation == UNCERTAIN:
            continue
        tuples.append(
            ExtractionTuple(
                abnormality=f_entry.canonical,
                negation=negation,
                attributes=frozenset(attrs_for[f_idx]),
                sentence_index=sentence_index,
            )
        )
    return tuples


def extract_sentence(
    sentence: list[str], lexicon: list[LexiconEntry], sentence_index: int = 0
) -> list[ExtractionTuple]:
    return associate_attributes(sentence, match_terms(sentence, lexicon), sentence_index)


def extract_case(case: ReportCase, lexicon: list[LexiconEntry]) -> list[ExtractionTuple]:
    """Extract tuples from every findings sentence of a case."""
    out = []
    for idx, sentence in enumerate(case.findings):
        out.extend(extract_sentence(list(sentence), lexicon, sentence_index=idx))
    return out


def parse_annotation(annotation: str, lexicon: list[LexiconEntry]) -> ExtractionTuple | None:
    """Parse an annotation string "Finding / attr / attr" into a tuple.

    The leading segment names the abnormality; all descriptor segments attach
    to it. Annotations denote present abnormalities, so negation is positive.
    Returns None when no segment matches a clinical finding and no
    anatomical-part fallback applies.
    """
    segments = [tokenize(seg) for seg in annotation.split("/")]
    segments = [s for s in segments if s]
    if not segments:
        return None
    finding = None
    descriptors: list[LexiconEntry] = []
    for seg_idx, seg in enumerate(segments):
        for _, entry in match_terms(seg, lexicon):
            if entry.category == CLINICAL_FINDING and finding is None and seg_idx == 0:
                finding = entry
            elif entry.category == DESCRIPTOR:
                descriptors.append(entry)
    if finding is None:
        parts = [e for e in descriptors if e.subtype == "anatomical_part"]
        if not parts:
            return None
        part = parts[0]
        attrs = frozenset(e.canonical for e in descriptors if e is not part)
        return ExtractionTuple(
            abnormality=f"{OTHER_PREFIX} {part.canonical}", negation=POSITIVE, attributes=attrs
        )
    return ExtractionTuple(
        abnormality=finding.canonical,
        negation=POSITIVE,
        attributes=frozenset(e.canonical for e in descriptors),
    )


def extract_annotations(case: ReportCase, lexicon: list[LexiconEntry]) -> list[ExtractionTuple]:
    if not case.annotations:
        return []
    out = []
    for ann in case.annotations:
        tup = parse_annotation(ann, lexicon)
        if tup is not None:
            out.append(tup)
    return out
