"""Report corpus ingestion, vocabularies, and deterministic synthetic corpora.

Corpus files are line-delimited JSON records, one case per line, with fields:

    case_id     string, unique within the file (required)
    findings    free text of the findings section (required)
    impression  free text of the impression section (required)
    annotations optional list of annotation strings, e.g.
                "Calcified Granuloma / lung / upper lobe / left"
    image_refs  optional list of image identifiers

Findings/impression text is segmented and tokenized on load.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .tokenization import detokenize, tokenize, tokenize_report

PAD, START, EOS, EOR, UNK = "<pad>", "<start>", "<eos>", "<eor>", "<unk>"
SPECIAL_TOKENS = (PAD, START, EOS, EOR, UNK)


@dataclass(frozen=True)
class ReportCase:
    """One report: tokenized findings/impression sentences plus side data."""

    case_id: str
    findings: tuple[tuple[str, ...], ...]
    impression: tuple[tuple[str, ...], ...]
    annotations: tuple[str, ...] | None = None
    image_refs: tuple[str, ...] = ()

    @property
    def report_sentences(self) -> list[list[str]]:
        """The generation target: the findings sentences as token lists."""
        return [list(s) for s in self.findings]


def _freeze_sentences(sentences: list[list[str]]) -> tuple[tuple[str, ...], ...]:
    return tuple(tuple(s) for s in sentences)


def load_corpus(path: str, format: str = "jsonl") -> list[ReportCase]:
    """Load a corpus file. Rejects malformed records and duplicate case ids."""
    if format != "jsonl":
        raise ValidationError(f"unknown corpus format {format!r}; supported: jsonl")
    cases = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(record, dict):
                raise ParseError("record is not an object", line=lineno)
            for req in ("case_id", "findings", "impression"):
                if req not in record:
                    raise ParseError(f"missing required field {req!r}", line=lineno)
            case_id = str(record["case_id"])
            if case_id in seen:
                raise ValidationError(f"duplicate case_id {case_id!r} at line {lineno}")
            seen.add(case_id)
            annotations = record.get("annotations")
            if annotations is not None:
                annotations = tuple(str(a) for a in annotations)
            cases.append(
                ReportCase(
                    case_id=case_id,
                    findings=_freeze_sentences(tokenize_report(str(record["findings"]))),
                    impression=_freeze_sentences(tokenize_report(str(record["impression"]))),
                    annotations=annotations,
                    image_refs=tuple(str(r) for r in record.get("image_refs", [])),
                )
            )
    return cases


def serialize_corpus(cases: list[ReportCase], path: str) -> None:
    """Write cases back to line-delimited JSON (tokenized text form)."""
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            record = {
                "case_id": case.case_id,
                "findings": detokenize([list(s) for s in case.findings]),
                "impression": detokenize([list(s) for s in case.impression]),
            }
            if case.annotations is not None:
                record["annotations"] = list(case.annotations)
            record["image_refs"] = list(case.image_refs)
            fh.write(json.dumps(record, sort_keys=False) + "\n")


class Vocabulary:
    """Bijective token <-> id map with fixed special ids and a frequency floor.

    Ids 0..4 are reserved for pad/start/end-of-sentence/end-of-report/unknown;
    corpus tokens get ids in (frequency desc, lexicographic) order.
    """

    def __init__(self, tokens_by_rank: list[str], min_frequency: int):
        self.min_frequency = min_frequency
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
        for token in tokens_by_rank:
            if token in self.token_to_id:
                raise ValidationError(f"token {token!r} collides with a special token")
            self.token_to_id[token] = len(self.token_to_id)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def start_id(self) -> int:
        return self.token_to_id[START]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def eor_id(self) -> int:
        return self.token_to_id[EOR]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.unk_id
        return [self.token_to_id.get(t, unk) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def to_list(self) -> list[str]:
        """Corpus tokens in id order (without specials), for checkpointing."""
        return [self.id_to_token[i] for i in range(len(SPECIAL_TOKENS), len(self))]


def build_vocabulary(cases: list[ReportCase], min_frequency: int = 1) -> Vocabulary:
    """Count tokens over findings+impression and keep those at or above the floor."""
    if min_frequency < 1:
        raise ValidationError("min_frequency must be >= 1")
    if not cases:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for case in cases:
        for sentence in list(case.findings) + list(case.impression):
            counts.update(sentence)
    kept = [t for t, c in counts.items() if c >= min_frequency]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_frequency)


# ---------------------------------------------------------------------------
# Synthetic corpus generation


@dataclass
class SyntheticAbnormality:
    """Generator recipe for one abnormality: name, prevalence, attribute pool."""

    canonical: str
    prevalence: float
    attributes: list[str] = field(default_factory=list)
    templates: list[str] = field(default_factory=list)
    # templates use {abn} and {attrs}; {attrs} joined with spaces


@dataclass
class SyntheticSpec:
    """Configuration for the deterministic synthetic corpus generator."""

    abnormalities: list[SyntheticAbnormality]
    n_cases: int
    grid_height: int = 4
    grid_width: int = 4
    feature_dim: int = 128  # must be even: twice the model dimension
    max_attributes_per_mention: int = 2
    negative_mention_rate: float = 0.4
    signal_scale: float = 2.0
    noise_scale: float = 0.3

    @staticmethod
    def from_file(path: str) -> "SyntheticSpec":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return SyntheticSpec.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "SyntheticSpec":
        abns = [
            SyntheticAbnormality(
                canonical=a["canonical"],
                prevalence=float(a.get("prevalence", 0.5)),
                attributes=list(a.get("attributes", [])),
                templates=list(a.get("templates", [])),
            )
            for a in raw.get("abnormalities", [])
        ]
        known = {
            "n_cases", "grid_height", "grid_width", "feature_dim",
            "max_attributes_per_mention", "negative_mention_rate",
            "signal_scale", "noise_scale",
        }
        kwargs = {k: raw[k] for k in known if k in raw}
        return SyntheticSpec(abnormalities=abns, **kwargs)


DEFAULT_TEMPLATES = [
    "there is {abn} in the {attrs}",
    "{abn} is seen in the {attrs}",
    "stable {abn} involving the {attrs}",
]

NO_FINDING_SENTENCES = [
    "no acute cardiopulmonary abnormality",
    "no acute findings",
]


@dataclass
class SyntheticCase:
    """A generated case bundling the report with its ground truth."""

    case: ReportCase
    labels: dict[str, list[str]]  # abnormality canonical -> attribute canonicals
    features: np.ndarray  # (H*W, feature_dim)


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int) -> list[SyntheticCase]:
    """Deterministically generate cases whose feature grids correlate with labels.

    Each abnormality owns a fixed additive signature pattern on the feature
    grid; a case's grid is noise plus the signatures of its present
    abnormalities, so presence is recoverable (and memorizable) from features.
    Ground truth is recorded in the annotations field as
    "Canonical / attr / attr" strings.
    """
    if not spec.abnormalities:
        raise ValidationError("synthetic spec must name at least one abnormality")
    if spec.feature_dim % 2 != 0:
        raise ValidationError("feature_dim must be even")
    root = np.random.SeedSequence(entropy=seed)
    sig_rng = np.random.default_rng(root.spawn(1)[0])
    hw = spec.grid_height * spec.grid_width
    signatures = {
        a.canonical: sig_rng.normal(0.0, spec.signal_scale, size=(hw, spec.feature_dim))
        for a in spec.abnormalities
    }
    out = []
    case_seeds = root.spawn(spec.n_cases + 1)[1:]
    for idx, case_seed in enumerate(case_seeds):
        rng = np.random.default_rng(case_seed)
        present: list[SyntheticAbnormality] = []
        absent: list[SyntheticAbnormality] = []
        for abn in spec.abnormalities:
            (present if rng.random() < abn.prevalence else absent).append(abn)

        sentences: list[list[str]] = []
        labels: dict[str, list[str]] = {}
        annotations: list[str] = []
        for abn in present:
            n_attr = int(rng.integers(1, spec.max_attributes_per_mention + 1))
            n_attr = min(n_attr, len(abn.attributes))
            attrs = sorted(
                rng.choice(len(abn.attributes), size=n_attr, replace=False).tolist()
            ) if n_attr else []
            chosen = [abn.attributes[i] for i in attrs]
            templates = abn.templates or DEFAULT_TEMPLATES
            template = templates[int(rng.integers(0, len(templates)))]
            text = template.format(abn=abn.canonical, attrs=" ".join(chosen))
            sentences.append(tokenize(text))
            labels[abn.canonical] = chosen
            annotations.append(" / ".join([abn.canonical] + chosen))
        for abn in absent:
            if rng.random() < spec.negative_mention_rate:
                sentences.append(tokenize(f"no {abn.canonical}"))
        if not present:
            sentences.append(tokenize(NO_FINDING_SENTENCES[idx % len(NO_FINDING_SENTENCES)]))

        grid = rng.normal(0.0, spec.noise_scale, size=(hw, spec.feature_dim))
        for abn in present:
            grid = grid + signatures[abn.canonical]

        impression = [tokenize("no acute findings" if not present else "findings as above")]
        case = ReportCase(
            case_id=f"synth-{idx:04d}",
            findings=_freeze_sentences(sentences),
            impression=_freeze_sentences(impression),
            annotations=tuple(annotations) if annotations else (),
            image_refs=(f"synth-{idx:04d}-frontal", f"synth-{idx:04d}-lateral"),
        )
        out.append(SyntheticCase(case=case, labels=labels, features=grid))
    return out


def write_synthetic_corpus(
    synth: list[SyntheticCase], corpus_path: str, spec: SyntheticSpec | None = None
) -> str:
    """Write corpus jsonl plus a features archive next to it; returns features path.

    Feature arrays are stored as (height, width, feature_dim), one per case id.
    """
    serialize_corpus([s.case for s in synth], corpus_path)
    features_path = features_path_for(corpus_path)
    arrays = {}
    for s in synth:
        grid = s.features
        if spec is not None:
            grid = grid.reshape(spec.grid_height, spec.grid_width, spec.feature_dim)
        else:
            hw, dim = grid.shape
            side = int(round(hw ** 0.5))
            if side * side == hw:
                grid = grid.reshape(side, side, dim)
            else:
                grid = grid.reshape(hw, 1, dim)
        arrays[s.case.case_id] = grid
    np.savez(features_path, **arrays)
    return features_path


def features_path_for(corpus_path: str) -> str:
    base = corpus_path[:-6] if corpus_path.endswith(".jsonl") else corpus_path
    return base + ".features.npz"
