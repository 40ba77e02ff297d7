"""Dataset records and file formats for aspect-based sentiment data.

The unit of data is a sentence annotated with one or more (aspect term,
polarity) pairs. Polarities use the integer codes 0 = positive,
1 = neutral, 2 = negative everywhere, including on disk.
"""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .judge import Judgment

log = logging.getLogger(__name__)

DATASET_FORMATS = ("jsonl", "semeval-xml")


class DatasetFormatError(ValueError):
    """A dataset file does not parse in its declared format."""


class DatasetValidationError(ValueError):
    """A parsed sample violates a structural invariant."""


class PolarityLabel(IntEnum):
    POSITIVE = 0
    NEUTRAL = 1
    NEGATIVE = 2

    def to_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "PolarityLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DatasetFormatError(f"unknown polarity name: {name!r}") from None

    @classmethod
    def from_code(cls, code: int) -> "PolarityLabel":
        try:
            return cls(code)
        except ValueError:
            raise DatasetFormatError(f"unknown polarity code: {code!r}") from None


def normalize_text(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return " ".join(text.split()).lower()


@dataclass
class Sentence:
    id: str
    text: str
    domain: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise DatasetValidationError(f"sentence {self.id!r} has empty text")


@dataclass
class AspectAnnotation:
    term: str
    polarity: PolarityLabel
    char_span: tuple[int, int] | None = None


@dataclass(frozen=True)
class Provenance:
    kind: str  # "gold" | "generated"
    round: int | None = None
    score: "Judgment | None" = None

    def __post_init__(self) -> None:
        if self.kind not in ("gold", "generated"):
            raise DatasetValidationError(f"unknown provenance kind: {self.kind!r}")
        if self.kind == "generated" and (self.round is None or self.round < 1):
            raise DatasetValidationError("generated samples must record a round >= 1")


GOLD = Provenance("gold")


@dataclass
class LabeledSample:
    sentence: Sentence
    annotations: list[AspectAnnotation]
    provenance: Provenance = GOLD

    def __post_init__(self) -> None:
        if not self.annotations:
            raise DatasetValidationError(
                f"sample {self.sentence.id!r} has no annotations"
            )

    def validate(self) -> None:
        """Check aspect containment and span consistency, raising on violation.

        Generated samples are constructed unvalidated and gated later, so this
        is a separate call rather than part of construction.
        """
        text = self.sentence.text
        lowered = text.lower()
        for ann in self.annotations:
            if ann.term.lower() not in lowered:
                raise DatasetValidationError(
                    f"sample {self.sentence.id!r}: aspect {ann.term!r} "
                    "not found in sentence text"
                )
            if ann.char_span is not None:
                start, end = ann.char_span
                if text[start:end] != ann.term:
                    raise DatasetValidationError(
                        f"sample {self.sentence.id!r}: span {ann.char_span} "
                        f"does not slice to {ann.term!r}"
                    )


@dataclass(frozen=True)
class DatasetStats:
    positive: int
    neutral: int
    negative: int

    @property
    def total(self) -> int:
        return self.positive + self.neutral + self.negative

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.positive, self.neutral, self.negative)


def dedup_key(sample: LabeledSample) -> tuple:
    """Duplicate-detection key: normalized text plus the annotation multiset."""
    anns = tuple(
        sorted((normalize_text(a.term), int(a.polarity)) for a in sample.annotations)
    )
    return (normalize_text(sample.sentence.text), anns)


def load_unlabeled_corpus(path: str | Path, domain: str) -> list[Sentence]:
    """Read a one-sentence-per-line UTF-8 file; blank lines are skipped.

    Sentence ids are the 1-based line numbers in the file.
    """
    data = Path(path).read_bytes()
    sentences: list[Sentence] = []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DatasetFormatError(f"line {lineno}: invalid UTF-8 ({exc})") from exc
        text = line.strip()
        if not text:
            continue
        sentences.append(Sentence(id=str(lineno), text=text, domain=domain))
    return sentences


def dataset_stats(samples: Sequence[LabeledSample]) -> DatasetStats:
    """Count each annotation once under its polarity."""
    counts = Counter(ann.polarity for s in samples for ann in s.annotations)
    return DatasetStats(
        positive=counts.get(PolarityLabel.POSITIVE, 0),
        neutral=counts.get(PolarityLabel.NEUTRAL, 0),
        negative=counts.get(PolarityLabel.NEGATIVE, 0),
    )


def deduplicate(samples: Sequence[LabeledSample]) -> list[LabeledSample]:
    """Drop later samples whose normalized text and annotations repeat an
    earlier one; order is preserved."""
    seen: set[tuple] = set()
    out: list[LabeledSample] = []
    for sample in samples:
        key = dedup_key(sample)
        if key in seen:
            continue
        seen.add(key)
        out.append(sample)
    return out


def _drop_conflicting(samples: Iterable[LabeledSample]) -> list[LabeledSample]:
    """Drop whole samples in which the same aspect carries two polarities."""
    kept: list[LabeledSample] = []
    for sample in samples:
        polarities: dict[str, set[PolarityLabel]] = {}
        for ann in sample.annotations:
            polarities.setdefault(normalize_text(ann.term), set()).add(ann.polarity)
        if any(len(p) > 1 for p in polarities.values()):
            log.debug("dropping sample %s: conflicting polarities", sample.sentence.id)
            continue
        kept.append(sample)
    return kept


def _sample_to_dict(sample: LabeledSample) -> dict:
    anns = []
    for ann in sample.annotations:
        record: dict = {"term": ann.term, "polarity": int(ann.polarity)}
        if ann.char_span is not None:
            record["span"] = [ann.char_span[0], ann.char_span[1]]
        anns.append(record)
    prov: dict = {"kind": sample.provenance.kind}
    if sample.provenance.round is not None:
        prov["round"] = sample.provenance.round
    if sample.provenance.score is not None:
        prov["score"] = sample.provenance.score.to_dict()
    return {
        "id": sample.sentence.id,
        "text": sample.sentence.text,
        "domain": sample.sentence.domain,
        "annotations": anns,
        "provenance": prov,
    }


def _provenance_from_dict(record: dict) -> Provenance:
    score = None
    if record.get("score") is not None:
        from .judge import Judgment

        score = Judgment.from_dict(record["score"])
    return Provenance(
        kind=record.get("kind", "gold"),
        round=record.get("round"),
        score=score,
    )


def _sample_from_dict(record: dict, fallback_id: str) -> LabeledSample:
    anns = []
    for raw in record["annotations"]:
        span = tuple(raw["span"]) if raw.get("span") is not None else None
        anns.append(
            AspectAnnotation(
                term=raw["term"],
                polarity=PolarityLabel.from_code(raw["polarity"]),
                char_span=span,  # type: ignore[arg-type]
            )
        )
    sentence = Sentence(
        id=str(record.get("id", fallback_id)),
        text=record["text"],
        domain=record.get("domain", ""),
    )
    provenance = _provenance_from_dict(record.get("provenance", {"kind": "gold"}))
    return LabeledSample(sentence=sentence, annotations=anns, provenance=provenance)


def _load_jsonl(path: Path, domain: str) -> list[LabeledSample]:
    samples = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: {exc}") from exc
            try:
                sample = _sample_from_dict(record, fallback_id=str(lineno))
            except (KeyError, TypeError) as exc:
                raise DatasetFormatError(
                    f"line {lineno}: missing or malformed field ({exc})"
                ) from exc
            if domain and not sample.sentence.domain:
                sample.sentence.domain = domain
            samples.append(sample)
    return samples


def _load_semeval_xml(path: Path, domain: str) -> list[LabeledSample]:
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
    samples = []
    for element in tree.getroot().iter("sentence"):
        sid = element.get("id", "")
        text_el = element.find("text")
        if text_el is None or text_el.text is None:
            raise DatasetFormatError(f"sentence {sid!r}: missing <text> element")
        text = text_el.text
        terms_el = element.find("aspectTerms")
        if terms_el is None:
            continue
        anns = []
        for term_el in terms_el.findall("aspectTerm"):
            term = term_el.get("term")
            polarity = term_el.get("polarity")
            start = term_el.get("from")
            end = term_el.get("to")
            if term is None or polarity is None or start is None or end is None:
                raise DatasetFormatError(
                    f"sentence {sid!r}: aspectTerm missing a required attribute"
                )
            if polarity == "conflict":
                continue
            anns.append(
                AspectAnnotation(
                    term=term,
                    polarity=PolarityLabel.from_name(polarity),
                    char_span=(int(start), int(end)),
                )
            )
        if not anns:
            continue
        samples.append(
            LabeledSample(
                sentence=Sentence(id=sid or "?", text=text, domain=domain),
                annotations=anns,
            )
        )
    return samples


def load_gold_dataset(
    path: str | Path, format: str, domain: str = ""
) -> list[LabeledSample]:
    """Load a labeled dataset, removing conflicting-polarity instances.

    Annotations explicitly labeled "conflict" (SemEval XML) are dropped; a
    sample in which the same aspect carries two different polarities is
    dropped whole. Every surviving sample is validated against its text.
    """
    if format not in DATASET_FORMATS:
        raise DatasetFormatError(f"unknown dataset format: {format!r}")
    path = Path(path)
    if format == "jsonl":
        samples = _load_jsonl(path, domain)
    else:
        samples = _load_semeval_xml(path, domain)
    samples = _drop_conflicting(samples)
    ids = set()
    for sample in samples:
        if sample.sentence.id in ids:
            raise DatasetValidationError(
                f"duplicate sentence id {sample.sentence.id!r}"
            )
        ids.add(sample.sentence.id)
        sample.validate()
    return samples


def _locate_span(text: str, term: str, sample_id: str) -> tuple[int, int]:
    idx = text.lower().find(term.lower())
    if idx < 0:
        raise DatasetValidationError(
            f"sample {sample_id!r}: aspect {term!r} not found in sentence text"
        )
    return (idx, idx + len(term))


def _emit_jsonl(samples: Sequence[LabeledSample], path: Path) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(_sample_to_dict(sample), ensure_ascii=False))
            handle.write("\n")


def _emit_semeval_xml(samples: Sequence[LabeledSample], path: Path) -> None:
    root = ET.Element("sentences")
    for sample in samples:
        sent_el = ET.SubElement(root, "sentence", {"id": sample.sentence.id})
        text_el = ET.SubElement(sent_el, "text")
        text_el.text = sample.sentence.text
        terms_el = ET.SubElement(sent_el, "aspectTerms")
        for ann in sample.annotations:
            span = ann.char_span
            if span is None:
                # XML carries offsets, so spanless annotations are anchored at
                # their first case-insensitive occurrence.
                span = _locate_span(sample.sentence.text, ann.term, sample.sentence.id)
            ET.SubElement(
                terms_el,
                "aspectTerm",
                {
                    "term": ann.term,
                    "polarity": ann.polarity.to_name(),
                    "from": str(span[0]),
                    "to": str(span[1]),
                },
            )
    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    tree.write(path, encoding="utf-8", xml_declaration=True)


def emit_dataset(
    samples: Sequence[LabeledSample], path: str | Path, format: str
) -> None:
    """Write samples so they round-trip through load_gold_dataset."""
    if format not in DATASET_FORMATS:
        raise DatasetFormatError(f"unknown dataset format: {format!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "jsonl":
        _emit_jsonl(samples, path)
    else:
        _emit_semeval_xml(samples, path)
