"""Aspect extraction, noun filtering, extension, and sentiment partitioning.

Extraction asks the LLM for aspect terms sentence by sentence; the merged
set is cleaned with a bundled part-of-speech word list, widened with
LLM-proposed synonyms, and finally split into positive / neutral / negative
subsets by a bundled sentiment word list.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Sentence, normalize_text
from .errors import ConfigurationError, PipelineError
from .gateway import (
    LIST_RETRY_SUFFIX,
    CompletionRequest,
    Gateway,
    GatewayError,
    load_template,
    parse_list,
)

log = logging.getLogger(__name__)

# Summed token sentiment beyond +/- this margin leaves the neutral bucket.
SENTIMENT_MARGIN = 0.1

NO_DEMOS_MARKER = "(none)"


class DemoMode(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT_RELATED = "few_shot_related"
    FEW_SHOT_RANDOM = "few_shot_random"


@dataclass(frozen=True)
class DemoStrategy:
    mode: DemoMode
    k: int = 0

    def __post_init__(self) -> None:
        if (self.k == 0) != (self.mode is DemoMode.ZERO_SHOT):
            raise ConfigurationError("k must be 0 exactly for zero_shot mode")
        if self.k < 0:
            raise ConfigurationError("k must be >= 0")


@dataclass(frozen=True)
class DemoRecord:
    sentence: str
    aspects: tuple[str, ...]
    domain: str


@dataclass(frozen=True)
class AspectPool:
    """Extracted aspects partitioned into disjoint polarity subsets."""

    all: frozenset[str]
    positive: frozenset[str]
    neutral: frozenset[str]
    negative: frozenset[str]

    def __post_init__(self) -> None:
        subsets = (self.positive, self.neutral, self.negative)
        if self.positive & self.neutral or self.positive & self.negative or self.neutral & self.negative:
            raise ConfigurationError("polarity subsets must be disjoint")
        union = frozenset().union(*subsets)
        if union != self.all:
            raise ConfigurationError("polarity subsets must cover the full aspect set")
        for entry in self.all:
            if entry != normalize_text(entry):
                raise ConfigurationError(f"aspect {entry!r} is not normalized")


@dataclass(frozen=True)
class AspectEvalReport:
    precision: float
    recall: float
    f1: float


def load_demo_bank(path: str | Path) -> list[DemoRecord]:
    """Read a line-delimited demo bank of {sentence, aspects, domain} records."""
    records = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            raw = json.loads(line)
            records.append(
                DemoRecord(
                    sentence=raw["sentence"],
                    aspects=tuple(raw["aspects"]),
                    domain=raw.get("domain", ""),
                )
            )
    return records


def default_demo_bank() -> list[DemoRecord]:
    with resources.as_file(
        resources.files("absagen.resources").joinpath("demo_bank.jsonl")
    ) as path:
        return load_demo_bank(path)


def _load_tsv(package_name: str, path: str | Path | None) -> Iterable[tuple[str, str]]:
    if path is None:
        text = (
            resources.files("absagen.resources.lexicons")
            .joinpath(package_name)
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, _, value = line.partition("\t")
        yield word.strip().lower(), value.strip()


def load_pos_lexicon(path: str | Path | None = None) -> dict[str, str]:
    """word -> coarse tag (noun, verb, adj, adv, prep, conj, det, pron, intj)."""
    return dict(_load_tsv("pos.tsv", path))


def load_sentiment_lexicon(path: str | Path | None = None) -> dict[str, float]:
    """word -> polarity score in [-1, 1]."""
    return {word: float(value) for word, value in _load_tsv("sentiment.tsv", path)}


def _select_demos(
    strategy: DemoStrategy,
    bank: Sequence[DemoRecord],
    domain: str,
    rng: random.Random,
) -> list[DemoRecord]:
    if strategy.mode is DemoMode.ZERO_SHOT:
        return []
    if strategy.mode is DemoMode.FEW_SHOT_RELATED:
        candidates = [d for d in bank if d.domain == domain]
        if not candidates:
            log.warning("no demos tagged with domain %r; falling back to none", domain)
    else:
        candidates = list(bank)
    return rng.sample(candidates, min(strategy.k, len(candidates)))


def _demo_slots(demos: Sequence[DemoRecord]) -> tuple[str, str]:
    if not demos:
        return NO_DEMOS_MARKER, NO_DEMOS_MARKER
    inputs = "\n".join(f"{i}. {d.sentence}" for i, d in enumerate(demos, start=1))
    outputs = "\n".join(
        f"{i}. {json.dumps(list(d.aspects), ensure_ascii=False)}"
        for i, d in enumerate(demos, start=1)
    )
    return inputs, outputs


def extract_aspects(
    corpus: Sequence[Sentence],
    strategy: DemoStrategy,
    demos: Sequence[DemoRecord],
    gateway: Gateway,
    seed: int = 0,
) -> set[str]:
    """Ask the LLM for aspect terms per sentence and merge the answers.

    Sentences whose replies stay unparseable (after one re-prompt) are
    skipped; more than half skipped fails the stage.
    """
    if not corpus:
        return set()
    if strategy.mode is not DemoMode.ZERO_SHOT and not demos:
        raise ConfigurationError("few-shot extraction needs a non-empty demo bank")
    template = load_template("aspect_extraction")
    rng = random.Random(seed)
    selected = _select_demos(strategy, demos, corpus[0].domain, rng)
    example_input, example_output = _demo_slots(selected)
    requests = [
        CompletionRequest(
            prompt=template.render(
                {
                    "domain": sentence.domain,
                    "example-input": example_input,
                    "example-output": example_output,
                    "input": sentence.text,
                }
            ),
            temperature=0.0,
            max_tokens=256,
            template=template.name,
        )
        for sentence in corpus
    ]

    def run_one(request: CompletionRequest, sentence_id: str) -> list[str] | None:
        try:
            return gateway.complete_parsed(request, parse_list, LIST_RETRY_SUFFIX)
        except GatewayError as exc:
            log.warning("skipping sentence %s: %s", sentence_id, exc)
            return None

    results = gateway.run_all(
        [
            lambda r=request, s=sentence.id: run_one(r, s)
            for request, sentence in zip(requests, corpus)
        ]
    )
    skipped = sum(1 for r in results if r is None)
    if skipped * 2 > len(corpus):
        raise PipelineError(
            f"aspect extraction skipped {skipped} of {len(corpus)} sentences"
        )
    merged: set[str] = set()
    for items in results:
        if items is None:
            continue
        merged.update(normalize_text(item) for item in items if item.strip())
    merged.discard("")
    return merged


def _head_token(aspect: str) -> str:
    tokens = aspect.split()
    return tokens[-1] if tokens else ""


def filter_non_nouns(
    aspects: Iterable[str], lexicon: Mapping[str, str] | None = None
) -> set[str]:
    """Keep aspects whose head (final) token is a noun.

    Words absent from the lexicon count as nouns: the non-noun classes that
    pollute extraction output (prepositions, conjunctions, common modifiers)
    are closed and enumerable, while domain nouns are open-ended.
    """
    lex = load_pos_lexicon() if lexicon is None else lexicon
    kept = set()
    for aspect in aspects:
        head = _head_token(aspect)
        if not head:
            continue
        tag = lex.get(head)
        if tag is None or tag == "noun":
            kept.add(aspect)
    return kept


def extend_aspects(
    aspects: Iterable[str],
    gateway: Gateway,
    domain: str = "",
    lexicon: Mapping[str, str] | None = None,
) -> set[str]:
    """Widen the aspect set with LLM-proposed synonyms and related terms.

    Expansion is requested only for noun aspects; proposed terms are
    normalized and noun-filtered before merging. A failed expansion keeps
    the original aspect unexpanded.
    """
    merged = set(aspects)
    if not merged:
        return merged
    lex = load_pos_lexicon() if lexicon is None else lexicon
    template = load_template("aspect_extension")
    targets = sorted(filter_non_nouns(merged, lex))

    def run_one(aspect: str) -> list[str] | None:
        request = CompletionRequest(
            prompt=template.render({"domain": domain, "input": aspect}),
            temperature=0.0,
            max_tokens=128,
            template=template.name,
        )
        try:
            return gateway.complete_parsed(request, parse_list, LIST_RETRY_SUFFIX)
        except GatewayError as exc:
            log.warning("keeping %r unexpanded: %s", aspect, exc)
            return None

    results = gateway.run_all([lambda a=aspect: run_one(a) for aspect in targets])
    for items in results:
        if items is None:
            continue
        proposed = {normalize_text(item) for item in items if item.strip()}
        proposed.discard("")
        merged |= filter_non_nouns(proposed, lex)
    return merged


def partition_by_sentiment(
    aspects: Iterable[str],
    lexicon: Mapping[str, float] | None = None,
    margin: float = SENTIMENT_MARGIN,
) -> AspectPool:
    """Split aspects into polarity subsets by summed token sentiment."""
    lex = load_sentiment_lexicon() if lexicon is None else lexicon
    positive, neutral, negative = set(), set(), set()
    for aspect in aspects:
        aspect = normalize_text(aspect)
        if not aspect:
            continue
        score = sum(lex.get(token, 0.0) for token in aspect.split())
        if score > margin:
            positive.add(aspect)
        elif score < -margin:
            negative.add(aspect)
        else:
            neutral.add(aspect)
    return AspectPool(
        all=frozenset(positive | neutral | negative),
        positive=frozenset(positive),
        neutral=frozenset(neutral),
        negative=frozenset(negative),
    )


def evaluate_aspects(extracted: Iterable[str], gold: Iterable[str]) -> AspectEvalReport:
    """Precision/recall/F1 of extracted aspects under exact normalized match."""
    gold_set = {normalize_text(a) for a in gold} - {""}
    if not gold_set:
        raise ValueError("gold aspect set is empty; precision/recall are undefined")
    extracted_set = {normalize_text(a) for a in extracted} - {""}
    matches = extracted_set & gold_set
    precision = len(matches) / len(extracted_set) if extracted_set else 0.0
    recall = len(matches) / len(gold_set)
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return AspectEvalReport(precision=precision, recall=recall, f1=f1)
