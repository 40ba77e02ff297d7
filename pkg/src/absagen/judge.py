"""LLM-backed relevance judgment, quality scoring, and threshold filtering.

A candidate sample first passes two yes/no relevance checks (domain,
sentiment), then gets three 1-10 sub-scores (syntactic structure, lexical
richness, real-scenario conformity) whose rounded mean is the overall
score. Filtering keeps samples that pass both checks and reach the
threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .corpus import LabeledSample
from .gateway import (
    JUDGE_TEMPERATURE,
    CompletionRequest,
    Gateway,
    GatewayError,
    OutputFormatError,
    load_template,
    parse_score_triple,
    parse_yes_no_pair,
)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 6
YES_NO_RETRY_SUFFIX = "Answer with exactly two words: yes or no, yes or no."
SCORES_RETRY_SUFFIX = "Answer with exactly three integers between 1 and 10."


class ScoringError(RuntimeError):
    """The scoring reply stayed unusable after the re-prompt."""


def overall_score(syntactic: int, lexical: int, realism: int) -> int:
    # The mean of three integers has fractional part 0, 1/3 or 2/3, so
    # round() never hits a .5 tie.
    return round((syntactic + lexical + realism) / 3)


@dataclass(frozen=True)
class Judgment:
    domain_relevant: bool
    sentiment_relevant: bool
    syntactic: int
    lexical: int
    realism: int
    overall: int

    def __post_init__(self) -> None:
        for name in ("syntactic", "lexical", "realism", "overall"):
            value = getattr(self, name)
            if not 1 <= value <= 10:
                raise ValueError(f"{name} score {value} outside 1..10")
        expected = overall_score(self.syntactic, self.lexical, self.realism)
        if self.overall != expected:
            raise ValueError(
                f"overall {self.overall} != rounded mean {expected} of sub-scores"
            )

    @classmethod
    def from_scores(
        cls,
        domain_relevant: bool,
        sentiment_relevant: bool,
        syntactic: int,
        lexical: int,
        realism: int,
    ) -> "Judgment":
        return cls(
            domain_relevant=domain_relevant,
            sentiment_relevant=sentiment_relevant,
            syntactic=syntactic,
            lexical=lexical,
            realism=realism,
            overall=overall_score(syntactic, lexical, realism),
        )

    def to_dict(self) -> dict:
        return {
            "domain_relevant": self.domain_relevant,
            "sentiment_relevant": self.sentiment_relevant,
            "syntactic": self.syntactic,
            "lexical": self.lexical,
            "realism": self.realism,
            "overall": self.overall,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Judgment":
        return cls(
            domain_relevant=record["domain_relevant"],
            sentiment_relevant=record["sentiment_relevant"],
            syntactic=record["syntactic"],
            lexical=record["lexical"],
            realism=record["realism"],
            overall=record["overall"],
        )


@dataclass
class JudgeOutcome:
    sample: LabeledSample
    judgment: Judgment | None  # None when relevance or scoring failed
    reason: str | None  # None | "relevance_failed" | "scoring_failed"
    domain_relevant: bool
    sentiment_relevant: bool


def filter_by_threshold(
    judged: Sequence[tuple[LabeledSample, Judgment]],
    threshold: int,
    strict: bool = False,
) -> tuple[list[tuple[LabeledSample, Judgment]], list[tuple[LabeledSample, Judgment]]]:
    """Partition judged samples into (kept, rejected), preserving order.

    Kept samples pass both relevance flags and have overall >= threshold
    (strictly greater when strict=True). Threshold 0 disables the score
    gate, which threshold sweeps use; single runs stay in 1..10.
    """
    if not 0 <= threshold <= 10:
        raise ValueError(f"threshold {threshold} outside 0..10")
    kept, rejected = [], []
    for sample, judgment in judged:
        relevant = judgment.domain_relevant and judgment.sentiment_relevant
        scored = (
            judgment.overall > threshold if strict else judgment.overall >= threshold
        )
        if relevant and scored:
            kept.append((sample, judgment))
        else:
            rejected.append((sample, judgment))
    return kept, rejected


def sample_prompt_block(sample: LabeledSample) -> str:
    pairs = "; ".join(
        f"({ann.term}, {ann.polarity.to_name()})" for ann in sample.annotations
    )
    return f"Sentence: {sample.sentence.text}\nAspects: {pairs}"


class Discriminator:
    """LLM-as-judge over generated samples."""

    def __init__(
        self,
        gateway: Gateway,
        domain: str,
        threshold: int = DEFAULT_THRESHOLD,
        strict: bool = False,
    ):
        if not 0 <= threshold <= 10:
            raise ValueError(f"threshold {threshold} outside 0..10")
        self.gateway = gateway
        self.domain = domain
        self.threshold = threshold
        self.strict = strict
        self._relevance_template = load_template("relevance_judgment")
        self._scoring_template = load_template("quality_scoring")

    def judge_relevance(self, sample: LabeledSample) -> tuple[bool, bool]:
        """(domain_relevant, sentiment_relevant); unparseable fails both."""
        request = CompletionRequest(
            prompt=self._relevance_template.render(
                {"domain": self.domain, "input": sample_prompt_block(sample)}
            ),
            temperature=JUDGE_TEMPERATURE,
            max_tokens=16,
            template=self._relevance_template.name,
        )
        try:
            return self.gateway.complete_parsed(
                request, parse_yes_no_pair, YES_NO_RETRY_SUFFIX
            )
        except GatewayError as exc:
            log.warning(
                "relevance verdict unusable for sample %s; failing both: %s",
                sample.sentence.id,
                exc,
            )
            return (False, False)

    def score_sample(self, sample: LabeledSample) -> Judgment:
        """Score a sample that already passed both relevance checks."""
        request = CompletionRequest(
            prompt=self._scoring_template.render(
                {"domain": self.domain, "input": sample_prompt_block(sample)}
            ),
            temperature=JUDGE_TEMPERATURE,
            max_tokens=32,
            template=self._scoring_template.name,
        )
        try:
            scores = self.gateway.complete_parsed(
                request, parse_score_triple, SCORES_RETRY_SUFFIX
            )
        except OutputFormatError as exc:
            raise ScoringError(
                f"sample {sample.sentence.id}: unusable scores: {exc}"
            ) from exc
        return Judgment.from_scores(True, True, *scores)

    def judge(self, sample: LabeledSample) -> JudgeOutcome:
        domain_ok, sentiment_ok = self.judge_relevance(sample)
        if not (domain_ok and sentiment_ok):
            return JudgeOutcome(sample, None, "relevance_failed", domain_ok, sentiment_ok)
        try:
            judgment = self.score_sample(sample)
        except (ScoringError, GatewayError) as exc:
            log.warning("rejecting sample %s: %s", sample.sentence.id, exc)
            return JudgeOutcome(sample, None, "scoring_failed", domain_ok, sentiment_ok)
        return JudgeOutcome(sample, judgment, None, domain_ok, sentiment_ok)

    def judge_samples(self, samples: Sequence[LabeledSample]) -> list[JudgeOutcome]:
        """Judge a batch concurrently; outcomes keep the input order."""
        return self.gateway.run_all([lambda s=s: self.judge(s) for s in samples])

    def filter(
        self, judged: Sequence[tuple[LabeledSample, Judgment]]
    ) -> tuple[list[tuple[LabeledSample, Judgment]], list[tuple[LabeledSample, Judgment]]]:
        return filter_by_threshold(judged, self.threshold, self.strict)
