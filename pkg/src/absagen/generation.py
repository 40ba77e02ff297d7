"""Aspect-sentiment pair construction and iterative pseudo-sample generation.

Each round draws aspect-sentiment pairs from the pool, prompts the LLM for
one sentence per pair (or per pair group, for multi-aspect sentences),
gates the output on aspect containment and judge verdicts, and feeds
high-scoring keepers back into later prompts as demonstrations.
"""

from __future__ import annotations

import logging
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, replace
from typing import Sequence

from .aspects import AspectPool
from .corpus import (
    AspectAnnotation,
    LabeledSample,
    PolarityLabel,
    Provenance,
    Sentence,
    dedup_key,
    deduplicate,
)
from .errors import ConfigurationError, PipelineError
from .gateway import (
    GENERATION_TEMPERATURE,
    CompletionRequest,
    Gateway,
    GatewayError,
    load_template,
    parse_sentence,
)
from .judge import Discriminator, Judgment

log = logging.getLogger(__name__)

SENTENCE_RETRY_SUFFIX = "Answer with a single sentence only."
NO_FEEDBACK_MARKER = "(none yet)"
# Sizing guess for adaptive batches: roughly this share of generated
# samples survives containment and judging.
EXPECTED_KEEP_RATE = 0.6


@dataclass(frozen=True)
class AspectSentimentPair:
    aspect: str
    polarity: PolarityLabel

    def render(self) -> str:
        return f"({self.aspect}, {self.polarity.to_name()})"


def render_pairs(pairs: Sequence[AspectSentimentPair]) -> str:
    return "; ".join(pair.render() for pair in pairs)


@dataclass
class GenerationConfig:
    domain: str
    target_counts: dict[PolarityLabel, int]
    rounds: int = 20
    batch_per_round: int | None = None  # None: ceil(remaining / EXPECTED_KEEP_RATE)
    feedback_k: int = 2
    feedback_capacity: int = 64
    strategy_mix: float = 0.5  # fraction of requests that are multi-aspect
    aspects_per_multi: int = 2
    length_hint: tuple[int, int] = (10, 30)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        if self.batch_per_round is not None and self.batch_per_round < 1:
            raise ConfigurationError("batch_per_round must be >= 1 when set")
        if self.feedback_k < 0:
            raise ConfigurationError("feedback_k must be >= 0")
        if self.feedback_capacity < 1:
            raise ConfigurationError("feedback_capacity must be >= 1")
        if not 0.0 <= self.strategy_mix <= 1.0:
            raise ConfigurationError("strategy_mix must be in [0, 1]")
        if self.aspects_per_multi < 2:
            raise ConfigurationError("aspects_per_multi must be >= 2")
        if any(count < 0 for count in self.target_counts.values()):
            raise ConfigurationError("target counts must be >= 0")
        lo, hi = self.length_hint
        if lo < 1 or hi < lo:
            raise ConfigurationError("length_hint must be a non-empty word range")


class FeedbackPool:
    """Bounded FIFO store of high-scoring samples used as demonstrations."""

    def __init__(self, threshold: int, capacity: int = 64):
        self.threshold = threshold
        self._items: deque[tuple[LabeledSample, Judgment]] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, sample: LabeledSample, judgment: Judgment) -> None:
        if judgment.overall < self.threshold:
            raise ValueError(
                f"score {judgment.overall} below feedback threshold {self.threshold}"
            )
        self._items.append((sample, judgment))

    def sample(
        self, k: int, rng: random.Random
    ) -> list[tuple[LabeledSample, Judgment]]:
        if k <= 0 or not self._items:
            return []
        return rng.sample(list(self._items), min(k, len(self._items)))


def build_pairs(
    pool: AspectPool, config: GenerationConfig, rng: random.Random | None = None
) -> list[AspectSentimentPair]:
    """Draw aspect-sentiment pairs per polarity, with replacement.

    Aspects only pair with their own polarity subset, so inherently biased
    aspects never get an opposing label.
    """
    rng = rng if rng is not None else random.Random(config.seed)
    subsets = {
        PolarityLabel.POSITIVE: sorted(pool.positive),
        PolarityLabel.NEUTRAL: sorted(pool.neutral),
        PolarityLabel.NEGATIVE: sorted(pool.negative),
    }
    pairs: list[AspectSentimentPair] = []
    for polarity in PolarityLabel:
        count = config.target_counts.get(polarity, 0)
        if count <= 0:
            continue
        bucket = subsets[polarity]
        if not bucket:
            raise ConfigurationError(
                f"target {count} for {polarity.to_name()} but the pool has no "
                f"{polarity.to_name()} aspects"
            )
        pairs.extend(
            AspectSentimentPair(rng.choice(bucket), polarity) for _ in range(count)
        )
    return pairs


def _group_pairs(
    pairs: Sequence[AspectSentimentPair],
    config: GenerationConfig,
    rng: random.Random,
) -> list[list[AspectSentimentPair]]:
    """Split pairs into request groups; strategy_mix of requests are multi-aspect."""
    queue = list(pairs)
    rng.shuffle(queue)
    groups: list[list[AspectSentimentPair]] = []
    while queue:
        multi = (
            len(queue) >= config.aspects_per_multi
            and rng.random() < config.strategy_mix
        )
        group = [queue.pop(0)]
        if multi:
            terms = {group[0].aspect}
            index = 0
            while len(group) < config.aspects_per_multi and index < len(queue):
                # A group never repeats an aspect term: the same term with two
                # polarities would be self-conflicting.
                if queue[index].aspect in terms:
                    index += 1
                    continue
                pair = queue.pop(index)
                group.append(pair)
                terms.add(pair.aspect)
        groups.append(group)
    return groups


def _feedback_slots(
    demos: Sequence[tuple[LabeledSample, Judgment]]
) -> tuple[str, str]:
    if not demos:
        return NO_FEEDBACK_MARKER, NO_FEEDBACK_MARKER
    inputs, outputs = [], []
    for i, (sample, _) in enumerate(demos, start=1):
        pairs = render_pairs(
            [
                AspectSentimentPair(ann.term, ann.polarity)
                for ann in sample.annotations
            ]
        )
        inputs.append(f"{i}. {pairs}")
        outputs.append(f"{i}. {sample.sentence.text}")
    return "\n".join(inputs), "\n".join(outputs)


def generate_round(
    pairs: Sequence[AspectSentimentPair],
    feedback: FeedbackPool,
    config: GenerationConfig,
    gateway: Gateway,
    rng: random.Random | None = None,
    round_index: int = 1,
    round_log: list[dict] | None = None,
) -> list[LabeledSample]:
    """Generate one sentence per pair group; unparseable replies are skipped."""
    rng = rng if rng is not None else random.Random(config.seed)
    template = load_template("generation")
    groups = _group_pairs(pairs, config, rng)
    lo, hi = config.length_hint
    requests = []
    for group in groups:
        demos = feedback.sample(config.feedback_k, rng)
        example_input, example_output = _feedback_slots(demos)
        requests.append(
            CompletionRequest(
                prompt=template.render(
                    {
                        "domain": config.domain,
                        "length": f"{lo} to {hi}",
                        "example-input": example_input,
                        "example-output": example_output,
                        "input": render_pairs(group),
                    }
                ),
                temperature=GENERATION_TEMPERATURE,
                max_tokens=128,
                template=template.name,
            )
        )

    def run_one(request: CompletionRequest) -> str | None:
        try:
            return gateway.complete_parsed(request, parse_sentence, SENTENCE_RETRY_SUFFIX)
        except GatewayError as exc:
            log.warning("skipping pair group: %s", exc)
            return None

    texts = gateway.run_all([lambda r=r: run_one(r) for r in requests])
    samples = []
    for index, (group, text) in enumerate(zip(groups, texts)):
        if round_log is not None:
            round_log.append(
                {
                    "round": round_index,
                    "stage": "generate",
                    "pairs": render_pairs(group),
                    "response": text,
                    "parsed": text is not None,
                    "sample_id": f"g{round_index}-{index}" if text is not None else None,
                }
            )
        if text is None:
            continue
        samples.append(
            LabeledSample(
                sentence=Sentence(
                    id=f"g{round_index}-{index}", text=text, domain=config.domain
                ),
                annotations=[
                    AspectAnnotation(term=pair.aspect, polarity=pair.polarity)
                    for pair in group
                ],
                provenance=Provenance("generated", round=round_index),
            )
        )
    return samples


def verify_containment(sample: LabeledSample) -> bool:
    """True iff every aspect term occurs verbatim (case-insensitive) in the text."""
    text = sample.sentence.text.lower()
    return all(ann.term.lower() in text for ann in sample.annotations)


def _allocate_batch(
    remaining: dict[PolarityLabel, int], batch_per_round: int | None
) -> dict[PolarityLabel, int]:
    if batch_per_round is None:
        return {
            pol: math.ceil(count / EXPECTED_KEEP_RATE)
            for pol, count in remaining.items()
            if count > 0
        }
    total = sum(remaining.values())
    batch: dict[PolarityLabel, int] = {}
    leftovers = []
    used = 0
    for pol in PolarityLabel:
        count = remaining.get(pol, 0)
        if count <= 0:
            continue
        exact = batch_per_round * count / total
        share = int(exact)
        batch[pol] = share
        used += share
        leftovers.append((exact - share, pol))
    for _, pol in sorted(leftovers, key=lambda item: (-item[0], item[1])):
        if used >= batch_per_round:
            break
        batch[pol] += 1
        used += 1
    return {pol: max(1, share) for pol, share in batch.items()}


def run_iterative_generation(
    pool: AspectPool,
    config: GenerationConfig,
    discriminator: Discriminator,
    gateway: Gateway,
    round_log: list[dict] | None = None,
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Loop rounds of build -> generate -> gate until targets are met.

    Returns (kept, rejected). Kept samples carry their judgment in the
    provenance; the feedback pool only ever holds kept samples. Raises
    PipelineError with per-stage counts when nothing survives.
    """
    rng = random.Random(config.seed)
    feedback = FeedbackPool(discriminator.threshold, config.feedback_capacity)
    kept: list[LabeledSample] = []
    rejected: list[LabeledSample] = []
    counts: Counter = Counter()
    stats: Counter = Counter()
    seen_keys: set[tuple] = set()

    for round_index in range(1, config.rounds + 1):
        remaining = {
            pol: max(0, config.target_counts.get(pol, 0) - counts[pol])
            for pol in PolarityLabel
        }
        if sum(remaining.values()) == 0:
            break
        batch = _allocate_batch(remaining, config.batch_per_round)
        pairs = build_pairs(pool, replace(config, target_counts=batch), rng)
        samples = generate_round(
            pairs, feedback, config, gateway,
            rng=rng, round_index=round_index, round_log=round_log,
        )
        stats["generated"] += len(samples)

        survivors = []
        for sample in samples:
            contained = verify_containment(sample)
            if round_log is not None:
                round_log.append(
                    {
                        "round": round_index,
                        "stage": "containment",
                        "sample_id": sample.sentence.id,
                        "ok": contained,
                    }
                )
            if contained:
                survivors.append(sample)
            else:
                stats["containment_failed"] += 1
                rejected.append(sample)

        outcomes = discriminator.judge_samples(survivors)
        judged: list[tuple[LabeledSample, Judgment]] = []
        for outcome in outcomes:
            if round_log is not None:
                round_log.append(
                    {
                        "round": round_index,
                        "stage": "judge",
                        "sample_id": outcome.sample.sentence.id,
                        "domain_relevant": outcome.domain_relevant,
                        "sentiment_relevant": outcome.sentiment_relevant,
                        "judgment": outcome.judgment.to_dict()
                        if outcome.judgment
                        else None,
                        "reason": outcome.reason,
                    }
                )
            if outcome.judgment is None:
                stats[outcome.reason or "judge_failed"] += 1
                rejected.append(outcome.sample)
            else:
                judged.append((outcome.sample, outcome.judgment))

        kept_round, _ = discriminator.filter(judged)
        kept_ids = {id(sample) for sample, _ in kept_round}
        for sample, judgment in judged:
            passed = id(sample) in kept_ids
            duplicate = passed and dedup_key(sample) in seen_keys
            if round_log is not None:
                round_log.append(
                    {
                        "round": round_index,
                        "stage": "filter",
                        "sample_id": sample.sentence.id,
                        "overall": judgment.overall,
                        "kept": passed and not duplicate,
                        "duplicate": duplicate,
                    }
                )
            if not passed:
                stats["below_threshold"] += 1
                rejected.append(replace_provenance_score(sample, judgment))
                continue
            if duplicate:
                stats["duplicate"] += 1
                continue
            seen_keys.add(dedup_key(sample))
            scored = replace_provenance_score(sample, judgment)
            kept.append(scored)
            feedback.push(scored, judgment)
            for ann in sample.annotations:
                counts[ann.polarity] += 1

    if not kept:
        raise PipelineError(
            f"no samples kept after {config.rounds} rounds; "
            f"stage counts: {dict(sorted(stats.items()))}"
        )
    return deduplicate(kept), rejected


def replace_provenance_score(sample: LabeledSample, judgment: Judgment) -> LabeledSample:
    provenance = Provenance(
        kind=sample.provenance.kind,
        round=sample.provenance.round,
        score=judgment,
    )
    return LabeledSample(
        sentence=sample.sentence,
        annotations=sample.annotations,
        provenance=provenance,
    )
