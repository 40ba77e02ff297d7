from __future__ import annotations

import random
import re

import pytest

from absagen.aspects import AspectPool
from absagen.corpus import PolarityLabel
from absagen.errors import ConfigurationError, PipelineError
from absagen.gateway import Gateway
from absagen.generation import (
    AspectSentimentPair,
    FeedbackPool,
    GenerationConfig,
    build_pairs,
    generate_round,
    run_iterative_generation,
    verify_containment,
)
from absagen.judge import Discriminator, Judgment

from .conftest import make_sample

POS, NEU, NEG = PolarityLabel.POSITIVE, PolarityLabel.NEUTRAL, PolarityLabel.NEGATIVE


def pool_of(positive=(), neutral=(), negative=()):
    return AspectPool(
        all=frozenset(positive) | frozenset(neutral) | frozenset(negative),
        positive=frozenset(positive),
        neutral=frozenset(neutral),
        negative=frozenset(negative),
    )


def config_of(**overrides):
    values = dict(
        domain="laptop",
        target_counts={POS: 2, NEU: 0, NEG: 1},
        rounds=3,
        feedback_k=2,
        strategy_mix=0.0,
        seed=5,
    )
    values.update(overrides)
    return GenerationConfig(**values)


class TestBuildPairs:
    def test_singleton_subsets_forced_multiset(self):
        pool = pool_of(positive={"a"}, negative={"b"})
        pairs = build_pairs(pool, config_of(target_counts={POS: 2, NEU: 0, NEG: 1}))
        assert pairs == [
            AspectSentimentPair("a", POS),
            AspectSentimentPair("a", POS),
            AspectSentimentPair("b", NEG),
        ]

    def test_all_zero_targets(self):
        pool = pool_of(positive={"a"})
        assert build_pairs(pool, config_of(target_counts={POS: 0, NEU: 0, NEG: 0})) == []

    def test_polarity_purity(self):
        # an inherently negative aspect is never paired with positive
        pool = pool_of(positive={"value"}, neutral={"battery"}, negative={"loud noises"})
        config = config_of(target_counts={POS: 30, NEU: 30, NEG: 30})
        for pair in build_pairs(pool, config):
            if pair.aspect == "loud noises":
                assert pair.polarity is NEG
            if pair.polarity is POS:
                assert pair.aspect == "value"

    def test_empty_subset_with_target_is_error(self):
        pool = pool_of(positive={"a"})
        with pytest.raises(ConfigurationError, match="negative"):
            build_pairs(pool, config_of(target_counts={POS: 1, NEU: 0, NEG: 1}))

    def test_deterministic_under_seed(self):
        pool = pool_of(positive={"a", "b", "c"}, negative={"x", "y"})
        config = config_of(target_counts={POS: 5, NEU: 0, NEG: 5}, seed=11)
        assert build_pairs(pool, config) == build_pairs(pool, config)


class TestFeedbackPool:
    def _judgment(self, overall_parts=(8, 8, 8)):
        return Judgment.from_scores(True, True, *overall_parts)

    def test_push_below_threshold_rejected(self):
        pool = FeedbackPool(threshold=6)
        sample = make_sample("the battery is fine", [("battery", NEU)])
        with pytest.raises(ValueError):
            pool.push(sample, self._judgment((5, 5, 5)))

    def test_fifo_eviction(self):
        pool = FeedbackPool(threshold=6, capacity=2)
        samples = [
            make_sample(f"sentence {i} battery", [("battery", POS)], str(i))
            for i in range(3)
        ]
        for sample in samples:
            pool.push(sample, self._judgment())
        assert len(pool) == 2
        kept_ids = {s.sentence.id for s, _ in pool.sample(2, random.Random(0))}
        assert kept_ids == {"1", "2"}

    def test_sample_bounded(self):
        pool = FeedbackPool(threshold=6)
        pool.push(make_sample("battery works", [("battery", POS)]), self._judgment())
        assert len(pool.sample(5, random.Random(0))) == 1
        assert pool.sample(0, random.Random(0)) == []


class TestGenerateRound:
    def test_single_pair_direct_construction(self, fake_gateway):
        gateway, _ = fake_gateway(lambda r: "The battery is wonderful today.")
        samples = generate_round(
            [AspectSentimentPair("battery", POS)],
            FeedbackPool(6),
            config_of(),
            gateway,
            rng=random.Random(0),
        )
        assert len(samples) == 1
        sample = samples[0]
        assert sample.sentence.text == "The battery is wonderful today."
        assert [(a.term, a.polarity) for a in sample.annotations] == [("battery", POS)]
        assert sample.provenance.kind == "generated"
        assert sample.provenance.round == 1

    def test_multi_aspect_two_annotations(self, fake_gateway):
        gateway, _ = fake_gateway(
            lambda r: "The food was great although the service was slow."
        )
        pairs = [AspectSentimentPair("food", POS), AspectSentimentPair("service", NEG)]
        samples = generate_round(
            pairs,
            FeedbackPool(6),
            config_of(strategy_mix=1.0, domain="restaurant"),
            gateway,
            rng=random.Random(0),
        )
        assert len(samples) == 1
        assert len(samples[0].annotations) == 2
        assert verify_containment(samples[0])

    def test_feedback_k_demos_embedded(self, fake_gateway):
        seen = []

        def respond(request):
            seen.append(request.prompt)
            return "The battery is good enough."

        gateway, _ = fake_gateway(respond)
        feedback = FeedbackPool(6)
        for i in range(5):
            feedback.push(
                make_sample(f"demo sentence {i} battery", [("battery", POS)], f"d{i}"),
                Judgment.from_scores(True, True, 8, 8, 8),
            )
        generate_round(
            [AspectSentimentPair("battery", POS)],
            feedback,
            config_of(feedback_k=2),
            gateway,
            rng=random.Random(1),
        )
        demos_embedded = len(re.findall(r"demo sentence \d", seen[0]))
        assert demos_embedded == 2

    def test_parse_failure_skips_pair(self, fake_gateway):
        gateway, provider = fake_gateway(lambda r: "   ")
        samples = generate_round(
            [AspectSentimentPair("battery", POS)],
            FeedbackPool(6),
            config_of(),
            gateway,
            rng=random.Random(0),
        )
        assert samples == []
        assert len(provider.requests) == 2  # one automatic re-prompt

    def test_multi_group_never_repeats_term(self, fake_gateway):
        gateway, _ = fake_gateway(lambda r: "The battery is fine and fun.")
        pairs = [
            AspectSentimentPair("battery", POS),
            AspectSentimentPair("battery", POS),
            AspectSentimentPair("screen", NEG),
        ]
        samples = generate_round(
            pairs,
            FeedbackPool(6),
            config_of(strategy_mix=1.0),
            gateway,
            rng=random.Random(2),
        )
        for sample in samples:
            terms = [a.term for a in sample.annotations]
            assert len(terms) == len(set(terms))


class TestVerifyContainment:
    @pytest.mark.parametrize(
        "text,term,expected",
        [
            ("The battery is great", "battery", True),
            ("Great device", "battery", False),
            ("BATTERY dies fast", "battery", True),
        ],
    )
    def test_cases(self, text, term, expected):
        assert verify_containment(make_sample(text, [(term, POS)])) is expected


class _ScriptedJudgeGateway:
    """Canned responses for the generation + judging call mix."""

    def __init__(self, generate_text, relevance="yes, yes", scores="(8, 8, 8)"):
        self.generate_text = generate_text
        self.relevance = relevance
        self.scores = scores

    def complete(self, request):
        prompt = request.prompt
        if "Write exactly one realistic" in prompt:
            return self.generate_text(prompt)
        if "Answer two questions" in prompt:
            return self.relevance
        if "Rate the candidate" in prompt:
            return self.scores
        raise AssertionError(f"unexpected prompt: {prompt[:40]}")


def scripted_pipeline(generate_text, threshold=6, **config_overrides):
    gateway = Gateway(_ScriptedJudgeGateway(generate_text), concurrency=1)
    discriminator = Discriminator(gateway, "laptop", threshold=threshold)
    pool = pool_of(positive={"value"}, neutral={"battery"}, negative={"lag"})
    config = config_of(
        target_counts={POS: 1, NEU: 1, NEG: 1}, rounds=4, **config_overrides
    )
    return pool, config, discriminator, gateway


class TestRunIterativeGeneration:
    def test_single_round_when_targets_met(self):
        calls = {"rounds": set()}

        def generate_text(prompt):
            pairs = re.findall(r"\(([^,()]+), (positive|neutral|negative)\)", prompt)
            aspect = pairs[-1][0]
            return f"A fresh take: the {aspect} stands out."

        pool, config, discriminator, gateway = scripted_pipeline(generate_text)
        round_log: list[dict] = []
        kept, rejected = run_iterative_generation(
            pool, config, discriminator, gateway, round_log=round_log
        )
        rounds_used = {r["round"] for r in round_log}
        assert rounds_used == {1}
        assert len(kept) >= 3

    def test_all_containment_failures_is_pipeline_error(self):
        pool, config, discriminator, gateway = scripted_pipeline(
            lambda prompt: "Nothing relevant whatsoever."
        )
        with pytest.raises(PipelineError, match="containment_failed"):
            run_iterative_generation(pool, config, discriminator, gateway)

    def test_determinism_same_seed(self):
        def generate_text(prompt):
            pairs = re.findall(r"\(([^,()]+), (positive|neutral|negative)\)", prompt)
            joined = " and ".join(p[0] for p in pairs)
            return f"Honestly the {joined} could be better or worse."

        results = []
        for _ in range(2):
            pool, config, discriminator, gateway = scripted_pipeline(generate_text)
            log: list[dict] = []
            kept, rejected = run_iterative_generation(
                pool, config, discriminator, gateway, round_log=log
            )
            results.append((kept, rejected, log))
        assert results[0] == results[1]

    def test_kept_pass_gate_and_feedback_invariant(self):
        def generate_text(prompt):
            pairs = re.findall(r"\(([^,()]+), (positive|neutral|negative)\)", prompt)
            joined = " plus ".join(p[0] for p in pairs)
            return f"Verdict on the {joined}: decent overall."

        pool, config, discriminator, gateway = scripted_pipeline(generate_text)
        kept, _ = run_iterative_generation(pool, config, discriminator, gateway)
        for sample in kept:
            assert verify_containment(sample)
            assert sample.provenance.score is not None
            assert sample.provenance.score.overall >= discriminator.threshold

    def test_polarity_purity_of_kept_annotations(self):
        def generate_text(prompt):
            pairs = re.findall(r"\(([^,()]+), (positive|neutral|negative)\)", prompt)
            joined = ", ".join(p[0] for p in pairs)
            return f"Quick note about the {joined} here."

        pool, config, discriminator, gateway = scripted_pipeline(generate_text)
        kept, _ = run_iterative_generation(pool, config, discriminator, gateway)
        subsets = {POS: pool.positive, NEU: pool.neutral, NEG: pool.negative}
        for sample in kept:
            for ann in sample.annotations:
                assert ann.term in subsets[ann.polarity]

    def test_rejected_by_relevance(self):
        def generate_text(prompt):
            pairs = re.findall(r"\(([^,()]+), (positive|neutral|negative)\)", prompt)
            return f"Something about the {pairs[-1][0]} maybe."

        gateway = Gateway(
            _ScriptedJudgeGateway(generate_text, relevance="no, yes"), concurrency=1
        )
        discriminator = Discriminator(gateway, "laptop", threshold=6)
        pool = pool_of(neutral={"battery"})
        config = config_of(target_counts={POS: 0, NEU: 1, NEG: 0}, rounds=2)
        with pytest.raises(PipelineError, match="relevance_failed"):
            run_iterative_generation(pool, config, discriminator, gateway)

    def test_below_threshold_rejected_with_scores(self):
        def generate_text(prompt):
            pairs = re.findall(r"\(([^,()]+), (positive|neutral|negative)\)", prompt)
            return f"Just the {pairs[-1][0]}, nothing more."

        gateway = Gateway(
            _ScriptedJudgeGateway(generate_text, scores="(5, 5, 5)"), concurrency=1
        )
        discriminator = Discriminator(gateway, "laptop", threshold=6)
        pool = pool_of(neutral={"battery"})
        config = config_of(target_counts={POS: 0, NEU: 1, NEG: 0}, rounds=2)
        with pytest.raises(PipelineError, match="below_threshold"):
            run_iterative_generation(pool, config, discriminator, gateway)


class TestGenerationConfigValidation:
    def test_published_scale_targets_accepted(self):
        config = GenerationConfig(
            domain="laptop",
            target_counts={POS: 1051, NEU: 358, NEG: 919},
        )
        assert config.target_counts[POS] == 1051

    @pytest.mark.parametrize(
        "overrides",
        [
            {"rounds": 0},
            {"strategy_mix": 1.5},
            {"aspects_per_multi": 1},
            {"feedback_k": -1},
            {"target_counts": {POS: -1}},
            {"length_hint": (0, 5)},
            {"length_hint": (10, 5)},
            {"batch_per_round": 0},
        ],
    )
    def test_invalid_configs(self, overrides):
        values = dict(domain="d", target_counts={POS: 1, NEU: 1, NEG: 1})
        values.update(overrides)
        with pytest.raises(ConfigurationError):
            GenerationConfig(**values)
