"""Synthetic training-data generation for aspect-based sentiment analysis.

Pipeline: extract domain aspects from an unlabeled corpus with an LLM,
partition them by sentiment, iteratively generate pseudo-labeled samples
with feedback demonstrations, filter them with an LLM judge, and compare
training regimes with a lightweight proxy classifier.
"""

__version__ = "0.1.0"

from .aspects import (
    AspectEvalReport,
    AspectPool,
    DemoMode,
    DemoRecord,
    DemoStrategy,
    evaluate_aspects,
    extend_aspects,
    extract_aspects,
    filter_non_nouns,
    partition_by_sentiment,
)
from .corpus import (
    AspectAnnotation,
    DatasetStats,
    LabeledSample,
    PolarityLabel,
    Provenance,
    Sentence,
    dataset_stats,
    deduplicate,
    emit_dataset,
    load_gold_dataset,
    load_unlabeled_corpus,
)
from .errors import ConfigurationError, PipelineError
from .gateway import (
    CompletionRequest,
    Fixture,
    Gateway,
    PromptTemplate,
    parse_list,
    request_digest,
)
from .generation import (
    AspectSentimentPair,
    FeedbackPool,
    GenerationConfig,
    build_pairs,
    generate_round,
    run_iterative_generation,
    verify_containment,
)
from .harness import (
    ClassifierReport,
    ProxyModel,
    compare_regimes,
    diversity_metrics,
    evaluate_proxy,
    featurize,
    gradient_check,
    train_proxy,
)
from .judge import Discriminator, Judgment, filter_by_threshold

__all__ = [
    "AspectAnnotation",
    "AspectEvalReport",
    "AspectPool",
    "AspectSentimentPair",
    "ClassifierReport",
    "CompletionRequest",
    "ConfigurationError",
    "DatasetStats",
    "DemoMode",
    "DemoRecord",
    "DemoStrategy",
    "Discriminator",
    "FeedbackPool",
    "Fixture",
    "Gateway",
    "GenerationConfig",
    "Judgment",
    "LabeledSample",
    "PipelineError",
    "PolarityLabel",
    "PromptTemplate",
    "Provenance",
    "ProxyModel",
    "Sentence",
    "build_pairs",
    "compare_regimes",
    "dataset_stats",
    "deduplicate",
    "diversity_metrics",
    "emit_dataset",
    "evaluate_aspects",
    "evaluate_proxy",
    "extend_aspects",
    "extract_aspects",
    "featurize",
    "filter_by_threshold",
    "filter_non_nouns",
    "generate_round",
    "gradient_check",
    "load_gold_dataset",
    "load_unlabeled_corpus",
    "parse_list",
    "partition_by_sentiment",
    "request_digest",
    "run_iterative_generation",
    "train_proxy",
    "verify_containment",
]
