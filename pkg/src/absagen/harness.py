"""Desk-scale downstream evaluation: a bag-of-words proxy classifier plus
lexical diversity metrics.

The proxy is a multinomial logistic regression over sentence unigrams,
aspect-window unigrams, and the aspect term, trained by gradient descent.
It exists to compare training regimes (original vs generated vs mixed) on
fixtures, not to compete with real ABSA models.
"""

from __future__ import annotations

import logging
import string
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import LabeledSample, PolarityLabel, deduplicate, normalize_text
from .errors import ConfigurationError

log = logging.getLogger(__name__)

WINDOW = 5  # tokens on each side of the aspect
N_CLASSES = 3

FeatureVector = dict[str, float]


def _tokens(text: str) -> list[str]:
    out = []
    for token in text.lower().split():
        token = token.strip(string.punctuation)
        if token:
            out.append(token)
    return out


def _find_token_span(tokens: Sequence[str], term_tokens: Sequence[str]) -> tuple[int, int] | None:
    width = len(term_tokens)
    if width == 0:
        return None
    for start in range(len(tokens) - width + 1):
        if list(tokens[start : start + width]) == list(term_tokens):
            return (start, start + width)
    return None


def featurize(sample: LabeledSample, annotation_index: int) -> FeatureVector:
    """Sparse features for one (sentence, annotation) pair.

    Unigrams of the sentence (u:), unigrams within +/-5 tokens of the
    aspect (w:), the aspect term itself (a:), and a bias term. When the
    aspect cannot be located at token granularity the window covers the
    whole sentence.
    """
    if not 0 <= annotation_index < len(sample.annotations):
        raise IndexError(
            f"annotation index {annotation_index} out of range for sample "
            f"{sample.sentence.id!r}"
        )
    annotation = sample.annotations[annotation_index]
    tokens = _tokens(sample.sentence.text)
    features: Counter = Counter()
    for token in tokens:
        features[f"u:{token}"] += 1.0
    span = _find_token_span(tokens, _tokens(annotation.term))
    if span is None:
        window = tokens
    else:
        window = tokens[max(0, span[0] - WINDOW) : span[1] + WINDOW]
    for token in window:
        features[f"w:{token}"] += 1.0
    features[f"a:{normalize_text(annotation.term)}"] += 1.0
    features["bias"] = 1.0
    return dict(features)


def expand_annotations(
    samples: Sequence[LabeledSample],
) -> list[tuple[LabeledSample, int]]:
    return [(s, i) for s in samples for i in range(len(s.annotations))]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _cross_entropy(weights: np.ndarray, x: np.ndarray, y_onehot: np.ndarray) -> float:
    probs = _softmax(x @ weights.T)
    return float(-np.mean(np.log(np.sum(probs * y_onehot, axis=1) + 1e-12)))


def _gradient(weights: np.ndarray, x: np.ndarray, y_onehot: np.ndarray) -> np.ndarray:
    probs = _softmax(x @ weights.T)
    return (probs - y_onehot).T @ x / x.shape[0]


@dataclass
class TrainingMeta:
    epochs: int
    lr: float
    seed: int
    final_loss: float


@dataclass
class ProxyModel:
    weights: np.ndarray  # (3, n_features)
    feature_index: dict[str, int]
    meta: TrainingMeta

    def vectorize(self, features: FeatureVector) -> np.ndarray:
        vector = np.zeros(len(self.feature_index))
        for name, value in features.items():
            column = self.feature_index.get(name)
            if column is not None:
                vector[column] = value
        return vector

    def design_matrix(
        self, pairs: Sequence[tuple[LabeledSample, int]]
    ) -> np.ndarray:
        return np.stack([self.vectorize(featurize(s, i)) for s, i in pairs])

    def predict_proba(self, pairs: Sequence[tuple[LabeledSample, int]]) -> np.ndarray:
        return _softmax(self.design_matrix(pairs) @ self.weights.T)

    def predict(self, pairs: Sequence[tuple[LabeledSample, int]]) -> list[int]:
        return [int(code) for code in np.argmax(self.predict_proba(pairs), axis=1)]


def _onehot(labels: Sequence[int]) -> np.ndarray:
    out = np.zeros((len(labels), N_CLASSES))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train_proxy(
    train: Sequence[LabeledSample],
    epochs: int = 300,
    lr: float = 0.1,
    seed: int = 0,
    batch_size: int | None = None,
) -> ProxyModel:
    """Train multinomial logistic regression with (mini-)batch gradient descent.

    batch_size=None runs full-batch descent. Training is deterministic for a
    fixed seed; the seed only drives mini-batch shuffling.
    """
    if not train:
        raise ConfigurationError("training set is empty")
    pairs = expand_annotations(train)
    feature_maps = [featurize(s, i) for s, i in pairs]
    vocabulary = sorted({name for fm in feature_maps for name in fm})
    feature_index = {name: i for i, name in enumerate(vocabulary)}
    x = np.zeros((len(pairs), len(vocabulary)))
    for row, fm in enumerate(feature_maps):
        for name, value in fm.items():
            x[row, feature_index[name]] = value
    labels = [int(sample.annotations[i].polarity) for sample, i in pairs]
    y_onehot = _onehot(labels)

    weights = np.zeros((N_CLASSES, len(vocabulary)))
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    for _ in range(epochs):
        if batch_size is None or batch_size >= n:
            weights -= lr * _gradient(weights, x, y_onehot)
        else:
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                rows = order[start : start + batch_size]
                weights -= lr * _gradient(weights, x[rows], y_onehot[rows])
    final_loss = _cross_entropy(weights, x, y_onehot)
    return ProxyModel(
        weights=weights,
        feature_index=feature_index,
        meta=TrainingMeta(epochs=epochs, lr=lr, seed=seed, final_loss=final_loss),
    )


def gradient_check(
    model: ProxyModel,
    batch: Sequence[LabeledSample],
    num_coords: int = 20,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Sampled over num_coords random weight coordinates at the model's
    current weights. The denominator is floored at 1e-6 so coordinates whose
    true gradient sits at the float-cancellation noise floor count as
    agreeing instead of dividing noise by noise.
    """
    if not batch:
        raise ValueError("batch is empty")
    if num_coords < 1:
        raise ValueError("num_coords must be >= 1")
    pairs = expand_annotations(batch)
    x = model.design_matrix(pairs)
    labels = [int(sample.annotations[i].polarity) for sample, i in pairs]
    y_onehot = _onehot(labels)
    weights = model.weights
    analytic = _gradient(weights, x, y_onehot)
    rng = np.random.default_rng(seed)
    flat_indices = rng.choice(
        weights.size, size=min(num_coords, weights.size), replace=False
    )
    worst = 0.0
    for flat in flat_indices:
        row, col = divmod(int(flat), weights.shape[1])
        up = weights.copy()
        up[row, col] += step
        down = weights.copy()
        down[row, col] -= step
        numeric = (
            _cross_entropy(up, x, y_onehot) - _cross_entropy(down, x, y_onehot)
        ) / (2 * step)
        a = float(analytic[row, col])
        rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
        worst = max(worst, rel)
    return worst


@dataclass
class ClassifierReport:
    accuracy: float
    macro_f1: float
    per_class: dict[int, dict[str, float]]
    confusion: list[list[int]]  # rows true, columns predicted

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {
                PolarityLabel(code).to_name(): dict(metrics)
                for code, metrics in sorted(self.per_class.items())
            },
            "confusion": self.confusion,
        }


def evaluate_proxy(
    model: ProxyModel, test: Sequence[LabeledSample]
) -> ClassifierReport:
    """Accuracy, macro-F1 (zero-support classes contribute 0), and confusion."""
    if not test:
        raise ConfigurationError("test set is empty")
    pairs = expand_annotations(test)
    y_true = [int(sample.annotations[i].polarity) for sample, i in pairs]
    y_pred = model.predict(pairs)
    confusion = [[0] * N_CLASSES for _ in range(N_CLASSES)]
    for true, pred in zip(y_true, y_pred):
        confusion[true][pred] += 1
    per_class = {}
    f1_sum = 0.0
    for code in range(N_CLASSES):
        tp = confusion[code][code]
        support = sum(confusion[code])
        predicted = sum(confusion[row][code] for row in range(N_CLASSES))
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[code] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": float(support),
        }
        f1_sum += f1
    total = len(y_true)
    accuracy = sum(confusion[c][c] for c in range(N_CLASSES)) / total
    return ClassifierReport(
        accuracy=accuracy,
        macro_f1=f1_sum / N_CLASSES,
        per_class=per_class,
        confusion=confusion,
    )


REGIMES = ("original", "generated", "mixed")


def compare_regimes(
    original: Sequence[LabeledSample],
    generated: Sequence[LabeledSample],
    test: Sequence[LabeledSample],
    epochs: int = 300,
    lr: float = 0.1,
    seed: int = 0,
) -> dict[str, ClassifierReport]:
    """Train identical proxies on original / generated / mixed data.

    Mixed is the concatenation followed by deduplication, so feeding the
    original set as generated reproduces the original report exactly.
    """
    if not original:
        raise ConfigurationError("original training set is empty")
    if not generated:
        raise ConfigurationError("generated training set is empty")
    if not test:
        raise ConfigurationError("test set is empty")
    mixed = deduplicate(list(original) + list(generated))
    reports = {}
    for name, dataset in (
        ("original", list(original)),
        ("generated", list(generated)),
        ("mixed", mixed),
    ):
        model = train_proxy(dataset, epochs=epochs, lr=lr, seed=seed)
        reports[name] = evaluate_proxy(model, test)
    return reports


def diversity_metrics(
    samples: Sequence[LabeledSample], max_n: int = 2
) -> dict[str, float]:
    """distinct-n = unique n-grams / total n-grams over all sentence texts."""
    if not samples:
        raise ConfigurationError("no samples to measure")
    token_lists = [_tokens(sample.sentence.text) for sample in samples]
    metrics = {}
    for n in range(1, max_n + 1):
        total = 0
        unique = set()
        for tokens in token_lists:
            for i in range(len(tokens) - n + 1):
                unique.add(tuple(tokens[i : i + n]))
                total += 1
        metrics[f"distinct_{n}"] = len(unique) / total if total else 0.0
    return metrics
