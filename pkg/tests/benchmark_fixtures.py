"""Synthetic benchmark files shaped like the SemEval ABSA distributions.

The real benchmark XMLs are not redistributable, so these generators build
schema-identical files whose post-preprocessing per-polarity counts equal
the published statistics exactly. Conflict-labeled terms, same-aspect
polarity clashes, and aspect-free sentences are sprinkled in (and excluded
from the count budget) so the loader's removal rules are genuinely
exercised.
"""

from __future__ import annotations

import random
import xml.etree.ElementTree as ET
from pathlib import Path

# (positive, neutral, negative) annotation counts per benchmark split.
TABLE_COUNTS: dict[tuple[str, str], tuple[int, int, int]] = {
    ("laptop14", "train"): (994, 464, 870),
    ("laptop14", "test"): (341, 169, 128),
    ("restaurant14", "train"): (2164, 637, 807),
    ("restaurant14", "test"): (728, 196, 196),
    ("restaurant15", "train"): (912, 36, 256),
    ("restaurant15", "test"): (326, 34, 182),
    ("restaurant16", "train"): (1240, 69, 439),
    ("restaurant16", "test"): (469, 30, 117),
}

DOMAIN_OF = {
    "laptop14": "laptop",
    "restaurant14": "restaurant",
    "restaurant15": "restaurant",
    "restaurant16": "restaurant",
}

ASPECTS = {
    "laptop": [
        "battery", "screen", "keyboard", "trackpad", "speakers", "price",
        "design", "performance", "memory", "storage", "charger", "fan",
        "display", "webcam", "warranty", "software", "ports", "hinge",
    ],
    "restaurant": [
        "food", "service", "pizza", "pasta", "menu", "staff", "waiter",
        "atmosphere", "decor", "portions", "wine", "dessert", "sushi",
        "seating", "bread", "coffee", "prices", "bartender",
    ],
}

ADJECTIVES = {
    0: ["great", "excellent", "superb", "wonderful", "impressive", "delightful"],
    1: ["average", "ordinary", "standard", "typical", "unremarkable", "plain"],
    2: ["terrible", "awful", "dreadful", "disappointing", "mediocre", "poor"],
}

POLARITY_NAMES = {0: "positive", 1: "neutral", 2: "negative"}

NOISE_EVERY = 150  # real sentences between injected noise sentences


class _SentenceBuilder:
    """Assemble sentence text while tracking exact annotation offsets."""

    def __init__(self) -> None:
        self.parts: list[str] = []
        self.length = 0
        self.annotations: list[tuple[str, str, int, int]] = []

    def add_text(self, text: str) -> None:
        self.parts.append(text)
        self.length += len(text)

    def add_aspect(self, term: str, polarity_name: str) -> None:
        start = self.length
        self.add_text(term)
        self.annotations.append((term, polarity_name, start, self.length))

    @property
    def text(self) -> str:
        return "".join(self.parts)


def _sentence_element(builder: _SentenceBuilder, sid: str) -> ET.Element:
    element = ET.Element("sentence", {"id": sid})
    text_el = ET.SubElement(element, "text")
    text_el.text = builder.text
    terms_el = ET.SubElement(element, "aspectTerms")
    for term, polarity, start, end in builder.annotations:
        ET.SubElement(
            terms_el,
            "aspectTerm",
            {"term": term, "polarity": polarity, "from": str(start), "to": str(end)},
        )
    return element


def _real_sentence(
    rng: random.Random,
    aspects: list[str],
    polarities: list[int],
) -> _SentenceBuilder:
    chosen = rng.sample(aspects, len(polarities))
    builder = _SentenceBuilder()
    for index, (aspect, polarity) in enumerate(zip(chosen, polarities)):
        builder.add_text("the " if index == 0 else " and the ")
        builder.add_aspect(aspect, POLARITY_NAMES[polarity])
        builder.add_text(f" is {rng.choice(ADJECTIVES[polarity])}")
    builder.add_text(".")
    return builder


def _noise_sentence(rng: random.Random, aspects: list[str], kind: int) -> _SentenceBuilder:
    builder = _SentenceBuilder()
    if kind == 0:  # all annotations conflict-labeled: dropped, sample skipped
        builder.add_text("the ")
        builder.add_aspect(rng.choice(aspects), "conflict")
        builder.add_text(" is divisive.")
    elif kind == 1:  # same aspect, two polarities: dropped whole
        aspect = rng.choice(aspects)
        builder.add_text("the ")
        builder.add_aspect(aspect, "positive")
        builder.add_text(" is great but the ")
        builder.add_aspect(aspect, "negative")
        builder.add_text(" is awful.")
    else:  # no aspect terms at all
        builder.add_text("nothing else worth reporting here.")
    return builder


def write_benchmark_file(path: Path, dataset: str, split: str) -> None:
    counts = TABLE_COUNTS[(dataset, split)]
    domain = DOMAIN_OF[dataset]
    aspects = ASPECTS[domain]
    rng = random.Random(f"{dataset}-{split}")
    remaining = list(counts)
    root = ET.Element("sentences")
    serial = 0
    real_count = 0
    while sum(remaining) > 0:
        serial += 1
        if real_count and real_count % NOISE_EVERY == 0:
            root.append(
                _sentence_element(
                    _noise_sentence(rng, aspects, rng.randrange(3)),
                    f"{dataset}-{split}-{serial}",
                )
            )
            serial += 1
        available = [p for p in range(3) if remaining[p] > 0]
        # every seventh sentence carries two annotations when budget allows
        if real_count % 7 == 3 and sum(remaining) >= 2:
            first = rng.choice(available)
            remaining[first] -= 1
            second_options = [p for p in range(3) if remaining[p] > 0]
            second = rng.choice(second_options)
            remaining[second] -= 1
            polarities = [first, second]
        else:
            polarity = rng.choice(available)
            remaining[polarity] -= 1
            polarities = [polarity]
        root.append(
            _sentence_element(
                _real_sentence(rng, aspects, polarities),
                f"{dataset}-{split}-{serial}",
            )
        )
        real_count += 1
    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    path.parent.mkdir(parents=True, exist_ok=True)
    tree.write(path, encoding="utf-8", xml_declaration=True)


def write_all_benchmarks(directory: Path) -> dict[tuple[str, str], Path]:
    paths = {}
    for (dataset, split) in TABLE_COUNTS:
        path = directory / f"{dataset}_{split}.xml"
        write_benchmark_file(path, dataset, split)
        paths[(dataset, split)] = path
    return paths
