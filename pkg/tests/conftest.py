from __future__ import annotations

from typing import Callable

import pytest

from absagen.corpus import (
    AspectAnnotation,
    LabeledSample,
    PolarityLabel,
    Provenance,
    Sentence,
)
from absagen.gateway import CompletionRequest, Gateway


class FakeProvider:
    """Unit-test provider backed by a callable; records every request."""

    def __init__(self, respond: Callable[[CompletionRequest], str]):
        self.respond = respond
        self.requests: list[CompletionRequest] = []

    def complete(self, request: CompletionRequest) -> str:
        self.requests.append(request)
        return self.respond(request)


@pytest.fixture
def fake_gateway():
    def build(respond: Callable[[CompletionRequest], str], concurrency: int = 1):
        provider = FakeProvider(respond)
        return Gateway(provider, concurrency=concurrency), provider

    return build


def make_sample(
    text: str,
    annotations: list[tuple[str, PolarityLabel]],
    sample_id: str = "s1",
    domain: str = "laptop",
    provenance: Provenance | None = None,
) -> LabeledSample:
    return LabeledSample(
        sentence=Sentence(id=sample_id, text=text, domain=domain),
        annotations=[AspectAnnotation(term=t, polarity=p) for t, p in annotations],
        provenance=provenance or Provenance("gold"),
    )
