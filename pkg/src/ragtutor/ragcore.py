"""The tutoring pipeline: learner-dialogue sentiment analysis, top-k context
retrieval, sentiment-conditioned prompt assembly, and grounded answering.

Sentiment only shapes prompt style; it never touches retrieval ranking, so
retrieval metrics stay independent of learner affect.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .chat import ChatModel, ChatModelSpec, build_chat_model
from .embedder import EmbeddingProviderSpec, embed_batch
from .errors import ProviderError, SentimentAnalysisError
from .text import word_count
from .vecindex import ScoredHit, VectorIndex, search

logger = logging.getLogger(__name__)

DEFAULT_K = 5

# Sentiment-to-style thresholds. Low confidence triggers remedial pacing, low
# engagement a motivating preamble, low tone an encouraging register.
CONFIDENCE_THRESHOLD = 0.4
ENGAGEMENT_THRESHOLD = 0.4
TONE_THRESHOLD = 0.3

REMEDIAL_DIRECTIVE = "explain step by step with definitions"
MOTIVATING_DIRECTIVE = "open with one short motivating sentence before the answer"
ENCOURAGING_DIRECTIVE = "use an encouraging, reassuring register"

NO_CONTEXT_CHUNK_ID = "no-context"
NO_CONTEXT_TEXT = "[no supporting context]"

_SYSTEM_TEXT = (
    "You are a tutor. Answer strictly from the numbered context passages below the "
    "question. If the context is insufficient to answer, say that the question cannot "
    "be answered from the provided material instead of guessing."
)

_ANALYZER_SYSTEM = (
    "You rate the emotional state of a learner from a dialogue transcript. Reply with "
    "exactly four lines in a fenced block:\n"
    "```\ntone: <0..1>\nconfidence: <0..1>\nengagement: <0..1>\nlabel: <one short word>\n```\n"
    "tone 0 is negative and 1 is positive. Do not add any other text."
)

_SENTIMENT_FIELD = re.compile(r"^\s*(tone|confidence|engagement|label)\s*:\s*(.+?)\s*$", re.MULTILINE | re.IGNORECASE)


@dataclass(frozen=True)
class SentimentVector:
    tone: float
    confidence: float
    engagement: float
    label: str

    def __post_init__(self):
        for name in ("tone", "confidence", "engagement"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not self.label:
            raise ValueError("label must be non-empty")


@dataclass(frozen=True)
class RetrievedContext:
    hit: ScoredHit
    text: str


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    context_blocks: tuple[tuple[str, str], ...]
    user_query: str
    style_directives: tuple[str, ...]


@dataclass(frozen=True)
class TutorResponse:
    answer_text: str
    sources: tuple[ScoredHit, ...]
    model_id: str
    word_count: int
    sentiment_used: SentimentVector | None = None
    contexts: tuple[RetrievedContext, ...] = ()


def _clamp_unit(name: str, value: float) -> float:
    if value < 0.0 or value > 1.0:
        logger.warning("sentiment %s=%s out of range, clamping", name, value)
        return min(max(value, 0.0), 1.0)
    return value


def parse_sentiment_block(text: str) -> SentimentVector:
    """Parse the analyzer's key:value block, clamping scalars into [0, 1]."""
    fields: dict[str, str] = {}
    for match in _SENTIMENT_FIELD.finditer(text):
        fields[match.group(1).lower()] = match.group(2)
    missing = {"tone", "confidence", "engagement", "label"} - fields.keys()
    if missing:
        raise ValueError(f"sentiment block is missing {sorted(missing)}")
    try:
        scalars = {name: float(fields[name]) for name in ("tone", "confidence", "engagement")}
    except ValueError as exc:
        raise ValueError(f"non-numeric sentiment scalar: {exc}") from exc
    return SentimentVector(
        tone=_clamp_unit("tone", scalars["tone"]),
        confidence=_clamp_unit("confidence", scalars["confidence"]),
        engagement=_clamp_unit("engagement", scalars["engagement"]),
        label=fields["label"].strip("` "),
    )


def _transcript(turns: list[tuple[str, str]]) -> str:
    return "\n".join(f"{role}: {text}" for role, text in turns)


def analyze_sentiment(turns: list[tuple[str, str]], analyzer: ChatModel) -> SentimentVector:
    """Zero-shot sentiment over dialogue turns; one reprompt on bad output."""
    if not any(role == "learner" for role, _ in turns):
        raise ValueError("at least one learner utterance is required")

    messages = [
        {"role": "system", "content": _ANALYZER_SYSTEM},
        {"role": "user", "content": f"Transcript:\n{_transcript(turns)}"},
    ]
    last_error: Exception | None = None
    for attempt in range(2):
        try:
            raw = analyzer.complete(messages)
        except ProviderError as exc:
            raise SentimentAnalysisError(f"analyzer call failed: {exc}") from exc
        try:
            return parse_sentiment_block(raw)
        except ValueError as exc:
            last_error = exc
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": "That was not parseable. Reply with only the four-line block."},
            ]
    raise SentimentAnalysisError(f"unparseable analyzer output after reprompt: {last_error}")


def style_directives_for(sentiment: SentimentVector | None) -> tuple[str, ...]:
    if sentiment is None:
        return ()
    directives = []
    if sentiment.confidence < CONFIDENCE_THRESHOLD:
        directives.append(REMEDIAL_DIRECTIVE)
    if sentiment.engagement < ENGAGEMENT_THRESHOLD:
        directives.append(MOTIVATING_DIRECTIVE)
    if sentiment.tone < TONE_THRESHOLD:
        directives.append(ENCOURAGING_DIRECTIVE)
    return tuple(directives)


def compose_prompt(
    query: str,
    contexts: list[RetrievedContext],
    sentiment: SentimentVector | None = None,
) -> PromptBundle:
    """Assemble the grounded prompt; empty retrieval gets an explicit marker."""
    if not query.strip():
        raise ValueError("query must be non-empty")

    ordered = sorted(contexts, key=lambda c: c.hit.rank)
    if ordered:
        blocks = tuple((c.hit.chunk_id, c.text) for c in ordered)
    else:
        blocks = ((NO_CONTEXT_CHUNK_ID, NO_CONTEXT_TEXT),)
    return PromptBundle(
        system_text=_SYSTEM_TEXT,
        context_blocks=blocks,
        user_query=query,
        style_directives=style_directives_for(sentiment),
    )


def render_messages(bundle: PromptBundle) -> list[dict[str, str]]:
    """Turn a bundle into chat messages; the query sits after a fixed marker
    so scripted models can recover it."""
    system = bundle.system_text
    if bundle.style_directives:
        system += "\nStyle: " + "; ".join(bundle.style_directives) + "."
    context_lines = []
    for i, (chunk_id, text) in enumerate(bundle.context_blocks, start=1):
        context_lines.append(f"[{i}] chunk_id={chunk_id}\n{text}")
    user = "Context:\n" + "\n---\n".join(context_lines) + f"\n\nQuestion: {bundle.user_query}"
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


class TutorEngine:
    """Bundle of index + providers, shareable across queries."""

    def __init__(self, index: VectorIndex, embed_spec: EmbeddingProviderSpec, chat_spec: ChatModelSpec):
        self.index = index
        self.embed_spec = embed_spec
        self.chat_spec = chat_spec
        self.chat_model = build_chat_model(chat_spec)

    @property
    def model_id(self) -> str:
        return self.chat_spec.model_name

    def answer(self, query: str, sentiment: SentimentVector | None = None, k: int = DEFAULT_K) -> TutorResponse:
        return answer_query(self, query, sentiment=sentiment, k=k)


def answer_query(
    engine: TutorEngine,
    query: str,
    sentiment: SentimentVector | None = None,
    k: int = DEFAULT_K,
) -> TutorResponse:
    """Embed the query, retrieve top-k, compose the prompt, and ask the model."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    query_vec = embed_batch(engine.embed_spec, [query])[0]
    hits = search(engine.index, query_vec, k=k)
    contexts = [RetrievedContext(hit=hit, text=engine.index.get_chunk(hit.chunk_id).text) for hit in hits]
    bundle = compose_prompt(query, contexts, sentiment)
    answer_text = engine.chat_model.complete(render_messages(bundle))
    return TutorResponse(
        answer_text=answer_text,
        sources=tuple(hits),
        model_id=engine.model_id,
        word_count=word_count(answer_text),
        sentiment_used=sentiment,
        contexts=tuple(contexts),
    )
