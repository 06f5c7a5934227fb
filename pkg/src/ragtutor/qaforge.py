"""Hybrid evaluation dataset construction: synthetic questions generated per
chunk by a chat model, plus curated manual and noise queries.

Synthetic pairs carry the chunk that generated them as retrieval ground
truth; noise pairs deliberately carry none.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .chat import ChatModel
from .corpus import Chunk
from .errors import DatasetFormatError, GenerationError, ProviderError

DEFAULT_PER_CHUNK = 2

_QA_ID_WIDTH = 4

_GENERATION_SYSTEM = (
    "You create evaluation questions for a tutoring system. Produce exactly the "
    "requested number of standalone questions answerable solely from the passage. "
    "Reply with a numbered list, one question per item, and nothing else."
)

# Numbered items may share a line ("1. Qa 2. Qb") or sit one per line.
_NUMBERED_ITEM = re.compile(r"(?:(?<=^)|(?<=\s))\d+[.)]\s+")


class Origin(str, Enum):
    SYNTHETIC = "synthetic"
    MANUAL = "manual"
    NOISE = "noise"


@dataclass(frozen=True)
class QAPair:
    qa_id: str
    query: str
    origin: Origin
    reference_answer: str | None = None
    expected_chunk_id: str | None = None

    def __post_init__(self):
        if self.origin is Origin.SYNTHETIC and not self.expected_chunk_id:
            raise ValueError(f"synthetic pair {self.qa_id} must carry its generating chunk id")
        if self.origin is Origin.NOISE and self.expected_chunk_id:
            raise ValueError(f"noise pair {self.qa_id} must not carry an expected chunk id")


@dataclass
class QADataset:
    corpus_fingerprint: str
    pairs: list[QAPair] = field(default_factory=list)

    def grounded_pairs(self) -> list[QAPair]:
        return [p for p in self.pairs if p.origin is not Origin.NOISE]

    def counts_by_origin(self) -> dict[str, int]:
        counts = {origin.value: 0 for origin in Origin}
        for pair in self.pairs:
            counts[pair.origin.value] += 1
        return counts

    def _next_qa_id(self, origin: Origin) -> str:
        seq = sum(1 for p in self.pairs if p.origin is origin) + 1
        return f"{origin.value}-{seq:0{_QA_ID_WIDTH}d}"


def _generation_messages(chunk: Chunk, per_chunk: int, strict: bool) -> list[dict[str, str]]:
    demand = f"Write {per_chunk} questions."
    if strict:
        demand += " Output only the numbered list, e.g. '1. ...'."
    user = f"Passage:\n<<<\n{chunk.text}\n>>>\n{demand}"
    return [{"role": "system", "content": _GENERATION_SYSTEM}, {"role": "user", "content": user}]


def parse_numbered_list(text: str) -> list[str]:
    parts = _NUMBERED_ITEM.split(text)
    return [part.strip() for part in parts[1:] if part.strip()]


def synthesize_qa(
    chunk: Chunk,
    per_chunk: int = DEFAULT_PER_CHUNK,
    generator: ChatModel | None = None,
    seq_start: int = 1,
) -> list[QAPair]:
    """Generate ``per_chunk`` synthetic pairs bound to ``chunk``.

    The generator gets one reprompt if its output yields too few parseable
    questions; a second failure is a generation error naming the chunk.
    """
    if per_chunk < 1:
        raise ValueError(f"per_chunk must be >= 1, got {per_chunk}")
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id} has no text")
    if generator is None:
        raise ValueError("a generator chat model is required")

    questions: list[str] = []
    for attempt, strict in enumerate((False, True)):
        try:
            raw = generator.complete(_generation_messages(chunk, per_chunk, strict))
        except ProviderError as exc:
            raise GenerationError(f"generator failed for chunk {chunk.chunk_id}: {exc}") from exc
        questions = parse_numbered_list(raw)
        if len(questions) >= per_chunk:
            break
    if len(questions) < per_chunk:
        raise GenerationError(
            f"generator produced {len(questions)} parseable questions for chunk "
            f"{chunk.chunk_id}, needed {per_chunk}"
        )

    return [
        QAPair(
            qa_id=f"{Origin.SYNTHETIC.value}-{seq_start + i:0{_QA_ID_WIDTH}d}",
            query=question,
            origin=Origin.SYNTHETIC,
            expected_chunk_id=chunk.chunk_id,
        )
        for i, question in enumerate(questions[:per_chunk])
    ]


def generate_synthetic_dataset(
    chunks: list[Chunk],
    fingerprint: str,
    per_chunk: int = DEFAULT_PER_CHUNK,
    generator: ChatModel | None = None,
) -> QADataset:
    """Run synthesize_qa over every chunk in (doc_id, ordinal) order."""
    dataset = QADataset(corpus_fingerprint=fingerprint)
    seq = 1
    for chunk in sorted(chunks, key=lambda c: (c.doc_id, c.ordinal)):
        pairs = synthesize_qa(chunk, per_chunk=per_chunk, generator=generator, seq_start=seq)
        dataset.pairs.extend(pairs)
        seq += len(pairs)
    return dataset


def add_manual_query(
    dataset: QADataset,
    query: str,
    expected_chunk_id: str | None = None,
    origin: Origin = Origin.MANUAL,
    reference_answer: str | None = None,
) -> QAPair:
    """Append a curated query; noise queries must carry no grounding."""
    if not query.strip():
        raise ValueError("query must be non-empty")
    if origin not in (Origin.MANUAL, Origin.NOISE):
        raise ValueError(f"manual insertion origin must be manual or noise, got {origin}")
    if origin is Origin.NOISE and expected_chunk_id is not None:
        raise ValueError("noise queries have no ground-truth chunk")

    pair = QAPair(
        qa_id=dataset._next_qa_id(origin),
        query=query,
        origin=origin,
        expected_chunk_id=expected_chunk_id,
        reference_answer=reference_answer,
    )
    dataset.pairs.append(pair)
    return pair


def save_dataset(dataset: QADataset, path: str | Path) -> None:
    """Write the dataset as line-delimited records under a fingerprint header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"corpus_fingerprint": dataset.corpus_fingerprint}) + "\n")
        for pair in dataset.pairs:
            record = {"qa_id": pair.qa_id, "query": pair.query, "origin": pair.origin.value}
            if pair.reference_answer is not None:
                record["reference_answer"] = pair.reference_answer
            if pair.expected_chunk_id is not None:
                record["expected_chunk_id"] = pair.expected_chunk_id
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_dataset(path: str | Path) -> QADataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("dataset file is empty", line=1)

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad header: {exc}", line=1) from exc
    if not isinstance(header, dict) or "corpus_fingerprint" not in header:
        raise DatasetFormatError("header is missing corpus_fingerprint", line=1)

    dataset = QADataset(corpus_fingerprint=header["corpus_fingerprint"])
    seen_ids: set[str] = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            pair = QAPair(
                qa_id=record["qa_id"],
                query=record["query"],
                origin=Origin(record["origin"]),
                reference_answer=record.get("reference_answer"),
                expected_chunk_id=record.get("expected_chunk_id"),
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise DatasetFormatError(f"bad QA record: {exc}", line=line_no) from exc
        if pair.qa_id in seen_ids:
            raise DatasetFormatError(f"duplicate qa_id {pair.qa_id}", line=line_no)
        seen_ids.add(pair.qa_id)
        dataset.pairs.append(pair)
    return dataset


def with_fingerprint(dataset: QADataset, fingerprint: str) -> QADataset:
    """Copy of the dataset rebound to another chunk-set fingerprint (tests)."""
    return QADataset(corpus_fingerprint=fingerprint, pairs=[replace(p) for p in dataset.pairs])
