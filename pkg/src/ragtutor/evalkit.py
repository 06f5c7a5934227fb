"""Dual-axis evaluation: retrieval quality (Hit Rate@k, MRR) over a QA
dataset, and judge-scored answer quality (faithfulness, relevancy,
irrelevance detection, response length) per model.

Retrieval metrics cover only grounded pairs; answer judging covers every
pair, noise included. A dataset is evaluated only against the exact chunk set
it was generated from (fingerprint guard).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

from .chat import ChatModel
from .embedder import EmbeddingProviderSpec, embed_batch
from .errors import DatasetFormatError, FingerprintMismatchError, JudgingError, ProviderError
from .qaforge import QADataset, QAPair
from .ragcore import TutorResponse
from .text import format_metric, word_count
from .vecindex import VectorIndex, search

logger = logging.getLogger(__name__)

DEFAULT_K = 5

AnswerFn = Callable[[str], TutorResponse]

_JUDGE_SYSTEM = (
    "You grade a tutoring answer against the context it was given. Reply with exactly "
    "three lines and nothing else:\n"
    "is_irrelevant: true|false\nrelevancy: 0|1\nfaithfulness: 0|1\n"
    "is_irrelevant is true when the question cannot be answered from the context "
    "passages. relevancy 1 means the answer addresses the question's intent. "
    "faithfulness 1 means every claim in the answer is grounded in the context. "
    "When the question cannot be answered from the context, a response that explicitly "
    "says so earns relevancy 1 and faithfulness 1; a substantive attempt earns 0 and 0."
)


# ---------------------------------------------------------------------------
# Retrieval metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalRecord:
    qa_id: str
    ranked_chunk_ids: tuple[str, ...]
    rank_of_expected: int | None  # None encodes a miss
    rr: float
    hit: int


@dataclass
class RetrievalReport:
    k: int
    corpus_fingerprint: str
    records: list[RetrievalRecord] = field(default_factory=list)

    @property
    def hit_rate(self) -> float:
        return sum(r.hit for r in self.records) / len(self.records)

    @property
    def mrr(self) -> float:
        return sum(r.rr for r in self.records) / len(self.records)


def reciprocal_rank(expected: str, ranked: list[str]) -> float:
    """1/position of the expected id (1-based), 0.0 when absent."""
    if len(set(ranked)) != len(ranked):
        raise ValueError("ranked ids must be unique")
    for position, chunk_id in enumerate(ranked, start=1):
        if chunk_id == expected:
            return 1.0 / position
    return 0.0


def hit_at_k(expected: str, ranked: list[str], k: int) -> int:
    """1 iff the expected id appears within the first k entries."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return 1 if expected in ranked[:k] else 0


class Retriever(Protocol):
    corpus_fingerprint: str

    def retrieve(self, query: str, k: int) -> list[str]: ...


class IndexRetriever:
    """Retriever backed by a vector index plus an embedding provider."""

    def __init__(self, index: VectorIndex, embed_spec: EmbeddingProviderSpec):
        self.index = index
        self.embed_spec = embed_spec
        self.corpus_fingerprint = index.fingerprint()

    def retrieve(self, query: str, k: int) -> list[str]:
        query_vec = embed_batch(self.embed_spec, [query])[0]
        return [hit.chunk_id for hit in search(self.index, query_vec, k=k)]


class ScriptedRetriever:
    """Replays a fixed query -> ranked-ids table (replay fixtures, tests)."""

    def __init__(self, ranked_by_query: Mapping[str, list[str]], corpus_fingerprint: str):
        self.ranked_by_query = dict(ranked_by_query)
        self.corpus_fingerprint = corpus_fingerprint

    def retrieve(self, query: str, k: int) -> list[str]:
        if query not in self.ranked_by_query:
            raise ValueError(f"scripted retriever has no entry for query {query[:80]!r}")
        return list(self.ranked_by_query[query])[:k]


def load_scripted_retriever(path: str | Path) -> ScriptedRetriever:
    """Read a scripted retriever fixture: fingerprint header + query records."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("retriever fixture is empty", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad header: {exc}", line=1) from exc
    if "corpus_fingerprint" not in header:
        raise DatasetFormatError("header is missing corpus_fingerprint", line=1)
    mapping: dict[str, list[str]] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            mapping[record["query"]] = list(record["ranked"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"bad retriever record: {exc}", line=line_no) from exc
    return ScriptedRetriever(mapping, header["corpus_fingerprint"])


def evaluate_retrieval(dataset: QADataset, retriever: Retriever, k: int = DEFAULT_K) -> RetrievalReport:
    """Score retrieval over every grounded pair; noise pairs are excluded.

    Manual pairs without an expected chunk id carry no ground truth and are
    skipped the same way noise pairs are.
    """
    if dataset.corpus_fingerprint != retriever.corpus_fingerprint:
        raise FingerprintMismatchError(
            f"dataset fingerprint {dataset.corpus_fingerprint} != retriever "
            f"fingerprint {retriever.corpus_fingerprint}"
        )
    scoreable = [p for p in dataset.grounded_pairs() if p.expected_chunk_id]
    if not scoreable:
        raise ValueError("dataset has no grounded pairs to evaluate")

    report = RetrievalReport(k=k, corpus_fingerprint=dataset.corpus_fingerprint)
    for pair in scoreable:
        ranked = list(retriever.retrieve(pair.query, k))[:k]
        rank = ranked.index(pair.expected_chunk_id) + 1 if pair.expected_chunk_id in ranked else None
        report.records.append(
            RetrievalRecord(
                qa_id=pair.qa_id,
                ranked_chunk_ids=tuple(ranked),
                rank_of_expected=rank,
                rr=reciprocal_rank(pair.expected_chunk_id, ranked),
                hit=hit_at_k(pair.expected_chunk_id, ranked, k),
            )
        )
    return report


# ---------------------------------------------------------------------------
# Answer judging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnswerJudgement:
    qa_id: str
    model_id: str
    is_irrelevant: bool
    relevancy: int
    faithfulness: int
    word_count: int


@dataclass
class AnswerReport:
    judgements: dict[str, list[AnswerJudgement]] = field(default_factory=dict)
    partial: dict[str, bool] = field(default_factory=dict)

    def models(self) -> list[str]:
        return sorted(self.judgements)

    def is_partial(self) -> bool:
        return any(self.partial.values())

    def means(self, model_id: str) -> tuple[float, float, float]:
        rows = self.judgements[model_id]
        if not rows:
            return 0.0, 0.0, 0.0
        n = len(rows)
        return (
            sum(r.relevancy for r in rows) / n,
            sum(r.faithfulness for r in rows) / n,
            sum(r.word_count for r in rows) / n,
        )


def parse_judgement_block(text: str) -> tuple[bool, int, int]:
    """Parse the judge's strict key:value block."""
    def find(key: str, pattern: str) -> str:
        import re

        match = re.search(rf"^\s*{key}\s*:\s*({pattern})\s*$", text, re.MULTILINE | re.IGNORECASE)
        if not match:
            raise ValueError(f"judge output is missing {key!r}")
        return match.group(1).lower()

    is_irrelevant = find("is_irrelevant", "true|false") == "true"
    relevancy = int(find("relevancy", "[01]"))
    faithfulness = int(find("faithfulness", "[01]"))
    return is_irrelevant, relevancy, faithfulness


def _judge_messages(pair: QAPair, response: TutorResponse) -> list[dict[str, str]]:
    context_lines = []
    for i, ctx in enumerate(response.contexts, start=1):
        context_lines.append(f"[{i}] chunk_id={ctx.hit.chunk_id}\n{ctx.text}")
    context = "\n---\n".join(context_lines) if context_lines else "[no supporting context]"
    user = f"Question: {pair.query}\nContext:\n{context}\nAnswer: {response.answer_text}"
    return [{"role": "system", "content": _JUDGE_SYSTEM}, {"role": "user", "content": user}]


def judge_answer(pair: QAPair, response: TutorResponse, judge: ChatModel) -> AnswerJudgement:
    """Judge one response; vacuous answers score 0/0 without a model call."""
    words = word_count(response.answer_text)
    if not response.answer_text.strip():
        return AnswerJudgement(
            qa_id=pair.qa_id,
            model_id=response.model_id,
            is_irrelevant=False,
            relevancy=0,
            faithfulness=0,
            word_count=0,
        )

    messages = _judge_messages(pair, response)
    last_error: Exception | None = None
    for attempt in range(2):
        raw = judge.complete(messages)
        try:
            is_irrelevant, relevancy, faithfulness = parse_judgement_block(raw)
        except ValueError as exc:
            last_error = exc
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": "That was not parseable. Reply with only the three lines."},
            ]
            continue
        return AnswerJudgement(
            qa_id=pair.qa_id,
            model_id=response.model_id,
            is_irrelevant=is_irrelevant,
            relevancy=relevancy,
            faithfulness=faithfulness,
            word_count=words,
        )
    raise JudgingError(f"unparseable judge output for {pair.qa_id} after reprompt: {last_error}")


def evaluate_answers(dataset: QADataset, engines: Mapping[str, AnswerFn], judge: ChatModel) -> AnswerReport:
    """Judge every pair for every model.

    A provider or judging hard failure aborts that model's column, which is
    then marked partial; other models still run.
    """
    if not engines:
        raise ValueError("at least one model engine is required")
    if not dataset.pairs:
        raise ValueError("dataset is empty")

    report = AnswerReport()
    for model_id in sorted(engines):
        answer = engines[model_id]
        rows: list[AnswerJudgement] = []
        partial = False
        for pair in dataset.pairs:
            try:
                response = answer(pair.query)
                rows.append(judge_answer(pair, response, judge))
            except (ProviderError, JudgingError) as exc:
                logger.warning("model %s failed on %s: %s; column marked partial", model_id, pair.qa_id, exc)
                partial = True
                break
        report.judgements[model_id] = rows
        report.partial[model_id] = partial
    return report


# ---------------------------------------------------------------------------
# Report export
# ---------------------------------------------------------------------------

def _retrieval_header(report: RetrievalReport) -> dict:
    return {
        "kind": "retrieval",
        "k": report.k,
        "corpus_fingerprint": report.corpus_fingerprint,
        "queries": len(report.records),
        "hit_rate": format_metric(report.hit_rate),
        "mrr": format_metric(report.mrr),
    }


def _answer_header(report: AnswerReport) -> dict:
    means = {}
    for model_id in report.models():
        relevancy, faithfulness, mean_words = report.means(model_id)
        means[model_id] = {
            "relevancy": format_metric(relevancy),
            "faithfulness": format_metric(faithfulness),
            "word_count": format_metric(mean_words),
        }
    return {
        "kind": "answers",
        "models": report.models(),
        "partial": {m: report.partial.get(m, False) for m in report.models()},
        "means": means,
    }


def export_report(report: RetrievalReport | AnswerReport, path: str | Path, format: str = "json_lines") -> Path:
    """Write a report with deterministic field order and 6-decimal floats."""
    path = Path(path)
    if format not in ("json_lines", "csv"):
        raise ValueError(f"unsupported format {format!r}")

    with open(path, "w", encoding="utf-8", newline="") as fh:
        if isinstance(report, RetrievalReport):
            if format == "json_lines":
                fh.write(json.dumps(_retrieval_header(report)) + "\n")
                for record in report.records:
                    fh.write(
                        json.dumps(
                            {
                                "qa_id": record.qa_id,
                                "ranked_chunk_ids": list(record.ranked_chunk_ids),
                                "rank_of_expected": record.rank_of_expected,
                                "rr": format_metric(record.rr),
                                "hit": record.hit,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
            else:
                writer = csv.writer(fh)
                writer.writerow(["qa_id", "rank_of_expected", "rr", "hit"])
                for record in report.records:
                    rank = "" if record.rank_of_expected is None else record.rank_of_expected
                    writer.writerow([record.qa_id, rank, format_metric(record.rr), record.hit])
        else:
            if format == "json_lines":
                fh.write(json.dumps(_answer_header(report)) + "\n")
                for model_id in report.models():
                    for row in report.judgements[model_id]:
                        fh.write(
                            json.dumps(
                                {
                                    "model_id": row.model_id,
                                    "qa_id": row.qa_id,
                                    "is_irrelevant": row.is_irrelevant,
                                    "relevancy": row.relevancy,
                                    "faithfulness": row.faithfulness,
                                    "word_count": row.word_count,
                                },
                                ensure_ascii=False,
                            )
                            + "\n"
                        )
            else:
                writer = csv.writer(fh)
                writer.writerow(["model", "relevancy", "faithfulness", "mean_word_count", "partial"])
                for model_id in report.models():
                    relevancy, faithfulness, mean_words = report.means(model_id)
                    writer.writerow(
                        [
                            model_id,
                            format_metric(relevancy),
                            format_metric(faithfulness),
                            format_metric(mean_words),
                            str(report.partial.get(model_id, False)).lower(),
                        ]
                    )
    return path


def read_report(path: str | Path) -> dict:
    """Parse a json_lines report back into {header..., "records": [...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise DatasetFormatError("report file is empty", line=1)
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad report line: {exc}") from exc
    header["records"] = records
    return header
