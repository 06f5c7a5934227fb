"""Document loading and fixed-size token chunking.

Documents are plain text files; PDFs are consumed through a ``<name>.pdf.txt``
sidecar produced by any external extractor, which keeps the pipeline free of
binary parsing. Chunking is fixed-length and non-overlapping: every chunk
except possibly the last per document holds exactly ``chunk_size`` tokens, and
chunk character spans tile the document text exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import UnsupportedOptionError
from .text import tokenize_spans

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 512

# Files with this suffix are sidecar extractions for an adjacent PDF and are
# never loaded as standalone documents.
_PDF_SIDECAR_SUFFIX = ".pdf.txt"


class MediaKind(str, Enum):
    PLAIN_TEXT = "plain_text"
    MARKDOWN = "markdown"
    PDF_EXTRACTED = "pdf_extracted"


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    title: str
    text: str
    source_path: str
    media_kind: MediaKind


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    token_count: int
    char_span: tuple[int, int]


@dataclass(frozen=True)
class LoadWarning:
    source_path: str
    reason: str


@dataclass
class CorpusLoad:
    """Result of loading a corpus: admitted documents plus skip records."""

    documents: list[SourceDocument]
    warnings: list[LoadWarning]


def doc_id_for_path(rel_path: str) -> str:
    """Stable document id derived from the corpus-relative path only."""
    return hashlib.sha256(rel_path.encode("utf-8")).hexdigest()[:12]


def load_corpus(root: str | Path, include: Sequence[str]) -> CorpusLoad:
    """Load every readable file under ``root`` matching the ``include`` globs.

    PDFs are admitted only when a ``<name>.pdf.txt`` sidecar exists; files that
    are empty (or whitespace-only) after extraction are skipped with a warning
    record. Documents come back sorted by source path.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root is not a readable directory: {root}")
    if not include:
        raise ValueError("include filters must be non-empty")

    matched: set[Path] = set()
    for pattern in include:
        matched.update(p for p in root.rglob(pattern) if p.is_file())

    documents: list[SourceDocument] = []
    warnings: list[LoadWarning] = []
    for path in sorted(matched, key=lambda p: p.relative_to(root).as_posix()):
        rel = path.relative_to(root).as_posix()
        if path.name.endswith(_PDF_SIDECAR_SUFFIX):
            continue  # sidecars belong to their PDF

        if path.suffix.lower() == ".pdf":
            sidecar = path.with_name(path.name + ".txt")
            if not sidecar.is_file():
                warnings.append(LoadWarning(rel, "pdf has no extracted-text sidecar"))
                logger.warning("skipping %s: no %s sidecar", rel, _PDF_SIDECAR_SUFFIX)
                continue
            read_from = sidecar
            media = MediaKind.PDF_EXTRACTED
        else:
            read_from = path
            media = MediaKind.MARKDOWN if path.suffix.lower() in (".md", ".markdown") else MediaKind.PLAIN_TEXT

        try:
            text = read_from.read_text(encoding="utf-8", errors="replace")
        except OSError as exc:
            warnings.append(LoadWarning(rel, f"unreadable: {exc}"))
            logger.warning("skipping %s: %s", rel, exc)
            continue

        if not text.strip():
            warnings.append(LoadWarning(rel, "empty after extraction"))
            logger.warning("skipping %s: empty after extraction", rel)
            continue

        documents.append(
            SourceDocument(
                doc_id=doc_id_for_path(rel),
                title=path.stem,
                text=text,
                source_path=rel,
                media_kind=media,
            )
        )
    return CorpusLoad(documents=documents, warnings=warnings)


def chunk_document(doc: SourceDocument, chunk_size: int = DEFAULT_CHUNK_SIZE, overlap: int = 0) -> list[Chunk]:
    """Split a document into consecutive chunks of ``chunk_size`` tokens.

    Chunk boundaries never split a token, spans tile ``doc.text`` exactly, and
    ordinals are dense from 0. Overlapping chunks are not supported.
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    if overlap != 0:
        raise UnsupportedOptionError("chunk overlap is fixed at 0 in this version")

    spans = tokenize_spans(doc.text)
    if not spans:
        raise ValueError(f"document {doc.doc_id!r} has no tokens and cannot be chunked")

    groups = [spans[i : i + chunk_size] for i in range(0, len(spans), chunk_size)]
    chunks: list[Chunk] = []
    for ordinal, group in enumerate(groups):
        start = 0 if ordinal == 0 else group[0][0]
        end = len(doc.text) if ordinal == len(groups) - 1 else groups[ordinal + 1][0][0]
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}#{ordinal}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                text=doc.text[start:end],
                token_count=len(group),
                char_span=(start, end),
            )
        )
    return chunks


def chunk_corpus(documents: Iterable[SourceDocument], chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[Chunk]:
    """Chunk every document, skipping token-less ones with a logged warning."""
    chunks: list[Chunk] = []
    for doc in documents:
        if not doc.text.strip():
            logger.warning("skipping %s: no tokens", doc.doc_id)
            continue
        chunks.extend(chunk_document(doc, chunk_size=chunk_size))
    return chunks


def corpus_fingerprint(chunks: Iterable[Chunk]) -> str:
    """Checksum binding a dataset or index to an exact chunk set."""
    digest = hashlib.sha256()
    for chunk in sorted(chunks, key=lambda c: c.chunk_id):
        digest.update(chunk.chunk_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(hashlib.sha256(chunk.text.encode("utf-8")).digest())
    return digest.hexdigest()[:16]


def write_manifest(documents: Sequence[SourceDocument], path: str | Path) -> None:
    """Write the optional corpus manifest (one record per document)."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            record = {"source_path": doc.source_path, "doc_id": doc.doc_id, "title": doc.title}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def dump_chunks(chunks: Sequence[Chunk], path: str | Path) -> None:
    """Export chunks as line-delimited records."""
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            record = {
                "chunk_id": chunk.chunk_id,
                "doc_id": chunk.doc_id,
                "ordinal": chunk.ordinal,
                "token_count": chunk.token_count,
                "text": chunk.text,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
