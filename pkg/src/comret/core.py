"""Core domain types shared by every other module.

Embeddings are stored as float32 (matching common encoder output) while
every reduction over them accumulates in float64. All types here are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ComretError, NonFiniteValue

EMBEDDING_DTYPE = np.float32

#: Recognized fusion modes, in the order they appear in comparison tables.
MODES = ("image-only", "text-only", "raw-linear", "ucmr", "ensemble-ucmr")

IMAGE_CHANNEL = "image-query"
TEXT_CHANNEL = "text-query"


def as_embedding(values: Sequence[float] | np.ndarray, where: str = "embedding") -> np.ndarray:
    """Convert ``values`` to a validated, read-only float32 vector.

    Raises NonFiniteValue if any entry is NaN or infinite, ComretError if
    the vector is empty or not one-dimensional.
    """
    arr = np.asarray(values, dtype=EMBEDDING_DTYPE)
    if arr.ndim != 1 or arr.size == 0:
        raise ComretError(f"{where}: expected a non-empty 1-d vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValue(where)
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PageEntry:
    """One document page: its identity plus image- and text-channel embeddings."""

    page_id: str
    doc_id: str
    image_emb: np.ndarray
    text_emb: np.ndarray


@dataclass(frozen=True)
class Corpus:
    """An ordered collection of pages sharing one embedding dimension.

    Page order is the ingestion order; it is observable and stable because
    ranking ties are broken by ascending ingestion index.
    """

    pages: tuple[PageEntry, ...]
    dim: int

    @classmethod
    def from_pages(cls, pages: Sequence[PageEntry]) -> "Corpus":
        if not pages:
            raise ComretError("a corpus needs at least one page")
        return cls(pages=tuple(pages), dim=int(pages[0].image_emb.shape[0]))

    @property
    def size(self) -> int:
        return len(self.pages)


@dataclass(frozen=True)
class QueryRecord:
    """A query with one embedding per channel and optional gold page ids.

    With a unified encoder both channels hold the same vector; the two
    channels only differ in the dual-encoder ensemble setup where the
    query is encoded twice.
    """

    query_id: str
    text: str
    channel_embs: Mapping[str, np.ndarray]
    gold_page_ids: frozenset[str] = field(default_factory=frozenset)

    def channel(self, name: str) -> np.ndarray | None:
        return self.channel_embs.get(name)

    def vector_for_sweep(self, modality: str) -> np.ndarray | None:
        """Query vector for scoring one modality's matrix.

        Prefers the modality's natural channel and falls back to the other
        one, which under the unified-encoder convention (both channels hold
        the same vector) always yields the single shared query embedding.
        """
        first, second = (IMAGE_CHANNEL, TEXT_CHANNEL) if modality == "image" else (TEXT_CHANNEL, IMAGE_CHANNEL)
        vec = self.channel_embs.get(first)
        return vec if vec is not None else self.channel_embs.get(second)


@dataclass(frozen=True)
class FusionConfig:
    """Fusion mode plus the blend weights and ranking depth.

    alpha weights the text modality in the raw linear blend; beta weights
    the text modality in the normalized blend. Defaults mirror the standard
    experimental setup (beta=0.1, top_k=3).
    """

    mode: str = "ucmr"
    alpha: float = 0.5
    beta: float = 0.1
    top_k: int = 3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ComretError(f"unknown fusion mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ComretError(f"alpha must be in [0,1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ComretError(f"beta must be in [0,1], got {self.beta}")
        if self.top_k < 1:
            raise ComretError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True)
class ScoreVector:
    """One modality's scores for a single query across all pages.

    Holds the raw inner products, their logistic squash, the z-scored
    values, and the population statistics that produced them. sigma is
    recorded as 0.0 when the scores were constant and the z-scored values
    fell back to zeros.
    """

    modality: str
    raw: np.ndarray
    sigmoid: np.ndarray
    zscored: np.ndarray
    mu: float
    sigma: float


@dataclass(frozen=True)
class RankedEntry:
    rank: int
    page_id: str
    fused_score: float
    image_score: float
    text_score: float


@dataclass(frozen=True)
class RankedResult:
    """Top-k pages for one query, with per-modality score breakdown.

    For the raw modes the breakdown columns carry raw inner products; for
    the normalized modes they carry z-scored values. A modality that a mode
    never scores is reported as 0.0.
    """

    query_id: str
    entries: tuple[RankedEntry, ...]

    def page_ids(self) -> tuple[str, ...]:
        return tuple(e.page_id for e in self.entries)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Check every corpus invariant; failures are reported, not raised."""
    problems: list[Violation] = []
    if corpus.size < 1:
        problems.append(Violation("empty-corpus", "corpus has no pages"))
    seen: set[str] = set()
    for idx, page in enumerate(corpus.pages):
        if page.page_id in seen:
            problems.append(Violation("duplicate-id", f"page_id {page.page_id!r} occurs more than once"))
        seen.add(page.page_id)
        for name, emb in (("image_emb", page.image_emb), ("text_emb", page.text_emb)):
            if emb.ndim != 1:
                problems.append(Violation("bad-shape", f"page {page.page_id!r} {name} is not 1-d"))
                continue
            if emb.shape[0] != corpus.dim:
                problems.append(
                    Violation(
                        "dim-mismatch",
                        f"page {page.page_id!r} {name} has dim {emb.shape[0]}, corpus dim is {corpus.dim}",
                    )
                )
            if not np.isfinite(emb).all():
                problems.append(Violation("non-finite", f"page {page.page_id!r} {name} contains NaN/Inf"))
        if page.image_emb.ndim == 1 and page.text_emb.ndim == 1 and page.image_emb.shape != page.text_emb.shape:
            problems.append(
                Violation(
                    "dim-mismatch",
                    f"page {page.page_id!r} image/text dims differ: "
                    f"{page.image_emb.shape[0]} vs {page.text_emb.shape[0]}",
                )
            )
    return ValidationReport(violations=tuple(problems))
