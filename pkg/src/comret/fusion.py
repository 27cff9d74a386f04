"""Online retrieval: per-modality scoring, normalization, fusion, ranking.

Raw relevance is the inner product between the query vector and each
page's modality embedding. The normalized fusion path squashes raw scores
through a logistic into (0, 1), z-scores them per query per modality with
population statistics over the M pages, and blends the two modalities
with weight ``beta`` on text. The raw path blends unnormalized inner
products with weight ``alpha`` on text.

A constant-score modality (sigma == 0) z-scores to all zeros, so it
contributes nothing to the blend and leaves the other modality's ranking
intact. All statistics are computed per query on the fly; the extra cost
over single-modality retrieval is one more O(M*d) sweep.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, NamedTuple, Sequence, TextIO

import numpy as np

from . import _kernels
from .core import FusionConfig, QueryRecord, RankedEntry, RankedResult, ScoreVector
from .errors import DimMismatch, LengthMismatch, MalformedRunLine, MissingChannel
from .store import IndexDirectory, PackedMatrix

#: sigma at or below this is treated as a constant-score modality.
SIGMA_EPS = 1e-12

RUN_COLUMNS = ("query_id", "page_id", "rank", "fused_score", "image_score", "text_score", "mode")


def inner_product_scores(query: np.ndarray, matrix: PackedMatrix) -> np.ndarray:
    """Raw scores: one float64-accumulated inner product per page."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (matrix.dim,):
        raise DimMismatch(matrix.dim, q.shape[0] if q.ndim == 1 else -1, where="query")
    return _kernels.inner_products(matrix.data, q)


def sigmoid_normalize(raw: np.ndarray) -> np.ndarray:
    """Squash raw scores into (0, 1) with the logistic function."""
    return _kernels.logistic(np.asarray(raw, dtype=np.float64))


class ZScored(NamedTuple):
    values: np.ndarray
    mu: float
    sigma: float


def zscore_normalize(values: np.ndarray) -> ZScored:
    """Center and scale by the population mean and standard deviation.

    Divides by M (not M-1). If sigma is 0 within SIGMA_EPS the input
    carried no ranking information; the output is all zeros and sigma is
    recorded as 0.
    """
    x = np.asarray(values, dtype=np.float64)
    mu = float(x.mean())
    sigma = math.sqrt(float(np.mean((x - mu) ** 2)))
    if sigma <= SIGMA_EPS:
        return ZScored(np.zeros_like(x), mu, 0.0)
    return ZScored((x - mu) / sigma, mu, sigma)


def modality_scores(query: np.ndarray, matrix: PackedMatrix, modality: str) -> ScoreVector:
    """Full raw -> sigmoid -> z-score pipeline for one modality."""
    raw = inner_product_scores(query, matrix)
    squashed = sigmoid_normalize(raw)
    zscored, mu, sigma = zscore_normalize(squashed)
    return ScoreVector(modality=modality, raw=raw, sigmoid=squashed, zscored=zscored, mu=mu, sigma=sigma)


def fuse_linear(z_text: np.ndarray, z_image: np.ndarray, alpha: float) -> np.ndarray:
    """Weighted blend of raw scores: alpha*text + (1-alpha)*image."""
    if len(z_text) != len(z_image):
        raise LengthMismatch(len(z_text), len(z_image))
    return alpha * np.asarray(z_text, dtype=np.float64) + (1.0 - alpha) * np.asarray(z_image, dtype=np.float64)


def fuse_ucmr(zt_tilde: np.ndarray, zi_tilde: np.ndarray, beta: float) -> np.ndarray:
    """Weighted blend of z-scored scores: beta*text + (1-beta)*image."""
    if len(zt_tilde) != len(zi_tilde):
        raise LengthMismatch(len(zt_tilde), len(zi_tilde))
    return beta * np.asarray(zt_tilde, dtype=np.float64) + (1.0 - beta) * np.asarray(zi_tilde, dtype=np.float64)


def _ranked_indices(scores: np.ndarray) -> np.ndarray:
    # Stable sort on the negated scores: descending by score, ties by
    # ascending ingestion index.
    return np.argsort(-scores, kind="stable")


def rank_top_k(scores: np.ndarray, ids: Sequence[str], k: int) -> list[tuple[int, str, float]]:
    """Top-k (rank, id, score) triples, ranks 1-based, deterministic ties."""
    order = _ranked_indices(np.asarray(scores, dtype=np.float64))[: min(k, len(ids))]
    return [(rank, ids[i], float(scores[i])) for rank, i in enumerate(order, start=1)]


def _sweep_vector(query: QueryRecord, modality: str, mode: str) -> np.ndarray:
    vec = query.vector_for_sweep(modality)
    if vec is None:
        raise MissingChannel(mode, f"{modality}-query")
    return vec


def _channel_vector(query: QueryRecord, channel: str, mode: str) -> np.ndarray:
    vec = query.channel(channel)
    if vec is None:
        raise MissingChannel(mode, channel)
    return vec


def retrieve(query: QueryRecord, index: IndexDirectory, cfg: FusionConfig) -> RankedResult:
    """Score, fuse and rank one query against the index.

    Mode dispatch:
      image-only / text-only  rank one modality's raw scores
      raw-linear              alpha-blend of both raw score sweeps
      ucmr                    sigmoid + z-score each modality, beta-blend
      ensemble-ucmr           like ucmr, but the text sweep uses the
                              "text-query" channel and the image sweep the
                              "image-query" channel (query encoded twice)

    The per-entry breakdown carries raw scores for the raw modes and
    z-scored values for the normalized modes; a modality the mode never
    scores is reported as 0.0.
    """
    mode = cfg.mode
    zeros = None

    if mode == "image-only":
        raw_i = inner_product_scores(_sweep_vector(query, "image", mode), index.images)
        fused, image_col, text_col = raw_i, raw_i, None
    elif mode == "text-only":
        raw_t = inner_product_scores(_sweep_vector(query, "text", mode), index.texts)
        fused, image_col, text_col = raw_t, None, raw_t
    elif mode == "raw-linear":
        raw_i = inner_product_scores(_sweep_vector(query, "image", mode), index.images)
        raw_t = inner_product_scores(_sweep_vector(query, "text", mode), index.texts)
        fused, image_col, text_col = fuse_linear(raw_t, raw_i, cfg.alpha), raw_i, raw_t
    elif mode == "ucmr":
        sv_i = modality_scores(_sweep_vector(query, "image", mode), index.images, "image")
        sv_t = modality_scores(_sweep_vector(query, "text", mode), index.texts, "text")
        fused = fuse_ucmr(sv_t.zscored, sv_i.zscored, cfg.beta)
        image_col, text_col = sv_i.zscored, sv_t.zscored
    else:  # ensemble-ucmr
        sv_i = modality_scores(_channel_vector(query, "image-query", mode), index.images, "image")
        sv_t = modality_scores(_channel_vector(query, "text-query", mode), index.texts, "text")
        fused = fuse_ucmr(sv_t.zscored, sv_i.zscored, cfg.beta)
        image_col, text_col = sv_i.zscored, sv_t.zscored

    if image_col is None or text_col is None:
        zeros = np.zeros_like(fused)
        image_col = zeros if image_col is None else image_col
        text_col = zeros if text_col is None else text_col

    order = _ranked_indices(fused)[: min(cfg.top_k, index.page_count)]
    entries = tuple(
        RankedEntry(
            rank=rank,
            page_id=index.ids[i],
            fused_score=float(fused[i]),
            image_score=float(image_col[i]),
            text_score=float(text_col[i]),
        )
        for rank, i in enumerate(order, start=1)
    )
    return RankedResult(query_id=query.query_id, entries=entries)


def run_queries(
    index: IndexDirectory,
    queries: Sequence[QueryRecord],
    cfg: FusionConfig,
    threads: int = 1,
) -> list[RankedResult]:
    """Retrieve every query, in parallel if asked, output sorted by query_id."""
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda q: retrieve(q, index, cfg), queries))
    else:
        results = [retrieve(q, index, cfg) for q in queries]
    results.sort(key=lambda r: r.query_id)
    return results


def write_run(results: Iterable[RankedResult], mode: str, fh: TextIO) -> None:
    """Write run lines as TSV, scores printed with 9 significant digits."""
    for result in results:
        for e in result.entries:
            fh.write(
                f"{result.query_id}\t{e.page_id}\t{e.rank}\t"
                f"{e.fused_score:.9g}\t{e.image_score:.9g}\t{e.text_score:.9g}\t{mode}\n"
            )


def read_run(lines: Iterable[str]) -> dict[str, list[str]]:
    """Parse a run file into query_id -> page_ids ordered by rank."""
    per_query: dict[str, list[tuple[int, str]]] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != len(RUN_COLUMNS):
            raise MalformedRunLine(line_no, f"expected {len(RUN_COLUMNS)} columns, got {len(parts)}")
        query_id, page_id, rank_s = parts[0], parts[1], parts[2]
        try:
            rank = int(rank_s)
            for score in parts[3:6]:
                float(score)
        except ValueError:
            raise MalformedRunLine(line_no, "non-numeric rank or score")
        if rank < 1:
            raise MalformedRunLine(line_no, f"rank must be >= 1, got {rank}")
        per_query.setdefault(query_id, []).append((rank, page_id))
    return {qid: [pid for _, pid in sorted(entries)] for qid, entries in per_query.items()}
