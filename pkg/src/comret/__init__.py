"""comret: co-modality retrieval with normalized late score fusion.

Pages carry one image embedding and one parsed-text embedding; queries
are scored against both by inner product, the two score channels are
normalized per query (logistic squash then population z-score) and
blended, and the ranking is evaluated with standard retrieval metrics.
A toy trainer for the pairwise sigmoid alignment objective is included.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .core import (
    MODES,
    Corpus,
    FusionConfig,
    PageEntry,
    QueryRecord,
    RankedEntry,
    RankedResult,
    ScoreVector,
    ValidationReport,
    as_embedding,
    validate_corpus,
)
from .errors import ComretError
from .fusion import (
    fuse_linear,
    fuse_ucmr,
    inner_product_scores,
    rank_top_k,
    retrieve,
    run_queries,
    sigmoid_normalize,
    zscore_normalize,
)
from .metrics import evaluate_run, hit_at_k, mrr_at_k, ndcg_at_k, recall_at_k
from .store import IndexDirectory, PackedMatrix, build_index, load_index, save_index

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "MODES",
    "ComretError",
    "Corpus",
    "FusionConfig",
    "IndexDirectory",
    "PackedMatrix",
    "PageEntry",
    "QueryRecord",
    "RankedEntry",
    "RankedResult",
    "ScoreVector",
    "ValidationReport",
    "as_embedding",
    "build_index",
    "evaluate_run",
    "fuse_linear",
    "fuse_ucmr",
    "hit_at_k",
    "inner_product_scores",
    "load_index",
    "mrr_at_k",
    "ndcg_at_k",
    "rank_top_k",
    "recall_at_k",
    "retrieve",
    "run_queries",
    "save_index",
    "sigmoid_normalize",
    "validate_corpus",
    "zscore_normalize",
    "__version__",
]
