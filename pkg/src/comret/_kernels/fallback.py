"""Pure NumPy implementations of the scoring kernels.

Numerically equivalent to the compiled versions up to summation order:
float64 accumulation over float32 rows, logistic outputs clamped into the
open interval (0, 1).
"""

from __future__ import annotations

import numpy as np

_SIGMOID_FLOOR = 2.2250738585072014e-308
_SIGMOID_CEIL = 0.9999999999999999

# Rows per float64 upcast; bounds the temporary to ~128 MB at dim=1152.
_CHUNK = 16384


def inner_products(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Inner product of ``query`` with every row of ``matrix``.

    matrix is (count, dim) float32, query is (dim,) float64; the result is
    float64 with all accumulation done in float64.
    """
    out = np.empty(matrix.shape[0], dtype=np.float64)
    for lo in range(0, matrix.shape[0], _CHUNK):
        block = matrix[lo : lo + _CHUNK].astype(np.float64)
        out[lo : lo + _CHUNK] = block @ query
    return out


def logistic(values: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+exp(-x)), clamped to stay strictly inside (0, 1)."""
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-np.asarray(values, dtype=np.float64)))
    return np.clip(out, _SIGMOID_FLOOR, _SIGMOID_CEIL)
