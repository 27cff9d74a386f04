"""Hot scoring kernels with a compiled core and a NumPy fallback.

The per-query cost is dominated by the two matrix sweeps (one inner
product per page per modality, accumulated in float64). The Cython
extension computes those sweeps directly over the float32 rows; if it is
not built, a chunked NumPy implementation is selected at import time.
``BACKEND`` records which one is active.
"""

from __future__ import annotations

# Open-interval bounds for the logistic squash: smallest normal double and
# the largest double below 1. Saturated scores clamp here instead of
# touching 0.0 / 1.0.
SIGMOID_FLOOR = 2.2250738585072014e-308
SIGMOID_CEIL = 0.9999999999999999

try:
    from . import _fastpath as _impl

    BACKEND = "compiled"
except ImportError:  # extension not built; pure NumPy path
    from . import fallback as _impl

    BACKEND = "numpy"

inner_products = _impl.inner_products
logistic = _impl.logistic


def backends() -> dict[str, object]:
    """All importable kernel modules, keyed by backend name."""
    from . import fallback

    found: dict[str, object] = {"numpy": fallback}
    try:
        from . import _fastpath

        found["compiled"] = _fastpath
    except ImportError:
        pass
    return found
