"""Selects the compiled kernels when available, else the pure-Python ones.

Set ``ADVFUZZ_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("ADVFUZZ_PURE_PYTHON") == "1":
    from advfuzz import _kernels_py as _impl
else:
    try:
        from advfuzz import _kernels as _impl
    except ImportError:  # extension not built
        from advfuzz import _kernels_py as _impl

Tracer = _impl.Tracer
new_bits_sparse = _impl.new_bits_sparse
claim_sparse = _impl.claim_sparse
class_mask_table = _impl.class_mask_table
IMPLEMENTATION = _impl.IMPLEMENTATION

__all__ = [
    "Tracer",
    "new_bits_sparse",
    "claim_sparse",
    "class_mask_table",
    "IMPLEMENTATION",
]
