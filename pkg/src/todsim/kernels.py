"""Backend dispatch for the policy hot loop.

Prefers the compiled extension; falls back to the numpy implementation when
the extension is missing or TODSIM_PURE_PYTHON is set. Both backends expose
the same three functions with identical semantics.
"""

from __future__ import annotations

import os

if os.environ.get("TODSIM_PURE_PYTHON"):
    from . import _policy_kernels_py as _impl
else:
    try:
        from . import _policy_kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _policy_kernels_py as _impl

BACKEND: str = _impl.BACKEND
softmax_probs = _impl.softmax_probs
sample_index = _impl.sample_index
accumulate_grad = _impl.accumulate_grad
