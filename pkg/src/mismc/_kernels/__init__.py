"""Hot numerical kernels with compiled/pure backends.

The compiled Cython core is preferred; the numpy fallback is selected when
the extension is missing or MISMC_PURE_PYTHON=1 is set.  `BACKEND` records
which one is active.  See benchmarks/bench_kernels.py for a comparison.
"""
from __future__ import annotations

import os

BACKEND = "numpy"
if os.environ.get("MISMC_PURE_PYTHON") != "1":
    try:
        from mismc._kernels._core import csr_cg, thomas_solve  # noqa: F401

        BACKEND = "compiled"
    except ImportError:
        pass
if BACKEND == "numpy":
    from mismc._kernels._fallback import csr_cg, thomas_solve  # noqa: F401

__all__ = ["thomas_solve", "csr_cg", "BACKEND"]
