"""PURLS_THREADS: cap BLAS/OpenMP parallelism before numpy is imported.

Must run before the first `import numpy` in the process; the package
__init__ calls it first thing for exactly that reason.
"""

import os

_BLAS_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def apply_thread_cap() -> None:
    cap = os.environ.get("PURLS_THREADS")
    if not cap:
        return
    for var in _BLAS_VARS:
        os.environ.setdefault(var, cap)
