"""Pin BLAS to one thread before numpy loads anywhere.

On the small shared-CPU machines these tests target, multi-threaded BLAS
oversubscribes the cores and slows the dense solves by several times, besides
making the wall-clock scaling checks noisy.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
