"""BLAS thread limiting for the small-matrix hot loops.

The covariance matrices here are a few hundred rows at most; threaded
BLAS kernels lose an order of magnitude to synchronization overhead at
that size, and the scenario harness parallelizes across replicates
anyway.
"""

from contextlib import nullcontext

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def single_threaded_blas():
    if threadpool_limits is None:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=1, user_api="blas")
