"""Network representation, row normalization, and spectral stability checks.

Every model in the package operates on a row-normalized adjacency matrix
``A`` whose rows sum to one (or to zero for isolated nodes). Stability of
the autoregressive structure requires ``|rho| * lambda1(A) < 1``, where
``lambda1`` is the largest singular value of ``A``.
"""

import numpy as np

from .exceptions import (
    BadShapeError,
    NegativeEntryError,
    NoConvergenceError,
    NonzeroDiagonalError,
)

__all__ = [
    "Adjacency",
    "RowNormalizedNetwork",
    "row_normalize",
    "spectral_norm",
    "check_stability",
]

_POWER_ITER_CAP = 10_000
_POWER_ITER_TOL = 1e-12


class Adjacency:
    """A raw directed adjacency matrix with nonnegative weights.

    Parameters
    ----------
    entries : (n, n) array_like
        Nonnegative edge weights with an exactly-zero diagonal.
    node_labels : sequence of str, optional
        Identifiers for the n nodes.

    Raises
    ------
    BadShapeError
        If the matrix is not square with n >= 2 or contains non-finite
        values.
    NegativeEntryError
        If any entry is negative.
    NonzeroDiagonalError
        If any diagonal entry is nonzero.
    """

    def __init__(self, entries, node_labels=None):
        entries = np.asarray(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise BadShapeError(
                f"adjacency must be a square matrix, got shape {entries.shape}"
            )
        n = entries.shape[0]
        if n < 2:
            raise BadShapeError(f"adjacency needs at least 2 nodes, got {n}")
        if not np.all(np.isfinite(entries)):
            raise BadShapeError("adjacency entries must be finite")
        if np.any(entries < 0):
            i, j = np.argwhere(entries < 0)[0]
            raise NegativeEntryError(f"negative entry at ({i}, {j})")
        diag = np.diagonal(entries)
        if np.any(diag != 0):
            i = int(np.nonzero(diag)[0][0])
            raise NonzeroDiagonalError(f"nonzero diagonal entry at node {i}")
        if node_labels is not None:
            node_labels = tuple(str(x) for x in node_labels)
            if len(node_labels) != n:
                raise BadShapeError(
                    f"{len(node_labels)} labels for {n} nodes"
                )
        entries = entries.copy()
        entries.setflags(write=False)
        self.entries = entries
        self.n = n
        self.node_labels = node_labels

    def binary(self):
        """Return the 0/1 edge indicator matrix (any positive weight is an edge)."""
        return (self.entries > 0).astype(float)


class RowNormalizedNetwork:
    """Row-normalized adjacency plus the raw matrix it came from.

    Nonzero rows of ``A`` sum to exactly one; rows listed in ``isolated``
    are exactly zero. Instances are immutable; the spectral norm is
    computed once on first use and cached.
    """

    def __init__(self, A, raw, isolated):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        if A.ndim != 2 or A.shape[1] != n:
            raise BadShapeError(f"expected square matrix, got shape {A.shape}")
        if np.any(A < 0) or np.any(A > 1):
            raise BadShapeError("row-normalized entries must lie in [0, 1]")
        if np.any(np.diagonal(A) != 0):
            raise NonzeroDiagonalError("row-normalized matrix has nonzero diagonal")
        isolated = frozenset(int(i) for i in isolated)
        sums = A.sum(axis=1)
        for i in range(n):
            if i in isolated:
                if sums[i] != 0.0:
                    raise BadShapeError(f"isolated row {i} is not all zero")
            elif abs(sums[i] - 1.0) > 1e-9:
                raise BadShapeError(f"row {i} sums to {sums[i]!r}, expected 1")
        A = A.copy()
        A.setflags(write=False)
        self.A = A
        self.n = n
        self.raw = raw
        self.isolated = isolated
        self._lambda1 = None

    def spectral_norm(self):
        """Largest singular value of ``A`` (cached)."""
        if self._lambda1 is None:
            self._lambda1 = _power_iteration(self.A)
        return self._lambda1


def row_normalize(raw):
    """Scale every nonzero row of a raw adjacency to sum to one.

    Zero rows are preserved as zero and their indices recorded in the
    result's ``isolated`` set; no self-loop is imputed, so isolates
    receive no influence and ``I - rho*A`` stays invertible under the
    stability condition.

    Parameters
    ----------
    raw : Adjacency

    Returns
    -------
    RowNormalizedNetwork
    """
    entries = raw.entries
    A = np.array(entries, dtype=float)
    sums = A.sum(axis=1)
    isolated = set()
    for i in range(raw.n):
        if sums[i] == 0.0:
            isolated.add(i)
            continue
        A[i] = entries[i] / sums[i]
        _fix_row_sum(A[i])
    return RowNormalizedNetwork(A, raw, isolated)


def _fix_row_sum(row):
    # Nudge the largest entry so the row sums to exactly 1.0; division
    # alone can leave the sum one ulp off, which would break exact
    # idempotence of row_normalize.
    m = int(np.argmax(row))
    for _ in range(10):
        s = row.sum()
        if s == 1.0:
            return
        row[m] += 1.0 - s


def spectral_norm(net):
    """Largest singular value of the row-normalized matrix.

    Computed by power iteration on ``A'A`` with a cap of 10,000
    iterations and tolerance 1e-12 on the Rayleigh quotient.

    Parameters
    ----------
    net : RowNormalizedNetwork

    Returns
    -------
    float

    Raises
    ------
    NoConvergenceError
        If the iteration budget is exhausted before the Rayleigh
        quotient stabilizes.
    """
    return net.spectral_norm()


def _power_iteration(A, cap=_POWER_ITER_CAP, tol=_POWER_ITER_TOL):
    n = A.shape[0]
    # Fixed-seed start keeps results bitwise reproducible while avoiding
    # a start vector orthogonal to the top singular subspace.
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    quotient = 0.0
    for _ in range(cap):
        w = A.T @ (A @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        new_quotient = float(v @ w)
        v = w / norm_w
        if abs(new_quotient - quotient) <= tol * max(1.0, abs(new_quotient)):
            return float(np.sqrt(new_quotient))
        quotient = new_quotient
    raise NoConvergenceError(
        f"power iteration did not converge within {cap} iterations"
    )


def check_stability(rho, net):
    """True iff ``|rho| * lambda1(A) < 1``.

    Parameters
    ----------
    rho : float
        Influence coefficient.
    net : RowNormalizedNetwork

    Returns
    -------
    bool
    """
    return abs(rho) * net.spectral_norm() < 1.0
