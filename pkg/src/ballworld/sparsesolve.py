"""Sparse direct solves, funneled through one counter.

Every sparse factorization in the package goes through :func:`factorize`
so dependent code (and tests) can audit how many factorizations a pipeline
performs.  The counter is process-global and monotone.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure

_COUNTS = {"factorizations": 0, "solves": 0}


def factorization_count() -> int:
    return _COUNTS["factorizations"]


def solve_count() -> int:
    return _COUNTS["solves"]


class Factorization:
    """LU factorization of a sparse matrix with counted backsolves."""

    def __init__(self, matrix: sp.spmatrix):
        _COUNTS["factorizations"] += 1
        try:
            self._lu = spla.splu(sp.csc_matrix(matrix))
        except RuntimeError as exc:  # singular matrix
            raise SolverFailure(f"sparse factorization failed: {exc}") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        _COUNTS["solves"] += 1
        out = self._lu.solve(np.ascontiguousarray(rhs))
        if not np.all(np.isfinite(out)):
            raise SolverFailure("sparse backsolve produced non-finite values")
        return out


def factorize(matrix: sp.spmatrix) -> Factorization:
    return Factorization(matrix)
