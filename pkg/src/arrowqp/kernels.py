"""Dense block kernels: potrf, trsm, gemm, syrk.

Two interchangeable implementations sit behind a module-level seam:
``numpy`` (vectorized, the default) and ``naive`` (plain loops, kept as an
in-tree reference).  Select with :func:`use_implementation`.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
import scipy.linalg
from scipy.linalg import blas as _blas

from .flops import _kernel_cost3, _round3

_PIVOT_RTOL = 1e-13


class NotPositiveDefinite(Exception):
    """Cholesky broke down; carries the failing pivot (and block, if known)."""

    def __init__(self, pivot: int, block: int | None = None):
        self.pivot = pivot
        self.block = block
        where = f"block {block}, " if block is not None else ""
        super().__init__(f"matrix not positive definite ({where}pivot {pivot})")


class FlopCounter:
    """Records kernel invocations and their exact analytic flop cost."""

    def __init__(self):
        self.calls: list[tuple[str, tuple[int, ...]]] = []
        self._total3 = 0

    def add(self, kind: str, *dims: int):
        self.calls.append((kind, dims))
        self._total3 += _kernel_cost3(kind, dims)

    @property
    def total(self) -> int:
        return _round3(self._total3)

    @property
    def scaled_total(self) -> int:
        return self._total3


_IMPLEMENTATION = "numpy"


def use_implementation(name: str):
    """Switch the kernel backend ('numpy' or 'naive')."""
    global _IMPLEMENTATION
    if name not in ("numpy", "naive"):
        raise ValueError(f"unknown kernel implementation {name!r}")
    _IMPLEMENTATION = name


def current_implementation() -> str:
    return _IMPLEMENTATION


@contextmanager
def implementation(name: str):
    prev = _IMPLEMENTATION
    use_implementation(name)
    try:
        yield
    finally:
        use_implementation(prev)


def _potrf_columns(S: np.ndarray, tol: float) -> np.ndarray:
    # Column-by-column factorization; locates the exact failing pivot.
    n = S.shape[0]
    L = np.tril(S).astype(float, copy=True)
    for j in range(n):
        d = L[j, j] - L[j, :j] @ L[j, :j]
        if d <= tol or d <= 0.0:
            raise NotPositiveDefinite(pivot=j)
        dj = math.sqrt(d)
        L[j, j] = dj
        if j + 1 < n:
            L[j + 1:, j] = (L[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / dj
    return L


def potrf(S: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Only the lower triangle of S is referenced.  Raises
    :class:`NotPositiveDefinite` when a pivot falls at or below
    ``1e-13 * max(diag(S))``.
    """
    n = S.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    tol = _PIVOT_RTOL * max(float(np.max(np.diag(S))), 0.0)
    if _IMPLEMENTATION == "numpy":
        try:
            L = scipy.linalg.cholesky(S, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            return _potrf_columns(S, tol)  # re-runs to locate the pivot
        piv = np.diag(L) ** 2
        if piv.min() <= tol:
            raise NotPositiveDefinite(pivot=int(np.argmax(piv <= tol)))
        return L
    L = np.tril(S).astype(float, copy=True)
    for j in range(n):
        d = L[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if d <= tol or d <= 0.0:
            raise NotPositiveDefinite(pivot=j)
        dj = math.sqrt(d)
        L[j, j] = dj
        for i in range(j + 1, n):
            v = L[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / dj
    return L


def trsm(A: np.ndarray, L: np.ndarray) -> np.ndarray:
    """A @ inv(L).T for lower triangular L."""
    if A.shape[0] == 0 or A.shape[1] == 0:
        return A.copy()
    if _IMPLEMENTATION == "numpy":
        return _blas.dtrsm(1.0, L, np.asarray(A, dtype=float),
                           side=1, lower=1, trans_a=1)
    m, n = A.shape
    X = np.zeros_like(A, dtype=float)
    for i in range(m):
        for j in range(n):
            v = A[i, j]
            for k in range(j):
                v -= X[i, k] * L[j, k]
            X[i, j] = v / L[j, j]
    return X


def gemm(A: np.ndarray, B: np.ndarray, C: np.ndarray | None = None,
         alpha: float = 1.0, beta: float = 0.0) -> np.ndarray:
    """alpha * A @ B + beta * C."""
    if _IMPLEMENTATION == "numpy":
        out = alpha * (A @ B)
    else:
        m, n = A.shape
        p = B.shape[1]
        out = np.zeros((m, p))
        for i in range(m):
            for j in range(p):
                v = 0.0
                for k in range(n):
                    v += A[i, k] * B[k, j]
                out[i, j] = alpha * v
    if C is not None and beta != 0.0:
        out += beta * C
    return out


def syrk(A: np.ndarray, C: np.ndarray | None = None,
         alpha: float = 1.0, beta: float = 0.0) -> np.ndarray:
    """alpha * A @ A.T + beta * C (full symmetric result)."""
    if _IMPLEMENTATION == "numpy":
        out = alpha * (A @ A.T)
    else:
        m, n = A.shape
        out = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1):
                v = 0.0
                for k in range(n):
                    v += A[i, k] * A[j, k]
                out[i, j] = alpha * v
                out[j, i] = out[i, j]
    if C is not None and beta != 0.0:
        out += beta * C
    return out
