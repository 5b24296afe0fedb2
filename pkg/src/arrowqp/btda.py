"""Block-tri-diagonal-arrow storage, Cholesky factorization, and solves.

A symmetric matrix with this structure is held as dense blocks: diagonal
blocks (lower triangle significant), one sub-diagonal of coupling blocks,
a row of arrow blocks, and the arrow corner.  The factorization visits the
chain once, so its cost is linear in the number of blocks; the factor has
the same block layout.

The algorithmic order inside the loop is coupling solve, then diagonal
update and Cholesky, then arrow update: each quantity is computed before
anything reads it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import blas as _blas

from . import kernels
from .kernels import FlopCounter, NotPositiveDefinite
from .structure import BlockStructure


def _empty_blocks(structure: BlockStructure):
    d = structure.block_sizes
    w = structure.arrow_width
    diag = [np.zeros((k, k)) for k in d]
    sub = [np.zeros((d[i + 1], d[i])) for i in range(len(d) - 1)]
    arrow = [np.zeros((w, k)) for k in d]
    corner = np.zeros((w, w))
    return diag, sub, arrow, corner


@dataclass
class BtdaMatrix:
    """Symmetric block-tri-diagonal-arrow matrix; lower blocks stored."""

    structure: BlockStructure
    diag: list[np.ndarray]
    sub: list[np.ndarray]
    arrow: list[np.ndarray]
    corner: np.ndarray

    @classmethod
    def zeros(cls, structure: BlockStructure) -> "BtdaMatrix":
        return cls(structure, *_empty_blocks(structure))

    def expand_dense(self) -> np.ndarray:
        """Full symmetric dense image (test and reference-backend support)."""
        n = self.structure.n
        offs = self.structure.offsets
        out = np.zeros((n, n))
        for k, blk in enumerate(self.diag):
            lo = offs[k]
            hi = offs[k + 1]
            low = np.tril(blk)
            out[lo:hi, lo:hi] = low + low.T - np.diag(np.diag(low))
        for i, blk in enumerate(self.sub):
            out[offs[i + 1]:offs[i + 2], offs[i]:offs[i + 1]] = blk
            out[offs[i]:offs[i + 1], offs[i + 1]:offs[i + 2]] = blk.T
        a0 = offs[-1]
        for k, blk in enumerate(self.arrow):
            out[a0:, offs[k]:offs[k + 1]] = blk
            out[offs[k]:offs[k + 1], a0:] = blk.T
        low = np.tril(self.corner)
        out[a0:, a0:] = low + low.T - np.diag(np.diag(low))
        return out


@dataclass
class BtdaFactor:
    """Lower Cholesky factor sharing the source matrix's block layout."""

    structure: BlockStructure
    diag: list[np.ndarray]
    sub: list[np.ndarray]
    arrow: list[np.ndarray]
    corner: np.ndarray

    def expand_dense(self) -> np.ndarray:
        n = self.structure.n
        offs = self.structure.offsets
        out = np.zeros((n, n))
        for k, blk in enumerate(self.diag):
            out[offs[k]:offs[k + 1], offs[k]:offs[k + 1]] = np.tril(blk)
        for i, blk in enumerate(self.sub):
            out[offs[i + 1]:offs[i + 2], offs[i]:offs[i + 1]] = blk
        a0 = offs[-1]
        for k, blk in enumerate(self.arrow):
            out[a0:, offs[k]:offs[k + 1]] = blk
        out[a0:, a0:] = np.tril(self.corner)
        return out


@dataclass
class BlockVector:
    """A vector partitioned to match a block structure (arrow segment last)."""

    structure: BlockStructure
    segments: list[np.ndarray]

    @classmethod
    def from_dense(cls, structure: BlockStructure, v: np.ndarray) -> "BlockVector":
        if v.shape != (structure.n,):
            raise ValueError("vector length does not match structure")
        offs = structure.offsets
        segs = [v[offs[k]:offs[k + 1]].astype(float, copy=True)
                for k in range(structure.num_blocks)]
        segs.append(v[offs[-1]:].astype(float, copy=True))
        return cls(structure, segs)

    def to_dense(self) -> np.ndarray:
        return np.concatenate(self.segments) if self.segments else np.zeros(0)


def factorize(psi: BtdaMatrix, counter: FlopCounter | None = None) -> BtdaFactor:
    """Cholesky-factor a positive definite BTDA matrix, block by block.

    The input is preserved; all updates happen in per-call workspace
    copies.  Raises :class:`NotPositiveDefinite` with the failing block
    index if a diagonal pivot collapses, which in-solver means the
    proximal regularization upstream is broken.
    """
    st = psi.structure
    d = st.block_sizes
    w = st.arrow_width
    K = len(d) - 1

    ldiag: list[np.ndarray] = []
    lsub: list[np.ndarray] = []
    larrow: list[np.ndarray] = []

    def _chol(block: np.ndarray, index: int) -> np.ndarray:
        if counter is not None:
            counter.add("potrf", block.shape[0])
        try:
            return kernels.potrf(block)
        except NotPositiveDefinite as err:
            raise NotPositiveDefinite(pivot=err.pivot, block=index) from None

    ldiag.append(_chol(psi.diag[0], 0))
    if w > 0:
        if counter is not None:
            counter.add("trsm", w, d[0])
        larrow.append(kernels.trsm(psi.arrow[0], ldiag[0]))

    for i in range(1, K + 1):
        if counter is not None:
            counter.add("trsm", d[i], d[i - 1])
        lsub.append(kernels.trsm(psi.sub[i - 1], ldiag[i - 1]))
        if counter is not None:
            counter.add("syrk", d[i], d[i - 1])
        updated = kernels.syrk(lsub[i - 1], psi.diag[i], alpha=-1.0, beta=1.0)
        ldiag.append(_chol(updated, i))
        if w > 0:
            if counter is not None:
                counter.add("gemm", w, d[i - 1], d[i])
            tmp = kernels.gemm(larrow[i - 1], lsub[i - 1].T, psi.arrow[i],
                               alpha=-1.0, beta=1.0)
            if counter is not None:
                counter.add("trsm", w, d[i])
            larrow.append(kernels.trsm(tmp, ldiag[i]))

    if w > 0:
        cw = psi.corner.copy()
        for k in range(K + 1):
            if counter is not None:
                counter.add("syrk", w, d[k])
            cw = kernels.syrk(larrow[k], cw, alpha=-1.0, beta=1.0)
        if counter is not None:
            counter.add("potrf", w)
        try:
            lcorner = kernels.potrf(cw)
        except NotPositiveDefinite as err:
            raise NotPositiveDefinite(pivot=err.pivot, block=K + 1) from None
    else:
        larrow = [np.zeros((0, k)) for k in d]
        lcorner = np.zeros((0, 0))

    return BtdaFactor(st, ldiag, lsub, larrow, lcorner)


def _solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    if b.size == 0:
        return b
    return _blas.dtrsv(L, b, lower=1, trans=0)


def _solve_lower_t(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    if b.size == 0:
        return b
    return _blas.dtrsv(L, b, lower=1, trans=1)


def solve_in_place(factor: BtdaFactor, rhs: BlockVector) -> BlockVector:
    """Solve L L' x = r by forward then backward block substitution.

    The backward pass applies transposed blocks throughout so that the two
    passes compose to the inverse of L L'.  Overwrites and returns ``rhs``.
    """
    st = factor.structure
    K = st.num_blocks - 1
    w = st.arrow_width
    x = rhs.segments

    x[0] = _solve_lower(factor.diag[0], x[0])
    for i in range(1, K + 1):
        x[i] = _solve_lower(factor.diag[i], x[i] - factor.sub[i - 1] @ x[i - 1])
    if w > 0:
        acc = x[K + 1]
        for j in range(K + 1):
            acc = acc - factor.arrow[j] @ x[j]
        x[K + 1] = _solve_lower(factor.corner, acc)

        x[K + 1] = _solve_lower_t(factor.corner, x[K + 1])
        x[K] = _solve_lower_t(factor.diag[K], x[K] - factor.arrow[K].T @ x[K + 1])
        for i in range(K - 1, -1, -1):
            x[i] = _solve_lower_t(
                factor.diag[i],
                x[i] - factor.sub[i].T @ x[i + 1] - factor.arrow[i].T @ x[K + 1])
    else:
        x[K] = _solve_lower_t(factor.diag[K], x[K])
        for i in range(K - 1, -1, -1):
            x[i] = _solve_lower_t(factor.diag[i], x[i] - factor.sub[i].T @ x[i + 1])
    return rhs
