"""Block-tri-diagonal-arrow structure detection from sparsity alone.

The detection matrix pattern is the lower triangle of P + I + A'A + G'G
(structural, no numerical cancellation).  Because the quadratic terms A'A
and G'G are invariant to row permutations of A and G, so is everything
derived here: only the decision-variable ordering matters.

Detection runs three passes:

  1. a forward scan over rows that commits block boundaries retroactively
     (a row whose backward coupling stops short of the current block start
     closes the block at that column, when legal) and, on encountering a
     row that couples further back than the previous block, compares the
     estimated factorization cost of routing the remaining rows to the
     arrow against merging blocks back far enough to cover the coupling;
  2. a split pass that replicates the preceding block width into oversized
     blocks whenever that strictly lowers the estimated cost (contiguous
     coupled bands are cost-ambiguous, so uniform stage-sized blocks are
     preferred);
  3. a merge pass that joins adjacent blocks whenever the merged structure
     is estimated no more expensive (ties merge).

Cost estimates price the exact kernel sequence of the block factorization,
skipping kernels whose operands are structurally zero.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .flops import _kernel_cost3


@dataclass(frozen=True)
class BlockStructure:
    """A partition of n variables into diagonal blocks plus a trailing arrow."""

    block_sizes: tuple[int, ...]
    arrow_width: int = 0

    def __post_init__(self):
        if any(d < 1 for d in self.block_sizes):
            raise ValueError("diagonal blocks must be at least 1 wide")
        if self.arrow_width < 0:
            raise ValueError("arrow width must be non-negative")
        if not self.block_sizes:
            raise ValueError("need at least one diagonal block")

    @property
    def n(self) -> int:
        return sum(self.block_sizes) + self.arrow_width

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        """Start offset of each diagonal block, then of the arrow rows."""
        out = [0]
        for d in self.block_sizes:
            out.append(out[-1] + d)
        return tuple(out)

    def block_of(self, i: int) -> int:
        """Block index of variable i; num_blocks denotes the arrow rows."""
        offs = self.offsets
        if i >= offs[-1]:
            return self.num_blocks
        return bisect_right(offs, i) - 1


@dataclass(frozen=True)
class SparsityPattern:
    """Lower-triangular symbolic pattern with a full diagonal."""

    n: int
    rows: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.rows) != self.n:
            raise ValueError("one column list per row required")
        for i, cols in enumerate(self.rows):
            if cols.size == 0 or cols[-1] != i:
                raise ValueError(f"row {i} is missing its diagonal entry")
            if cols[0] < 0 or np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i} columns must be sorted and unique")

    @classmethod
    def from_matrix(cls, mat) -> "SparsityPattern":
        """Build from a dense or sparse matrix; keeps the lower triangle."""
        m = sp.csr_matrix(mat)
        m.data = np.ones_like(m.data)
        m = sp.tril(m + sp.identity(m.shape[0], format="csr"), format="csr")
        m.sort_indices()
        rows = tuple(m.indices[m.indptr[i]:m.indptr[i + 1]].astype(np.int64)
                     for i in range(m.shape[0]))
        return cls(m.shape[0], rows)

    def lower_entries(self) -> tuple[np.ndarray, np.ndarray]:
        """All strictly-lower (row, col) pairs as flat arrays."""
        ri = np.concatenate([np.full(c.size - 1, i, dtype=np.int64)
                             for i, c in enumerate(self.rows)]) \
            if self.n else np.empty(0, dtype=np.int64)
        cj = np.concatenate([c[:-1] for c in self.rows]) \
            if self.n else np.empty(0, dtype=np.int64)
        return ri, cj


def detection_pattern(qp) -> SparsityPattern:
    """Symbolic lower triangle of P + I + A'A + G'G for a general QP."""
    n = qp.n
    total = sp.identity(n, format="csc")
    p_ones = qp.P.copy()
    p_ones.data = np.ones_like(p_ones.data)
    total = total + p_ones + p_ones.T
    for mat in (qp.A, qp.G):
        if mat.shape[0]:
            ones = mat.copy()
            ones.data = np.ones_like(ones.data)
            total = total + ones.T @ ones
    return SparsityPattern.from_matrix(total)


def _reaches(pattern: SparsityPattern) -> np.ndarray:
    return np.array([cols[0] for cols in pattern.rows], dtype=np.int64)


def _partition_cost3(bounds, t: int, n: int, ri: np.ndarray, cj: np.ndarray) -> int:
    """Estimated factorization cost (scaled by 3) of a candidate partition.

    ``bounds`` are diagonal block starts covering [0, t); rows [t, n) form
    the arrow.  Kernels on structurally-zero couplings are skipped; arrow
    fill-in is propagated down the chain.
    """
    starts = np.asarray(bounds, dtype=np.int64)
    sizes = np.diff(np.append(starts, t))
    w = n - t
    k_blocks = len(sizes)

    inside = ri < t
    bi = np.searchsorted(starts, ri[inside], side="right") - 1
    bj = np.searchsorted(starts, cj[inside], side="right") - 1
    coupling = np.zeros(k_blocks, dtype=bool)
    adj = bi == bj + 1
    if adj.any():
        coupling[np.unique(bi[adj])] = True

    arrow_touch = np.zeros(k_blocks, dtype=bool)
    if w > 0:
        in_arrow = (ri >= t) & (cj < t)
        if in_arrow.any():
            bj_a = np.searchsorted(starts, cj[in_arrow], side="right") - 1
            arrow_touch[np.unique(bj_a)] = True

    total = 0
    for d in sizes:
        total += _kernel_cost3("potrf", (int(d),))
    for k in range(1, k_blocks):
        if coupling[k]:
            total += _kernel_cost3("trsm", (int(sizes[k]), int(sizes[k - 1])))
            total += _kernel_cost3("syrk", (int(sizes[k]), int(sizes[k - 1])))
    if w > 0:
        active = bool(arrow_touch[0])
        if active:
            total += _kernel_cost3("trsm", (w, int(sizes[0])))
        filled = [active]
        for k in range(1, k_blocks):
            fill_from_prev = active and coupling[k]
            if fill_from_prev:
                total += _kernel_cost3("gemm", (w, int(sizes[k - 1]), int(sizes[k])))
            active = fill_from_prev or bool(arrow_touch[k])
            if active:
                total += _kernel_cost3("trsm", (w, int(sizes[k])))
            filled.append(active)
        for k in range(k_blocks):
            if filled[k]:
                total += _kernel_cost3("syrk", (w, int(sizes[k])))
        total += _kernel_cost3("potrf", (w,))
    return total


def _scan(pattern: SparsityPattern) -> tuple[list[int], int]:
    """Forward scan: block starts over the chain region plus the arrow start."""
    n = pattern.n
    r = _reaches(pattern)
    ri, cj = pattern.lower_entries()
    bounds = [0]
    arrow_start = n
    i = 1
    while i < arrow_start:
        reach = int(r[i])
        b_cur = bounds[-1]
        if reach >= i:
            bounds.append(i)
        elif reach > b_cur:
            # Close at `reach` when every displaced row still couples no
            # further back than the block being closed.
            if int(r[reach:i].min()) >= b_cur:
                bounds.append(reach)
        elif len(bounds) == 1 or reach >= bounds[-2]:
            pass
        else:
            cost_arrow = _partition_cost3(bounds, i, n, ri, cj)
            j = bisect_right(bounds, reach) - 1
            merged = bounds[: j + 2]
            cand = merged + ([i + 1] if i + 1 < n else [])
            cost_merge = _partition_cost3(cand, n, n, ri, cj)
            if cost_arrow < cost_merge:
                arrow_start = i
                break
            bounds = merged
        i += 1
    return bounds, arrow_start


def _split_pass(bounds: list[int], t: int, n: int, r: np.ndarray,
                ri: np.ndarray, cj: np.ndarray) -> list[int]:
    bounds = list(bounds)
    k = 1
    while k < len(bounds):
        end = bounds[k + 1] if k + 1 < len(bounds) else t
        prev_w = bounds[k] - bounds[k - 1]
        if end - bounds[k] > prev_w > 0:
            pos = bounds[k] + prev_w
            legal = int(r[pos:end].min()) >= bounds[k]
            if legal and end < t:
                # The next block's previous-block start moves from
                # bounds[k] to pos; its rows must not reach past it.
                next_end = bounds[k + 2] if k + 2 < len(bounds) else t
                legal = int(r[end:next_end].min()) >= pos
            if legal:
                cand = bounds[: k + 1] + [pos] + bounds[k + 1:]
                if (_partition_cost3(cand, t, n, ri, cj)
                        < _partition_cost3(bounds, t, n, ri, cj)):
                    bounds = cand
        k += 1
    return bounds


def _merge_pass(bounds: list[int], t: int, n: int,
                ri: np.ndarray, cj: np.ndarray) -> list[int]:
    bounds = list(bounds)
    idx = 1
    while idx < len(bounds):
        cand = bounds[:idx] + bounds[idx + 1:]
        if (_partition_cost3(cand, t, n, ri, cj)
                <= _partition_cost3(bounds, t, n, ri, cj)):
            bounds = cand
        else:
            idx += 1
    return bounds


def detect(pattern: SparsityPattern) -> BlockStructure:
    """Recover a covering block-tri-diagonal-arrow partition from a pattern.

    Deterministic; cannot fail (the worst case is a single block spanning
    everything with no arrow).
    """
    n = pattern.n
    if n == 0:
        raise ValueError("empty pattern")
    r = _reaches(pattern)
    ri, cj = pattern.lower_entries()
    bounds, arrow_start = _scan(pattern)
    bounds = _split_pass(bounds, arrow_start, n, r, ri, cj)
    bounds = _merge_pass(bounds, arrow_start, n, ri, cj)
    sizes = tuple(int(d) for d in np.diff(np.append(bounds, arrow_start)))
    return BlockStructure(sizes, n - arrow_start)


def verify_cover(pattern: SparsityPattern, structure: BlockStructure):
    """Check the covering invariant exhaustively.

    Returns None when every stored nonzero lies in a diagonal block, an
    adjacent sub-diagonal block, or the arrow rows; otherwise the first
    violating (i, j) in row-major order.
    """
    if pattern.n != structure.n:
        raise ValueError("pattern and structure sizes differ")
    offs = np.asarray(structure.offsets[:-1], dtype=np.int64)
    arrow_lo = structure.offsets[-1]
    for i, cols in enumerate(pattern.rows):
        if i >= arrow_lo:
            continue
        bi = bisect_right(offs.tolist(), i) - 1
        bj = np.searchsorted(offs, cols, side="right") - 1
        bad = (bj != bi) & (bj != bi - 1)
        if bad.any():
            return i, int(cols[np.argmax(bad)])
    return None


def merge_blocks(structure: BlockStructure, pattern: SparsityPattern) -> BlockStructure:
    """Consolidate adjacent blocks whenever merging does not raise the cost.

    Idempotent: the result is a fixed point of the merge sweep.
    """
    if verify_cover(pattern, structure) is not None:
        raise ValueError("structure does not cover the pattern")
    n = pattern.n
    ri, cj = pattern.lower_entries()
    t = n - structure.arrow_width
    bounds = list(structure.offsets[:-1])
    bounds = _merge_pass(bounds, t, n, ri, cj)
    sizes = tuple(int(d) for d in np.diff(np.append(bounds, t)))
    return BlockStructure(sizes, structure.arrow_width)
