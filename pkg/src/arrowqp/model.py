"""Problem representations: stage-coupled form and flat general QP form.

The multistage form carries per-stage cost blocks (Q_i, S_i, T_i, c_i),
equalities (A_i, B_i, E_i, b_i), and inequalities (C_i, D_i, F_i, h_i),
where S/B/D couple consecutive stages and T/E/F couple to a global
variable g of width n_g.  The terminal stage has no next-stage coupling;
its inequality block D_N acts on x_N alone.

Conversion to the general form

    minimize   1/2 x' P x + c' x
    subject to A x = b,  G x <= h

orders variables as (x_0, ..., x_N, g), which makes P block tri-diagonal
with a trailing arrow; only P's lower triangle is stored.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .structure import BlockStructure


@dataclass(frozen=True)
class MultistageProblem:
    """Stage-coupled convex QP data.

    Lists are indexed by stage.  Q, T, c, A, E, b, D, F, h have N+1 entries
    (the last is the terminal stage); S, B, C have N entries.  Immutable
    after construction; share freely across threads.
    """

    N: int
    n_g: int
    Q: tuple[np.ndarray, ...]
    S: tuple[np.ndarray, ...]
    T: tuple[np.ndarray, ...]
    c: tuple[np.ndarray, ...]
    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    E: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    C: tuple[np.ndarray, ...]
    D: tuple[np.ndarray, ...]
    F: tuple[np.ndarray, ...]
    h: tuple[np.ndarray, ...]
    Q_g: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    c_g: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def stage_dims(self) -> tuple[int, ...]:
        return tuple(q.shape[0] for q in self.Q)

    @property
    def total_vars(self) -> int:
        return sum(self.stage_dims) + self.n_g


def validate(problem: MultistageProblem, check_psd: bool = False) -> list[str]:
    """Dimension-check a multistage problem.

    Returns the empty list when consistent, otherwise one message per
    mismatch naming the stage and matrix.  With ``check_psd`` the full
    cost matrix is assembled and its smallest eigenvalue is required to be
    above -1e-9 times the cost scale (debug use; O(n^3)).
    """
    errs: list[str] = []
    N = problem.N
    if N < 1:
        return ["stage count N must be at least 1"]
    lengths = {
        "Q": (problem.Q, N + 1), "S": (problem.S, N), "T": (problem.T, N + 1),
        "c": (problem.c, N + 1), "A": (problem.A, N + 1), "B": (problem.B, N),
        "E": (problem.E, N + 1), "b": (problem.b, N + 1), "C": (problem.C, N),
        "D": (problem.D, N + 1), "F": (problem.F, N + 1), "h": (problem.h, N + 1),
    }
    for name, (seq, want) in lengths.items():
        if len(seq) != want:
            errs.append(f"{name} has {len(seq)} entries, expected {want}")
    if errs:
        return errs

    dims = problem.stage_dims
    ng = problem.n_g
    if any(d < 1 for d in dims):
        errs.append("zero-width stages are not supported")
    for i in range(N + 1):
        ni = dims[i]
        if problem.Q[i].shape != (ni, ni):
            errs.append(f"stage {i}: Q_{i} is {problem.Q[i].shape}, expected {(ni, ni)}")
        elif not np.allclose(problem.Q[i], problem.Q[i].T, atol=1e-12):
            errs.append(f"stage {i}: Q_{i} is not symmetric")
        if problem.T[i].shape != (ng, ni):
            errs.append(f"stage {i}: T_{i} is {problem.T[i].shape}, expected {(ng, ni)}")
        if problem.c[i].shape != (ni,):
            errs.append(f"stage {i}: c_{i} has length {problem.c[i].shape}, expected {ni}")
        p_i = problem.A[i].shape[0]
        if problem.A[i].shape != (p_i, ni):
            errs.append(f"stage {i}: A_{i} is {problem.A[i].shape}, expected ({p_i}, {ni})")
        if problem.E[i].shape != (p_i, ng):
            errs.append(f"stage {i}: E_{i} is {problem.E[i].shape}, expected {(p_i, ng)}")
        if problem.b[i].shape != (p_i,):
            errs.append(f"stage {i}: b_{i} has length {problem.b[i].shape}, expected {p_i}")
        m_i = problem.h[i].shape[0]
        if i < N:
            if problem.C[i].shape != (m_i, ni):
                errs.append(f"stage {i}: C_{i} is {problem.C[i].shape}, expected {(m_i, ni)}")
            if problem.D[i].shape != (m_i, dims[i + 1]):
                errs.append(f"stage {i}: D_{i} is {problem.D[i].shape}, "
                            f"expected {(m_i, dims[i + 1])}")
        else:
            if problem.D[i].shape != (m_i, ni):
                errs.append(f"stage {i}: D_{i} is {problem.D[i].shape}, expected {(m_i, ni)}")
        if problem.F[i].shape != (m_i, ng):
            errs.append(f"stage {i}: F_{i} is {problem.F[i].shape}, expected {(m_i, ng)}")
        if i < N:
            if problem.S[i].shape != (dims[i + 1], ni):
                errs.append(f"stage {i}: S_{i} is {problem.S[i].shape}, "
                            f"expected {(dims[i + 1], ni)}")
            if problem.B[i].shape != (p_i, dims[i + 1]):
                errs.append(f"stage {i}: B_{i} is {problem.B[i].shape}, "
                            f"expected {(p_i, dims[i + 1])}")
    if problem.Q_g.shape != (ng, ng):
        errs.append(f"global: Q_g is {problem.Q_g.shape}, expected {(ng, ng)}")
    elif ng and not np.allclose(problem.Q_g, problem.Q_g.T, atol=1e-12):
        errs.append("global: Q_g is not symmetric")
    if problem.c_g.shape != (ng,):
        errs.append(f"global: c_g has length {problem.c_g.shape}, expected {ng}")

    if not errs and check_psd:
        qp, _ = to_general_qp(problem)
        full = _expand_p(qp)
        scale = max(1.0, float(np.abs(full).max()))
        lam = np.linalg.eigvalsh(full)[0]
        if lam < -1e-9 * scale:
            errs.append(f"cost matrix is not positive semi-definite "
                        f"(min eigenvalue {lam:.3e})")
    return errs


@dataclass(frozen=True)
class GeneralQP:
    """Flat sparse QP: 1/2 x'Px + c'x  s.t.  Ax = b, Gx <= h.

    P holds the lower triangle only (CSC, canonical).  Immutable.
    """

    n: int
    p: int
    m: int
    P: sp.csc_matrix
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray


def make_general_qp(P, c, A=None, b=None, G=None, h=None) -> GeneralQP:
    """Canonicalize raw inputs into a :class:`GeneralQP`.

    P may be dense or sparse, full symmetric or lower triangular; only its
    lower triangle is kept.  None constraint blocks become empty.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.shape[0]
    P = sp.csc_matrix(P, shape=(n, n), dtype=float)
    upper = sp.triu(P, k=1)
    if upper.nnz:
        lower = sp.tril(P, k=-1)
        if (abs(upper.T - lower) > 1e-12 * max(1.0, abs(P).max())).nnz:
            raise ValueError("P must be symmetric (or given as lower triangle)")
    P = sp.tril(P, format="csc")
    P.sum_duplicates()
    P.sort_indices()

    def _mk(mat, rows):
        out = sp.csc_matrix((rows, n), dtype=float) if mat is None \
            else sp.csc_matrix(mat, dtype=float)
        if out.shape[1] != n:
            raise ValueError(f"constraint matrix has {out.shape[1]} columns, expected {n}")
        out.sum_duplicates()
        out.sort_indices()
        return out

    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    A = _mk(A, b.shape[0])
    G = _mk(G, h.shape[0])
    if A.shape[0] != b.shape[0]:
        raise ValueError("A and b disagree on the number of equalities")
    if G.shape[0] != h.shape[0]:
        raise ValueError("G and h disagree on the number of inequalities")
    return GeneralQP(n=n, p=A.shape[0], m=G.shape[0], P=P, c=c, A=A, b=b, G=G, h=h)


class Status(enum.Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE_SUSPECT = "primal_infeasible_suspect"
    DUAL_INFEASIBLE_SUSPECT = "dual_infeasible_suspect"
    NUMERICAL_ERROR = "numerical_error"


@dataclass
class Solution:
    """Solver output: primal/dual point, status, and convergence info."""

    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: Status
    iterations: int
    primal_res: float
    dual_res: float
    objective: float
    info: dict = field(default_factory=dict)


def to_general_qp(problem: MultistageProblem) -> tuple[GeneralQP, BlockStructure]:
    """Flatten a multistage problem; returns the QP and its exact partition.

    Stage variables come first in stage order, the global variable last,
    so every nonzero of P lands in a diagonal block, the adjacent
    sub-diagonal block, or the trailing arrow rows.
    """
    errs = validate(problem)
    if errs:
        raise ValueError("invalid multistage problem: " + "; ".join(errs))
    N = problem.N
    dims = problem.stage_dims
    ng = problem.n_g
    offs = np.concatenate([[0], np.cumsum(dims)])
    g0 = int(offs[-1])
    n = g0 + ng

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def _add(block: np.ndarray, r0: int, c0: int, lower_of_diag=False):
        if block.size == 0:
            return
        nz = np.nonzero(np.tril(block) if lower_of_diag else block)
        rows.extend((nz[0] + r0).tolist())
        cols.extend((nz[1] + c0).tolist())
        src = np.tril(block) if lower_of_diag else block
        vals.extend(src[nz].tolist())

    for i in range(N + 1):
        _add(problem.Q[i], offs[i], offs[i], lower_of_diag=True)
        if i < N:
            _add(problem.S[i], offs[i + 1], offs[i])
        if ng:
            _add(problem.T[i], g0, offs[i])
    if ng:
        _add(problem.Q_g, g0, g0, lower_of_diag=True)
    P = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))

    c = np.concatenate(list(problem.c) + [problem.c_g])

    def _extend(srows, scols, svals, block, r0, c0):
        if block.size == 0:
            return
        nz = np.nonzero(block)
        srows.extend((nz[0] + r0).tolist())
        scols.extend((nz[1] + c0).tolist())
        svals.extend(block[nz].tolist())

    A_rows: list[int] = []
    A_cols: list[int] = []
    A_vals: list[float] = []
    r0 = 0
    for i in range(N + 1):
        _extend(A_rows, A_cols, A_vals, problem.A[i], r0, offs[i])
        if i < N:
            _extend(A_rows, A_cols, A_vals, problem.B[i], r0, offs[i + 1])
        if ng:
            _extend(A_rows, A_cols, A_vals, problem.E[i], r0, g0)
        r0 += problem.A[i].shape[0]
    A = sp.csc_matrix((A_vals, (A_rows, A_cols)), shape=(r0, n))
    b = np.concatenate(list(problem.b)) if r0 else np.zeros(0)

    G_rows: list[int] = []
    G_cols: list[int] = []
    G_vals: list[float] = []
    r0 = 0
    for i in range(N + 1):
        if i < N:
            _extend(G_rows, G_cols, G_vals, problem.C[i], r0, offs[i])
            _extend(G_rows, G_cols, G_vals, problem.D[i], r0, offs[i + 1])
        else:
            _extend(G_rows, G_cols, G_vals, problem.D[i], r0, offs[i])
        if ng:
            _extend(G_rows, G_cols, G_vals, problem.F[i], r0, g0)
        r0 += problem.h[i].shape[0]
    G = sp.csc_matrix((G_vals, (G_rows, G_cols)), shape=(r0, n))
    h = np.concatenate(list(problem.h)) if r0 else np.zeros(0)

    qp = make_general_qp(P, c, A, b, G, h)
    return qp, BlockStructure(tuple(dims), ng)


def _expand_p(qp: GeneralQP) -> np.ndarray:
    low = qp.P.toarray()
    return low + low.T - np.diag(np.diag(low))


def objective(qp: GeneralQP, x: np.ndarray) -> float:
    """1/2 x'Px + c'x with P's implied symmetry."""
    x = np.asarray(x, dtype=float)
    if x.shape != (qp.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({qp.n},)")
    px = qp.P @ x
    ptx = qp.P.T @ x
    d = qp.P.diagonal()
    return float(x @ px + x @ ptx - x @ (d * x)) * 0.5 + float(qp.c @ x)
