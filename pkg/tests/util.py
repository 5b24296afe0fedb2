"""Shared builders for randomized test instances."""

from __future__ import annotations

import numpy as np

import arrowqp as aq
from arrowqp.btda import BtdaMatrix


def random_structure(rng, max_blocks=8, max_block=7, max_arrow=4) -> aq.BlockStructure:
    k = int(rng.integers(1, max_blocks + 1))
    sizes = tuple(int(rng.integers(1, max_block + 1)) for _ in range(k))
    w = int(rng.integers(0, max_arrow + 1))
    return aq.BlockStructure(sizes, w)


def random_spd_btda(rng, structure: aq.BlockStructure) -> BtdaMatrix:
    """SPD matrix with exactly the given block pattern, built as M M' + I
    where M is a random lower-triangular matrix with the same pattern (the
    product of such a factor with its transpose lands back in-pattern)."""
    n = structure.n
    offs = structure.offsets
    m = np.zeros((n, n))
    for k in range(structure.num_blocks):
        lo, hi = offs[k], offs[k + 1]
        m[lo:hi, lo:hi] = np.tril(rng.normal(size=(hi - lo, hi - lo)))
        if k + 1 < structure.num_blocks:
            m[offs[k + 1]:offs[k + 2], lo:hi] = rng.normal(
                size=(offs[k + 2] - offs[k + 1], hi - lo))
    if structure.arrow_width:
        a0 = offs[-1]
        m[a0:, :a0] = rng.normal(size=(n - a0, a0))
        m[a0:, a0:] = np.tril(rng.normal(size=(n - a0, n - a0)))
    dense = m @ m.T + np.eye(n)
    return btda_from_dense(structure, dense)


def btda_from_dense(structure: aq.BlockStructure, dense: np.ndarray) -> BtdaMatrix:
    psi = BtdaMatrix.zeros(structure)
    offs = structure.offsets
    k_blocks = structure.num_blocks
    for k in range(k_blocks):
        psi.diag[k][:] = dense[offs[k]:offs[k + 1], offs[k]:offs[k + 1]]
    for k in range(k_blocks - 1):
        psi.sub[k][:] = dense[offs[k + 1]:offs[k + 2], offs[k]:offs[k + 1]]
    if structure.arrow_width:
        for k in range(k_blocks):
            psi.arrow[k][:] = dense[offs[-1]:, offs[k]:offs[k + 1]]
        psi.corner[:] = dense[offs[-1]:, offs[-1]:]
    return psi


def random_qp(rng, n=None, p=None, m=None) -> aq.GeneralQP:
    """Small dense-ish random QP with strictly feasible inequalities."""
    n = n if n is not None else int(rng.integers(2, 13))
    p = p if p is not None else int(rng.integers(0, min(n, 9)))
    m = m if m is not None else int(rng.integers(0, 9))
    f = rng.normal(size=(n, n))
    pmat = f @ f.T + 0.5 * np.eye(n)
    c = rng.normal(size=n)
    a = rng.normal(size=(p, n))
    x_feas = rng.normal(size=n) * 0.5
    b = a @ x_feas
    g = rng.normal(size=(m, n))
    h = g @ x_feas + rng.uniform(0.5, 2.0, size=m)
    return aq.make_general_qp(pmat, c, a, b, g, h)


def random_multistage(rng, max_stages=4, max_dim=3, with_global=True) -> aq.MultistageProblem:
    n_stages = int(rng.integers(1, max_stages + 1))  # this is N
    dims = [int(rng.integers(1, max_dim + 1)) for _ in range(n_stages + 1)]
    ng = int(rng.integers(0, 3)) if with_global else 0

    def sym(k):
        m = rng.normal(size=(k, k))
        return m + m.T

    Q = [sym(d) for d in dims]
    S = [rng.normal(size=(dims[i + 1], dims[i])) for i in range(n_stages)]
    T = [rng.normal(size=(ng, d)) for d in dims]
    c = [rng.normal(size=d) for d in dims]
    A, B, E, b = [], [], [], []
    C, D, F, h = [], [], [], []
    for i in range(n_stages + 1):
        p_i = int(rng.integers(0, 3))
        A.append(rng.normal(size=(p_i, dims[i])))
        E.append(rng.normal(size=(p_i, ng)))
        b.append(rng.normal(size=p_i))
        if i < n_stages:
            B.append(rng.normal(size=(p_i, dims[i + 1])))
        m_i = int(rng.integers(0, 3))
        if i < n_stages:
            C.append(rng.normal(size=(m_i, dims[i])))
            D.append(rng.normal(size=(m_i, dims[i + 1])))
        else:
            D.append(rng.normal(size=(m_i, dims[i])))
        F.append(rng.normal(size=(m_i, ng)))
        h.append(rng.normal(size=m_i))
    return aq.MultistageProblem(
        N=n_stages, n_g=ng, Q=tuple(Q), S=tuple(S), T=tuple(T), c=tuple(c),
        A=tuple(A), B=tuple(B), E=tuple(E), b=tuple(b),
        C=tuple(C), D=tuple(D), F=tuple(F), h=tuple(h),
        Q_g=sym(ng) if ng else np.zeros((0, 0)),
        c_g=rng.normal(size=ng) if ng else np.zeros(0),
    )


def stagewise_objective(ms: aq.MultistageProblem, x_stages, g) -> float:
    """Independent stage-by-stage cost evaluation."""
    total = 0.0
    for i in range(ms.N):
        xi, xn = x_stages[i], x_stages[i + 1]
        total += 0.5 * xi @ ms.Q[i] @ xi + xn @ ms.S[i] @ xi + ms.c[i] @ xi
        if ms.n_g:
            total += g @ ms.T[i] @ xi
    xN = x_stages[ms.N]
    total += 0.5 * xN @ ms.Q[ms.N] @ xN + ms.c[ms.N] @ xN
    if ms.n_g:
        total += g @ ms.T[ms.N] @ xN + 0.5 * g @ ms.Q_g @ g + ms.c_g @ g
    return total


def split_stages(ms: aq.MultistageProblem, x: np.ndarray):
    dims = ms.stage_dims
    offs = np.concatenate([[0], np.cumsum(dims)])
    stages = [x[offs[i]:offs[i + 1]] for i in range(len(dims))]
    g = x[offs[-1]:]
    return stages, g
