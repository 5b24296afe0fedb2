"""Condensed KKT assembly and direction recovery.

Each interior-point iteration reduces the full Newton system to

    Psi dx = rbar,
    Psi  = P + rho*I + (1/delta) A'A + G' (W + delta*I)^{-1} G,
    rbar = r_x + G' (W + delta*I)^{-1} rbar_z + (1/delta) A' r_y,

after which dy, dz, ds are recovered by closed-form back-substitution.
Psi is assembled directly into block-tri-diagonal-arrow storage; A'A is
iterate-independent and cached at setup, while the scaled G rows are
recomputed every iteration.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .btda import BlockVector, BtdaMatrix
from .model import GeneralQP
from .structure import BlockStructure


class StructureViolation(Exception):
    """A KKT term falls outside the block structure: the detected or
    declared partition does not cover this problem (programming error)."""


def _lower_coo(mat: sp.spmatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    coo = sp.tril(mat, format="coo")
    return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data


class _ScatterPlan:
    """Precomputed routing of sparse lower-triangle entries into blocks.

    Entries are classified once into (diagonal block, sub-diagonal block,
    arrow block, corner) groups with local indices; applying the plan to a
    value array is then a handful of fancy-index accumulations.  Sources
    are canonical sparse matrices, so (i, j) pairs are unique and direct
    ``+=`` is safe.
    """

    def __init__(self, structure: BlockStructure, r: np.ndarray,
                 c: np.ndarray, what: str):
        starts = np.asarray(structure.offsets[:-1], dtype=np.int64)
        arrow_lo = structure.offsets[-1]
        arrow_id = structure.num_blocks
        offs = np.asarray(structure.offsets, dtype=np.int64)
        bi = np.searchsorted(starts, r, side="right") - 1
        bi[r >= arrow_lo] = arrow_id
        bj = np.searchsorted(starts, c, side="right") - 1
        bj[c >= arrow_lo] = arrow_id
        ok = (bi == bj) | (bi == bj + 1) | (bi == arrow_id)
        if not ok.all():
            k = int(np.argmin(ok))
            raise StructureViolation(
                f"{what} entry ({int(r[k])}, {int(c[k])}) lies outside the "
                f"block-tri-diagonal-arrow pattern")
        self.r = r
        self.c = c
        self.groups: list[tuple[str, int, np.ndarray, np.ndarray, np.ndarray]] = []
        arrow_rows = bi == arrow_id
        corner = arrow_rows & (bj == arrow_id)
        if corner.any():
            idx = np.nonzero(corner)[0]
            self.groups.append(("corner", 0, r[idx] - arrow_lo,
                                c[idx] - arrow_lo, idx))
        arr = arrow_rows & ~corner
        for k in np.unique(bj[arr]) if arr.any() else ():
            idx = np.nonzero(arr & (bj == k))[0]
            self.groups.append(("arrow", int(k), r[idx] - arrow_lo,
                                c[idx] - offs[k], idx))
        diag = (bi == bj) & ~arrow_rows
        for k in np.unique(bi[diag]) if diag.any() else ():
            idx = np.nonzero(diag & (bi == k))[0]
            self.groups.append(("diag", int(k), r[idx] - offs[k],
                                c[idx] - offs[k], idx))
        sub = (bi == bj + 1) & ~arrow_rows
        for k in np.unique(bj[sub]) if sub.any() else ():
            idx = np.nonzero(sub & (bj == k))[0]
            self.groups.append(("sub", int(k), r[idx] - offs[k + 1],
                                c[idx] - offs[k], idx))

    def apply(self, psi: BtdaMatrix, vals: np.ndarray, scale: float = 1.0):
        scaled = vals if scale == 1.0 else vals * scale
        for kind, k, il, jl, src in self.groups:
            if kind == "diag":
                psi.diag[k][il, jl] += scaled[src]
            elif kind == "sub":
                psi.sub[k][il, jl] += scaled[src]
            elif kind == "arrow":
                psi.arrow[k][il, jl] += scaled[src]
            else:
                psi.corner[il, jl] += scaled[src]


class KktWorkspace:
    """Owns block scatter plans and iterate-independent caches for one QP."""

    def __init__(self, qp: GeneralQP, structure: BlockStructure):
        if structure.n != qp.n:
            raise StructureViolation(
                f"structure covers {structure.n} variables, QP has {qp.n}")
        self.qp = qp
        self.structure = structure
        self._gtwg_plan: _ScatterPlan | None = None
        self._refresh_cache()

    def _refresh_cache(self):
        qp = self.qp
        st = self.structure
        self._p_r, self._p_c, self._p_v = _lower_coo(qp.P)
        self._p_plan = _ScatterPlan(st, self._p_r, self._p_c, "P")
        if qp.p:
            ata = qp.A.T @ qp.A
            self._ata_r, self._ata_c, self._ata_v = _lower_coo(ata)
        else:
            self._ata_r = np.zeros(0, dtype=np.int64)
            self._ata_c = np.zeros(0, dtype=np.int64)
            self._ata_v = np.zeros(0)
        self._ata_plan = _ScatterPlan(st, self._ata_r, self._ata_c, "A'A")
        self._g_csr = qp.G.tocsr()
        # The G'G pattern is iterate-independent even though the scaled
        # product is rebuilt per iteration; validate it up front.
        gtg = (qp.G.T @ qp.G) if qp.m else sp.csc_matrix((qp.n, qp.n))
        r, c, _ = _lower_coo(gtg)
        _ScatterPlan(st, r, c, "G'G")
        self._gtwg_plan = None

    def update_qp(self, qp: GeneralQP):
        """Swap in new numerical values (same sparsity) and refresh caches."""
        self.qp = qp
        self._refresh_cache()

    def assemble_psi(self, rho: float, delta: float,
                     w_diag: np.ndarray) -> BtdaMatrix:
        """Build Psi = P + rho*I + A'A/delta + G'(W+delta)^{-1}G blockwise."""
        if rho <= 0 or delta <= 0:
            raise ValueError("rho and delta must be positive")
        qp = self.qp
        if w_diag.shape != (qp.m,) or (qp.m and w_diag.min() < 0):
            raise ValueError("W diagonal must be non-negative with length m")
        psi = BtdaMatrix.zeros(self.structure)
        self._p_plan.apply(psi, self._p_v)
        for blk in psi.diag:
            blk[np.diag_indices_from(blk)] += rho
        if psi.corner.size:
            psi.corner[np.diag_indices_from(psi.corner)] += rho
        if qp.p:
            self._ata_plan.apply(psi, self._ata_v, scale=1.0 / delta)
        if qp.m:
            scaled = self._g_csr.multiply(
                (1.0 / (w_diag + delta))[:, None]).tocsr()
            gtwg = self._g_csr.T @ scaled
            r, c, v = _lower_coo(gtwg)
            if (self._gtwg_plan is None
                    or not np.array_equal(self._gtwg_plan.r, r)
                    or not np.array_equal(self._gtwg_plan.c, c)):
                self._gtwg_plan = _ScatterPlan(self.structure, r, c, "G'WG")
            self._gtwg_plan.apply(psi, v)
        return psi

    def assemble_rbar(self, r_x: np.ndarray, r_y: np.ndarray,
                      rbar_z: np.ndarray, delta: float,
                      w_diag: np.ndarray) -> BlockVector:
        """rbar = r_x + G'(W+delta)^{-1} rbar_z + A'r_y/delta, segmented."""
        qp = self.qp
        vec = r_x.astype(float, copy=True)
        if qp.m:
            vec += qp.G.T @ (rbar_z / (w_diag + delta))
        if qp.p:
            vec += qp.A.T @ (r_y / delta)
        return BlockVector.from_dense(self.structure, vec)


def recover_dy(A: sp.spmatrix, dx: np.ndarray, r_y: np.ndarray,
               delta: float) -> np.ndarray:
    """dy = (A dx - r_y) / delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return (A @ dx - r_y) / delta


def recover_dz(G: sp.spmatrix, dx: np.ndarray, rbar_z: np.ndarray,
               delta: float, w_diag: np.ndarray) -> np.ndarray:
    """dz = (G dx - rbar_z) / (W + delta)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return (G @ dx - rbar_z) / (w_diag + delta)


def recover_ds(r_s: np.ndarray, s: np.ndarray, z: np.ndarray,
               dz: np.ndarray) -> np.ndarray:
    """ds = (r_s - s o dz) / z elementwise."""
    return (r_s - s * dz) / z


def kkt_residual_oracle(qp: GeneralQP, state, direction, rho: float,
                        delta: float) -> float:
    """Max-norm residual of the full (n+p+2m)-row Newton system.

    Test-only: forms the system densely from the iterate in ``state``
    (x, s, y, z, xi, lam, nu, sigma_mu) and the step in ``direction``
    (dx, dy, dz, ds) and returns ||J @ step - rhs||_inf.
    """
    n, p, m = qp.n, qp.p, qp.m
    pfull = qp.P.toarray()
    pfull = pfull + pfull.T - np.diag(np.diag(pfull))
    a = qp.A.toarray()
    g = qp.G.toarray()
    dim = n + p + 2 * m
    J = np.zeros((dim, dim))
    J[:n, :n] = pfull + rho * np.eye(n)
    J[:n, n:n + p] = a.T
    J[:n, n + p:n + p + m] = g.T
    J[n:n + p, :n] = a
    J[n:n + p, n:n + p] = -delta * np.eye(p)
    J[n + p:n + p + m, :n] = g
    J[n + p:n + p + m, n + p:n + p + m] = -delta * np.eye(m)
    J[n + p:n + p + m, n + p + m:] = np.eye(m)
    J[n + p + m:, n + p:n + p + m] = np.diag(state.s)
    J[n + p + m:, n + p + m:] = np.diag(state.z)

    r_x = -(pfull @ state.x + qp.c + rho * (state.x - state.xi)
            + a.T @ state.y + g.T @ state.z)
    r_y = -(a @ state.x + delta * (state.lam - state.y) - qp.b)
    r_z = -(g @ state.x + delta * (state.nu - state.z) - qp.h + state.s)
    r_s = -state.s * state.z + state.sigma_mu
    rhs = np.concatenate([r_x, r_y, r_z, r_s])
    step = np.concatenate([direction.dx, direction.dy, direction.dz,
                           direction.ds])
    res = J @ step - rhs
    return float(np.abs(res).max()) if res.size else 0.0
