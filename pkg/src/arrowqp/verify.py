"""Independent optimality verification for general-QP solutions.

Deliberately separate from the solver's own convergence bookkeeping: this
recomputes the stationarity, feasibility, sign, and duality-gap conditions
of the flat QP from scratch, so a "solved" status can be audited without
trusting the loop.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .model import GeneralQP


def kkt_errors(qp: GeneralQP, x: np.ndarray, s: np.ndarray,
               y: np.ndarray, z: np.ndarray) -> dict:
    """Raw optimality-condition errors and their scale factors."""
    p_sym = qp.P + sp.tril(qp.P, k=-1).T
    px = p_sym @ x
    ax, gx = qp.A @ x, qp.G @ x
    aty, gtz = qp.A.T @ y, qp.G.T @ z

    def norm(v):
        return float(np.max(np.abs(v))) if np.size(v) else 0.0

    xpx, cx = float(x @ px), float(qp.c @ x)
    by = float(qp.b @ y) if qp.p else 0.0
    hz = float(qp.h @ z) if qp.m else 0.0
    return {
        "eq_residual": norm(ax - qp.b),
        "ineq_residual": norm(gx + s - qp.h),
        "primal_scale": max(norm(ax), norm(qp.b), norm(gx), norm(qp.h), norm(s)),
        "stationarity": norm(px + qp.c + aty + gtz),
        "dual_scale": max(norm(px), norm(qp.c), norm(aty), norm(gtz)),
        "duality_gap": abs(xpx + cx + by + hz),
        "gap_scale": max(abs(xpx), abs(cx), abs(by), abs(hz)),
        "min_slack": float(s.min()) if qp.m else 0.0,
        "min_dual": float(z.min()) if qp.m else 0.0,
    }


def verify_solution(qp: GeneralQP, solution, eps_abs: float,
                    eps_rel: float) -> tuple[bool, dict]:
    """Check a solution against the QP optimality conditions.

    Accepts anything exposing x, s, y, z.  Returns (ok, error report).
    """
    e = kkt_errors(qp, solution.x, solution.s, solution.y, solution.z)
    ok = (
        e["eq_residual"] <= eps_abs + eps_rel * e["primal_scale"]
        and e["ineq_residual"] <= eps_abs + eps_rel * e["primal_scale"]
        and e["stationarity"] <= eps_abs + eps_rel * e["dual_scale"]
        and e["duality_gap"] <= eps_abs + eps_rel * e["gap_scale"]
        and e["min_slack"] >= -eps_abs
        and e["min_dual"] >= -eps_abs
    )
    return ok, e
