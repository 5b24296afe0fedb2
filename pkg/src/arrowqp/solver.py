"""Proximal interior-point loop with outer multiplier updates.

Each iteration takes one Mehrotra-style predictor-corrector Newton step on
the regularized barrier optimality conditions, then refreshes the proximal
anchors (xi <- x, lam <- y, nu <- z), so successive KKT systems target the
original problem's optimality conditions while staying positive definite
through the rho/delta regularization.

The reduced system Psi dx = rbar is solved either by the structured
block-tri-diagonal-arrow backend (default) or by a dense Cholesky
reference backend; both see bit-identical assembled matrices, so any
disagreement isolates the factorization/solve path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import kkt as kkt_mod
from .btda import BlockVector, factorize, solve_in_place
from .kernels import NotPositiveDefinite
from .model import (GeneralQP, MultistageProblem, Solution, Status,
                    objective, to_general_qp)
from .structure import BlockStructure, detect, detection_pattern


class SparsityChanged(Exception):
    """An update supplied a matrix whose sparsity pattern differs."""


@dataclass
class Settings:
    """Solver configuration; every numeric knob of the loop lives here."""

    eps_abs: float = 1e-8
    eps_rel: float = 1e-9
    max_iter: int = 250
    rho_0: float = 1e-6
    delta_0: float = 1e-4
    rho_min: float = 1e-10
    delta_min: float = 1e-12
    penalty_shrink: float = 0.1
    tau: float = 0.99
    backend: str = "btda"
    verbose: int = 0

    def __post_init__(self):
        if min(self.eps_abs, self.eps_rel) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.tau < 1:
            raise ValueError("fraction-to-boundary tau must lie in (0, 1)")
        if self.backend not in ("btda", "dense"):
            raise ValueError("backend must be 'btda' or 'dense'")


@dataclass
class IterateState:
    """Current primal/dual point plus proximal anchors and penalties."""

    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    rho: float
    delta: float
    mu: float
    sigma_mu: float = 0.0
    k: int = 0


@dataclass
class Residuals:
    r_x: np.ndarray
    r_y: np.ndarray
    r_z: np.ndarray
    r_s: np.ndarray
    rbar_z: np.ndarray


@dataclass
class StepDirection:
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    ds: np.ndarray


def _psym_matvec(qp: GeneralQP, x: np.ndarray) -> np.ndarray:
    return qp.P @ x + qp.P.T @ x - qp.P.diagonal() * x


def compute_residuals(qp: GeneralQP, state: IterateState,
                      sigma_mu: float) -> Residuals:
    """Newton right-hand side at the current iterate.

    r_x  = -(Px + c + rho (x - xi) + A'y + G'z)
    r_y  = -(Ax + delta (lam - y) - b)
    r_z  = -(Gx + delta (nu - z) - h + s)
    r_s  = -s o z + sigma_mu
    rbar_z = r_z - r_s / z
    """
    r_x = -(_psym_matvec(qp, state.x) + qp.c
            + state.rho * (state.x - state.xi)
            + qp.A.T @ state.y + qp.G.T @ state.z)
    r_y = -(qp.A @ state.x + state.delta * (state.lam - state.y) - qp.b)
    r_z = -(qp.G @ state.x + state.delta * (state.nu - state.z)
            - qp.h + state.s)
    r_s = -state.s * state.z + sigma_mu
    rbar_z = r_z - r_s / state.z if qp.m else r_z
    return Residuals(r_x, r_y, r_z, r_s, rbar_z)


def step_lengths(state: IterateState, direction: StepDirection,
                 tau: float) -> tuple[float, float]:
    """Fraction-to-boundary step sizes for (x, s) and (y, z).

    Largest alpha in (0, 1] with s + alpha ds >= (1 - tau) s and
    z + alpha dz >= (1 - tau) z.
    """
    def _ratio(v, dv):
        neg = dv < 0
        if not neg.any():
            return 1.0
        return min(1.0, float(tau * np.min(-v[neg] / dv[neg])))

    return _ratio(state.s, direction.ds), _ratio(state.z, direction.dz)


def _balance_guard(state: IterateState, direction: StepDirection,
                   alpha_p: float, alpha_d: float,
                   beta: float = 1e-4) -> tuple[float, float]:
    """Backtrack steps that let single complementarity products collapse.

    Without this, products of constraints leaving the active set can fall
    many orders below the mean while the proximal term still caps
    feasibility progress; the resulting extreme slack scalings destabilize
    the late iterations.  Keeping every product above beta times the mean
    bounds the scaling spread.  The current iterate satisfies the bound, so
    the backtracking always terminates.
    """
    for _ in range(40):
        prods = ((state.s + alpha_p * direction.ds)
                 * (state.z + alpha_d * direction.dz))
        mu_new = float(prods.mean())
        if mu_new <= 0 or float(prods.min()) >= beta * mu_new:
            break
        alpha_p *= 0.7
        alpha_d *= 0.7
    return alpha_p, alpha_d


class _BtdaBackend:
    name = "btda"

    def __init__(self):
        self._factor = None

    def factorize(self, psi):
        self._factor = factorize(psi)

    def solve(self, rbar: BlockVector) -> np.ndarray:
        return solve_in_place(self._factor, rbar).to_dense()


class _DenseBackend:
    """Reference backend: expand Psi and use a dense LAPACK Cholesky."""

    name = "dense"

    def __init__(self):
        self._chol = None

    def factorize(self, psi):
        dense = psi.expand_dense()
        try:
            self._chol = np.linalg.cholesky(dense)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(pivot=-1) from None

    def solve(self, rbar: BlockVector) -> np.ndarray:
        v = rbar.to_dense()
        u = scipy.linalg.solve_triangular(self._chol, v, lower=True)
        return scipy.linalg.solve_triangular(self._chol, u, lower=True,
                                             trans="T")


def _make_backend(name: str):
    return _BtdaBackend() if name == "btda" else _DenseBackend()


def newton_step(qp: GeneralQP, structure: BlockStructure,
                state: IterateState) -> StepDirection:
    """One full condensed Newton solve at the given state.

    Applies the slack scaling W = s/z, assembles and factorizes Psi, and
    recovers every eliminated direction.  The loop itself reuses the
    factorization across predictor and corrector; this convenience entry
    point rebuilds everything.
    """
    ws = kkt_mod.KktWorkspace(qp, structure)
    w_diag = state.s / state.z if qp.m else np.zeros(0)
    res = compute_residuals(qp, state, state.sigma_mu)
    psi = ws.assemble_psi(state.rho, state.delta, w_diag)
    backend = _BtdaBackend()
    backend.factorize(psi)
    rbar = ws.assemble_rbar(res.r_x, res.r_y, res.rbar_z, state.delta, w_diag)
    dx = backend.solve(rbar)
    dy = kkt_mod.recover_dy(qp.A, dx, res.r_y, state.delta)
    dz = kkt_mod.recover_dz(qp.G, dx, res.rbar_z, state.delta, w_diag)
    ds = kkt_mod.recover_ds(res.r_s, state.s, state.z, dz)
    return StepDirection(dx, dy, dz, ds)


def _convergence_errors(qp: GeneralQP, x, s, y, z):
    ax = qp.A @ x
    gx = qp.G @ x
    px = _psym_matvec(qp, x)
    aty = qp.A.T @ y
    gtz = qp.G.T @ z

    def _inf(v):
        return float(np.abs(v).max()) if v.size else 0.0

    prim = max(_inf(ax - qp.b), _inf(gx + s - qp.h))
    prim_scale = max(_inf(ax), _inf(qp.b), _inf(gx), _inf(qp.h), _inf(s))
    dual = _inf(px + qp.c + aty + gtz)
    dual_scale = max(_inf(px), _inf(qp.c), _inf(aty), _inf(gtz))
    xpx = float(x @ px)
    cx = float(qp.c @ x)
    by = float(qp.b @ y) if qp.p else 0.0
    hz = float(qp.h @ z) if qp.m else 0.0
    gap = abs(xpx + cx + by + hz)
    gap_scale = max(abs(xpx), abs(cx), abs(by), abs(hz))
    return prim, prim_scale, dual, dual_scale, gap, gap_scale


class Solver:
    """One solve session: owns the workspace, caches, and prior solution.

    Accepts either a :class:`GeneralQP` (structure detected automatically
    unless given) or a :class:`MultistageProblem` (exact structure known).
    Not thread-safe across concurrent calls on the same instance; distinct
    instances are independent.
    """

    def __init__(self, problem, settings: Settings | None = None,
                 structure: BlockStructure | None = None):
        self.settings = settings or Settings()
        if isinstance(problem, MultistageProblem):
            self.qp, self.structure = to_general_qp(problem)
        else:
            self.qp = problem
            self.structure = structure or detect(detection_pattern(problem))
        self.workspace = kkt_mod.KktWorkspace(self.qp, self.structure)
        self._prior: Solution | None = None

    def update(self, P=None, c=None, A=None, b=None, G=None, h=None):
        """Replace numerical data in place; the sparsity must not change."""
        qp = self.qp

        def _swap(new, old, name):
            if new is None:
                return old
            mat = sp.csc_matrix(new, dtype=float)
            if name == "P":
                mat = sp.tril(mat, format="csc")
            mat.sum_duplicates()
            mat.sort_indices()
            if (mat.shape != old.shape
                    or not np.array_equal(mat.indices, old.indices)
                    or not np.array_equal(mat.indptr, old.indptr)):
                raise SparsityChanged(f"{name} sparsity pattern changed")
            return mat

        new_p = _swap(P, qp.P, "P")
        new_a = _swap(A, qp.A, "A")
        new_g = _swap(G, qp.G, "G")
        new_c = qp.c if c is None else np.asarray(c, dtype=float).ravel()
        new_b = qp.b if b is None else np.asarray(b, dtype=float).ravel()
        new_h = qp.h if h is None else np.asarray(h, dtype=float).ravel()
        if new_c.shape != qp.c.shape or new_b.shape != qp.b.shape \
                or new_h.shape != qp.h.shape:
            raise SparsityChanged("vector length changed")
        self.qp = GeneralQP(n=qp.n, p=qp.p, m=qp.m, P=new_p, c=new_c,
                            A=new_a, b=new_b, G=new_g, h=new_h)
        self.workspace.update_qp(self.qp)

    def _initial_state(self, warm_start) -> IterateState:
        qp = self.qp
        st = self.settings
        if warm_start is None:
            warm_start = self._prior
        elif warm_start is False:
            warm_start = None
        elif warm_start is True:
            warm_start = self._prior
        rho, delta = st.rho_0, st.delta_0
        if isinstance(warm_start, Solution):
            # Carry the primal/equality-dual point over; slacks and
            # inequality duals restart centered (stale near-boundary pairs
            # distort the slack scaling once the active set moves).  Start
            # with tightened penalties: the residuals are already small.
            x = warm_start.x.copy()
            y = warm_start.y.copy()
            rho = max(st.rho_min, st.rho_0 * 1e-2)
            delta = max(st.delta_min, st.delta_0 * 1e-2)
        else:
            x = np.zeros(qp.n)
            y = np.zeros(qp.p)
        s = np.ones(qp.m)
        z = np.ones(qp.m)
        mu = float(s @ z / qp.m) if qp.m else 0.0
        return IterateState(x=x, s=s, y=y, z=z, xi=x.copy(), lam=y.copy(),
                            nu=z.copy(), rho=rho, delta=delta, mu=mu)

    def solve(self, warm_start=None) -> Solution:
        """Run the interior-point loop to the configured tolerances."""
        qp = self.qp
        st = self.settings
        ws = self.workspace
        backend = _make_backend(st.backend)
        state = self._initial_state(warm_start)
        eps_a, eps_r = st.eps_abs, st.eps_rel

        log: list[dict] = []
        timings = {"assembly": 0.0, "factorize": 0.0, "solve": 0.0,
                   "other": 0.0}
        t_start = time.perf_counter()
        status = Status.MAX_ITER
        prim_hist: list[float] = []
        dual_hist: list[float] = []
        prev_prim = prev_dual = np.inf
        init_dual_norm = 1.0
        init_x_norm = 1.0
        prim = dual = np.inf
        iterations = 0

        for k in range(st.max_iter):
            prim, prim_scale, dual, dual_scale, gap, gap_scale = \
                _convergence_errors(qp, state.x, state.s, state.y, state.z)
            prim_hist.append(prim)
            dual_hist.append(dual)
            if st.verbose >= 1:
                log.append({"iter": k, "mu": state.mu, "primal_res": prim,
                            "dual_res": dual, "gap": gap, "rho": state.rho,
                            "delta": state.delta})
            if (prim <= eps_a + eps_r * prim_scale
                    and dual <= eps_a + eps_r * dual_scale
                    and gap <= eps_a + eps_r * gap_scale):
                status = Status.SOLVED
                iterations = k
                break
            if k == 0:
                init_dual_norm = max(1.0, float(np.abs(state.y).max() if qp.p else 0.0),
                                     float(np.abs(state.z).max() if qp.m else 0.0))
                init_x_norm = max(1.0, float(np.abs(state.x).max() if qp.n else 0.0))
            if k >= 10:
                dual_vars = max(float(np.abs(state.y).max()) if qp.p else 0.0,
                                float(np.abs(state.z).max()) if qp.m else 0.0)
                stalled_prim = prim > 0.999 * prim_hist[k - 10]
                stalled_dual = dual > 0.999 * dual_hist[k - 10]
                if dual_vars > 1e10 * init_dual_norm and stalled_prim:
                    status = Status.PRIMAL_INFEASIBLE_SUSPECT
                    iterations = k
                    break
                if float(np.abs(state.x).max()) > 1e10 * init_x_norm and stalled_dual:
                    status = Status.DUAL_INFEASIBLE_SUSPECT
                    iterations = k
                    break

            w_diag = state.s / state.z if qp.m else np.zeros(0)

            factor_ok = False
            for attempt in range(4):
                t0 = time.perf_counter()
                psi = ws.assemble_psi(state.rho, state.delta, w_diag)
                t1 = time.perf_counter()
                timings["assembly"] += t1 - t0
                try:
                    backend.factorize(psi)
                    timings["factorize"] += time.perf_counter() - t1
                    factor_ok = True
                    break
                except NotPositiveDefinite:
                    timings["factorize"] += time.perf_counter() - t1
                    if attempt == 3:
                        break
                    state.rho *= 100.0
                    state.delta *= 100.0
            if not factor_ok:
                status = Status.NUMERICAL_ERROR
                iterations = k
                break

            def _direction(sigma_mu_rs: np.ndarray, res) -> StepDirection:
                t0 = time.perf_counter()
                rbar_z = (res.r_z - sigma_mu_rs / state.z) if qp.m else res.r_z
                rbar = ws.assemble_rbar(res.r_x, res.r_y, rbar_z,
                                        state.delta, w_diag)
                t1 = time.perf_counter()
                timings["assembly"] += t1 - t0
                dx = backend.solve(rbar)
                timings["solve"] += time.perf_counter() - t1
                dy = kkt_mod.recover_dy(qp.A, dx, res.r_y, state.delta)
                dz = kkt_mod.recover_dz(qp.G, dx, rbar_z, state.delta, w_diag)
                ds = kkt_mod.recover_ds(sigma_mu_rs, state.s, state.z, dz) \
                    if qp.m else np.zeros(0)
                return StepDirection(dx, dy, dz, ds)

            res = compute_residuals(qp, state, 0.0)

            if qp.m:
                rs_aff = -state.s * state.z
                aff = _direction(rs_aff, res)
                alpha_s, alpha_z = step_lengths(state, aff, 1.0)
                mu_aff = float((state.s + alpha_s * aff.ds)
                               @ (state.z + alpha_z * aff.dz) / qp.m)
                sigma = min(1.0, max(0.0, (mu_aff / state.mu) ** 3)) \
                    if state.mu > 0 else 0.0
                rs_corr = (-state.s * state.z - aff.ds * aff.dz
                           + sigma * state.mu)
                state.sigma_mu = sigma * state.mu
                direction = _direction(rs_corr, res)
                alpha_p, alpha_d = step_lengths(state, direction, st.tau)
                alpha_p, alpha_d = _balance_guard(state, direction,
                                                  alpha_p, alpha_d)
            else:
                direction = _direction(np.zeros(0), res)
                alpha_p = alpha_d = 1.0

            state.x += alpha_p * direction.dx
            state.s += alpha_p * direction.ds
            state.y += alpha_d * direction.dy
            state.z += alpha_d * direction.dz
            state.xi = state.x.copy()
            state.lam = state.y.copy()
            state.nu = state.z.copy()
            state.mu = float(state.s @ state.z / qp.m) if qp.m else 0.0
            state.k = k + 1
            iterations = k + 1
            if st.verbose >= 1 and log:
                log[-1].update({"alpha_primal": alpha_p,
                                "alpha_dual": alpha_d})

            # Tighten a penalty when its residual either improved a lot
            # (reward) or stalled above tolerance (the penalty itself is
            # then the progress bottleneck).
            prim_stalled = (prim > 0.5 * prev_prim
                            and prim > eps_a + eps_r * prim_scale)
            dual_stalled = (dual > 0.5 * prev_dual
                            and dual > eps_a + eps_r * dual_scale)
            if prim <= st.penalty_shrink * prev_prim or prim_stalled:
                state.delta = max(st.delta_min,
                                  st.penalty_shrink * state.delta)
            if dual <= st.penalty_shrink * prev_dual or dual_stalled:
                state.rho = max(st.rho_min, st.penalty_shrink * state.rho)
            prev_prim, prev_dual = prim, dual

        if status is not Status.SOLVED:
            prim, _, dual, _, _, _ = _convergence_errors(
                qp, state.x, state.s, state.y, state.z)
        total = time.perf_counter() - t_start
        timings["other"] = max(0.0, total - timings["assembly"]
                               - timings["factorize"] - timings["solve"])
        timings["total"] = total
        sol = Solution(
            x=state.x.copy(), s=state.s.copy(), y=state.y.copy(),
            z=state.z.copy(), status=status, iterations=iterations,
            primal_res=prim, dual_res=dual,
            objective=objective(qp, state.x),
            info={"timings": timings, "log": log,
                  "backend": backend.name,
                  "block_sizes": list(self.structure.block_sizes),
                  "arrow_width": self.structure.arrow_width},
        )
        self._prior = sol
        return sol


def solve(problem, settings: Settings | None = None,
          structure: BlockStructure | None = None) -> Solution:
    """One-shot convenience wrapper around :class:`Solver`."""
    return Solver(problem, settings, structure).solve(warm_start=False)
