"""Seeded benchmark problem families.

Three families:

* a chain of unit masses coupled by unit springs (walls at both ends,
  light viscous damping, M-1 actuators pushing between consecutive
  masses), discretized zero-order-hold at 0.5 s, with box bounds on states
  and inputs, an optional input-rate penalty coupling consecutive stages,
  and a Riccati terminal weight;
* a robust scenario variant tying every scenario's first-stage state and
  input together through a trailing global variable;
* a randomized linear-quadratic control family with stage variables
  (state, input), optional global coupling, and uniform dynamics rows.

All randomness flows through a counter-based generator, so equal seeds
give bit-identical problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .model import MultistageProblem

_DAMPING = 0.2
_SAMPLING_TIME = 0.5
_STATE_BOUND = 4.0
_INPUT_BOUND = 0.5
_Q_WEIGHT = 1e3
_R_WEIGHT = 1e-1


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=stream))


@dataclass(frozen=True)
class SpringMassConfig:
    M: int
    N: int
    r_d: float = _R_WEIGHT
    seed: int = 0

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("need at least two masses")
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        if self.r_d < 0:
            raise ValueError("input-rate weight must be non-negative")

    @property
    def n_x(self) -> int:
        return 2 * self.M

    @property
    def n_u(self) -> int:
        return self.M - 1


@dataclass(frozen=True)
class ScenarioConfig:
    M: int
    N: int
    N_s: int
    seed: int = 0

    def __post_init__(self):
        if self.M < 2 or self.N < 2 or self.N_s < 1:
            raise ValueError("need M >= 2, N >= 2, N_s >= 1")


def chain_dynamics(M: int, springs: np.ndarray | None = None,
                   damping: float = _DAMPING,
                   dt: float = _SAMPLING_TIME) -> tuple[np.ndarray, np.ndarray]:
    """Discretized dynamics of the damped spring-mass chain.

    ``springs`` holds the M+1 spring constants (walls included); defaults
    to all ones.  State is (positions, velocities).
    """
    k = np.ones(M + 1) if springs is None else np.asarray(springs, dtype=float)
    if k.shape != (M + 1,):
        raise ValueError(f"need {M + 1} spring constants")
    stiff = np.zeros((M, M))
    for i in range(M):
        stiff[i, i] = -(k[i] + k[i + 1])
        if i > 0:
            stiff[i, i - 1] = k[i]
        if i + 1 < M:
            stiff[i, i + 1] = k[i + 1]
    n_u = M - 1
    force = np.zeros((M, n_u))
    for j in range(n_u):
        force[j, j] = -1.0
        force[j + 1, j] = 1.0
    n_x = 2 * M
    a_c = np.zeros((n_x, n_x))
    a_c[:M, M:] = np.eye(M)
    a_c[M:, :M] = stiff
    a_c[M:, M:] = -damping * np.eye(M)
    b_c = np.zeros((n_x, n_u))
    b_c[M:, :] = force
    # Zero-order hold via the augmented matrix exponential.
    aug = np.zeros((n_x + n_u, n_x + n_u))
    aug[:n_x, :n_x] = a_c
    aug[:n_x, n_x:] = b_c
    phi = expm(aug * dt)
    return phi[:n_x, :n_x], phi[:n_x, n_x:]


def dare(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray,
         tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Fixed point of the discrete-time Riccati iteration.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA until the relative
    change drops below ``tol``; raises on non-convergence.
    """
    P = Q.copy()
    for _ in range(max_iter):
        bpb = R + B.T @ P @ B
        gain = np.linalg.solve(bpb, B.T @ P @ A)
        nxt = Q + A.T @ P @ A - A.T @ P @ B @ gain
        nxt = 0.5 * (nxt + nxt.T)
        if np.abs(nxt - P).max() <= tol * max(1.0, np.abs(nxt).max()):
            return nxt
        P = nxt
    raise RuntimeError("Riccati iteration did not converge")


def _zeros(r: int, c: int) -> np.ndarray:
    return np.zeros((r, c))


def _spring_mass_problem(cfg: SpringMassConfig, A: np.ndarray, B: np.ndarray,
                         x0: np.ndarray, cost_scale: float = 1.0) -> MultistageProblem:
    n_x, n_u, N = cfg.n_x, cfg.n_u, cfg.N
    nd = n_x + n_u
    q_diag = np.full(n_x, _Q_WEIGHT)
    r_diag = np.full(n_u, _R_WEIGHT)

    Q, S, T, c = [], [], [], []
    Ae, Be, Ee, be = [], [], [], []
    Ci, Di, Fi, hi = [], [], [], []
    eye_x = np.eye(n_x)
    bounds_stage = np.vstack([np.eye(nd), -np.eye(nd)])
    h_stage = np.concatenate([np.full(n_x, _STATE_BOUND),
                              np.full(n_u, _INPUT_BOUND),
                              np.full(n_x, _STATE_BOUND),
                              np.full(n_u, _INPUT_BOUND)])

    for i in range(N):
        qi = np.zeros((nd, nd))
        qi[:n_x, :n_x] = 2 * np.diag(q_diag)
        rate_terms = (1 if i > 0 else 0) + (1 if i < N - 1 else 0)
        qi[n_x:, n_x:] = 2 * np.diag(r_diag + cfg.r_d * rate_terms)
        Q.append(cost_scale * qi)
        next_d = nd if i < N - 1 else n_x
        si = np.zeros((next_d, nd))
        if cfg.r_d > 0 and i < N - 1:
            si[n_x:, n_x:] = -2 * cfg.r_d * np.eye(n_u)
        S.append(cost_scale * si)
        T.append(_zeros(0, nd))
        c.append(np.zeros(nd))

        # Equalities: stage 0 carries the initial condition plus one
        # dynamics row block; later stages one dynamics row block each.
        dyn_a = np.hstack([A, B])
        if i == 0:
            ai = np.vstack([np.hstack([eye_x, _zeros(n_x, n_u)]), dyn_a])
            bi_rows = np.vstack([_zeros(n_x, next_d),
                                 np.hstack([-eye_x, _zeros(n_x, next_d - n_x)])])
            rhs = np.concatenate([x0, np.zeros(n_x)])
        else:
            ai = dyn_a
            bi_rows = np.hstack([-eye_x, _zeros(n_x, next_d - n_x)])
            rhs = np.zeros(n_x)
        Ae.append(ai)
        Be.append(bi_rows)
        Ee.append(_zeros(ai.shape[0], 0))
        be.append(rhs)

        Ci.append(bounds_stage[:, :])
        Di.append(_zeros(2 * nd, next_d))
        Fi.append(_zeros(2 * nd, 0))
        hi.append(h_stage.copy())

    q_n = dare(A, B, np.diag(q_diag), np.diag(r_diag))
    Q.append(cost_scale * 2 * q_n)
    T.append(_zeros(0, n_x))
    c.append(np.zeros(n_x))
    Ae.append(_zeros(0, n_x))
    Ee.append(_zeros(0, 0))
    be.append(np.zeros(0))
    term_bounds = np.vstack([eye_x, -eye_x])
    Di.append(term_bounds)
    Fi.append(_zeros(2 * n_x, 0))
    hi.append(np.full(2 * n_x, _STATE_BOUND))

    return MultistageProblem(
        N=N, n_g=0,
        Q=tuple(Q), S=tuple(S), T=tuple(T), c=tuple(c),
        A=tuple(Ae), B=tuple(Be), E=tuple(Ee), b=tuple(be),
        C=tuple(Ci), D=tuple(Di), F=tuple(Fi), h=tuple(hi),
        Q_g=_zeros(0, 0), c_g=np.zeros(0),
    )


def initial_state_sampler(cfg: SpringMassConfig):
    """Deterministic stream of initial states: gamma ~ U[0.5, 1.5], then
    each component ~ U[-gamma, gamma]."""
    def sample(index: int) -> np.ndarray:
        gen = _rng(cfg.seed, stream=1 + index)
        gamma = gen.uniform(0.5, 1.5)
        return gen.uniform(-gamma, gamma, size=cfg.n_x)
    return sample


def spring_mass(cfg: SpringMassConfig):
    """Spring-mass MPC instance plus its initial-state sampler."""
    A, B = chain_dynamics(cfg.M)
    sampler = initial_state_sampler(cfg)
    problem = _spring_mass_problem(cfg, A, B, sampler(0))
    return problem, sampler


def spring_mass_with_state(cfg: SpringMassConfig, x0: np.ndarray,
                           springs: np.ndarray | None = None) -> MultistageProblem:
    """Spring-mass instance for a given initial state (and spring constants)."""
    A, B = chain_dynamics(cfg.M, springs=springs)
    return _spring_mass_problem(cfg, A, B, np.asarray(x0, dtype=float))


def scenario(cfg: ScenarioConfig) -> MultistageProblem:
    """Robust scenario instance: N_s sampled chains, first stage tied.

    Per-scenario spring constants are drawn uniformly from [1, 2].  The
    shared first-stage state and input (z_0, u_0) form the global variable,
    entering each scenario's first dynamics row; z_0 is pinned to the
    sampled initial state by an equality on the global block alone.
    """
    M, N, N_s = cfg.M, cfg.N, cfg.N_s
    n_x, n_u = 2 * M, M - 1
    nd = n_x + n_u
    n_g = n_x + n_u
    gen = _rng(cfg.seed)
    gamma = gen.uniform(0.5, 1.5)
    x0 = gen.uniform(-gamma, gamma, size=n_x)
    springs = [gen.uniform(1.0, 2.0, size=M + 1) for _ in range(N_s)]
    systems = [chain_dynamics(M, springs=k) for k in springs]

    scale = 1.0 / N_s
    q_diag = np.full(n_x, _Q_WEIGHT)
    r_diag = np.full(n_u, _R_WEIGHT)
    eye_x = np.eye(n_x)

    Q, S, T, c = [], [], [], []
    Ae, Be, Ee, be = [], [], [], []
    Ci, Di, Fi, hi = [], [], [], []
    bounds_stage = np.vstack([np.eye(nd), -np.eye(nd)])
    h_stage = np.concatenate([np.full(n_x, _STATE_BOUND),
                              np.full(n_u, _INPUT_BOUND),
                              np.full(n_x, _STATE_BOUND),
                              np.full(n_u, _INPUT_BOUND)])

    # Scenario j contributes N stage blocks: (z_1, u_1) ... (z_{N-1}, u_{N-1}), z_N.
    total_stages = N_s * N
    for j in range(N_s):
        A_j, B_j = systems[j]
        q_n = dare(A_j, B_j, np.diag(q_diag), np.diag(r_diag))
        for i in range(N):
            stage = j * N + i
            last_stage = stage == total_stages - 1
            terminal_of_chain = i == N - 1
            width = n_x if terminal_of_chain else nd
            next_width = None
            if not last_stage:
                next_is_terminal = (i + 1) == N - 1
                next_width = n_x if next_is_terminal else nd

            qi = np.zeros((width, width))
            if terminal_of_chain:
                qi[:, :] = scale * 2 * q_n
            else:
                qi[:n_x, :n_x] = scale * 2 * np.diag(q_diag)
                qi[n_x:, n_x:] = scale * 2 * np.diag(r_diag)
            Q.append(qi)
            c.append(np.zeros(width))
            T.append(_zeros(n_g, width))
            if not last_stage:
                S.append(_zeros(next_width, width))

            rows_a, rows_b, rows_e, rows_rhs = [], [], [], []
            if i == 0:
                # z_1 = A^j z_0 + B^j u_0 with (z_0, u_0) global.
                rows_a.append(np.hstack([-eye_x, _zeros(n_x, width - n_x)]))
                rows_b.append(_zeros(n_x, next_width) if not last_stage else None)
                rows_e.append(np.hstack([A_j, B_j]))
                rows_rhs.append(np.zeros(n_x))
            if not terminal_of_chain:
                # z_{i+2} = A^j z_{i+1} + B^j u_{i+1} couples this stage to the next.
                rows_a.append(np.hstack([A_j, B_j]))
                rows_b.append(np.hstack([-eye_x, _zeros(n_x, next_width - n_x)]))
                rows_e.append(_zeros(n_x, n_g))
                rows_rhs.append(np.zeros(n_x))
            if rows_a:
                Ae.append(np.vstack(rows_a))
                Ee.append(np.vstack(rows_e))
                be.append(np.concatenate(rows_rhs))
                if not last_stage:
                    stacked_b = [rb if rb is not None else _zeros(n_x, next_width)
                                 for rb in rows_b]
                    Be.append(np.vstack(stacked_b))
            else:
                Ae.append(_zeros(0, width))
                Ee.append(_zeros(0, n_g))
                be.append(np.zeros(0))
                if not last_stage:
                    Be.append(_zeros(0, next_width))

            if terminal_of_chain:
                gi = np.vstack([eye_x, -eye_x])
                hi_vec = np.full(2 * n_x, _STATE_BOUND)
            else:
                gi = bounds_stage
                hi_vec = h_stage.copy()
            if last_stage:
                Di.append(gi)
            else:
                Ci.append(gi)
                Di.append(_zeros(gi.shape[0], next_width))
            Fi.append(_zeros(gi.shape[0], n_g))
            hi.append(hi_vec)

    # Terminal-stage extras on the global block: pin z_0, bound u_0.
    last = len(Ae) - 1
    Ae[last] = np.vstack([Ae[last], _zeros(n_x, Ae[last].shape[1])])
    Ee[last] = np.vstack([Ee[last],
                          np.hstack([eye_x, _zeros(n_x, n_u)])])
    be[last] = np.concatenate([be[last], x0])
    u0_rows = np.vstack([np.hstack([_zeros(n_u, n_x), np.eye(n_u)]),
                         np.hstack([_zeros(n_u, n_x), -np.eye(n_u)])])
    Di[last] = np.vstack([Di[last], _zeros(2 * n_u, Di[last].shape[1])])
    Fi[last] = np.vstack([Fi[last], u0_rows])
    hi[last] = np.concatenate([hi[last], np.full(2 * n_u, _INPUT_BOUND)])

    q_g = np.zeros((n_g, n_g))
    q_g[:n_x, :n_x] = 2 * np.diag(q_diag)
    q_g[n_x:, n_x:] = 2 * np.diag(r_diag)

    return MultistageProblem(
        N=total_stages - 1, n_g=n_g,
        Q=tuple(Q), S=tuple(S), T=tuple(T), c=tuple(c),
        A=tuple(Ae), B=tuple(Be), E=tuple(Ee), b=tuple(be),
        C=tuple(Ci), D=tuple(Di), F=tuple(Fi), h=tuple(hi),
        Q_g=q_g, c_g=np.zeros(n_g),
    )


def extended_lqc(N: int, n_x: int, n_u: int, n_g: int,
                 seed: int = 0) -> MultistageProblem:
    """Randomized control family with uniform stages (z_i, u_i).

    Dynamics rows are [A_i  B_i] on the stage and [-I  0] on the next, with
    random global columns when n_g > 0; stage costs are sampled positive
    semi-definite jointly over (stage, global) so the full cost matrix
    stays PSD by construction.
    """
    if N < 1 or n_x < 1 or n_u < 0 or n_g < 0:
        raise ValueError("bad dimensions")
    gen = _rng(seed)
    nd = n_x + n_u

    def stable(nrow):
        mat = gen.normal(size=(nrow, nrow))
        radius = max(abs(np.linalg.eigvals(mat)))
        return 0.9 * mat / radius

    def psd_piece(width):
        m = gen.normal(size=(width, width))
        return m.T @ m + 1e-3 * np.eye(width)

    Q, S, T, c = [], [], [], []
    Ae, Be, Ee, be = [], [], [], []
    Ci, Di, Fi, hi = [], [], [], []
    q_g = np.zeros((n_g, n_g))

    for i in range(N + 1):
        piece = psd_piece(nd + n_g)
        Q.append(piece[:nd, :nd])
        T.append(piece[nd:, :nd])
        q_g += piece[nd:, nd:]
        c.append(gen.normal(size=nd) * 0.1)
        if i < N:
            S.append(_zeros(nd, nd))
        if i < N:
            a_i = np.hstack([stable(n_x), gen.normal(size=(n_x, n_u))])
            b_i = np.hstack([-np.eye(n_x), _zeros(n_x, n_u)])
            e_i = gen.normal(size=(n_x, n_g)) if n_g else _zeros(n_x, 0)
            Ae.append(a_i)
            Be.append(b_i)
            Ee.append(e_i)
            be.append(gen.normal(size=n_x) * 0.1)
        else:
            Ae.append(_zeros(0, nd))
            Ee.append(_zeros(0, n_g))
            be.append(np.zeros(0))
        if i < N:
            Ci.append(_zeros(0, nd))
            Di.append(_zeros(0, nd))
        else:
            Di.append(_zeros(0, nd))
        Fi.append(_zeros(0, n_g))
        hi.append(np.zeros(0))

    return MultistageProblem(
        N=N, n_g=n_g,
        Q=tuple(Q), S=tuple(S), T=tuple(T), c=tuple(c),
        A=tuple(Ae), B=tuple(Be), E=tuple(Ee), b=tuple(be),
        C=tuple(Ci), D=tuple(Di), F=tuple(Fi), h=tuple(hi),
        Q_g=q_g, c_g=gen.normal(size=n_g) * 0.1 if n_g else np.zeros(0),
    )
