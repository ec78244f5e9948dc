"""Low-rank matrix-valued exponential integrators for Lyapunov and Riccati equations.

DLE:  X' = A X + X A^T + B B^T
DRE:  X' = A X + X A^T + C^T C - X B B^T X

``expeul`` (exponential Euler) is exact for the DLE. ``exprb2`` and ``exprb3``
are exponential Rosenbrock schemes of order 2 and 3 that linearize the
Riccati right-hand side around the current state; the Lyapunov generator of
the linearization, ``A - (X B) B^T``, is handled as a sparse matrix with a
low-rank update and never formed.
"""
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from lyaphi.errors import BudgetError, DimensionError, LyaphiError
from lyaphi.linalg import (DEFAULT_COMPRESS_TOL, LdlFactor, LowRankUpdate, as_sparse,
                           compress_ldl, ldl_blockdiag, sp_mm)
from lyaphi.params import DEFAULT_M_MAX, DEFAULT_P_MAX
from lyaphi.phi_lowrank import DEFAULT_RANK_CAP, phi_apply_lowrank

SCHEMES = ("expeul", "exprb2", "exprb3")
MAX_STEPS = 1_000_000


@dataclass(frozen=True)
class PhiOptions:
    tol_compress: float = DEFAULT_COMPRESS_TOL
    rank_cap: int = DEFAULT_RANK_CAP
    seed: int = 0
    m_max: int = DEFAULT_M_MAX
    p_max: int = DEFAULT_P_MAX

    def phi(self, A, Q, l):
        return phi_apply_lowrank(A, Q, l, tol_compress=self.tol_compress,
                                 rank_cap=self.rank_cap, seed=self.seed,
                                 m_max=self.m_max, p_max=self.p_max)

    def compress(self, F):
        return compress_ldl(F, self.tol_compress, self.rank_cap)


def _block(X, n, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise DimensionError(f"{name} has {X.shape[0]} rows, expected {n}")
    return X


@dataclass(frozen=True)
class DleProblem:
    A: object
    B: np.ndarray
    X0: LdlFactor

    def __post_init__(self):
        A = as_sparse(self.A)
        n = A.shape[0]
        if A.shape != (n, n) or self.X0.n != n:
            raise DimensionError("inconsistent DLE shapes")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", _block(self.B, n, "B"))


@dataclass(frozen=True)
class DreProblem:
    """``Ct`` holds ``C^T`` (``N x q``)."""

    A: object
    B: np.ndarray
    Ct: np.ndarray
    X0: LdlFactor

    def __post_init__(self):
        A = as_sparse(self.A)
        n = A.shape[0]
        if A.shape != (n, n) or self.X0.n != n:
            raise DimensionError("inconsistent DRE shapes")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", _block(self.B, n, "B"))
        object.__setattr__(self, "Ct", _block(self.Ct, n, "C^T"))


@dataclass(frozen=True)
class IntegratorState:
    t: float
    X: LdlFactor
    stats: dict = field(default_factory=dict, compare=False)


def dle_rhs_ldl(P, X, opts=PhiOptions()):
    """Compressed factor of ``A X + X A^T + B B^T``."""
    L, D = X.L, X.D
    r, p = X.rank, P.B.shape[1]
    G = np.hstack([sp_mm(P.A, L), L, P.B])
    S = np.zeros((2 * r + p, 2 * r + p))
    S[:r, r:2 * r] = D
    S[r:2 * r, :r] = D
    S[2 * r:, 2 * r:] = np.eye(p)
    return opts.compress(LdlFactor(G, S))


def dre_rhs_ldl(P, X, opts=PhiOptions()):
    """Compressed factor of ``A X + X A^T + C^T C - X B B^T X``."""
    L, D = X.L, X.D
    r, q = X.rank, P.Ct.shape[1]
    G = np.hstack([sp_mm(P.A, L), L, P.Ct])
    W = D @ (L.T @ P.B)
    S = np.zeros((2 * r + q, 2 * r + q))
    S[:r, r:2 * r] = D
    S[r:2 * r, :r] = D
    S[r:2 * r, r:2 * r] = -W @ W.T
    S[2 * r:, 2 * r:] = np.eye(q)
    return opts.compress(LdlFactor(G, S))


def linearized_generator(P, X, h):
    """``h (A - (X B) B^T)``, the generator of the Riccati Jacobian scaled by ``h``."""
    U = X.L @ (X.D @ (X.L.T @ P.B))
    return LowRankUpdate(h * P.A, h * U, P.B)


def _phi_info(res):
    pr = res.params
    return {"l": pr.l, "m": pr.m, "s": pr.s, "p_star": pr.p_star,
            "rank": res.stats.final_rank, "matvecs": res.stats.matvecs}


def _advance(S, h, X, phis, t0):
    stats = {"step_seconds": time.perf_counter() - t0, "rank": X.rank, "phi": phis,
             "cumulative_seconds": S.stats.get("cumulative_seconds", 0.0)}
    stats["cumulative_seconds"] += stats["step_seconds"]
    return IntegratorState(S.t + h, X, stats)


def expeul_step(P, S, h, opts=PhiOptions()):
    """``X_{n+1} = X_n + h phi_1(h L_A)[F(X_n)]``; exact for the DLE."""
    if not h > 0:
        raise ValueError("step size must be positive")
    t0 = time.perf_counter()
    K = dle_rhs_ldl(P, S.X, opts)
    if K.rank == 0:
        return _advance(S, h, S.X, [], t0)
    res = opts.phi(h * P.A, K, 1)
    X = opts.compress(ldl_blockdiag([S.X, res.factor], [1.0, h]))
    return _advance(S, h, X, [_phi_info(res)], t0)


def exprb2_step(P, S, h, opts=PhiOptions()):
    """``X_{n+1} = X_n + h phi_1(h L_{A_n})[F(X_n)]`` with ``A_n = A - X_n B B^T``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    t0 = time.perf_counter()
    F = dre_rhs_ldl(P, S.X, opts)
    if F.rank == 0:
        return _advance(S, h, S.X, [], t0)
    res = opts.phi(linearized_generator(P, S.X, h), F, 1)
    X = opts.compress(ldl_blockdiag([S.X, res.factor], [1.0, h]))
    return _advance(S, h, X, [_phi_info(res)], t0)


def exprb3_step(P, S, h, opts=PhiOptions()):
    """Third-order exponential Rosenbrock step.

    ``U = X_n + h phi_1(h J)[F(X_n)]`` and ``X_{n+1} = U + 2 h phi_3(h J)[R]``
    where ``R = F(U) - F(X_n) - J[U - X_n] = -Delta B B^T Delta`` for
    ``Delta = U - X_n``; ``R`` is kept as the rank-``p`` factor
    ``-(Delta B)(Delta B)^T``.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    t0 = time.perf_counter()
    F = dre_rhs_ldl(P, S.X, opts)
    if F.rank == 0:
        return _advance(S, h, S.X, [], t0)
    J = linearized_generator(P, S.X, h)
    res1 = opts.phi(J, F, 1)
    delta = res1.factor.scaled(h)
    U = opts.compress(ldl_blockdiag([S.X, delta]))
    W = delta.L @ (delta.D @ (delta.L.T @ P.B))
    R = opts.compress(LdlFactor(W, -np.eye(W.shape[1])))
    phis = [_phi_info(res1)]
    if R.rank == 0:
        return _advance(S, h, U, phis, t0)
    res3 = opts.phi(J, R, 3)
    X = opts.compress(ldl_blockdiag([U, res3.factor], [1.0, 2.0 * h]))
    phis.append(_phi_info(res3))
    return _advance(S, h, X, phis, t0)


_STEPPERS = {"expeul": expeul_step, "exprb2": exprb2_step, "exprb3": exprb3_step}


@dataclass
class Trajectory:
    """States from an :func:`integrate` run; ``error`` is set if a step failed."""

    states: list
    error: Exception = None
    max_rank: int = 0
    steps: int = 0

    @property
    def final(self):
        return self.states[-1]

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)


def step_count(t0, t_end, h):
    span = t_end - t0
    if span < 0:
        raise ValueError("t_end must be >= t0")
    if span == 0:
        return 0
    if not h > 0:
        raise ValueError("step size must be positive")
    return max(1, math.ceil(span / h - 1e-9))


def integrate(problem, scheme, t0, t_end, h, opts=PhiOptions(), snapshot_stride=1,
              max_steps=MAX_STEPS, on_step=None):
    """Fixed-step integration from ``t0`` to ``t_end``.

    The last step is shortened if ``h`` does not divide the interval. Every
    ``snapshot_stride``-th state and the final one are kept; a stride of 0
    keeps only the initial and final states. On a step failure
    the run stops and the trajectory, ending at the last good state, carries
    the exception in ``error``.
    """
    if scheme not in _STEPPERS:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "expeul" and not isinstance(problem, DleProblem):
        raise TypeError("expeul integrates DleProblem instances")
    if scheme != "expeul" and not isinstance(problem, DreProblem):
        raise TypeError(f"{scheme} integrates DreProblem instances")
    if snapshot_stride < 0:
        raise ValueError("snapshot_stride must be >= 0")
    nsteps = step_count(t0, t_end, h)
    if nsteps > max_steps:
        raise BudgetError(f"{nsteps} steps exceed the budget of {max_steps}")
    step = _STEPPERS[scheme]
    state = IntegratorState(t0, problem.X0, {"rank": problem.X0.rank,
                                             "cumulative_seconds": 0.0})
    states = [state]
    max_rank = state.X.rank
    for i in range(1, nsteps + 1):
        hi = min(h, t_end - state.t) if i == nsteps else h
        try:
            new = step(problem, state, hi, opts)
        except (LyaphiError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            if states[-1] is not state:
                states.append(state)
            return Trajectory(states, exc, max_rank, i - 1)
        if i == nsteps:
            new = replace(new, t=t_end)
        state = new
        max_rank = max(max_rank, state.X.rank)
        if on_step is not None:
            on_step(i, state)
        if (snapshot_stride and i % snapshot_stride == 0) or i == nsteps:
            states.append(state)
    return Trajectory(states, None, max_rank, nsteps)
