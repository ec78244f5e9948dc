"""Low-rank ``LDL^T`` evaluation of ``phi_l(L_A)[L D L^T]``.

The scaling-and-recursion procedure is carried out entirely on thin factors:

1. ``B_l``, the degree-``m`` Taylor polynomial of ``phi_l`` applied to ``Q``, is
   ``[L, A_s L, A_s^2 L / 2!, ...] (T kron D) [...]^T`` with ``T`` the
   anti-triangular Hankel coupling of :func:`taylor_coupling`;
2. ``B_k = L_{A_s}[B_{k+1}] + Q / k!`` for ``k = l-1..1`` adds three column
   blocks per step;
3. ``Phi_k = (1 - 1/k)^l E Phi_{k-1} E^T + sum_j mu_{k,j} B_j`` with ``E`` the
   degree ``m + l`` Taylor approximation of ``exp(A_s)`` applied to the left
   factor only.

Factors are column-compressed after step 1, after each step of 2 and after
each update in 3.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from lyaphi.errors import BudgetError, LyaphiError, NonFiniteError, StageError
from lyaphi.linalg import (DEFAULT_COMPRESS_TOL, LdlFactor, as_generator, compress_ldl,
                           ldl_blockdiag, sp_mm)
from lyaphi.params import DEFAULT_M_MAX, DEFAULT_P_MAX, PhiParams, select_m_s
from lyaphi.phi_dense import mu_coeffs

DEFAULT_RANK_CAP = 4096
DEFAULT_MEMORY_BUDGET = 2 ** 31


@dataclass
class PhiStats:
    """Per-evaluation counters (mutable; owned by a single evaluation)."""

    ranks: list = field(default_factory=list)
    compressions: int = 0
    matvecs: int = 0
    capped: int = 0
    seconds: float = 0.0

    def record(self, stage, F):
        self.ranks.append((stage, F.rank))
        self.compressions += 1
        if not F.tol_met:
            self.capped += 1

    @property
    def max_rank(self):
        return max((r for _, r in self.ranks), default=0)

    @property
    def final_rank(self):
        return self.ranks[-1][1] if self.ranks else 0


@dataclass(frozen=True)
class LowRankPhiResult:
    factor: LdlFactor
    params: PhiParams
    stats: PhiStats


def taylor_coupling(m, l):
    """``(m+1) x (m+1)`` coupling with ``T[i, j] = prod_{q=1}^{l} 1/(q+i+j)`` on ``i+j <= m``."""
    T = np.zeros((m + 1, m + 1))
    for i in range(m + 1):
        for j in range(m + 1 - i):
            T[i, j] = math.prod(1.0 / (q + i + j) for q in range(1, l + 1))
    return T


def _mult(A, X, stats):
    if stats is not None:
        stats.matvecs += X.shape[1]
    return sp_mm(A, X)


def taylor_block_factor(A_s, Q, m, l, tol=DEFAULT_COMPRESS_TOL, rank_cap=None,
                        stats=None, memory_budget=DEFAULT_MEMORY_BUDGET):
    """Compressed factor of ``sum_{k=0}^{m} L_{A_s}^k[Q] / (k+l)!``."""
    n, r = Q.L.shape
    if 8 * n * r * (m + 1) > memory_budget:
        raise BudgetError(
            f"Taylor block needs {n} x {r * (m + 1)} doubles; increase s or reduce m")
    blocks = [Q.L]
    for k in range(1, m + 1):
        blocks.append(_mult(A_s, blocks[-1], stats) / k)
    F = LdlFactor(np.hstack(blocks), np.kron(taylor_coupling(m, l), Q.D))
    F = compress_ldl(F, tol, rank_cap)
    if stats is not None:
        stats.record(f"taylor(m={m})", F)
    return F


def downward_recurrence(A_s, Q, B_top, l, tol=DEFAULT_COMPRESS_TOL, rank_cap=None,
                        stats=None):
    """Factors of ``B_k = L_{A_s}[B_{k+1}] + Q / k!`` for ``k = l-1 .. 1``.

    Returns ``[B_l, B_{l-1}, ..., B_1]``.
    """
    if l < 1:
        raise ValueError("downward recurrence needs l >= 1")
    out = [B_top]
    for k in range(l - 1, 0, -1):
        Bn = out[-1]
        Lk = np.hstack([Q.L, Bn.L, _mult(A_s, Bn.L, stats)])
        r0, r1 = Q.rank, Bn.rank
        Dk = np.zeros((r0 + 2 * r1, r0 + 2 * r1))
        Dk[:r0, :r0] = Q.D / math.factorial(k)
        Dk[r0:r0 + r1, r0 + r1:] = Bn.D
        Dk[r0 + r1:, r0:r0 + r1] = Bn.D
        F = compress_ldl(LdlFactor(Lk, Dk), tol, rank_cap)
        if stats is not None:
            stats.record(f"B_{k}", F)
        out.append(F)
    return out


def assemble_Ck(Bs, k, l):
    """Uncompressed factor of ``C_k = sum_j mu_{k,j} B_j``.

    ``Bs`` is ordered ``[B_l, ..., B_1]`` as returned by :func:`downward_recurrence`.
    """
    if len(Bs) != l:
        raise ValueError(f"expected {l} factors, got {len(Bs)}")
    if k < 2:
        raise ValueError("C_k is defined for k >= 2")
    by_index = {l - i: B for i, B in enumerate(Bs)}
    mu = mu_coeffs(k, l)
    return ldl_blockdiag([by_index[j] for j in range(1, l + 1)], mu)


def expm_taylor_apply(A_s, X, degree, stats=None):
    """``sum_{k=0}^{degree} A_s^k X / k!`` by Horner on a thin block."""
    X = np.asarray(X, dtype=float)
    Y = X
    for k in range(degree, 0, -1):
        Y = X + _mult(A_s, Y, stats) / k
    if not np.all(np.isfinite(Y)):
        raise NonFiniteError("exp(A_s) Taylor product overflowed; scaling too small")
    return Y


def phi_apply_lowrank(A, Q, l, tol_compress=DEFAULT_COMPRESS_TOL,
                      rank_cap=DEFAULT_RANK_CAP, seed=0, m_max=DEFAULT_M_MAX,
                      p_max=DEFAULT_P_MAX, params=None):
    """Low-rank factor of ``phi_l(L_A)[Q]`` for ``Q = L D L^T``.

    Parameters
    ----------
    A
        Square generator: sparse matrix or :class:`~lyaphi.linalg.LowRankUpdate`.
    Q
        :class:`~lyaphi.linalg.LdlFactor` with ``Q.n == A.shape[0]``.
    l
        Index of the phi-function, ``l >= 0``.
    tol_compress, rank_cap
        Relative Frobenius tolerance and rank limit of every column compression.
    seed, m_max, p_max
        Passed to :func:`~lyaphi.params.select_m_s` unless ``params`` is given.

    Returns
    -------
    LowRankPhiResult
    """
    t_start = time.perf_counter()
    A = as_generator(A)
    if Q.n != A.shape[0]:
        raise StageError("input", f"Q has {Q.n} rows, A is {A.shape}")
    stats = PhiStats()
    stage = "select_m_s"
    try:
        if params is None:
            params = select_m_s(A, l, m_max=m_max, p_max=p_max, seed=seed)
        m, s = params.m, params.s
        if Q.rank == 0:
            stats.ranks.append(("input", 0))
            return LowRankPhiResult(Q, params, _done(stats, t_start))
        A_s = A / s
        stage = "taylor"
        B_top = taylor_block_factor(A_s, Q, m, l, tol_compress, rank_cap, stats)
        if s == 1:
            return LowRankPhiResult(B_top, params, _done(stats, t_start))
        Bs = []
        if l >= 1:
            stage = "recurrence"
            Bs = downward_recurrence(A_s, Q, B_top, l, tol_compress, rank_cap, stats)
        Phi = B_top
        for k in range(2, s + 1):
            stage = f"phi_{k}"
            Gt = expm_taylor_apply(A_s, Phi.L, m + l, stats)
            parts = [LdlFactor(Gt, (1.0 - 1.0 / k) ** l * Phi.D)]
            if l >= 1:
                parts.append(assemble_Ck(Bs, k, l))
            Phi = compress_ldl(ldl_blockdiag(parts), tol_compress, rank_cap)
            stats.record(f"Phi_{k}", Phi)
    except StageError:
        raise
    except (LyaphiError, ValueError, np.linalg.LinAlgError, spla.LinAlgError) as exc:
        raise StageError(stage, exc) from exc
    return LowRankPhiResult(Phi, params, _done(stats, t_start))


def _done(stats, t_start):
    stats.seconds = time.perf_counter() - t_start
    return stats
