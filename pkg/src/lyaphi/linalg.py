"""Sparse/dense kernels, LDL^T factors and their compression, 1-norm estimation.

Every other module works in terms of three objects defined here:

* a *generator*: a square real matrix ``A`` stored as ``scipy.sparse`` CSR, or a
  :class:`LowRankUpdate` ``S - U V^T`` that is never densified;
* a thin dense block (plain ``numpy`` 2-d array);
* an :class:`LdlFactor` ``(L, D)`` representing the symmetric matrix ``L D L^T``.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp

from lyaphi.errors import BudgetError, DimensionError, NonFiniteError

EPS = np.finfo(float).eps

DEFAULT_COMPRESS_TOL = 1e-12
DEFAULT_DENSE_CAP = 2048
EXACT_NORM_BELOW = 128


class LowRankUpdate:
    """The square operator ``S - U @ V.T``.

    ``S`` is sparse, ``U`` and ``V`` are ``N x p`` dense blocks. Products cost
    one sparse product plus two thin dense products.
    """

    __array_priority__ = 20

    def __init__(self, S, U, V):
        S = as_sparse(S)
        U = np.atleast_2d(np.asarray(U, dtype=float).T).T
        V = np.atleast_2d(np.asarray(V, dtype=float).T).T
        if U.shape != V.shape or U.shape[0] != S.shape[0]:
            raise DimensionError(
                f"low-rank update shapes {U.shape}, {V.shape} do not fit {S.shape}")
        self.S = S
        self.U = U
        self.V = V

    @property
    def shape(self):
        return self.S.shape

    @property
    def T(self):
        return LowRankUpdate(self.S.T.tocsr(), self.V, self.U)

    def __matmul__(self, X):
        X = np.asarray(X, dtype=float)
        return self.S @ X - self.U @ (self.V.T @ X)

    def __mul__(self, c):
        c = float(c)
        return LowRankUpdate(c * self.S, c * self.U, self.V)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def toarray(self):
        return self.S.toarray() - self.U @ self.V.T

    def __repr__(self):
        return f"LowRankUpdate(N={self.shape[0]}, nnz={self.S.nnz}, p={self.U.shape[1]})"


def as_sparse(A):
    """Return a finite float64 CSR copy of ``A``: sorted indices, no stored zeros."""
    if isinstance(A, LowRankUpdate):
        raise TypeError("expected a sparse matrix, got a LowRankUpdate")
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise NonFiniteError("sparse matrix has non-finite stored values")
    return A


def as_generator(A):
    """Validate a Lyapunov generator; sparse inputs are normalized to CSR."""
    if not isinstance(A, LowRankUpdate):
        A = as_sparse(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"generator must be square, got {A.shape}")
    return A


def to_dense(A):
    if isinstance(A, np.ndarray):
        return A
    return A.toarray()


def sp_mm(A, X):
    """Product of a generator (or any sparse matrix) with a dense block."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if A.shape[1] != X.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} by {X.shape}")
    Y = np.asarray(A @ X)
    if not np.all(np.isfinite(Y)):
        raise NonFiniteError("sparse product produced non-finite entries")
    return Y


def exact_onenorm(A):
    if isinstance(A, LowRankUpdate):
        return float(np.abs(A.toarray()).sum(axis=0).max(initial=0.0))
    if sp.issparse(A):
        return float(np.asarray(abs(A).sum(axis=0)).max(initial=0.0))
    return float(np.abs(A).sum(axis=0).max(initial=0.0))


def onenorm_power_est(A, k, seed=0, t=2, itmax=5, exact_below=EXACT_NORM_BELOW,
                      allow_zero=False):
    """Estimate ``||A^k||_1`` without forming ``A^k``.

    Uses the block power iteration of Higham and Tisseur on the map
    ``x -> A^k x`` and its transpose. The estimate is always attained by some
    unit vector, hence a lower bound on the true norm. For ``n <= exact_below``
    the power is formed densely and the norm is exact.

    Parameters
    ----------
    A
        Square generator (sparse, dense, or :class:`LowRankUpdate`).
    k
        Power, ``k >= 1`` (``k == 0`` only with ``allow_zero``, returning 1).
    seed
        Seed for the probe vectors; part of the result's identity.
    t, itmax
        Number of probe columns and maximal number of iterations.
    """
    k = int(k)
    if k == 0 and allow_zero:
        return 1.0
    if k < 1:
        raise ValueError(f"power must be >= 1, got {k}")
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionError(f"matrix must be square, got {A.shape}")
    if n == 0:
        return 0.0
    if n <= exact_below:
        return exact_onenorm(np.linalg.matrix_power(to_dense(A), k))
    if k == 1 and sp.issparse(A):
        return exact_onenorm(A)

    AT = A.T

    def apply(M, X):
        for _ in range(k):
            X = M @ X
        return np.asarray(X)

    return _block_onenormest(lambda X: apply(A, X), lambda X: apply(AT, X), n,
                             min(t, n), itmax, np.random.default_rng(seed))


def _block_onenormest(matmat, rmatmat, n, t, itmax, rng):
    X = np.ones((n, t))
    if t > 1:
        X[:, 1:] = rng.choice([-1.0, 1.0], size=(n, t - 1))
        _resample_parallel(X, None, rng)
    X /= n
    est_old = 0.0
    ind_best = 0
    ind = np.arange(t)
    ind_hist = np.zeros(0, dtype=int)
    S_old = None
    for it in range(itmax):
        Y = matmat(X)
        norms = np.abs(Y).sum(axis=0)
        j = int(np.argmax(norms))
        est = float(norms[j])
        if it > 0 and est <= est_old:
            return est_old
        est_old = est
        if it > 0:
            ind_best = int(ind[j])
        if it == itmax - 1:
            break
        S = np.where(Y >= 0, 1.0, -1.0)
        if S_old is not None and _all_parallel(S, S_old):
            break
        if t > 1:
            _resample_parallel(S, S_old, rng)
        Z = rmatmat(S)
        h = np.abs(Z).max(axis=1)
        if it > 0 and h.max() == h[ind_best]:
            break
        order = np.argsort(-h, kind="stable")
        if np.all(np.isin(order[:t], ind_hist)):
            break
        fresh = order[~np.isin(order, ind_hist)]
        ind = fresh[:t]
        if ind.size < t:
            break
        X = np.zeros((n, t))
        X[ind, np.arange(t)] = 1.0
        ind_hist = np.concatenate([ind_hist, ind])
        S_old = S
    return est_old


def _all_parallel(S, S_old):
    # sign vectors are parallel iff |s^T s_old| == n
    n = S.shape[0]
    return bool(np.all(np.abs(S.T @ S_old).max(axis=1) == n))


def _resample_parallel(S, S_old, rng, max_tries=10):
    n, t = S.shape
    for j in range(t):
        for _ in range(max_tries):
            dots = np.abs(S[:, :j].T @ S[:, j]) if j else np.zeros(0)
            if S_old is not None:
                dots = np.concatenate([dots, np.abs(S_old.T @ S[:, j])])
            if not np.any(dots == n):
                break
            S[:, j] = rng.choice([-1.0, 1.0], size=n)


@dataclass(frozen=True)
class LdlFactor:
    """Symmetric matrix ``L @ D @ L.T`` with ``L`` thin (``N x r``) and ``D`` small.

    ``D`` is symmetrized on construction. ``tol_met`` is False only when a
    rank cap forced truncation beyond the requested compression tolerance.
    """

    L: np.ndarray
    D: np.ndarray
    tol_met: bool = field(default=True, compare=False)

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        if L.ndim == 1:
            L = L[:, None]
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if L.ndim != 2 or D.shape != (L.shape[1], L.shape[1]):
            raise DimensionError(f"incompatible factor shapes L {L.shape}, D {D.shape}")
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(D))):
            raise NonFiniteError("LDL^T factor has non-finite entries")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "D", 0.5 * (D + D.T))

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, 0)), np.zeros((0, 0)))

    @classmethod
    def from_thin(cls, Z, scale=1.0):
        """Factor of ``scale * Z @ Z.T``."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        return cls(Z, scale * np.eye(Z.shape[1]))

    @property
    def n(self):
        return self.L.shape[0]

    @property
    def rank(self):
        return self.L.shape[1]

    def scaled(self, c):
        return LdlFactor(self.L, c * self.D, self.tol_met)

    def assemble(self, cap=DEFAULT_DENSE_CAP):
        return ldl_assemble(self, cap)

    def fro_norm(self):
        return ldl_fro_norm(self)


def ldl_blockdiag(factors, scales=None):
    """Factor of ``sum_i scales[i] * F_i``: concatenated ``L``, block-diagonal ``D``."""
    factors = list(factors)
    if not factors:
        raise ValueError("need at least one factor")
    if scales is None:
        scales = [1.0] * len(factors)
    n = factors[0].n
    if any(F.n != n for F in factors):
        raise DimensionError("factors have different row counts")
    L = np.hstack([F.L for F in factors])
    D = spla.block_diag(*[c * F.D for F, c in zip(factors, scales)])
    return LdlFactor(L, np.reshape(D, (L.shape[1], L.shape[1])))


def _symmetric_core(L, D):
    """Thin QR of L and the small symmetric core ``R D R^T``."""
    Q, R = spla.qr(L, mode="economic", check_finite=False)
    core = R @ D @ R.T
    return Q, 0.5 * (core + core.T)


def compress_ldl(F, tol=DEFAULT_COMPRESS_TOL, rank_cap=None):
    """Column compression of an LDL^T factor.

    Takes a thin QR ``L = Q R``, diagonalizes ``R D R^T = V diag(lam) V^T`` and
    drops the smallest ``|lam|`` as long as the dropped part keeps
    ``||L D L^T - L' D' L'^T||_F <= tol * ||L D L^T||_F``. Eigenvalues at the
    rounding level (``r * eps * max|lam|``) are always dropped. The result has
    orthonormal ``L'`` and diagonal ``D'`` with entries sorted by decreasing
    magnitude.

    If ``rank_cap`` forces a smaller rank than the tolerance allows, the capped
    factor is returned with ``tol_met=False``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    n, r = F.L.shape
    if rank_cap is None:
        rank_cap = n
    if rank_cap < 1:
        raise ValueError("rank_cap must be >= 1")
    if r == 0:
        return F
    Q, core = _symmetric_core(F.L, F.D)
    lam, V = spla.eigh(core, check_finite=False)
    order = np.argsort(np.abs(lam), kind="stable")
    lam, V = lam[order], V[:, order]
    absl = np.abs(lam)
    top = absl[-1]
    if top == 0.0:
        return LdlFactor.zero(n)
    cum = np.cumsum(lam ** 2)
    budget = (tol ** 2) * cum[-1]
    drop = int(np.searchsorted(cum, budget, side="right"))
    drop = max(drop, int(np.searchsorted(absl, lam.size * EPS * top, side="right")))
    keep = lam.size - drop
    tol_met = True
    if keep > rank_cap:
        keep = rank_cap
        tol_met = False
    idx = np.arange(lam.size - 1, lam.size - 1 - keep, -1)
    return LdlFactor(Q @ V[:, idx], np.diag(lam[idx]), tol_met)


def ldl_assemble(F, cap=DEFAULT_DENSE_CAP):
    """Dense ``L D L^T`` (test-oracle support)."""
    if F.n > cap:
        raise BudgetError(f"N={F.n} exceeds the dense cap {cap}")
    M = F.L @ F.D @ F.L.T
    return 0.5 * (M + M.T)


def ldl_fro_norm(F):
    """``||L D L^T||_F`` computed from the small core, without forming N x N."""
    if F.rank == 0:
        return 0.0
    _, core = _symmetric_core(F.L, F.D)
    return float(np.linalg.norm(core, "fro"))


def ldl_rel_diff(F, G):
    """``||F - G||_F / ||G||_F`` for two factors of the same size."""
    diff = ldl_blockdiag([F, G], [1.0, -1.0])
    ref = ldl_fro_norm(G)
    num = ldl_fro_norm(diff)
    return num / ref if ref > 0 else num
