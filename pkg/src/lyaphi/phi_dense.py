"""Dense scaling-and-recursion evaluation of ``phi_l(L_A)[Q]`` and independent oracles.

This module exists for testing. :func:`phi_apply_dense` follows the recursion
step for step on full ``N x N`` matrices; :func:`oracle_phi_kron` lifts the
problem to ``N^2`` unknowns and takes one augmented matrix exponential.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from lyaphi.errors import BudgetError, DimensionError
from lyaphi.params import PhiParams, select_m_s

DENSE_CAP = 256
KRON_CAP = 45
ITERATION_BUDGET = 200_000


def lyap_apply(A, X):
    """``A X + X A^T`` for dense, sparse or low-rank-updated ``A``."""
    X = np.asarray(X, dtype=float)
    if A.shape[0] != A.shape[1] or X.shape != (A.shape[0], A.shape[0]):
        raise DimensionError(f"lyap_apply: A {A.shape}, X {X.shape}")
    AX = np.asarray(A @ X)
    return AX + AX.T if _is_sym(X) else AX + np.asarray(A @ X.T).T


def _is_sym(X):
    return X.shape[0] == X.shape[1] and np.array_equal(X, X.T)


@dataclass(frozen=True)
class DensePhiResult:
    value: np.ndarray
    params: PhiParams


def mu_coeffs(k, l):
    """``mu_{k,j} = (1 - 1/k)^{l-j} (1/k)^j / (l-j)!`` for ``j = 1..l``."""
    return [(1.0 - 1.0 / k) ** (l - j) * (1.0 / k) ** j / math.factorial(l - j)
            for j in range(1, l + 1)]


def taylor_phi_dense(A_s, Q, m, l):
    """``sum_{k=0}^{m} L^k[Q] / (k+l)!`` by Horner."""
    Y = Q / math.factorial(m + l)
    for k in range(m - 1, -1, -1):
        Y = lyap_apply(A_s, Y) + Q / math.factorial(k + l)
    return Y


def taylor_exp_dense(A_s, X, degree):
    """``sum_{k=0}^{degree} L^k[X] / k!`` by Horner."""
    Y = X
    for k in range(degree, 0, -1):
        Y = X + lyap_apply(A_s, Y) / k
    return Y


def phi_apply_dense(A, Q, l, params=None, cap=DENSE_CAP, seed=0):
    """Scaling-and-recursion approximation of ``phi_l(L_A)[Q]`` on dense matrices."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if n > cap:
        raise BudgetError(f"N={n} exceeds the dense cap {cap}")
    if A.shape != (n, n):
        raise DimensionError(f"A {A.shape} does not match Q {Q.shape}")
    if params is None:
        params = select_m_s(A, l, seed=seed)
    m, s = params.m, params.s
    if s * (m + l) > ITERATION_BUDGET:
        raise BudgetError(f"s*(m+l) = {s * (m + l)} exceeds {ITERATION_BUDGET} "
                          f"(s={s}, m={m}); the operator norm is too large")
    A_s = A / s
    B = {l: taylor_phi_dense(A_s, Q, m, l)}
    if s == 1:
        return DensePhiResult(_sym(B[l]), params)
    for k in range(l - 1, 0, -1):
        B[k] = lyap_apply(A_s, B[k + 1]) + Q / math.factorial(k)
    Phi = B[l]
    for k in range(2, s + 1):
        C = sum((mu * B[j] for j, mu in enumerate(mu_coeffs(k, l), start=1)),
                np.zeros_like(Q))
        Phi = (1.0 - 1.0 / k) ** l * taylor_exp_dense(A_s, Phi, m + l) + C
    return DensePhiResult(_sym(Phi), params)


def _sym(X):
    return 0.5 * (X + X.T)


def kron_lift(A):
    """``M`` with ``M vec(X) = vec(A X + X A^T)`` (column-major vec)."""
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    I = np.eye(A.shape[0])
    return np.kron(I, A) + np.kron(A, I)


def oracle_phi_kron_all(A, Q, l_max, cap=KRON_CAP):
    """``[phi_0(M) q, ..., phi_{l_max}(M) q]`` reshaped to ``N x N`` matrices.

    ``exp([[M, q e_1^T], [0, J]])`` with ``J`` the ``l_max x l_max`` upper
    shift carries ``e^M`` in its leading block and ``phi_j(M) q`` in column
    ``j`` of its top-right block.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if n > cap:
        raise BudgetError(f"Kronecker oracle unavailable for N={n} > {cap}")
    M = kron_lift(A)
    q = Q.reshape(-1, order="F")
    nn = n * n
    W = np.zeros((nn + l_max, nn + l_max))
    W[:nn, :nn] = M
    if l_max > 0:
        W[:nn, nn] = q
        W[nn:, nn:] = np.eye(l_max, k=1)
    E = spla.expm(W)
    cols = [E[:nn, :nn] @ q] + [E[:nn, nn + j] for j in range(l_max)]
    return [c.reshape(n, n, order="F") for c in cols]


def oracle_phi_kron(A, Q, l, cap=KRON_CAP):
    return oracle_phi_kron_all(A, Q, l, cap)[l]


def phi_scalar(z, l):
    """Scalar ``phi_l(z)`` for real arrays ``z``."""
    z = np.asarray(z, dtype=float)
    if l == 0:
        return np.exp(z)
    out = np.empty_like(z)
    small = np.abs(z) < 1.0
    zs = z[small]
    acc = np.zeros_like(zs)
    for k in range(30, -1, -1):
        acc = acc * zs + 1.0 / math.factorial(k + l)
    out[small] = acc
    zb = z[~small]
    val = np.expm1(zb) / zb
    for j in range(2, l + 1):
        val = (val - 1.0 / math.factorial(j - 1)) / zb
    out[~small] = val
    return out


def oracle_phi_symmetric(A, Q, l):
    """``phi_l(L_A)[Q]`` for symmetric ``A`` by diagonalizing ``A = V diag(w) V^T``.

    In the eigenbasis ``L_A`` acts entrywise as multiplication by
    ``w_i + w_j``, the eigenvalues of the Kronecker lift.
    """
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    if not np.allclose(A, A.T, rtol=0, atol=1e-14 * np.abs(A).max(initial=1.0)):
        raise ValueError("oracle_phi_symmetric needs a symmetric generator")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    Qh = V.T @ Q @ V
    F = phi_scalar(w[:, None] + w[None, :], l)
    return V @ (F * Qh) @ V.T
