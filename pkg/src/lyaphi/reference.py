"""Dense reference solutions for small DLE/DRE instances (independent of the phi code)."""
import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from lyaphi.errors import BudgetError
from lyaphi.phi_dense import oracle_phi_symmetric

DENSE_REFERENCE_CAP = 4096
SPARSE_KRON_CAP = 200  # lifted dimension N^2 <= 40000


def _dense(A):
    return A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)


def dle_exact_symmetric(A, B, X0, t):
    """``X(t) = e^{t L_A}[X0] + t phi_1(t L_A)[B B^T]`` for symmetric ``A`` (dense)."""
    A = _dense(A)
    if A.shape[0] > DENSE_REFERENCE_CAP:
        raise BudgetError("dense DLE reference is limited to N <= 4096")
    X0 = X0.assemble(DENSE_REFERENCE_CAP) if hasattr(X0, "assemble") else X0
    return (oracle_phi_symmetric(t * A, X0, 0)
            + t * oracle_phi_symmetric(t * A, B @ B.T, 1))


def dle_exact_kron(A, B, X0, t):
    """DLE solution at ``t`` from the sparse Kronecker lift of ``L_A``.

    Works for any ``A`` (symmetric or not). With ``M = I (x) A + A (x) I`` and
    ``q = vec(B B^T)``, the exponential of the augmented matrix
    ``[[M, q], [0, 0]]`` applied to ``[vec X0; 1]`` yields
    ``e^{tM} vec X0 + t phi_1(tM) q`` in its leading block.
    """
    A = sp.csr_matrix(A, dtype=float)
    N = A.shape[0]
    if N > SPARSE_KRON_CAP:
        raise BudgetError(f"sparse Kronecker reference is limited to N <= {SPARSE_KRON_CAP}")
    X0 = X0.assemble(N) if hasattr(X0, "assemble") else np.asarray(X0, dtype=float)
    I = sp.identity(N, format="csr")
    M = sp.kron(I, A) + sp.kron(A, I)
    q = (B @ B.T).reshape(-1, order="F")
    aug = sp.bmat([[M, sp.csr_matrix(q[:, None])], [None, sp.csr_matrix((1, 1))]],
                  format="csr")
    v = np.append(X0.reshape(-1, order="F"), 1.0)
    X = expm_multiply(t * aug, v)[:-1].reshape(N, N, order="F")
    return 0.5 * (X + X.T)


def dre_reference(A, B, Ct, X0, t_end, h=1e-5):
    """DRE solution at ``t_end`` by the associated linear Hamiltonian flow.

    With ``[U; V]' = [[-A^T, B B^T], [C^T C, A]] [U; V]`` and ``X = V U^{-1}``,
    ``X`` solves the Riccati equation exactly. Each step of size ``h`` applies
    the precomputed propagator ``expm(h H)`` to ``[I; X]``; short steps keep
    ``U`` well conditioned.
    """
    A = _dense(A)
    n = A.shape[0]
    if n > DENSE_REFERENCE_CAP:
        raise BudgetError("dense DRE reference is limited to N <= 4096")
    X = X0.assemble(DENSE_REFERENCE_CAP) if hasattr(X0, "assemble") else np.array(X0)
    H = np.block([[-A.T, B @ B.T], [Ct @ Ct.T, A]])
    nsteps = max(1, int(round(t_end / h)))
    E = spla.expm((t_end / nsteps) * H)
    E11, E12 = E[:n, :n], E[:n, n:]
    E21, E22 = E[n:, :n], E[n:, n:]
    for _ in range(nsteps):
        U = E11 + E12 @ X
        V = E21 + E22 @ X
        X = np.linalg.solve(U.T, V.T).T
        X = 0.5 * (X + X.T)
    return X
