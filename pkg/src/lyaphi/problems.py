"""Benchmark generators: 2-d heat and advection-diffusion operators, random factors."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from lyaphi.linalg import LdlFactor, as_sparse

KINDS = ("heat2d", "advdiff", "file")


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "heat2d"
    n: int = 10
    alpha: float = 1.0
    p: int = 5
    q: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "file" and self.n < 2:
            raise ValueError("n must be >= 2")
        if self.kind == "heat2d" and not self.alpha > 0:
            raise ValueError("alpha must be positive for heat2d")


def tridiag(n, lower, diag, upper):
    return sp.diags([lower * np.ones(n - 1), diag * np.ones(n), upper * np.ones(n - 1)],
                    [-1, 0, 1], format="csr")


def gen_heat2d(n, alpha=1.0):
    """``alpha (n+1)^2 (I kron K + K kron I)`` with ``K = tridiag(1, -2, 1)``, ``N = n^2``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    K = tridiag(n, 1.0, -2.0, 1.0)
    I = sp.identity(n, format="csr")
    A = (alpha * (n + 1) ** 2) * (sp.kron(I, K) + sp.kron(K, I))
    return as_sparse(A)


def gen_advdiff(n, convection=True):
    """5-point discretization of ``Lap u - 10 x u_x - 100 y u_y`` on the unit square.

    Dirichlet boundary, ``x_i = i/(n+1)``, ``y_j = j/(n+1)``; unknowns ordered
    with ``x`` running fastest. First derivatives use centered differences.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    h_inv = n + 1
    A = gen_heat2d(n, 1.0)
    if not convection:
        return A
    grid = np.arange(1, n + 1) / (n + 1)
    I = sp.identity(n, format="csr")
    Dc = tridiag(n, -1.0, 0.0, 1.0) * (h_inv / 2.0)
    X = sp.diags(np.tile(grid, n))
    Y = sp.diags(np.repeat(grid, n))
    conv = -10.0 * X @ sp.kron(I, Dc) - 100.0 * Y @ sp.kron(Dc, I)
    return as_sparse(A + conv)


def random_block(n, k, seed):
    """``n x k`` standard normal block from a seeded generator."""
    return np.random.default_rng(seed).standard_normal((n, k))


def dle_data(n, alpha, p=5, r0=2, seed=0):
    """Heat-equation DLE: ``A``, ``B`` (``N x p``) and ``X0 = L0 L0^T`` with ``L0`` ``N x r0``."""
    A = gen_heat2d(n, alpha)
    N = n * n
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((N, p))
    L0 = rng.standard_normal((N, r0))
    return A, B, LdlFactor.from_thin(L0)


def dre_default_BC(N, n):
    """Default input/output blocks: ``B = ones / sqrt(N)``; ``C^T`` samples the first grid row."""
    B = np.ones((N, 1)) / np.sqrt(N)
    Ct = np.zeros((N, 1))
    Ct[:n, 0] = 1.0
    return B, Ct


def dre_data(n, r0=1, seed=0):
    """Advection-diffusion DRE: ``A``, ``B``, ``C^T`` and a random rank-``r0`` ``X0``."""
    A = gen_advdiff(n)
    N = n * n
    B, Ct = dre_default_BC(N, n)
    L0 = np.random.default_rng(seed).standard_normal((N, r0))
    return A, B, Ct, LdlFactor.from_thin(L0)
