"""Choice of Taylor degree ``m`` and scaling ``s`` for phi_l of a Lyapunov operator."""
import math
from dataclasses import dataclass

from lyaphi.linalg import as_generator, onenorm_power_est
from lyaphi.theta import MAX_DEGREE, builtin_table

DEFAULT_M_MAX = 55
DEFAULT_P_MAX = 7


@dataclass(frozen=True)
class PhiParams:
    """Selected parameters; ``cost = s * (m + l)`` operator products."""

    l: int
    m: int
    s: int
    p_star: int
    alpha: float
    cost: int

    @property
    def degree(self):
        return self.m + self.l


def power_norms(A, k_max, seed=0):
    """``[||A^0||_1, ..., ||A^k_max||_1]`` with estimated entries for k >= 1."""
    return [1.0] + [onenorm_power_est(A, k, seed=seed + k) for k in range(1, k_max + 1)]


def alpha_bounds(A, p_max=DEFAULT_P_MAX, seed=0, norms=None):
    """Bounds ``alpha_p >= ||L_A^k||^{1/k}`` for ``p = 1..p_max``.

    With ``d_p = max_k ||A^k||_1 ||A^{p-k}||_1`` (``k = 0..p``) the bound is
    ``alpha_p = 2 max(d_p^{1/p}, d_{p+1}^{1/(p+1)})``.

    Returns
    -------
    list of (p, alpha_p)
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    A = as_generator(A)
    if norms is None:
        norms = power_norms(A, p_max + 1, seed)
    d = {p: max(norms[k] * norms[p - k] for k in range(p + 1))
         for p in range(1, p_max + 2)}
    return [(p, 2.0 * max(d[p] ** (1.0 / p), d[p + 1] ** (1.0 / (p + 1))))
            for p in range(1, p_max + 1)]


def scaling_for(alpha, theta):
    return max(1, math.ceil(alpha / theta))


def feasible_grid(l, m_max=DEFAULT_M_MAX, p_max=DEFAULT_P_MAX):
    """All ``(p, m + l)`` with ``p (p - 1) <= m + l <= m_max`` and ``m >= 1``."""
    grid = []
    for p in range(1, p_max + 1):
        for mpl in range(max(p * (p - 1), l + 1), m_max + 1):
            grid.append((p, mpl))
    return grid


def select_m_s(A, l, m_max=DEFAULT_M_MAX, p_max=DEFAULT_P_MAX, table=None, seed=0,
               alphas=None):
    """Minimize ``s (m + l)`` over the feasible ``(p, m)`` grid.

    Ties go to the smallest ``m + l``, then the smallest ``p``.
    """
    l = int(l)
    if l < 0:
        raise ValueError("l must be >= 0")
    if table is None:
        table = builtin_table()
    m_max = min(m_max, MAX_DEGREE, table.max_degree)
    grid = feasible_grid(l, m_max, p_max)
    if not grid:
        raise ValueError(f"no feasible degree for l={l} with m_max={m_max}")
    if alphas is None:
        alphas = dict(alpha_bounds(A, p_max, seed))
    else:
        alphas = dict(alphas)
    for a in alphas.values():
        if not math.isfinite(a):
            raise ValueError("norm bound is not finite")
    best = None
    for p, mpl in grid:
        s = scaling_for(alphas[p], table[mpl])
        key = (s * mpl, mpl, p)
        if best is None or key < best[0]:
            best = (key, p, mpl, s)
    (cost, mpl, p), _, _, s = best
    return PhiParams(l=l, m=mpl - l, s=s, p_star=p, alpha=alphas[p], cost=cost)
