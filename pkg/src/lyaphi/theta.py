"""Quasi-backward-error radii for truncated Taylor evaluation of the exponential.

For a degree ``d = m + l`` truncation ``T_d(x) = sum_{k<=d} x^k / k!`` the
scalar function ``h_d(x) = log(exp(-x) T_d(x)) = sum_{k>d} c_k x^k`` measures the
backward perturbation of the exponent. ``theta_d`` is the largest ``theta``
with ``hbar_d(theta) = sum_{k>=d} |c_{k+1}| theta^k <= tol``.

The runtime path reads a shipped table (:func:`builtin_table`); the
high-precision series arithmetic in :func:`hseries_coeffs` regenerates it.
"""
import functools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import mpmath

from lyaphi.errors import PrecisionError

TOL_DOUBLE = 2.0 ** -53
MAX_DEGREE = 55
TABLE_FILE = "theta_tol2m53.tsv"
TABLE_VERSION = 1

# Maximal theta_{m+l} for Tol = 2^-53, as published for these degrees.
PUBLISHED_THETA = {
    5: 2.40e-3, 10: 1.44e-1, 15: 6.41e-1, 20: 1.44e0, 25: 2.43e0, 30: 3.54e0,
    35: 4.73e0, 40: 5.97e0, 45: 7.25e0, 50: 8.55e0, 55: 9.87e0,
}

_DPS = 120
_ZERO_SENTINEL = mpmath.mpf("1e-90")


@dataclass(frozen=True)
class HSeries:
    """|c_k| for ``k = degree_mpl + 1 .. k_trunc`` (high-precision)."""

    degree_mpl: int
    coeffs: tuple

    @property
    def k_trunc(self):
        return self.degree_mpl + len(self.coeffs)

    def abs_coeff(self, k):
        if k <= self.degree_mpl:
            return mpmath.mpf(0)
        return self.coeffs[k - self.degree_mpl - 1]


def default_ktrunc(mpl):
    return 2 * mpl + 60


def hseries_coeffs(mpl, k_trunc=None, dps=_DPS):
    """Power-series coefficients of ``log(exp(-x) T_mpl(x))``, in absolute value.

    The product ``exp(-x) T_mpl(x)`` is formed coefficient-wise and its
    logarithm by the recurrence ``k g_k = k f_k - sum_{j<k} j g_j f_{k-j}``, at
    ``dps`` decimal digits (120 by default). The coefficients through degree
    ``mpl`` vanish analytically; they are checked against a 1e-90 sentinel and
    then zeroed.
    """
    mpl = int(mpl)
    if not 1 <= mpl <= 60:
        raise ValueError(f"degree must be in 1..60, got {mpl}")
    if k_trunc is None:
        k_trunc = default_ktrunc(mpl)
    if k_trunc < 2 * mpl + 50:
        raise ValueError(f"k_trunc must be >= 2*mpl + 50 = {2 * mpl + 50}")
    with mpmath.workdps(dps):
        fact = [mpmath.factorial(k) for k in range(k_trunc + 1)]
        f = [mpmath.fsum((-1) ** (k - j) / (fact[k - j] * fact[j])
                         for j in range(min(k, mpl) + 1))
             for k in range(k_trunc + 1)]
        g = [mpmath.mpf(0)] * (k_trunc + 1)
        for k in range(1, k_trunc + 1):
            acc = mpmath.fsum(j * g[j] * f[k - j] for j in range(1, k))
            g[k] = f[k] - acc / k
        worst = max(abs(g[k]) for k in range(1, mpl + 1))
        if worst > _ZERO_SENTINEL:
            raise PrecisionError(
                f"leading coefficients of h_{mpl} are {mpmath.nstr(worst, 3)}, not zero")
        coeffs = tuple(abs(g[k]) for k in range(mpl + 1, k_trunc + 1))
    return HSeries(mpl, coeffs)


def hbar(series, x):
    """``hbar(x) = sum_{k >= mpl} |c_{k+1}| x^k`` by Horner in double precision."""
    c = [float(v) for v in series.coeffs]
    acc = 0.0
    for v in reversed(c):
        acc = acc * x + v
    return acc * x ** series.degree_mpl


def theta_for(mpl, tol=TOL_DOUBLE, k_trunc=None, series=None, bracket=(0.0, 20.0),
              rtol=1e-14):
    """Largest ``theta`` in ``bracket`` with ``hbar_mpl(theta) <= tol`` (bisection)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if series is None:
        series = hseries_coeffs(mpl, k_trunc)
    lo, hi = bracket
    if hbar(series, lo) > tol or hbar(series, hi) <= tol:
        raise PrecisionError(
            f"no sign change of hbar_{mpl} - tol on {bracket}; series too short?")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if hbar(series, mid) <= tol:
            lo = mid
        else:
            hi = mid
    return lo


def theta_converged(mpl, tol=TOL_DOUBLE, check_rtol=1e-10):
    """theta with the truncation-doubling convergence check applied."""
    k = default_ktrunc(mpl)
    t1 = theta_for(mpl, tol, k)
    t2 = theta_for(mpl, tol, 2 * k)
    if abs(t2 - t1) > check_rtol * t2:
        raise PrecisionError(f"theta_{mpl} not converged in k_trunc: {t1} vs {t2}")
    return t1


@dataclass(frozen=True)
class ThetaTable:
    tol: float
    theta: dict

    def __getitem__(self, mpl):
        return self.theta[mpl]

    @property
    def max_degree(self):
        return max(self.theta)


def generate_table(degrees=range(1, MAX_DEGREE + 1), tol=TOL_DOUBLE):
    return ThetaTable(tol, {d: theta_converged(d, tol) for d in degrees})


def format_table(table):
    lines = [f"# theta table version {TABLE_VERSION}",
             f"# tol = {table.tol!r}",
             "# m_plus_l\ttheta"]
    lines += [f"{d}\t{table.theta[d]!r}" for d in sorted(table.theta)]
    return "\n".join(lines) + "\n"


def parse_table(text):
    tol = TOL_DOUBLE
    theta = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            if key.strip() == "tol":
                tol = float(val)
            continue
        d, val = line.split("\t")
        theta[int(d)] = float(val)
    return ThetaTable(tol, theta)


def write_table(path, table=None):
    if table is None:
        table = generate_table()
    Path(path).write_text(format_table(table), encoding="utf-8")
    return table


@functools.cache
def builtin_table():
    """Shipped table for ``m + l = 1..55`` at ``tol = 2^-53``."""
    text = resources.files("lyaphi").joinpath("data", TABLE_FILE).read_text("utf-8")
    return parse_table(text)


def three_digits(x):
    """``x`` rounded to 3 significant digits."""
    return float(f"{x:.2e}")


if __name__ == "__main__":
    import sys

    write_table(sys.argv[1] if len(sys.argv) > 1
                else Path(__file__).parent / "data" / TABLE_FILE)
