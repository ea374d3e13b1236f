"""Closed-form results for the reference models.

Covers the confluent hypergeometric series, the oscillator stationary generating
function and its limits, the LVM product-geometric special case, the truncated
LVM coefficient dynamics, and the cannibal stationary polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class ConvergenceError(ArithmeticError):
    pass


def phi(a: float, c: float, x: float, rtol: float = 1e-16, max_terms: int = 100_000) -> float:
    """Kummer's confluent hypergeometric function ``1F1(a; c; x)`` by its power series.

    Terms are accumulated until ``|term| < rtol * |sum|``.  All terms are positive
    for ``a, c, x > 0``, so direct summation is stable for ``x`` up to a few hundred.
    """
    if c <= 0 and float(c).is_integer():
        raise ValueError(f"c must not be a non-positive integer, got {c}")
    total = 1.0
    term = 1.0
    for k in range(max_terms):
        term *= (a + k) * x / ((c + k) * (k + 1))
        total += term
        if term == 0.0 or abs(term) < rtol * abs(total):
            return total
    raise ConvergenceError(f"1F1 series did not converge in {max_terms} terms (x={x}, c={c})")


def oscillator_gf(mu: float, u: float, variant: str = "exact") -> float:
    """Stationary generating function ``G(u)`` of the self-excited oscillator.

    variant ``"exact"``: ``Phi(1, mu, mu (1+u)) / Phi(1, mu, 2 mu)``;
    ``"large_mu"``: ``exp(mu (u-1)) ((1+u)/2)^(1-mu)``;
    ``"small_mu"``: ``((2+u)(1+mu) + mu (1+u)^2) / (3 + 7 mu)``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if variant == "exact":
        return phi(1.0, mu, mu * (1 + u)) / phi(1.0, mu, 2 * mu)
    if variant == "large_mu":
        return math.exp(mu * (u - 1)) * ((1 + u) / 2) ** (1 - mu)
    if variant == "small_mu":
        return ((2 + u) * (1 + mu) + mu * (1 + u) ** 2) / (3 + 7 * mu)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class OscillatorMoments:
    mu: float
    mean: float
    factorial2: float       # <n(n-1)> = G''(1)
    variance: float
    rel_fluct: float
    mean_large_mu: float    # (mu+1)/2
    var_large_mu: float     # (3mu+1)/4
    mean_small_mu: float    # 1/3
    var_small_mu: float     # 2/9


def oscillator_moments(mu: float) -> OscillatorMoments:
    """Exact stationary mean and variance from the series, plus both asymptotic forms.

    Uses ``d/dx Phi(a,c,x) = (a/c) Phi(a+1,c+1,x)``, so
    ``<n> = Phi(2,mu+1,2mu)/Phi(1,mu,2mu)`` and
    ``<n(n-1)> = 2mu/(mu+1) Phi(3,mu+2,2mu)/Phi(1,mu,2mu)``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    x = 2 * mu
    base = phi(1.0, mu, x)
    mean = phi(2.0, mu + 1, x) / base
    fact2 = 2 * mu / (mu + 1) * phi(3.0, mu + 2, x) / base
    var = fact2 + mean - mean ** 2
    return OscillatorMoments(
        mu=mu,
        mean=mean,
        factorial2=fact2,
        variance=var,
        rel_fluct=math.sqrt(var) / mean,
        mean_large_mu=(mu + 1) / 2,
        var_large_mu=(3 * mu + 1) / 4,
        mean_small_mu=1 / 3,
        var_small_mu=2 / 9,
    )


def _lvm_kappa(lam1: float) -> float:
    if lam1 <= 0:
        raise ValueError("lambda1 must be positive")
    return lam1 ** 2 / (1 + lam1 ** 2)


def lvm_special_gf(lam1: float, u: float, v: float) -> float:
    """``(1-k)^2 / ((1-k u)(1-k v))`` with ``k = lam1^2/(1+lam1^2)``.

    Stationary generating function of the LVM when ``lam2^2 = 1 + lam1^2``.
    """
    k = _lvm_kappa(lam1)
    if k * u >= 1 or k * v >= 1:
        raise ValueError(f"pole: kappa*u or kappa*v >= 1 (kappa={k})")
    return (1 - k) ** 2 / ((1 - k * u) * (1 - k * v))


def lvm_special_moments(lam1: float) -> tuple[float, float, float]:
    """``(mean, variance, relative fluctuation)`` of either species in the special case."""
    s = lam1 ** 2
    return s, s + s ** 2, math.sqrt(1 + 1 / s)


@dataclass(frozen=True)
class PolynomialGF:
    """Homogeneous degree-``N`` generating function ``sum_k A_k u^k v^(N-k)``.

    ``coeffs`` are listed from ``u^N`` down to ``v^N``: ``coeffs[i]`` multiplies
    ``u^(N-i) v^i``.  For ``N = 2`` that is ``(a, b, c)`` of ``a u^2 + b uv + c v^2``.
    """

    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def A(self, k: int) -> float:
        """Coefficient of ``u^k v^(N-k)``."""
        return float(self.coeffs[self.degree - k])

    def __call__(self, u: float, v: float) -> float:
        n = self.degree
        i = np.arange(n + 1)
        return float(self.coeffs @ (u ** (n - i) * v ** i))

    @property
    def means(self) -> tuple[float, float]:
        n = self.degree
        i = np.arange(n + 1)
        return float(self.coeffs @ (n - i)), float(self.coeffs @ i)


@dataclass(frozen=True)
class CannibalParams:
    N: int
    a: float    # 2 lam2^2, rate constant of kin 1 eating kin 2
    b: float    # 2 lam1^2

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")

    @classmethod
    def from_lambdas(cls, N: int, lam1: float, lam2: float) -> "CannibalParams":
        return cls(N, 2 * lam2 ** 2, 2 * lam1 ** 2)

    @property
    def kappa(self) -> float:
        return self.a / self.b


def cannibal_stationary(params: CannibalParams) -> PolynomialGF:
    """Stationary polynomial with ``A_k`` proportional to ``a^k b^(N-k)``.

    Weights are built as powers of ``kappa`` (or ``1/kappa``) so nothing overflows.
    """
    n, kappa = params.N, params.kappa
    k = np.arange(n + 1)
    if kappa <= 1:
        w = kappa ** k
    else:
        w = (1 / kappa) ** (n - k)
    w = w / w.sum()
    return PolynomialGF(w[::-1].copy())


def _dlog_f(n: int, kappa: float) -> float:
    # d/dk ln((1 - k^N) / (1 - k))
    return ((n - 1) * kappa ** n - n * kappa ** (n - 1) + 1) / ((1 - kappa) * (1 - kappa ** n))


def cannibal_ratio(N: int, kappa: float) -> float:
    """``<n1>/<n2>`` in closed form through ``d ln f_N / d kappa``.

    ``kappa == 1`` returns 1, the symmetric limit, instead of the 0/0 form.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if kappa == 1:
        return 1.0
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    g = _dlog_f(N, kappa)
    return (kappa + kappa ** 2 * g) / (N - kappa * g)


def cannibal_ratio_direct(N: int, kappa: float) -> float:
    """Same ratio as a direct finite sum ``sum k kappa^k / sum (N-k) kappa^k``."""
    k = np.arange(N + 1)
    w = kappa ** k.astype(float)
    return float((k * w).sum() / ((N - k) * w).sum())


# -- truncated LVM: generating-function operators on homogeneous polynomials --

def _mul_v(poly):
    return {(i, j + 1): c for (i, j), c in poly.items()}


def _d_uv(poly):
    return {(i - 1, j - 1): c * i * j for (i, j), c in poly.items() if i and j}


def _times_v_minus_u(poly):
    out: dict = {}
    for (i, j), c in poly.items():
        out[(i, j + 1)] = out.get((i, j + 1), 0) + c
        out[(i + 1, j)] = out.get((i + 1, j), 0) - c
    return out


_OPERATORS = {
    # (v - u) d2/du dv (v G)
    "paper": lambda g: _times_v_minus_u(_d_uv(_mul_v(g))),
    # (v - u) v d2G/du dv
    "nicolis_prigogine": lambda g: _times_v_minus_u(_mul_v(_d_uv(g))),
}


def truncated_lvm_generator(N: int, variant: str = "paper") -> np.ndarray:
    """Matrix ``L`` with ``dA/dt = L A`` on the degree-``N`` monomial basis.

    The basis is ordered ``u^N, u^(N-1) v, ..., v^N`` (see :class:`PolynomialGF`).
    Each column is the image of one monomial under the differential operator.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    try:
        op = _OPERATORS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}") from None
    L = np.zeros((N + 1, N + 1))
    for col in range(N + 1):
        image = op({(N - col, col): 1})
        for (i, j), c in image.items():
            if c:
                assert i + j == N
                L[j, col] += c
    return L


def evolve_coefficients(L: np.ndarray, A0, t: float) -> PolynomialGF:
    """``A(t) = expm(L t) A0``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    a0 = np.asarray(A0.coeffs if isinstance(A0, PolynomialGF) else A0, dtype=float)
    if abs(a0.sum() - 1) > 1e-12:
        raise ValueError("initial coefficients must sum to 1")
    return PolynomialGF(scipy.linalg.expm(np.asarray(L) * t) @ a0)
