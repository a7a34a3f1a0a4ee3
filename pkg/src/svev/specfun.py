"""Special functions for the Laguerre/Jacobi spectral statistics stack.

Everything here is built on the explicit series of the classical definitions,
accumulated with Neumaier-compensated summation in double precision.  When a
sum is too ill-conditioned for doubles (alternating terms much larger than the
result) the evaluation transparently escalates to mpmath working precision;
passing an ``mpmath.mpf`` argument forces the extended path throughout.

All functions are pure and reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import mpmath as mp
import numpy as np

from .exceptions import DomainError, NonConvergenceError

# Working precision (significant digits) of the extended path; roughly
# double-double accuracy with headroom for the n=25 alternating sums.
DD_DPS = 40

# Degree / argument thresholds beyond which the polynomial sums leave plain
# double accumulation (alternating binomial terms start eating digits).
_POLY_DD_DEGREE = 8
_POLY_DD_ARG = 100.0

# max |term| / |sum| above which a double-precision series result is rejected
# and recomputed at extended precision.
_COND_LIMIT = 1e5


def _is_mp(x) -> bool:
    return isinstance(x, (mp.mpf, mp.mpc))


def _neumaier(terms):
    """Compensated sum of an iterable of floats (or arrays)."""
    s = 0.0
    c = 0.0
    for t in terms:
        tot = s + t
        if abs(s) >= abs(t):
            c += (s - tot) + t
        else:
            c += (t - tot) + s
        s = tot
    return s + c


class _VecAccumulator:
    """Neumaier accumulator that works for scalars and numpy arrays alike."""

    def __init__(self, like):
        self.s = np.zeros_like(like, dtype=float)
        self.c = np.zeros_like(like, dtype=float)

    def add(self, term):
        tot = self.s + term
        swap = np.abs(self.s) >= np.abs(term)
        self.c = self.c + np.where(swap, (self.s - tot) + term, (term - tot) + self.s)
        self.s = tot

    @property
    def value(self):
        return self.s + self.c


def ln_gamma(x):
    """log Γ(x) for x > 0; accepts floats, arrays and mpf."""
    if _is_mp(x):
        if x <= 0:
            raise DomainError(f"ln_gamma requires x > 0, got {x}")
        return mp.loggamma(x)
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0):
        raise DomainError(f"ln_gamma requires x > 0, got {x}")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    from scipy.special import gammaln

    return gammaln(arr)


def gamma_fn(x):
    """Γ(x) for x > 0."""
    if _is_mp(x):
        if x <= 0:
            raise DomainError(f"gamma requires x > 0, got {x}")
        return mp.gamma(x)
    return math.exp(ln_gamma(x)) if np.ndim(x) == 0 else np.exp(ln_gamma(x))


def lower_inc_gamma(s, x):
    """Lower incomplete gamma γ(s, x) = ∫₀ˣ u^{s-1} e^{-u} du.

    Series for x < s+1, continued fraction otherwise (both classical).
    Monotone nondecreasing in x; γ(s, x) → Γ(s) as x → ∞.
    """
    use_mp = _is_mp(s) or _is_mp(x)
    if use_mp:
        s, x = mp.mpf(s), mp.mpf(x)
    else:
        s, x = float(s), float(x)
    if s <= 0:
        raise DomainError(f"lower_inc_gamma requires s > 0, got s={s}")
    if x < 0:
        raise DomainError(f"lower_inc_gamma requires x >= 0, got x={x}")
    if x == 0:
        return mp.mpf(0) if use_mp else 0.0
    m = mp if use_mp else math
    # prefactor x^s e^{-x}
    front = m.exp(s * m.log(x) - x)
    if x < s + 1.0:
        # γ(s,x) = x^s e^{-x} Σ_k x^k / (s (s+1) ... (s+k))
        term = 1.0 / s if not use_mp else mp.mpf(1) / s
        total = term
        k = 0
        eps = mp.mpf(10) ** (-mp.mp.dps + 2) if use_mp else 1e-17
        while True:
            k += 1
            term *= x / (s + k)
            total += term
            if abs(term) < abs(total) * eps or k > 10000:
                break
        return front * total
    # Γ(s,x) by modified Lentz continued fraction, then γ = Γ(s) − Γ(s,x)
    tiny = mp.mpf(10) ** (-mp.mp.dps - 10) if use_mp else 1e-300
    eps = mp.mpf(10) ** (-mp.mp.dps + 2) if use_mp else 1e-16
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    upper = front * h
    return gamma_fn(s) - upper


def inc_beta(x, a, b):
    """Non-regularized incomplete Beta B(x; a, b) = ∫₀ˣ u^{a-1}(1-u)^{b-1} du."""
    use_mp = any(map(_is_mp, (x, a, b)))
    if use_mp:
        x, a, b = mp.mpf(x), mp.mpf(a), mp.mpf(b)
    else:
        x, a, b = float(x), float(a), float(b)
    if not (0 <= x <= 1):
        raise DomainError(f"inc_beta requires 0 <= x <= 1, got x={x}")
    if a <= 0 or b <= 0:
        raise DomainError(f"inc_beta requires a, b > 0, got a={a}, b={b}")
    if x == 0:
        return mp.mpf(0) if use_mp else 0.0
    beta_full = gamma_fn(a) * gamma_fn(b) / gamma_fn(a + b)
    if x == 1:
        return beta_full
    m = mp if use_mp else math
    front = m.exp(a * m.log(x) + b * m.log(1.0 - x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(x, a, b, use_mp) / a
    return beta_full - front * _betacf(1.0 - x, b, a, use_mp) / b


def _betacf(x, a, b, use_mp):
    """Continued fraction for the incomplete Beta (modified Lentz)."""
    tiny = mp.mpf(10) ** (-mp.mp.dps - 10) if use_mp else 1e-300
    eps = mp.mpf(10) ** (-mp.mp.dps + 2) if use_mp else 1e-16
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0 if not use_mp else mp.mpf(1)
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for i in range(1, 10000):
        m2 = 2 * i
        aa = i * (b - i) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + i) * (qab + i) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _poly_series(t0, ratio_fn, nterms, x):
    """Finite sum Σ_k t_k with t_{k+1} = t_k * ratio_fn(k), compensated.

    ``x`` may be a float, ndarray or mpf; t0 and the ratios broadcast with it.
    """
    if _is_mp(x):
        total = t0
        term = t0
        for k in range(nterms):
            term = term * ratio_fn(k)
            total += term
        return total
    if not isinstance(x, np.ndarray):
        s = float(t0)
        c = 0.0
        term = s
        for k in range(nterms):
            term *= ratio_fn(k)
            tot = s + term
            if abs(s) >= abs(term):
                c += (s - tot) + term
            else:
                c += (term - tot) + s
            s = tot
        return s + c
    acc = _VecAccumulator(np.asarray(x, dtype=float) * 0.0)
    term = np.asarray(t0, dtype=float) + np.zeros_like(acc.s)
    acc.add(term)
    for k in range(nterms):
        term = term * ratio_fn(k)
        acc.add(term)
    return acc.value


def laguerre_poly(j, alpha, x):
    """Generalized Laguerre polynomial L_j^{(α)}(x) by its explicit sum.

    Escalates to extended precision for j >= 8 or |x| >= 100 (scalar and
    array inputs alike), where the alternating sum loses double accuracy.
    """
    if j < 0 or int(j) != j:
        raise DomainError(f"laguerre_poly requires integer j >= 0, got {j}")
    j = int(j)
    if j == 0:
        return x * 0.0 + 1.0 if isinstance(x, np.ndarray) else (mp.mpf(1) if _is_mp(x) else 1.0)
    big = j >= _POLY_DD_DEGREE or np.max(np.abs(x)) >= _POLY_DD_ARG
    if _is_mp(x) or big:
        return _dispatch_mp_poly(_laguerre_mp, x, j, alpha)
    t0 = math.exp(ln_gamma(j + alpha + 1.0) - ln_gamma(alpha + 1.0) - ln_gamma(j + 1.0))

    def ratio(k):
        return (-(x) * (j - k)) / ((k + 1.0) * (alpha + k + 1.0))

    return _poly_series(t0, ratio, j, x)


def _laguerre_mp(x, j, alpha):
    with mp.workdps(DD_DPS):
        xm, am = mp.mpf(x), mp.mpf(alpha)
        t0 = mp.exp(mp.loggamma(j + am + 1) - mp.loggamma(am + 1) - mp.loggamma(j + 1))
        term, total = t0, t0
        for k in range(j):
            term *= (-xm * (j - k)) / ((k + 1) * (am + k + 1))
            total += term
    return total


def jacobi_poly(j, alpha, beta, x):
    """Jacobi polynomial P_j^{(α,β)}(x) by its explicit sum in (x-1)/2."""
    if j < 0 or int(j) != j:
        raise DomainError(f"jacobi_poly requires integer j >= 0, got {j}")
    j = int(j)
    if j == 0:
        return x * 0.0 + 1.0 if isinstance(x, np.ndarray) else (mp.mpf(1) if _is_mp(x) else 1.0)
    big = j >= _POLY_DD_DEGREE or np.max(np.abs(x)) >= _POLY_DD_ARG
    if _is_mp(x) or big:
        return _dispatch_mp_poly(_jacobi_mp, x, j, alpha, beta)
    z = (x - 1.0) / 2.0
    t0 = math.exp(ln_gamma(j + alpha + 1.0) - ln_gamma(alpha + 1.0) - ln_gamma(j + 1.0))

    def ratio(k):
        return z * ((j - k) / (k + 1.0)) * ((j + alpha + beta + k + 1.0) / (alpha + k + 1.0))

    return _poly_series(t0, ratio, j, x)


def _jacobi_mp(x, j, alpha, beta):
    with mp.workdps(DD_DPS):
        xm, am, bm = mp.mpf(x), mp.mpf(alpha), mp.mpf(beta)
        z = (xm - 1) / 2
        t0 = mp.exp(mp.loggamma(j + am + 1) - mp.loggamma(am + 1) - mp.loggamma(j + 1))
        term, total = t0, t0
        for k in range(j):
            term *= z * mp.mpf(j - k) / (k + 1) * (j + am + bm + k + 1) / (am + k + 1)
            total += term
    return total


def _dispatch_mp_poly(fn, x, *params):
    if _is_mp(x):
        return fn(x, *params)
    if isinstance(x, np.ndarray):
        flat = [float(fn(xi, *params)) for xi in x.ravel()]
        return np.array(flat).reshape(x.shape)
    return float(fn(x, *params))


@dataclass(frozen=True)
class HypSeriesParams:
    """Parameters of a generalized hypergeometric series pFq.

    No lower parameter may be a non-positive integer (series poles);
    term_tol is the relative truncation tolerance.
    """

    upper: Sequence[float]
    lower: Sequence[float]
    argument: float
    term_tol: float = 1e-15
    max_terms: int = 20000

    def __post_init__(self):
        if self.term_tol <= 0:
            raise DomainError("term_tol must be > 0")
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")
        for b in self.lower:
            if float(b) <= 0 and float(b) == int(b):
                raise DomainError(f"lower parameter {b} is a non-positive integer (series pole)")


class HypSeriesResult(NamedTuple):
    value: float
    achieved_tol: float
    terms: int


def hyp_pfq(params: HypSeriesParams) -> HypSeriesResult:
    """Truncated generalized hypergeometric series Σ_m Π(aᵢ)_m/Π(bᵢ)_m x^m/m!.

    Terms are added until the relative term drops below ``term_tol`` (twice in
    a row, to be safe against alternating-term flukes) or ``max_terms`` is hit,
    in which case a NonConvergenceError is raised.  Ill-conditioned sums are
    recomputed at extended precision before being returned.
    """
    value, tol, terms, cond = _hyp_series_float(params)
    if cond > _COND_LIMIT and not _is_mp(params.argument):
        value = _hyp_series_mp(params, cond)
        # extended path leaves ~DD_DPS-digit result, rounded to double
        tol = min(tol, 1e-16 * cond / 10**DD_DPS + 1e-16)
    return HypSeriesResult(float(value), float(tol), terms)


def _hyp_series_float(params: HypSeriesParams):
    x = float(params.argument)
    term = 1.0
    total = 1.0
    comp = 0.0
    max_abs = 1.0
    below = 0
    m = 0
    while m < params.max_terms:
        num = 1.0
        for a in params.upper:
            num *= a + m
        den = m + 1.0
        for b in params.lower:
            den *= b + m
        term = term * num / den * x
        m += 1
        tot = total + term
        if abs(total) >= abs(term):
            comp += (total - tot) + term
        else:
            comp += (term - tot) + total
        total = tot
        max_abs = max(max_abs, abs(term))
        if term == 0.0:  # terminating series
            below = 2
            break
        if abs(term) < params.term_tol * max(abs(total + comp), 1e-300):
            below += 1
            if below >= 2:
                break
        else:
            below = 0
    value = total + comp
    achieved = abs(term) / max(abs(value), 1e-300)
    if below < 2:
        raise NonConvergenceError(
            f"pFq did not meet term_tol={params.term_tol} in {params.max_terms} terms "
            f"(last relative term {achieved:.2e})"
        )
    cond = max_abs / max(abs(value), 1e-300)
    return value, achieved, m, cond


def _hyp_series_mp(params: HypSeriesParams, cond: float) -> float:
    dps = max(DD_DPS, 20 + int(math.log10(max(cond, 1.0))))
    with mp.workdps(dps):
        x = mp.mpf(params.argument)
        term = mp.mpf(1)
        total = mp.mpf(1)
        for m in range(params.max_terms):
            num = mp.mpf(1)
            for a in params.upper:
                num *= mp.mpf(a) + m
            den = mp.mpf(m + 1)
            for b in params.lower:
                den *= mp.mpf(b) + m
            term = term * num / den * x
            total += term
            if abs(term) < mp.mpf(params.term_tol) * abs(total) / 100:
                break
        return float(total)


def falling_factorial(a, k: int):
    """a (a-1) ... (a-k+1); k = 0 gives 1.  Works for float and mpf ``a``."""
    out = a * 0 + 1
    for i in range(k):
        out = out * (a - i)
    return out
