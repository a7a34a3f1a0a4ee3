"""Polynomial/Pólya ensemble models: weights, Mellin data, biorthogonal pairs,
correlation kernels and incomplete Mellin transforms, instantiated for the
Laguerre and Jacobi families.

The biorthogonal system is the one attached to a single weight w:

    p_j(x) = Σ_{c<=j} C(j,c) (-x)^c / w̃(c+1),    q_j(x) = (1/j!) d^j/dx^j [x^j w(x)],

with w̃ the Mellin transform of w.  q_j is always evaluated through the
family closed forms (Laguerre/Jacobi polynomials times the weight), never by
numerical differentiation.  Constructed models are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import mpmath as mp
import numpy as np

from . import specfun
from .exceptions import DomainError, PrecisionError
from .quad import DEFAULT_SPEC, QuadratureSpec, integrate
from .specfun import DD_DPS, falling_factorial, gamma_fn, ln_gamma

DOUBLE = "double"
DOUBLE_DOUBLE = "double-double"

# Incomplete Mellin transform of q_n, "auto" form switch points: beyond these
# arguments the hypergeometric series needs too much cancellation headroom
# (Laguerre, roughly e^{2x} worth) or converges too slowly near the support
# edge (Jacobi), and the boundary-term sum is the better route.
_QN_HYP_SWITCH = 5.0
_QN_JAC_SWITCH = 0.95


def theta(x) -> float:
    """Heaviside step with the Θ(0) = 1 convention (closed upper sets)."""
    return 1.0 if x >= 0 else 0.0


@dataclass(frozen=True)
class Laguerre:
    """Weight x^α e^{-x} on (0, ∞)."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= -1:
            raise DomainError(f"Laguerre requires alpha > -1, got {self.alpha}")

    name = "laguerre"


@dataclass(frozen=True)
class Jacobi:
    """Weight x^α (1-x)^{β+n-1} on (0, 1); β > 0 needed wherever q_n enters."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= -1:
            raise DomainError(f"Jacobi requires alpha > -1, got {self.alpha}")
        if self.beta <= -1:
            raise DomainError(f"Jacobi requires beta > -1, got {self.beta}")

    name = "jacobi"


Family = Union[Laguerre, Jacobi]


class EnsembleModel:
    """Immutable model of one ensemble: dimension, family, precision mode.

    Caches the integer Mellin values w̃(c+1) for c = 0..n and the monomial
    coefficients of the biorthogonal polynomials p_j.
    """

    def __init__(self, n: int, family: Family, precision: str = DOUBLE):
        if n < 1 or int(n) != n:
            raise DomainError(f"n must be a positive integer, got {n}")
        if precision not in (DOUBLE, DOUBLE_DOUBLE):
            raise DomainError(f"unknown precision mode {precision!r}")
        if n > 15 and precision == DOUBLE:
            raise PrecisionError(
                f"n={n} in double precision: alternating binomial sums lose all "
                f"significance; construct with precision={DOUBLE_DOUBLE!r}"
            )
        self.n = int(n)
        self.family = family
        self.precision = precision
        self.mellin = np.array([self._mellin_int(c + 1) for c in range(self.n + 1)])
        if np.any(~np.isfinite(self.mellin)) or np.any(self.mellin[: self.n] <= 0):
            raise DomainError("cached Mellin values w̃(c+1) must be finite and positive")
        # p_j monomial coefficients: coeff_p[j][c] = C(j,c) (-1)^c / w̃(c+1)
        self.coeff_p = [
            np.array([math.comb(j, c) * (-1) ** c / self.mellin[c] for c in range(j + 1)])
            for j in range(self.n)
        ]
        # memo tables for the incomplete Mellin transforms (grid evaluations
        # revisit the same abscissae constantly); keyed on float arguments
        self._qn_memo: dict = {}
        self._w_memo: dict = {}

    # -- basic data -------------------------------------------------------

    @property
    def is_jacobi(self) -> bool:
        return isinstance(self.family, Jacobi)

    @property
    def support(self):
        return (0.0, 1.0) if self.is_jacobi else (0.0, math.inf)

    @property
    def dd(self) -> bool:
        return self.precision == DOUBLE_DOUBLE

    def _jacobi_weight_exp(self) -> float:
        return self.family.beta + self.n - 1

    def _mellin_int(self, s: int) -> float:
        return self.mellin_w(float(s))

    def require_qn(self):
        if self.is_jacobi and self.family.beta <= 0:
            raise DomainError(
                "Jacobi with beta <= 0: the n-th derivative weight q_n is not "
                "integrable at 1; this operation needs beta > 0"
            )

    # -- weight and Mellin transforms -------------------------------------

    def weight(self, x):
        """w(x); Jacobi support is (0,1), enforced through the step factor."""
        if np.ndim(x) == 0 and not specfun._is_mp(x):
            x = float(x)
            if x <= 0:
                raise DomainError(f"weight requires x > 0, got {x}")
        a = self.family.alpha
        if not self.is_jacobi:
            if specfun._is_mp(x):
                return x**a * mp.exp(-x)
            if np.ndim(x) == 0:
                return x**a * math.exp(-x)
            return np.power(x, a) * np.exp(-x)
        e = self._jacobi_weight_exp()
        if specfun._is_mp(x):
            return x**a * (1 - x) ** e if x < 1 else mp.mpf(0)
        if np.ndim(x) == 0:
            return float(x**a * (1.0 - x) ** e) if x < 1.0 else 0.0
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = x < 1.0
        out[inside] = x[inside] ** a * (1.0 - x[inside]) ** e
        return out

    def mellin_w(self, s):
        """w̃(s) = ∫₀^∞ u^{s-1} w(u) du by the family closed form."""
        a = self.family.alpha
        if s + a <= 0:
            raise DomainError(f"mellin_w diverges for s={s} (needs s > {-a})")
        if specfun._is_mp(s):
            if not self.is_jacobi:
                return mp.gamma(s + a)
            b = mp.mpf(self.family.beta) + self.n
            return mp.gamma(s + a) * mp.gamma(b) / mp.gamma(s + a + b)
        if not self.is_jacobi:
            return math.exp(ln_gamma(s + a))
        b = self.family.beta + self.n
        return math.exp(ln_gamma(s + a) + ln_gamma(b) - ln_gamma(s + a + b))

    def incomplete_mellin_w(self, x, s):
        """w̃_x(s) = ∫₀ˣ u^{s-1} w(u) du (incomplete Mellin transform of w)."""
        a = self.family.alpha
        if s + a <= 0:
            raise DomainError(f"incomplete_mellin_w diverges for s={s}")
        if not specfun._is_mp(x) and x < 0:
            raise DomainError(f"incomplete_mellin_w requires x >= 0, got {x}")
        mp_args = specfun._is_mp(x) or specfun._is_mp(s)
        if not mp_args:
            key = (float(x), float(s))
            hit = self._w_memo.get(key)
            if hit is not None:
                return hit
        if not self.is_jacobi:
            out = specfun.lower_inc_gamma(s + a, x)
        else:
            one = mp.mpf(1) if specfun._is_mp(x) else 1.0
            out = specfun.inc_beta(min(x, one), s + a, self.family.beta + self.n)
        if not mp_args:
            if len(self._w_memo) > 200000:
                self._w_memo.clear()
            self._w_memo[key] = out
        return out

    # -- biorthogonal pair -------------------------------------------------

    def biorth_p(self, j: int, x, form: str = "family"):
        """p_j(x): 'family' = orthogonal-polynomial closed form, 'sum' = the
        generic binomial Mellin sum.  Both agree (tested)."""
        if not (0 <= j <= self.n - 1):
            raise DomainError(f"biorth_p requires 0 <= j <= n-1, got j={j}")
        if form == "sum":
            return self._p_sum(j, x)
        if form != "family":
            raise ValueError(f"unknown form {form!r}")
        a = self.family.alpha
        if not self.is_jacobi:
            pref = math.exp(ln_gamma(j + 1.0) - ln_gamma(j + a + 1.0))
            if specfun._is_mp(x):
                pref = mp.exp(mp.loggamma(j + 1) - mp.loggamma(j + mp.mpf(a) + 1))
            return pref * specfun.laguerre_poly(j, a, x)
        b = self.family.beta
        lp = (
            ln_gamma(j + 1.0)
            + ln_gamma(self.n + a + b + 1.0)
            - ln_gamma(j + a + 1.0)
            - ln_gamma(self.n + b + 0.0)
        )
        pref = mp.exp(lp) if specfun._is_mp(x) else math.exp(lp)
        return pref * specfun.jacobi_poly(j, a, b + self.n - j, 1 - 2 * x)

    def _p_sum(self, j: int, x):
        if specfun._is_mp(x):
            with mp.workdps(DD_DPS):
                total = mp.mpf(0)
                for c in range(j + 1):
                    wt = self.mellin_w(mp.mpf(c + 1))
                    total += math.comb(j, c) * (-x) ** c / wt
            return total
        coeffs = self.coeff_p[j]
        xx = np.asarray(x, dtype=float)
        acc = specfun._VecAccumulator(xx * 0.0)
        pw = np.ones_like(acc.s)
        for c in range(j + 1):
            acc.add(coeffs[c] * pw)
            pw = pw * xx
        out = acc.value
        return float(out) if np.ndim(x) == 0 else out

    def biorth_q(self, j: int, x):
        """q_j(x) = (1/j!) d^j[x^j w(x)] via the family closed forms only."""
        if not (0 <= j <= self.n):
            raise DomainError(f"biorth_q requires 0 <= j <= n, got j={j}")
        if j == self.n:
            self.require_qn()
        a = self.family.alpha
        if not self.is_jacobi:
            return specfun.laguerre_poly(j, a, x) * self.weight(x)
        e = self.family.beta + self.n - j - 1
        if specfun._is_mp(x):
            if x >= 1:
                return mp.mpf(0)
            return specfun.jacobi_poly(j, a, e, 1 - 2 * x) * x**a * (1 - x) ** e
        if np.ndim(x) == 0:
            x = float(x)
            if x <= 0:
                raise DomainError(f"biorth_q requires x > 0, got {x}")
            if x >= 1.0:
                return 0.0
            return float(specfun.jacobi_poly(j, a, e, 1.0 - 2.0 * x) * x**a * (1.0 - x) ** e)
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = x < 1.0
        xi = x[inside]
        out[inside] = specfun.jacobi_poly(j, a, e, 1.0 - 2.0 * xi) * xi**a * (1.0 - xi) ** e
        return out

    # -- kernel -------------------------------------------------------------

    def kernel(self, x, y):
        """K(x, y) = Σ_{b<n} q_b(x) p_b(y); degree n-1 polynomial in y."""
        total = 0.0
        for b in range(self.n):
            total = total + self.biorth_q(b, x) * self.biorth_p(b, y)
        return total

    def kernel_integral_form(self, x, y, spec: QuadratureSpec = DEFAULT_SPEC):
        """Cross-check form K(x,y) = n ∫₀¹ q_n(xt) p_{n-1}(yt) dt."""
        self.require_qn()

        def f(t):
            return self.biorth_q(self.n, x * t) * self.biorth_p(self.n - 1, y * t)

        hi = 1.0
        if self.is_jacobi and x > 1.0:
            hi = 1.0 / x  # q_n vanishes beyond the support edge
        val, _ = integrate(f, 0.0, hi, spec)
        return self.n * val

    def kernel_eval(self) -> "KernelEval":
        return KernelEval(self)

    # -- incomplete Mellin transform of q_n ---------------------------------

    def incomplete_mellin_qn(self, x, c: int, form: str = "auto"):
        """q̃_{n,x}(c+1) = ∫₀ˣ u^c q_n(u) du.

        'hyp' evaluates the hypergeometric closed form (₂F₂ for Laguerre,
        ₃F₂ for Jacobi); 'boundary' the integration-by-parts boundary-term
        sum.  'auto' picks whichever is better conditioned.
        """
        self.require_qn()
        if not (0 <= c <= self.n - 1):
            raise DomainError(f"incomplete_mellin_qn requires 0 <= c <= n-1, got c={c}")
        scalar_x = float(x) if not specfun._is_mp(x) else x
        if not specfun._is_mp(x) and scalar_x <= 0:
            if scalar_x == 0:
                return 0.0
            raise DomainError(f"incomplete_mellin_qn requires x > 0, got {x}")
        if self.is_jacobi and not specfun._is_mp(x) and scalar_x > 1.0:
            raise DomainError("incomplete_mellin_qn (Jacobi) requires x in (0, 1]")
        if form == "auto":
            if not self.is_jacobi and scalar_x > _QN_HYP_SWITCH:
                form = "boundary"
            elif self.is_jacobi and scalar_x > _QN_JAC_SWITCH:
                form = "boundary"
            else:
                form = "hyp"
        mp_args = specfun._is_mp(x)
        if not mp_args and not self.dd:
            key = (float(scalar_x), c, form)
            hit = self._qn_memo.get(key)
            if hit is not None:
                return hit
        if form == "hyp":
            out = self._qn_mellin_hyp(scalar_x, c)
        elif form == "boundary":
            out = self._qn_mellin_boundary(scalar_x, c)
        else:
            raise ValueError(f"unknown form {form!r}")
        if not mp_args and not self.dd:
            if len(self._qn_memo) > 200000:
                self._qn_memo.clear()
            self._qn_memo[key] = out
        return out

    def _qn_mellin_hyp(self, x, c: int):
        n, a = self.n, self.family.alpha
        if self.dd or specfun._is_mp(x):
            with mp.workdps(DD_DPS):
                return self._qn_mellin_hyp_mp(mp.mpf(x), c)
        s = a + c + 1.0
        lp = ln_gamma(n + a + 1.0) - ln_gamma(n + 1.0) - ln_gamma(a + 1.0)
        pref = math.exp(lp + s * math.log(x)) / s
        if not self.is_jacobi:
            params = specfun.HypSeriesParams(
                upper=(s, n + a + 1.0), lower=(a + 1.0, s + 1.0), argument=-x
            )
        else:
            b = self.family.beta
            params = specfun.HypSeriesParams(
                upper=(s, n + a + 1.0, 1.0 - n - b), lower=(a + 1.0, s + 1.0), argument=x
            )
        return pref * specfun.hyp_pfq(params).value

    def _qn_mellin_hyp_mp(self, x, c: int):
        n, a = self.n, mp.mpf(self.family.alpha)
        # alternating Laguerre series loses ~0.87·x digits; pad accordingly
        extra = 0 if self.is_jacobi else int(0.9 * float(x)) + 8
        with mp.workdps(mp.mp.dps + extra):
            s = a + c + 1
            pref = mp.exp(mp.loggamma(n + a + 1) - mp.loggamma(n + 1) - mp.loggamma(a + 1))
            pref = pref * x**s / s
            if not self.is_jacobi:
                ups, arg = (s, n + a + 1), -x
            else:
                ups, arg = (s, n + a + 1, 1 - n - mp.mpf(self.family.beta)), x
            term = mp.mpf(1)
            total = mp.mpf(1)
            tol = mp.mpf(10) ** (-DD_DPS - 4)
            for m in range(100000):
                num = mp.mpf(1)
                for u in ups:
                    num *= u + m
                den = (m + 1) * (a + 1 + m) * (s + 1 + m)
                term = term * num / den * arg
                total += term
                if abs(term) < tol * abs(total):
                    break
            return pref * total

    def _qn_mellin_boundary(self, x, c: int):
        """(1/n!) Σ_{p<=c} C(c,p) p! (-1)^p x^{c-p} d^{n-1-p}[x^n w(x)]."""
        n = self.n
        if self.dd or specfun._is_mp(x):
            with mp.workdps(DD_DPS):
                xm = mp.mpf(x)
                total = mp.mpf(0)
                for p in range(c + 1):
                    d = self._dm_xn_w(xm, n - 1 - p)
                    total += math.comb(c, p) * math.factorial(p) * (-1) ** p * xm ** (c - p) * d
                return total / math.factorial(n)
        terms = []
        for p in range(c + 1):
            d = self._dm_xn_w(float(x), n - 1 - p)
            terms.append(math.comb(c, p) * math.factorial(p) * (-1) ** p * x ** (c - p) * d)
        return specfun._neumaier(terms) / math.factorial(n)

    def _dm_xn_w(self, x, m: int):
        """m-th derivative of x^n w(x), by the Leibniz rule on the factors."""
        n, a = self.n, self.family.alpha
        use_mp = specfun._is_mp(x)
        if not self.is_jacobi:
            # d^m [x^{n+α} e^{-x}]
            e = mp.exp(-x) if use_mp else math.exp(-x)
            terms = []
            for i in range(m + 1):
                ff = falling_factorial(x * 0 + (n + a), i)
                terms.append(math.comb(m, i) * ff * x ** (n + a - i) * (-1) ** (m - i))
            s = sum(terms) if use_mp else specfun._neumaier(terms)
            return s * e
        # d^m [x^{n+α} (1-x)^{β+n-1}]
        bexp = self.family.beta + n - 1
        one = mp.mpf(1) if use_mp else 1.0
        terms = []
        for i in range(m + 1):
            ff1 = falling_factorial(x * 0 + (n + a), i)
            ff2 = falling_factorial(x * 0 + bexp, m - i)
            terms.append(
                math.comb(m, i)
                * ff1
                * x ** (n + a - i)
                * ff2
                * (one - x) ** (bexp - (m - i))
                * (-1) ** (m - i)
            )
        return sum(terms) if use_mp else specfun._neumaier(terms)

    # -- config serialization ------------------------------------------------

    def to_config(self) -> str:
        lines = [f"family={self.family.name}", f"n={self.n}", f"alpha={self.family.alpha}"]
        if self.is_jacobi:
            lines.append(f"beta={self.family.beta}")
        lines.append(f"precision={self.precision}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text: str) -> "EnsembleModel":
        kv = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DomainError(f"bad config line: {raw!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
        try:
            fam_name = kv["family"].lower()
            n = int(kv["n"])
            alpha = float(kv["alpha"])
        except KeyError as exc:
            raise DomainError(f"config missing key: {exc}") from exc
        if fam_name == "laguerre":
            family: Family = Laguerre(alpha)
        elif fam_name == "jacobi":
            family = Jacobi(alpha, float(kv["beta"]))
        else:
            raise DomainError(f"unknown family {fam_name!r}")
        return cls(n, family, kv.get("precision", DOUBLE))

    def __repr__(self):
        return f"EnsembleModel(n={self.n}, family={self.family!r}, precision={self.precision!r})"


class KernelEval:
    """Fast evaluator of the biorthogonal kernel via cached monomial data.

    Holds the model, the p_j monomial coefficients and the Mellin values, and
    evaluates K(x,y) = Σ_b q_b(x) p_b(y) with Horner sweeps.  Results agree
    with the careful per-polynomial path (tested); this one is for the hot
    quadrature loops.
    """

    def __init__(self, model: EnsembleModel):
        if model.dd:
            raise PrecisionError("KernelEval is the double-precision fast path")
        self.model = model
        self.mellin = model.mellin
        n = model.n
        # p coefficients padded to a dense (n, n) lower-triangular matrix
        self.coeff_p = np.zeros((n, n))
        for j in range(n):
            self.coeff_p[j, : j + 1] = model.coeff_p[j]
        # polynomial factors of q_b: Laguerre coefficients of L_b^{(α)}, or the
        # Jacobi sum in (-x)^k; weight factors are applied at evaluation time.
        self.coeff_q = np.zeros((n, n))
        a = model.family.alpha
        for b in range(n):
            if not model.is_jacobi:
                for k in range(b + 1):
                    self.coeff_q[b, k] = (
                        (-1) ** k
                        * math.exp(
                            ln_gamma(b + a + 1.0) - ln_gamma(a + k + 1.0) - ln_gamma(b - k + 1.0)
                        )
                        / math.factorial(k)
                    )
            else:
                e = model.family.beta + n - b - 1
                pref = math.exp(ln_gamma(b + a + 1.0) - ln_gamma(b + 1.0))
                for k in range(b + 1):
                    self.coeff_q[b, k] = (
                        pref
                        * (-1) ** k
                        * math.comb(b, k)
                        * math.exp(
                            ln_gamma(b + a + e + k + 1.0)
                            - ln_gamma(a + k + 1.0)
                            - ln_gamma(b + a + e + 1.0)
                        )
                    )
        if model.is_jacobi:
            self.q_exp = np.array([model.family.beta + n - b - 1 for b in range(n)])
        # plain-list copies for the scalar fast paths (numpy scalar ops are slow)
        self._cp = [list(self.coeff_p[b, : b + 1]) for b in range(n)]
        self._cq = [list(self.coeff_q[b, : b + 1]) for b in range(n)]
        self._qe = [float(e) for e in self.q_exp] if model.is_jacobi else None

    def p_scalar(self, b: int, y: float) -> float:
        acc = 0.0
        for k in range(b, -1, -1):
            acc = acc * y + self._cp[b][k]
        return acc

    def q_scalar(self, b: int, x: float) -> float:
        if self.model.is_jacobi and x >= 1.0:
            return 0.0
        acc = 0.0
        for k in range(b, -1, -1):
            acc = acc * x + self._cq[b][k]
        a = self.model.family.alpha
        if not self.model.is_jacobi:
            return acc * x**a * math.exp(-x)
        return acc * x**a * (1.0 - x) ** self._qe[b]

    def k_scalar(self, x: float, y: float) -> float:
        return sum(self.q_scalar(b, x) * self.p_scalar(b, y) for b in range(self.model.n))

    def p_all(self, y):
        """All p_b(y), b = 0..n-1; y scalar or 1D array -> shape (n,) or (n, m)."""
        y = np.asarray(y, dtype=float)
        out = np.zeros((self.model.n,) + y.shape)
        for b in range(self.model.n):
            acc = np.zeros_like(y)
            for k in range(b, -1, -1):
                acc = acc * y + self.coeff_p[b, k]
            out[b] = acc
        return out

    def q_all(self, x):
        """All q_b(x), b = 0..n-1, for x in the support."""
        x = np.asarray(x, dtype=float)
        n = self.model.n
        a = self.model.family.alpha
        out = np.zeros((n,) + x.shape)
        for b in range(n):
            acc = np.zeros_like(x)
            for k in range(b, -1, -1):
                acc = acc * x + self.coeff_q[b, k]
            out[b] = acc
        if not self.model.is_jacobi:
            out *= np.power(x, a) * np.exp(-x)
        else:
            inside = x < 1.0
            base = np.where(inside, 1.0 - x, 0.0)
            for b in range(n):
                out[b] = np.where(inside, out[b] * np.power(x, a) * base ** self.q_exp[b], 0.0)
        return out

    def __call__(self, x, y):
        """K(x, y); x and y may be scalars or same-shape arrays (or one scalar)."""
        if np.ndim(x) == 0 and np.ndim(y) == 0:
            return self.k_scalar(float(x), float(y))
        qx = self.q_all(x)
        py = self.p_all(y)
        sx, sy = qx.shape[1:], py.shape[1:]
        if sx == sy:
            out = np.einsum("b...,b...->...", qx, py)
        elif not sy:
            out = np.einsum("b...,b->...", qx, py)
        elif not sx:
            out = np.einsum("b,b...->...", qx, py)
        else:
            raise ValueError("kernel arguments must share a shape or one must be scalar")
        return float(out) if out.ndim == 0 else out
