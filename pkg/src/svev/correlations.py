"""Analytic correlation formulas between squared eigenradii and squared
singular values of polynomial/Pólya ensembles.

Conventions used throughout (r = squared eigenradius, a = squared singular
value, K = biorthogonal kernel, n = matrix dimension):

* 1-point densities:   ρ_SV(a) = K(a,a)/n,
                       ρ_EV(r) = w(r)·(1/n)·Σ_c r^c/w̃(c+1)   (Pólya form)
                       ρ_EV(r) = n ∫₀^∞dt ∫₀^r (dv/v) φ(v/r,t) K(v,−rt)
                                                             (kernel form)
* cross-covariance:    cov(r;a) = f_{1,1} − ρ_EV ρ_SV, evaluated either by
  the two-sum closed form (cov_closed) or by −∫dt Ω(r,a,t) K(a,−rt)
  (cov_integral); the two derivations are independent and are cross-checked.
* f_{1,k}: derivative-free (k+1)×(k+1) determinant under a single t-integral.
* conditional density of one squared eigenradius given all n squared singular
  values: ensemble-independent determinant ratio (conditional_density).

All evaluations are pure given an immutable context; grid drivers may fan out
over points freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import mpmath as mp
import numpy as np

from . import specfun
from .ensembles import DOUBLE_DOUBLE, EnsembleModel, KernelEval, theta
from .exceptions import DegeneracyError, DomainError, PrecisionError
from .quad import DEFAULT_SPEC, QuadratureSpec, integrate, integrate_piecewise, integrate_semi_infinite
from .specfun import DD_DPS

# Test hook: the formula-triangle verification flips this sign to prove the
# suite actually exercises the Ψ-dependent terms.  Leave at +1.0.
_PSI0_SIGN = 1.0

_DEGENERACY_REL_GAP = 1e-9


def psi_gamma(n: int, gamma: int, x):
    """Ψ_γ in the analytically simplified forms (no (nx-1) denominator)."""
    if gamma == 0:
        return _PSI0_SIGN * x * (1 - x) ** (n - 2) * (n * x - 1)
    if gamma == 1:
        return x * (1 - x) ** (n - 1)
    raise ValueError("gamma must be 0 or 1")


def phi_weight(n: int, x, t):
    """φ(x,t) = x(1-x)^{n-2}(1+t)^{-(n+2)}[(1-x/n)(1+t) - (1-x)(1+1/n)]."""
    return (
        x
        * (1 - x) ** (n - 2)
        * (1 + t) ** (-(n + 2))
        * ((1 - x / n) * (1 + t) - (1 - x) * (1 + 1.0 / n))
    )


@dataclass
class CovContext:
    """Everything the correlation formulas need: model, kernel, quadrature."""

    model: EnsembleModel
    kernel: Optional[KernelEval] = None
    quad: QuadratureSpec = DEFAULT_SPEC
    derivative_step: float = 1e-5

    def __post_init__(self):
        if not (1e-8 < self.derivative_step < 1e-3):
            raise DomainError("derivative_step must lie in (1e-8, 1e-3)")
        if self.kernel is None and not self.model.dd:
            self.kernel = self.model.kernel_eval()

    @property
    def n(self) -> int:
        return self.model.n


def make_context(model: EnsembleModel, quad: QuadratureSpec = DEFAULT_SPEC, **kw) -> CovContext:
    return CovContext(model=model, quad=quad, **kw)


@dataclass
class DensityTable:
    """Evaluated density values on a 1D or 2D grid, with provenance metadata."""

    axes: tuple
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for ax in self.axes:
            ax = np.asarray(ax)
            if ax.ndim != 1 or len(ax) > 1 and np.any(np.diff(ax) <= 0):
                raise DomainError("grid axes must be strictly increasing 1D arrays")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("density values must be finite")

    def to_csv(self, path, columns):
        rows = []
        if len(self.axes) == 1:
            for x, v in zip(self.axes[0], self.values):
                rows.append((x, v))
        else:
            for i, x in enumerate(self.axes[0]):
                for j, y in enumerate(self.axes[1]):
                    rows.append((x, y, self.values[i, j]))
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# support handling
# ---------------------------------------------------------------------------


def _check_support(model: EnsembleModel, value: float, name: str):
    lo, hi = model.support
    if not (lo < value < hi):
        raise DomainError(f"{name}={value} outside the open support ({lo}, {hi})")


def _check_distinct(a: Sequence[float]):
    a = np.asarray(a, dtype=float)
    if len(a) > 1:
        scale = float(np.mean(np.abs(a)))
        gaps = np.diff(np.sort(a))
        if np.min(gaps) < _DEGENERACY_REL_GAP * scale:
            raise DegeneracyError(
                "near-degenerate squared singular values (min gap below "
                f"{_DEGENERACY_REL_GAP}·scale); perturb them first, e.g. with "
                "perturb_degenerate()"
            )


def perturb_degenerate(a, eps_rel: float = 1e-6):
    """Spread tied values symmetrically by a relative ±ε so determinant
    formulas become evaluable; the exact result is recovered as ε → 0."""
    a = np.asarray(a, dtype=float).copy()
    order = np.argsort(a)
    scale = float(np.mean(np.abs(a)))
    sorted_a = a[order]
    groups = []
    start = 0
    for i in range(1, len(a) + 1):
        if i == len(a) or sorted_a[i] - sorted_a[i - 1] > _DEGENERACY_REL_GAP * scale:
            groups.append((start, i))
            start = i
    for lo, hi in groups:
        m = hi - lo
        if m > 1:
            center = sorted_a[lo:hi].mean()
            offsets = (np.arange(m) - (m - 1) / 2.0) * eps_rel * center
            sorted_a[lo:hi] = center + offsets
    out = np.empty_like(a)
    out[order] = sorted_a
    return out


# ---------------------------------------------------------------------------
# 1-point densities
# ---------------------------------------------------------------------------


def rho_sv(ctx: CovContext, a):
    """ρ_SV(a) = K(a,a)/n."""
    model = ctx.model
    if model.dd:
        with mp.workdps(DD_DPS):
            am = mp.mpf(a)
            tot = mp.mpf(0)
            for b in range(model.n):
                tot += model.biorth_q(b, am) * model.biorth_p(b, am, form="sum")
            return float(tot / model.n)
    return ctx.kernel(a, a) / ctx.n


def rho_ev_polya(ctx: CovContext, r):
    """ρ_EV(r) = w(r)·(1/n)·Σ_{c<n} r^c / w̃(c+1) (Pólya closed form)."""
    model = ctx.model
    n = model.n
    if model.dd:
        with mp.workdps(DD_DPS):
            rm = mp.mpf(r)
            if rm <= 0:
                raise DomainError("rho_ev_polya requires r > 0")
            if model.is_jacobi and rm >= 1:
                return 0.0
            tot = mp.mpf(0)
            for c in range(n):
                tot += rm**c / model.mellin_w(mp.mpf(c + 1))
            return float(model.weight(rm) * tot / n)
    r_arr = np.asarray(r, dtype=float)
    pw = np.ones_like(r_arr)
    tot = np.zeros_like(r_arr)
    for c in range(n):
        tot += pw / model.mellin[c]
        pw = pw * r_arr
    out = model.weight(r_arr if r_arr.ndim else float(r_arr)) * tot / n
    return float(out) if np.ndim(r) == 0 else out


class RadialCache:
    """Per-(context, r) cache behind the t-integral formulas.

    The v-integrals of the second (derivative-free) representation factorize:
    with x = v/r,

        ∫₀^r (dv/v) φ(v/r,t) K(v,y) = u_{n+1}(t)·Σ_b p_b(y) J_A[b]
                                     − u_{n+2}(t)·Σ_b p_b(y) J_B[b],

        J_A[b] = ∫₀¹ (1-x)^{n-2} (1-x/n) q_b(rx) dx,
        J_B[b] = (1+1/n) ∫₀¹ (1-x)^{n-1} q_b(rx) dx,
        u_m(t) = (1+t)^{-m},

    so each (r, ·) evaluation costs 2n one-dimensional quadratures once,
    regardless of how many t nodes and second arguments follow.
    """

    def __init__(self, ctx: CovContext, r: float):
        if not r > 0:
            raise DomainError(f"RadialCache requires r > 0, got {r}")
        if ctx.kernel is None:
            raise PrecisionError("the t-integral formulas run in double precision only")
        self.ctx = ctx
        self.r = float(r)
        n = ctx.n
        ke = ctx.kernel
        spec = ctx.quad
        self.JA = np.empty(n)
        self.JB = np.empty(n)
        # substitution x = u^2 regularizes the x^alpha endpoint of q_b
        pieces = [0.0, 1.0]
        if ctx.model.is_jacobi and self.r > 1.0:
            pieces = [0.0, math.sqrt(1.0 / self.r), 1.0]
        for b in range(n):

            def fa(u, b=b):
                x = u * u
                return 2.0 * u * (1.0 - x) ** (n - 2) * (1.0 - x / n) * ke.q_scalar(b, self.r * x)

            def fb(u, b=b):
                x = u * u
                return 2.0 * u * (1.0 - x) ** (n - 1) * ke.q_scalar(b, self.r * x)

            self.JA[b], _ = integrate_piecewise(fa, pieces, spec)
            vb, _ = integrate_piecewise(fb, pieces, spec)
            self.JB[b] = (1.0 + 1.0 / n) * vb
        self._proj = {}

    def _projections(self, y: float):
        """Σ_b p_b(y) J_A[b] and Σ_b p_b(y) J_B[b], cached per y."""
        key = float(y)
        hit = self._proj.get(key)
        if hit is None:
            pv = np.array([self.ctx.kernel.p_scalar(b, key) for b in range(self.ctx.n)])
            hit = (float(pv @ self.JA), float(pv @ self.JB))
            self._proj[key] = hit
        return hit

    def v_integral(self, y: float, t: float) -> float:
        """∫₀^r (dv/v) φ(v/r,t) K(v,y) by the factorized form."""
        n = self.ctx.n
        sa, sb = self._projections(y)
        return (1.0 + t) ** (-(n + 1)) * sa - (1.0 + t) ** (-(n + 2)) * sb

    def s_of_t(self, t: float) -> float:
        """∫₀^r (dv/v) φ(v/r,t) K(v,−rt): same factorization, y = −rt."""
        n = self.ctx.n
        ke = self.ctx.kernel
        y = -self.r * t
        pv_a = 0.0
        pv_b = 0.0
        for b in range(n):
            p = ke.p_scalar(b, y)
            pv_a += p * self.JA[b]
            pv_b += p * self.JB[b]
        return (1.0 + t) ** (-(n + 1)) * pv_a - (1.0 + t) ** (-(n + 2)) * pv_b

    def omega(self, a: float, t: float) -> float:
        """Ω(r,a,t) = ∫₀^r (dv/v) φ(v/r,t) K(v,a) − Θ(r−a) φ(a/r,t)/a."""
        out = self.v_integral(a, t)
        if self.r >= a:
            out -= phi_weight(self.ctx.n, a / self.r, t) / a
        return out


def omega_direct(ctx: CovContext, r: float, a: float, t: float) -> float:
    """Ω(r,a,t) by literal nested quadrature (validation path for the
    factorized RadialCache form); the v-integral is split at v = a."""
    n = ctx.n
    ke = ctx.kernel

    def f(u):
        x = u * u
        return 2.0 * u * phi_weight(n, x, t) / x * ke.k_scalar(r * x, a)

    pieces = [0.0, 1.0]
    if 0.0 < a < r:
        pieces = [0.0, math.sqrt(a / r), 1.0]
    val, _ = integrate_piecewise(f, pieces, ctx.quad)
    if r >= a:
        val -= phi_weight(n, a / r, t) / a
    return val


def rho_ev_polynomial(ctx: CovContext, r, cache: Optional[RadialCache] = None):
    """ρ_EV(r) = n ∫₀^∞ dt ∫₀^r (dv/v) φ(v/r,t) K(v,−rt), by quadrature."""
    if np.ndim(r) != 0:
        return np.array([rho_ev_polynomial(ctx, ri) for ri in np.asarray(r, dtype=float)])
    r = float(r)
    if r <= 0:
        return 0.0
    cache = cache or RadialCache(ctx, r)
    val, _ = integrate_semi_infinite(cache.s_of_t, ctx.quad)
    return ctx.n * val


# ---------------------------------------------------------------------------
# cross-covariance densities
# ---------------------------------------------------------------------------


def _require_k_order(ctx: CovContext, allow_n2: bool):
    if ctx.n <= 2 and not allow_n2:
        raise DomainError(
            "closed covariance forms are derived for n > 2; pass allow_n2=True "
            "to evaluate anyway (compare against the direct n=2 formulas)"
        )


def _qn_mellin_all(model: EnsembleModel, a):
    """q̃_{n,a}(c+1) for c = 0..n-1 in the model's precision mode."""
    return [model.incomplete_mellin_qn(a, c) for c in range(model.n)]


def cov_closed(ctx: CovContext, r: float, a: float, allow_n2: bool = False):
    """Two-sum closed form of cov(r;a) for Pólya ensembles.

    All sums run in the model's precision mode; in double precision the terms
    are Neumaier-compensated.
    """
    model = ctx.model
    _require_k_order(ctx, allow_n2)
    model.require_qn()
    _check_support(model, a, "a")
    _check_support(model, r, "r")
    if model.dd:
        with mp.workdps(DD_DPS):
            return float(_cov_closed_mp(model, mp.mpf(r), mp.mpf(a)))
    n = model.n
    qt = _qn_mellin_all(model, a)
    wr = model.weight(r)
    pn1 = model.biorth_p(n - 1, a)
    # inner j-sum split as c·S0 − S1 (both c-independent)
    s0_terms, s1_terms = [], []
    for j in range(n):
        xj = (
            math.comb(n - 1, j)
            * (model.incomplete_mellin_w(r, j + 1.0) / model.mellin[j])
            * (-a) ** j
            / r ** (j + 1)
        )
        s0_terms.append(xj)
        s1_terms.append(j * xj)
    s0 = specfun._neumaier(s0_terms)
    s1 = specfun._neumaier(s1_terms)
    step = theta(r - a)
    one_m = 1.0 - a / r
    terms = []
    for c in range(n):
        base = (r / a) ** c / model.mellin[c] * qt[c]
        if step:
            terms.append(
                base / r * one_m ** (n - 2) * ((n - c - 1) * (a / r) + c)
            )
        terms.append(-base * (wr * pn1 + c * s0 - s1))
    return specfun._neumaier(terms) / (n * a)


def _cov_closed_mp(model: EnsembleModel, r, a):
    n = model.n
    qt = [model.incomplete_mellin_qn(a, c) for c in range(n)]
    wr = model.weight(r)
    pn1 = model.biorth_p(n - 1, a, form="sum")
    s0 = mp.mpf(0)
    s1 = mp.mpf(0)
    for j in range(n):
        xj = (
            math.comb(n - 1, j)
            * (model.incomplete_mellin_w(r, mp.mpf(j + 1)) / model.mellin_w(mp.mpf(j + 1)))
            * (-a) ** j
            / r ** (j + 1)
        )
        s0 += xj
        s1 += j * xj
    step = 1 if r >= a else 0
    total = mp.mpf(0)
    for c in range(n):
        base = (r / a) ** c / model.mellin_w(mp.mpf(c + 1)) * qt[c]
        if step:
            total += base / r * (1 - a / r) ** (n - 2) * ((n - c - 1) * (a / r) + c)
        total -= base * (wr * pn1 + c * s0 - s1)
    return total / (n * a)


def cov_integral(
    ctx: CovContext,
    r: float,
    a: float,
    allow_n2: bool = False,
    cache: Optional[RadialCache] = None,
):
    """cov(r;a) = −∫₀^∞ dt Ω(r,a,t) K(a,−rt), evaluated numerically."""
    _require_k_order(ctx, allow_n2)
    _check_support(ctx.model, a, "a")
    _check_support(ctx.model, r, "r")
    cache = cache or RadialCache(ctx, r)
    ke = ctx.kernel

    def f(t):
        return cache.omega(a, t) * ke.k_scalar(a, -r * t)

    val, _ = integrate_semi_infinite(f, ctx.quad)
    return -val


class _HVCache:
    """H_γ / V_γ ingredients for the first-order expansion route of cov_{1,k}.

    Ĉ(r; x, y) = Σ_γ H_γ(r, x)·[Θ(r−y) Ψ_γ(y/r)/y − V_γ(r, y)], where x is the
    argument that entered through K(x, −rt) and y the one through Ω(r, y, t).
    """

    def __init__(self, ctx: CovContext, r: float, a: Sequence[float]):
        model = ctx.model
        model.require_qn()
        n = model.n
        self.ctx = ctx
        self.r = float(r)
        self.n = n
        self.H = {}
        self.V = {}
        wr = model.weight(self.r)
        winc = [model.incomplete_mellin_w(self.r, j + 1.0) for j in range(n)]
        for av in a:
            av = float(av)
            qt = _qn_mellin_all(model, av)
            h0_terms, h1_terms = [], []
            for c in range(n):
                base = self.r**c * qt[c] / (model.mellin[c] * av ** (c + 1))
                h0_terms.append(base)
                h1_terms.append((c + 1) * base)
            self.H[av] = (
                specfun._neumaier(h0_terms) / n,
                specfun._neumaier(h1_terms) / n,
            )
            v1_terms, dv_terms = [], []
            for j in range(n):
                cj = math.comb(n - 1, j) * (-av) ** j / (model.mellin[j] * self.r ** (j + 1))
                v1_terms.append(cj * winc[j])
                dv_terms.append((j + 1) * cj * winc[j])
            v1 = specfun._neumaier(v1_terms)
            v0 = wr * model.biorth_p(n - 1, av) - specfun._neumaier(dv_terms)
            self.V[av] = (v0, v1)

    def c_hat(self, x: float, y: float) -> float:
        h0, h1 = self.H[float(x)]
        v0, v1 = self.V[float(y)]
        t0 = -v0
        t1 = -v1
        if self.r >= y:
            t0 += psi_gamma(self.n, 0, y / self.r) / y
            t1 += psi_gamma(self.n, 1, y / self.r) / y
        return h0 * t0 + h1 * t1


def cov_1k(ctx: CovContext, r: float, a: Sequence[float], allow_n2: bool = False):
    """1,k cross-covariance density by the first-order determinant expansion:

        cov_{1,k} = ((n−k)!/(n−1)!) ∂_μ det[K(a_b,a_c) + μ Ĉ(r;a_b,a_c)]|_{μ=0},

    realized as the cofactor sum over single-column replacements.
    """
    model = ctx.model
    _require_k_order(ctx, allow_n2)
    a = np.asarray(a, dtype=float)
    k = len(a)
    if not (1 <= k <= model.n):
        raise DomainError(f"need 1 <= k <= n, got k={k}")
    for av in a:
        _check_support(model, av, "a")
    _check_support(model, r, "r")
    _check_distinct(a)
    if model.dd:
        raise PrecisionError("cov_1k runs in double precision; use cov_closed for k=1 dd grids")
    hv = _HVCache(ctx, r, a)
    ke = ctx.kernel
    kmat = np.array([[ke.k_scalar(ab, ac) for ac in a] for ab in a])
    cmat = np.array([[hv.c_hat(ab, ac) for ac in a] for ab in a])
    total = 0.0
    for m in range(k):
        work = kmat.copy()
        work[:, m] = cmat[:, m]
        total += det_lu(work)
    return math.factorial(model.n - k) / math.factorial(model.n - 1) * total


def f_1k(
    ctx: CovContext,
    r: float,
    a: Sequence[float],
    cache: Optional[RadialCache] = None,
):
    """1,k-point correlation function, derivative-free determinant form:

        f_{1,k} = ((n−k)!/(n−1)!) ∫₀^∞ dt det[[S(t), Ω(r,a_c,t)],
                                               [K(a_b,−rt), K(a_b,a_c)]].
    """
    model = ctx.model
    if model.n <= 2:
        raise DomainError("f_1k requires n > 2 (use the direct n=2 formulas)")
    a = np.asarray(a, dtype=float)
    k = len(a)
    if not (1 <= k <= model.n):
        raise DomainError(f"need 1 <= k <= n, got k={k}")
    for av in a:
        _check_support(model, av, "a")
    if not r > 0:
        return 0.0
    _check_distinct(a)
    cache = cache or RadialCache(ctx, r)
    ke = ctx.kernel
    kmat = np.array([[ke.k_scalar(ab, ac) for ac in a] for ab in a])
    qa = np.array([[ke.q_scalar(b, ab) for b in range(model.n)] for ab in a])

    def integrand(t):
        m = np.empty((k + 1, k + 1))
        m[0, 0] = cache.s_of_t(t)
        for c in range(k):
            m[0, c + 1] = cache.omega(a[c], t)
        y = -r * t
        pv = np.array([ke.p_scalar(b, y) for b in range(model.n)])
        m[1:, 0] = qa @ pv
        m[1:, 1:] = kmat
        return np.linalg.det(m)

    val, _ = integrate_semi_infinite(integrand, ctx.quad)
    return math.factorial(model.n - k) / math.factorial(model.n - 1) * val


def f_1k_derivative_form(ctx: CovContext, r: float, a: Sequence[float]):
    """Cross-check form of f_{1,k}: r-derivative of the Ω̂-block determinant,
    taken by a 5-point central difference with the context's relative step."""
    model = ctx.model
    if model.n <= 2:
        raise DomainError("f_1k requires n > 2")
    a = np.asarray(a, dtype=float)
    k = len(a)
    n = model.n
    ke = ctx.kernel
    kmat = np.array([[ke.k_scalar(ab, ac) for ac in a] for ab in a])
    qa = np.array([[ke.q_scalar(b, av) for b in range(n)] for av in a])
    pa = np.array([[ke.p_scalar(b, av) for b in range(n)] for av in a])

    def det_at(rr: float) -> float:
        cache = RadialCache(ctx, rr)
        jc = cache.JB / (1.0 + 1.0 / n)  # ∫ (1-x)^{n-1} q_b(rr·x) dx

        def s_entry(t):
            pv = np.array([ke.p_scalar(b, -rr * t) for b in range(n)])
            return (1.0 + t) ** (-(n + 1)) * rr * float(pv @ jc)

        m = np.empty((k + 1, k + 1))
        m[0, 0], _ = integrate_semi_infinite(s_entry, ctx.quad)
        for c in range(k):
            omega_hat = rr * float(pa[c] @ jc)
            if rr >= a[c]:
                omega_hat -= (1.0 - a[c] / rr) ** (n - 1)
            m[0, c + 1] = omega_hat
        for b in range(k):

            def g(t, b=b):
                pv = np.array([ke.p_scalar(bb, -rr * t) for bb in range(n)])
                return (1.0 + t) ** (-(n + 1)) * float(qa[b] @ pv)

            m[b + 1, 0], _ = integrate_semi_infinite(g, ctx.quad)
        m[1:, 1:] = kmat
        return np.linalg.det(m)

    h = ctx.derivative_step * r
    stencil = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    vals = [det_at(r + s * h) for s in (-2.0, -1.0, 1.0, 2.0)]
    d = float(np.dot(stencil, vals))
    return math.factorial(model.n - k) / math.factorial(model.n) * d


# ---------------------------------------------------------------------------
# conditional eigenradius density (ensemble-independent)
# ---------------------------------------------------------------------------


def _resolve_n(ctx_or_n) -> int:
    if isinstance(ctx_or_n, (int, np.integer)):
        return int(ctx_or_n)
    if isinstance(ctx_or_n, CovContext):
        return ctx_or_n.n
    if isinstance(ctx_or_n, EnsembleModel):
        return ctx_or_n.n
    raise TypeError(f"expected n, CovContext or EnsembleModel, got {type(ctx_or_n)!r}")


def _conditional_dets(n: int, r: float, a: np.ndarray):
    """The two determinants of the conditional-density ratio at radius r."""
    binoms = np.array([math.comb(n - 1, c) for c in range(n)], dtype=float)
    z = -a / r  # length n
    dmat = np.empty((n, n))
    for c in range(n):
        dmat[c, :] = binoms[c] * z**c
    nmat = np.zeros((n + 1, n + 1))
    nmat[0, 1:] = -np.where(r >= a, (1.0 - a / r) ** (n - 1), 0.0)
    nmat[1:, 0] = 1.0
    nmat[1:, 1:] = dmat
    return nmat, dmat


def conditional_mass(ctx_or_n, big_r: float, a, degenerate: str = "raise") -> float:
    """∫₀^R ρ_EV(r|a) dr, exactly, as (1/n)·det ratio at R.

    Equals 1 for every R > max(a) (R-independent normalization).
    """
    n = _resolve_n(ctx_or_n)
    a = _prep_conditional_a(n, a, degenerate)
    if big_r <= 0:
        raise DomainError("R must be positive")
    if big_r <= float(np.min(a)):
        return 0.0
    nmat, dmat = _conditional_dets(n, float(big_r), a)
    return det_lu(nmat) / (n * det_lu(dmat))


def _prep_conditional_a(n: int, a, degenerate: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if len(a) != n:
        raise DomainError(f"need exactly n={n} squared singular values, got {len(a)}")
    if np.any(a <= 0):
        raise DomainError("squared singular values must be positive")
    try:
        _check_distinct(a)
    except DegeneracyError:
        if degenerate == "raise":
            raise
        if degenerate == "perturb":
            a = perturb_degenerate(a)
        else:
            raise ValueError(f"unknown degenerate mode {degenerate!r}")
    return a


def conditional_density(
    ctx_or_n,
    r: float,
    a,
    mode: str = "fd",
    degenerate: str = "raise",
    derivative_step: float = 1e-5,
) -> float:
    """ρ_EV(r|a): density of one squared eigenradius given all n squared
    singular values.  Ensemble-independent (consumes only a).

    'fd' differentiates the determinant ratio centrally at r±h;
    'jacobi' uses the analytic derivative via the cofactor expansion.
    """
    n = _resolve_n(ctx_or_n)
    a = _prep_conditional_a(n, a, degenerate)
    if r <= 0:
        raise DomainError("r must be positive")
    if isinstance(ctx_or_n, CovContext):
        derivative_step = ctx_or_n.derivative_step
    if mode == "fd":
        h = derivative_step * r
        lo = conditional_mass(n, r - h, a)
        hi = conditional_mass(n, r + h, a)
        return (hi - lo) / (2.0 * h)
    if mode != "jacobi":
        raise ValueError(f"unknown mode {mode!r}")
    if r <= float(np.min(a)):
        return 0.0
    nmat, dmat = _conditional_dets(n, float(r), a)
    det_n = det_lu(nmat)
    det_d = det_lu(dmat)
    # row-wise derivative cofactor sums
    binoms = np.array([math.comb(n - 1, c) for c in range(n)], dtype=float)
    z = -a / r
    dn = 0.0
    work = nmat.copy()
    work[0, 1:] = np.where(r >= a, -(n - 1) * (1.0 - a / r) ** (n - 2) * (a / r**2), 0.0)
    dn += det_lu(work)
    for c in range(1, n):  # row c of the lower block; c = 0 row is constant
        work = nmat.copy()
        work[c + 1, 0] = 0.0
        work[c + 1, 1:] = binoms[c] * c * z ** (c - 1) * (a / r**2)
        dn += det_lu(work)
    dd_ = 0.0
    for c in range(1, n):
        work = dmat.copy()
        work[c, :] = binoms[c] * c * z ** (c - 1) * (a / r**2)
        dd_ += det_lu(work)
    return (dn * det_d - det_n * dd_) / (n * det_d * det_d)


# ---------------------------------------------------------------------------
# n = 1 and n = 2 special cases
# ---------------------------------------------------------------------------


def n1_identity(ctx: CovContext, x: float) -> float:
    """n=1: f_SV(x) = w(x)/w̃(1), and ρ_EV ≡ ρ_SV ≡ f_SV."""
    model = ctx.model
    if model.n != 1:
        raise DomainError(f"n1_identity requires n=1, got n={model.n}")
    f = model.weight(x) / model.mellin[0]
    r_sv = rho_sv(ctx, x)
    r_ev = rho_ev_polya(ctx, x)
    if abs(r_sv - f) > 1e-12 * max(1.0, abs(f)) or abs(r_ev - f) > 1e-12 * max(1.0, abs(f)):
        raise AssertionError("n=1 identity rho_EV = rho_SV = f_SV violated")
    return f


def _n2_weights(model: EnsembleModel):
    """(w_0, w_1) with w_1 = -x w'(x), in closed form per family."""
    if model.n != 2:
        raise DomainError(f"n=2 formulas require n=2, got n={model.n}")
    alpha = model.family.alpha

    if not model.is_jacobi:

        def w0(x):
            return model.weight(x)

        def w1(x):
            return model.weight(x) * (x - alpha)

    else:
        beta = model.family.beta

        def w0(x):
            return model.weight(x)

        def w1(x):
            if x >= 1.0:
                return 0.0
            return x**alpha * (1.0 - x) ** beta * ((beta + 1.0) * x - alpha * (1.0 - x))

    return w0, w1


def _n2_mellin(model: EnsembleModel, k: int, s: float) -> float:
    """Mellin transform of w_k at s: M w_k(s) = s^k w̃(s) (iterated -x∂ weight)."""
    return s**k * model.mellin_w(s)


def _n2_incomplete_mellin(model: EnsembleModel, k: int, x: float, s: float) -> float:
    """Incomplete Mellin of w_k: w̃_{1,x}(s) = s·w̃_x(s) − x^s w(x) for k=1."""
    if k == 0:
        return model.incomplete_mellin_w(x, s)
    if k == 1:
        edge = model.weight(x) if (not model.is_jacobi or x < 1.0) else 0.0
        return s * model.incomplete_mellin_w(x, s) - x**s * edge
    raise DomainError("only k = 0, 1 exist at n = 2")


def n2_fsv(model: EnsembleModel, a1: float, a2: float) -> float:
    """Joint density of the two squared singular values (n=2)."""
    w0, w1 = _n2_weights(model)
    d = _n2_mellin(model, 0, 1.0) * _n2_mellin(model, 1, 2.0) - _n2_mellin(
        model, 0, 2.0
    ) * _n2_mellin(model, 1, 1.0)
    return (a2 - a1) * (w0(a1) * w1(a2) - w1(a1) * w0(a2)) / (2.0 * d)


def n2_f12(model: EnsembleModel, r: float, a1: float, a2: float) -> float:
    lo, hi = min(a1, a2), max(a1, a2)
    if not (lo <= r <= hi):
        return 0.0
    return n2_fsv(model, a1, a2) / (2.0 * abs(a1 - a2)) * (1.0 + a1 * a2 / r**2)


def n2_f21(model: EnsembleModel, r1: float, r2: float, a: float) -> float:
    lo, hi = min(r1, r2), max(r1, r2)
    if not (a >= hi or a <= lo):
        return 0.0
    a2 = r1 * r2 / a
    return n2_fsv(model, a, a2) / (2.0 * abs(a**2 - r1 * r2)) * (r1 + r2)


def n2_f11(model: EnsembleModel, r: float, a: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """f_{1,1} at n=2 by quadrature over the second squared singular value."""
    w0, w1 = _n2_weights(model)
    d = _n2_mellin(model, 0, 1.0) * _n2_mellin(model, 1, 2.0) - _n2_mellin(
        model, 0, 2.0
    ) * _n2_mellin(model, 1, 1.0)

    def g(a2):
        return (
            (w0(a) * w1(a2) - w1(a) * w0(a2))
            / (4.0 * d)
            * (1.0 + a * a2 / r**2)
        )

    # at an exact tie r == a the Θ(r−a) branch wins; this realizes the
    # r → a⁺ limit, matching what the closed form evaluates there
    if r >= a:
        hi = 1.0 if model.is_jacobi else math.inf
        if hi == math.inf:
            val, _ = integrate_semi_infinite(lambda t: g(r + t), spec)
        else:
            val, _ = integrate(g, r, hi, spec) if r < hi else (0.0, 0.0)
        return val
    val, _ = integrate(g, 0.0, min(r, 1.0) if model.is_jacobi else r, spec)
    return -val


def n2_f11_closed(model: EnsembleModel, r: float, a: float) -> float:
    """f_{1,1} at n=2, fully closed through the incomplete Mellin transforms."""
    w0, w1 = _n2_weights(model)
    d = _n2_mellin(model, 0, 1.0) * _n2_mellin(model, 1, 2.0) - _n2_mellin(
        model, 0, 2.0
    ) * _n2_mellin(model, 1, 1.0)
    total = 0.0
    if r >= a:
        total += (
            w0(a) * (_n2_mellin(model, 1, 1.0) + a * _n2_mellin(model, 1, 2.0) / r**2)
            - w1(a) * (_n2_mellin(model, 0, 1.0) + a * _n2_mellin(model, 0, 2.0) / r**2)
        ) / (4.0 * d)
    rr = min(r, 1.0) if model.is_jacobi else r
    total -= (
        w0(a)
        * (_n2_incomplete_mellin(model, 1, rr, 1.0) + a * _n2_incomplete_mellin(model, 1, rr, 2.0) / r**2)
        - w1(a)
        * (_n2_incomplete_mellin(model, 0, rr, 1.0) + a * _n2_incomplete_mellin(model, 0, rr, 2.0) / r**2)
    ) / (4.0 * d)
    return total


def n2_closed(which: str, model: EnsembleModel, *args, **kw):
    """Dispatcher over the n=2 closed forms: f12, f21, f11, f11_polynomial."""
    table = {"f12": n2_f12, "f21": n2_f21, "f11": n2_f11, "f11_polynomial": n2_f11_closed}
    if which not in table:
        raise DomainError(f"unknown n=2 form {which!r}; options: {sorted(table)}")
    return table[which](model, *args, **kw)


# ---------------------------------------------------------------------------
# smoothness probe at the r = a kink
# ---------------------------------------------------------------------------


class KinkProbeResult(NamedTuple):
    left_deriv: float
    right_deriv: float
    value_gap: float
    noise_floor: float


def _fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at z from nodes x."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def kink_probe(ctx: CovContext, a: float, at: Optional[float] = None) -> KinkProbeResult:
    """One-sided (n−2)-nd derivatives of r ↦ cov(r;a) at r = a (or ``at``).

    value_gap is the jump of the (n−3)-rd derivative estimated by one-sided
    extrapolation (0-th derivative for n=3, i.e. continuity of cov itself).
    The stencils are open (never evaluate at the probe point).
    """
    n = ctx.n
    if n < 3:
        raise DomainError("kink_probe requires n >= 3")
    _check_support(ctx.model, a, "a")
    r0 = float(at) if at is not None else float(a)
    d = n - 2
    npts = d + 3
    h = r0 * (1e-13) ** (1.0 / (d + 2))
    offs = np.arange(1, npts + 1) * h
    f_right = np.array([cov_closed(ctx, r0 + o, a) for o in offs])
    f_left = np.array([cov_closed(ctx, r0 - o, a) for o in offs])
    w_right = _fd_weights(r0, r0 + offs, d)
    w_left = _fd_weights(r0, r0 - offs, d)
    right = float(w_right @ f_right)
    left = float(w_left @ f_left)
    fscale = max(np.max(np.abs(f_right)), np.max(np.abs(f_left)), 1e-300)
    noise = 1e-13 * fscale * float(np.sum(np.abs(w_right)))
    if d - 1 == 0:
        gw_r = _fd_weights(r0, r0 + offs, 0)
        gw_l = _fd_weights(r0, r0 - offs, 0)
    else:
        gw_r = _fd_weights(r0, r0 + offs, d - 1)
        gw_l = _fd_weights(r0, r0 - offs, d - 1)
    value_gap = abs(float(gw_r @ f_right) - float(gw_l @ f_left))
    return KinkProbeResult(left, right, value_gap, noise)


# ---------------------------------------------------------------------------
# determinants with growth monitoring
# ---------------------------------------------------------------------------

_LU_GROWTH_LIMIT = 1e8


def det_lu(a: np.ndarray, force_extended: bool = False) -> float:
    """Determinant by pivoted LU with implicit row scaling.

    Switches to extended precision when the matrix is larger than 10 or the
    element growth during elimination exceeds 1e8 (graded matrices such as the
    binomial/(−a/r)^c blocks get there quickly).
    """
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    if a.shape != (m, m):
        raise ValueError("det_lu needs a square matrix")
    if force_extended or m > 10:
        return _det_mp(a)
    lu = a.copy()
    scale = np.max(np.abs(lu), axis=1)
    scale[scale == 0.0] = 1.0
    sign = 1.0
    init_max = np.max(np.abs(lu / scale[:, None]))
    growth = 0.0
    for col in range(m):
        piv = np.argmax(np.abs(lu[col:, col]) / scale[col:]) + col
        if lu[piv, col] == 0.0:
            return 0.0
        if piv != col:
            lu[[col, piv]] = lu[[piv, col]]
            scale[[col, piv]] = scale[[piv, col]]
            sign = -sign
        factors = lu[col + 1 :, col] / lu[col, col]
        lu[col + 1 :, col:] -= factors[:, None] * lu[col, col:]
        lu[col + 1 :, col] = 0.0
        growth = max(growth, np.max(np.abs(lu / scale[:, None])) / max(init_max, 1e-300))
    if growth > _LU_GROWTH_LIMIT:
        return _det_mp(a)
    diag = np.diag(lu)
    return sign * float(np.prod(diag))


def _det_mp(a: np.ndarray) -> float:
    with mp.workdps(DD_DPS):
        return float(mp.det(mp.matrix(a.tolist())))


# ---------------------------------------------------------------------------
# support integration helpers (normalizations, marginals)
# ---------------------------------------------------------------------------


def integrate_over_support(
    ctx: CovContext,
    f,
    kinks=(),
    spec: Optional[QuadratureSpec] = None,
    cutoff: Optional[float] = None,
):
    """∫ f over the model support, honoring known interior kinks.

    For the unbounded (Laguerre) support the tail beyond ``cutoff`` is mapped
    through t = τ/(1−τ); pass a finite ``cutoff`` *without* a mapped tail for
    integrands whose closed forms turn into cancellation noise far out (the
    covariance sums do; the exact value out there is exponentially small).
    """
    spec = spec or ctx.quad
    lo, hi = ctx.model.support
    ks = sorted(float(k) for k in kinks if lo < k < hi) if kinks else []
    if math.isinf(hi):
        if cutoff is not None:
            val, _ = integrate_piecewise(f, [lo] + [k for k in ks if k < cutoff] + [cutoff], spec)
            return val
        pieces = [lo] + ks
        cut = max([1.0] + [2.0 * k for k in ks])
        pieces.append(cut)
        head, _ = integrate_piecewise(f, pieces, spec)
        tail, _ = integrate_semi_infinite(lambda t: f(cut + t), spec)
        return head + tail
    val, _ = integrate_piecewise(f, [lo] + ks + [hi], spec)
    return val


def marginal_cutoff(model: EnsembleModel, extra: float = 0.0) -> Optional[float]:
    """Radius beyond which the covariance closed forms are negligible (and,
    numerically, drowned in cancellation noise): exp(-r) has won by then."""
    if model.is_jacobi:
        return None
    return 4.0 * model.n + 30.0 + extra
