import math

import numpy as np
import pytest
from scipy import integrate as si

from conftest import bulk_grid, family_models, rel_err
from svev import specfun
from svev.ensembles import DOUBLE_DOUBLE, EnsembleModel, Jacobi, KernelEval, Laguerre, theta
from svev.exceptions import DomainError, PrecisionError


def support_hi(model):
    return 1.0 if model.is_jacobi else 6.0 * model.n + 30.0


# --- weight -----------------------------------------------------------------


def test_weight_values():
    m = EnsembleModel(3, Laguerre(0.5))
    assert math.isclose(m.weight(1.0), math.exp(-1.0), rel_tol=1e-15)
    mj = EnsembleModel(3, Jacobi(0.0, 1.0))
    assert math.isclose(mj.weight(0.5), 0.125, rel_tol=1e-15)  # (1-x)^{beta+n-1}
    assert mj.weight(1.2) == 0.0  # step cutoff
    with pytest.raises(DomainError):
        mj.weight(-0.1)
    with pytest.raises(DomainError):
        m.weight(0.0)


def test_theta_convention():
    assert theta(0.0) == 1.0
    assert theta(-1e-300) == 0.0


# --- Mellin transforms --------------------------------------------------------


def test_mellin_values():
    assert math.isclose(EnsembleModel(3, Laguerre(0.0)).mellin_w(2.0), 1.0, rel_tol=1e-14)
    mj = EnsembleModel(3, Jacobi(0.0, 1.0))
    # Γ(1)Γ(4)/Γ(5) = 1/4, cross-checked by quadrature of (1-u)^3
    assert math.isclose(mj.mellin_w(1.0), 0.25, rel_tol=1e-13)
    quad, _ = si.quad(lambda u: (1 - u) ** 3, 0, 1)
    assert abs(mj.mellin_w(1.0) - quad) < 1e-12


def test_mellin_quadrature_oracle():
    m = EnsembleModel(3, Laguerre(0.5))
    oracle, _ = si.quad(lambda u: m.weight(u), 0, np.inf)
    assert abs(m.mellin_w(1.0) - oracle) < 1e-10


def test_mellin_domain():
    with pytest.raises(DomainError):
        EnsembleModel(2, Laguerre(0.5)).mellin_w(-0.5)


def test_incomplete_mellin():
    m = EnsembleModel(3, Laguerre(0.5))
    # x -> infinity recovers the complete transform
    assert math.isclose(m.incomplete_mellin_w(200.0, 2.0), m.mellin_w(2.0), rel_tol=1e-13)
    assert m.incomplete_mellin_w(0.0, 2.0) == 0.0
    oracle, _ = si.quad(lambda u: u * m.weight(u), 0.0, 2.0, epsabs=1e-14)
    assert abs(m.incomplete_mellin_w(2.0, 2.0) - oracle) < 1e-10  # γ(2.5, 2)


# --- biorthogonal pair ----------------------------------------------------------


def test_p0_is_inverse_mellin():
    m = EnsembleModel(3, Laguerre(0.0))
    for x in (0.1, 1.0, 7.0):
        assert math.isclose(m.biorth_p(0, x), 1.0, rel_tol=1e-15)


def test_p_family_form_matches_laguerre_polynomial():
    m = EnsembleModel(3, Laguerre(0.5))
    pref = math.factorial(2) / math.gamma(2 + 0.5 + 1.0)
    for x in np.linspace(0.05, 9.0, 25):
        want = pref * specfun.laguerre_poly(2, 0.5, float(x))
        assert rel_err(m.biorth_p(2, float(x)), want) < 1e-10


def test_p_sum_vs_family_forms():
    for model in family_models([3, 5]):
        grid = bulk_grid(model, 9)
        for j in range(model.n):
            for x in grid:
                s = model.biorth_p(j, float(x), form="sum")
                f = model.biorth_p(j, float(x), form="family")
                assert rel_err(s, f, 1e-13) < 1e-10


def test_q0_is_weight_and_q1_zero():
    for model in family_models([3]):
        grid = bulk_grid(model, 5)
        for x in grid:
            assert rel_err(model.biorth_q(0, float(x)), model.weight(float(x))) < 1e-13
    m = EnsembleModel(3, Laguerre(0.0))
    # L_1^{(0)}(x) = 1 - x vanishes at 1
    assert abs(m.biorth_q(1, 1.0)) < 1e-16


@pytest.mark.parametrize("n", [5])
def test_biorthogonality_quadrature(n):
    for model in family_models([n]):
        hi = support_hi(model)
        for b in range(n):
            for c in range(n):
                val, _ = si.quad(
                    lambda x: model.biorth_q(b, x) * model.biorth_p(c, x), 0, hi, limit=200
                )
                assert abs(val - (1.0 if b == c else 0.0)) < 1e-8


def test_index_errors():
    m = EnsembleModel(3, Laguerre(0.0))
    with pytest.raises(DomainError):
        m.biorth_p(3, 1.0)
    with pytest.raises(DomainError):
        m.biorth_q(4, 1.0)
    m.biorth_q(3, 1.0)  # j = n allowed


def test_jacobi_beta_nonpositive_rejects_qn():
    m = EnsembleModel(3, Jacobi(0.0, 0.0))
    m.weight(0.5)
    m.kernel(0.3, 0.7)  # constructible paths fine
    with pytest.raises(DomainError):
        m.biorth_q(3, 0.5)
    with pytest.raises(DomainError):
        m.incomplete_mellin_qn(0.5, 1)


# --- kernel ----------------------------------------------------------------------


def test_kernel_n1_is_weight_over_mellin():
    m = EnsembleModel(1, Laguerre(0.0))
    for x in (0.2, 1.0, 3.0):
        for y in (-5.0, 0.0, 17.0):
            assert rel_err(m.kernel(x, y), math.exp(-x)) < 1e-14


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_kernel_trace(n):
    for model in family_models([n], [Laguerre(0.5), Jacobi(0.0, 1.0)]):
        ke = model.kernel_eval()
        hi = support_hi(model)
        val, _ = si.quad(lambda x: ke.k_scalar(x, x), 0, hi, limit=300)
        assert abs(val - n) < 1e-8


def test_kernel_reproduces_monomials():
    for model in family_models([4]):
        ke = model.kernel_eval()
        hi = support_hi(model)
        for y in (0.3, 0.7, 1.5):
            for k in range(model.n):
                val, _ = si.quad(lambda x: ke.k_scalar(x, y) * x**k, 0, hi, limit=300)
                assert abs(val - y**k) < 1e-8


def test_kernel_sum_vs_integral_form():
    rng = np.random.default_rng(3)
    for model in family_models([3, 6], [Laguerre(0.5), Jacobi(0.5, 1.5)]):
        hi = 1.0 if model.is_jacobi else 2.5 * model.n
        for _ in range(4):
            x = float(rng.uniform(0.05, hi * 0.95))
            y = float(rng.uniform(-5.0, 5.0))
            assert rel_err(model.kernel(x, y), model.kernel_integral_form(x, y), 1e-9) < 1e-8


def test_kernel_polynomial_degree_in_second_argument():
    # the (n)-th finite difference of y -> K(x, y) vanishes; the (n-1)-th not
    for model in family_models([4], [Laguerre(0.0), Jacobi(0.5, 1.5)]):
        n = model.n
        ke = model.kernel_eval()
        x0, h = 0.4, 0.35
        vals = np.array([ke.k_scalar(x0, -1.0 + i * h) for i in range(n + 1)])
        dn = np.diff(vals, n=n)[0]
        dn1 = np.diff(vals, n=n - 1)
        scale = np.max(np.abs(vals))
        assert abs(dn) < 1e-8 * scale
        assert np.max(np.abs(dn1)) > 1e-6 * scale


def test_kernel_eval_matches_careful_path():
    for model in family_models([5]):
        ke = model.kernel_eval()
        grid = bulk_grid(model, 6)
        for x in grid:
            for y in (-3.0, 0.2, 2.0):
                assert rel_err(ke(float(x), y), model.kernel(float(x), y), 1e-12) < 1e-10


def test_kernel_eval_array_broadcast():
    model = EnsembleModel(3, Laguerre(0.5))
    ke = model.kernel_eval()
    xs = np.array([0.3, 1.1, 2.2])
    vals = ke(xs, 0.7)
    assert np.allclose(vals, [ke(float(x), 0.7) for x in xs], rtol=1e-13)
    vals2 = ke(0.7, xs)
    assert np.allclose(vals2, [ke(0.7, float(x)) for x in xs], rtol=1e-13)


# --- incomplete Mellin transform of q_n -------------------------------------------


def test_qn_mellin_limits():
    m = EnsembleModel(3, Laguerre(0.5))
    assert m.incomplete_mellin_qn(0.0, 1) == 0.0
    # complete integral vanishes for c <= n-1
    for c in range(3):
        assert abs(m.incomplete_mellin_qn(60.0, c)) < 1e-12


def test_qn_mellin_quadrature_oracle():
    import sympy

    u = sympy.symbols("u", positive=True)
    n, alpha = 3, sympy.Rational(1, 2)
    m = EnsembleModel(3, Laguerre(0.5))
    f = sympy.lambdify(u, u * sympy.diff(u ** (n + alpha) * sympy.exp(-u), u, n))
    oracle, _ = si.quad(f, 0.0, 0.8, epsabs=1e-14)
    oracle /= math.factorial(n)
    assert abs(m.incomplete_mellin_qn(0.8, 1, form="hyp") - oracle) < 1e-9


@pytest.mark.parametrize("n", [3, 5, 8])
def test_qn_mellin_dual_forms(n):
    for model in family_models([n], [Laguerre(0.5), Jacobi(0.5, 1.5)]):
        xs = (0.15, 0.45, 0.8, 0.97) if model.is_jacobi else (0.4, 2.0, 7.0, 14.0)
        for x in xs:
            for c in range(model.n):
                h = model.incomplete_mellin_qn(x, c, form="hyp")
                b = model.incomplete_mellin_qn(x, c, form="boundary")
                assert rel_err(h, b, 1e-14) < 1e-9


def test_qn_mellin_domain():
    mj = EnsembleModel(3, Jacobi(0.0, 1.0))
    with pytest.raises(DomainError):
        mj.incomplete_mellin_qn(1.2, 0)
    m = EnsembleModel(3, Laguerre(0.0))
    with pytest.raises(DomainError):
        m.incomplete_mellin_qn(0.5, 3)


# --- model construction, precision, config ------------------------------------------


def test_construction_validation():
    with pytest.raises(DomainError):
        EnsembleModel(0, Laguerre(0.0))
    with pytest.raises(DomainError):
        Laguerre(-1.0)
    with pytest.raises(DomainError):
        Jacobi(0.0, -1.0)
    with pytest.raises(DomainError):
        EnsembleModel(3, Laguerre(0.0), precision="quad")


def test_precision_gate():
    with pytest.raises(PrecisionError):
        EnsembleModel(16, Laguerre(0.0))
    m = EnsembleModel(25, Laguerre(0.5), precision=DOUBLE_DOUBLE)
    assert m.dd
    with pytest.raises(PrecisionError):
        KernelEval(m)


def test_mellin_cache_invariant():
    for model in family_models([4]):
        assert np.all(np.isfinite(model.mellin))
        assert np.all(model.mellin[: model.n] > 0)
        for j in range(model.n):
            assert model.coeff_p[j][j] != 0.0  # exact degree j


def test_config_round_trip():
    for model in (
        EnsembleModel(3, Laguerre(0.5)),
        EnsembleModel(4, Jacobi(0.25, 1.75), precision=DOUBLE_DOUBLE),
    ):
        text = model.to_config()
        back = EnsembleModel.from_config(text)
        assert back.n == model.n
        assert back.precision == model.precision
        assert type(back.family) is type(model.family)
        assert back.family.alpha == model.family.alpha
        if model.is_jacobi:
            assert back.family.beta == model.family.beta
    with pytest.raises(DomainError):
        EnsembleModel.from_config("family=cauchy\nn=2\nalpha=0\n")
