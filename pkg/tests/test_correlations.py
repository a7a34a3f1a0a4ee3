import math

import numpy as np
import pytest

from conftest import bulk_grid, family_models, rel_err
from svev import correlations as corr
from svev.ensembles import DOUBLE_DOUBLE, EnsembleModel, Jacobi, Laguerre
from svev.exceptions import DegeneracyError, DomainError, PrecisionError
from svev.quad import QuadratureSpec

LOOSE = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-8)


def ctx_for(model, **kw):
    return corr.make_context(model, **kw)


# --- 1-point densities -----------------------------------------------------------


def test_rho_sv_n1_and_n2():
    c1 = ctx_for(EnsembleModel(1, Laguerre(0.0)))
    for a in (0.3, 1.0, 4.0):
        assert rel_err(corr.rho_sv(c1, a), math.exp(-a)) < 1e-14
    m2 = EnsembleModel(2, Laguerre(0.0))
    c2 = ctx_for(m2)
    # symbol-by-symbol expansion of (1/2) Σ_b q_b(1) p_b(1)
    want = 0.5 * sum(m2.biorth_q(b, 1.0) * m2.biorth_p(b, 1.0) for b in range(2))
    assert rel_err(corr.rho_sv(c2, 1.0), want) < 1e-14


def test_rho_sv_normalization():
    ctx = ctx_for(EnsembleModel(4, Laguerre(0.0)), quad=LOOSE)
    val = corr.integrate_over_support(ctx, lambda a: corr.rho_sv(ctx, a))
    assert abs(val - 1.0) < 1e-8


def test_rho_ev_polya_n1_and_normalization():
    c1 = ctx_for(EnsembleModel(1, Laguerre(0.0)))
    for r in (0.2, 1.5):
        assert rel_err(corr.rho_ev_polya(c1, r), math.exp(-r)) < 1e-14
    for model in family_models([3, 6], [Laguerre(0.5), Jacobi(0.0, 1.0)]):
        ctx = ctx_for(model, quad=LOOSE)
        val = corr.integrate_over_support(ctx, lambda r: corr.rho_ev_polya(ctx, r))
        assert abs(val - 1.0) < 1e-8


def test_rho_ev_two_formulas_agree():
    m = EnsembleModel(3, Laguerre(0.5))
    ctx = ctx_for(m)
    assert rel_err(corr.rho_ev_polya(ctx, 1.0), corr.rho_ev_polynomial(ctx, 1.0)) < 1e-7


@pytest.mark.parametrize("n", [3, 4, 5])
def test_rho_ev_polynomial_grid_agreement(n):
    for model in family_models([n], [Laguerre(0.5), Jacobi(0.0, 1.0)]):
        ctx = ctx_for(model)
        grid = bulk_grid(model, 20)
        for r in grid:
            a_val = corr.rho_ev_polya(ctx, float(r))
            b_val = corr.rho_ev_polynomial(ctx, float(r))
            assert rel_err(a_val, b_val, 1e-9) < 1e-6


def test_rho_ev_polynomial_small_r_and_normalization():
    # the r -> 0+ limit vanishes only for alpha > 0 (for alpha = 0 the dv/v
    # measure leaves a finite hard-edge value, identical in both formulas)
    m_pos = EnsembleModel(3, Jacobi(0.5, 1.0))
    ctx_pos = ctx_for(m_pos, quad=LOOSE)
    assert corr.rho_ev_polynomial(ctx_pos, 1e-10) < 1e-4
    m = EnsembleModel(3, Jacobi(0.0, 1.0))
    ctx = ctx_for(m, quad=LOOSE)
    assert rel_err(corr.rho_ev_polynomial(ctx, 1e-10), corr.rho_ev_polya(ctx, 1e-10)) < 1e-8
    val = corr.integrate_over_support(ctx, lambda r: corr.rho_ev_polynomial(ctx, r))
    assert abs(val - 1.0) < 1e-6


# --- cross-covariance -----------------------------------------------------------


def test_cov_marginals_zero():
    m = EnsembleModel(3, Laguerre(0.0))
    ctx = ctx_for(m, quad=LOOSE)
    cut = corr.marginal_cutoff(m)
    for a0 in (0.5, 1.0, 2.0):
        v = corr.integrate_over_support(
            ctx, lambda r: corr.cov_closed(ctx, r, a0), kinks=[a0], cutoff=cut
        )
        assert abs(v) < 1e-6
    for r0 in (0.8, 1.7):
        v = corr.integrate_over_support(
            ctx, lambda a: corr.cov_closed(ctx, r0, a), kinks=[r0], cutoff=cut
        )
        assert abs(v) < 1e-6


def test_cov_closed_vs_integral_small_grid():
    for model in family_models([3, 4], [Laguerre(0.5), Jacobi(0.0, 1.0)]):
        ctx = ctx_for(model)
        grid = bulk_grid(model, 4)
        pairs = []
        for r in grid:
            cache = corr.RadialCache(ctx, float(r))
            for a in grid:
                pairs.append(
                    (
                        corr.cov_closed(ctx, float(r), float(a)),
                        corr.cov_integral(ctx, float(r), float(a), cache=cache),
                    )
                )
        floor = 1e-3 * max(max(abs(x), abs(y)) for x, y in pairs)
        assert max(rel_err(x, y, floor) for x, y in pairs) < 1e-6


def test_cov_integral_sign_structure():
    # alternating-sign lobes around the diagonal (qualitative figure check)
    m = EnsembleModel(3, Laguerre(0.5))
    ctx = ctx_for(m)
    a = 1.0
    signs = [math.copysign(1.0, corr.cov_closed(ctx, r, a)) for r in (0.15, 1.05, 4.5)]
    assert len({s for s in signs}) > 1  # both signs occur across the diagonal


def test_cov_support_contract():
    mj = EnsembleModel(3, Jacobi(0.0, 1.0))
    ctx = ctx_for(mj)
    with pytest.raises(DomainError):
        corr.cov_integral(ctx, 0.5, 1.2)
    with pytest.raises(DomainError):
        corr.cov_closed(ctx, 1.3, 0.5)


def test_cov_requires_n_gt_2_unless_opted_in():
    m2 = EnsembleModel(2, Laguerre(0.0))
    ctx = ctx_for(m2)
    with pytest.raises(DomainError):
        corr.cov_closed(ctx, 1.0, 0.5)
    opt = corr.cov_closed(ctx, 1.0, 0.5, allow_n2=True)
    direct = corr.n2_f11_closed(m2, 1.0, 0.5) - corr.rho_ev_polya(ctx, 1.0) * corr.rho_sv(
        ctx, 0.5
    )
    # reported comparison (the n=2 case is outside the formula's stated range)
    assert rel_err(opt, direct, 1e-12) < 1e-10


def test_cov_1k_reduces_to_cov_closed():
    for model in family_models([3, 4, 5], [Laguerre(0.0), Jacobi(0.5, 1.5)]):
        ctx = ctx_for(model)
        grid = bulk_grid(model, 3)
        for r in grid:
            for a in grid:
                assert (
                    abs(corr.cov_1k(ctx, float(r), [float(a)]) - corr.cov_closed(ctx, float(r), float(a)))
                    < 1e-8
                )


def test_cov_1k_symmetry_and_marginal():
    m = EnsembleModel(4, Laguerre(0.0))
    ctx = ctx_for(m, quad=LOOSE)
    a2 = [0.7, 2.1]
    v1 = corr.cov_1k(ctx, 1.3, a2)
    v2 = corr.cov_1k(ctx, 1.3, a2[::-1])
    assert abs(v1 - v2) <= 1e-12 * max(1.0, abs(v1))
    val = corr.integrate_over_support(
        ctx,
        lambda r: corr.cov_1k(ctx, r, a2),
        kinks=a2,
        cutoff=corr.marginal_cutoff(m),
    )
    assert abs(val) < 1e-5


def test_cov_1k_degeneracy_error():
    m = EnsembleModel(3, Laguerre(0.0))
    ctx = ctx_for(m)
    with pytest.raises(DegeneracyError):
        corr.cov_1k(ctx, 1.0, [0.5, 0.5 * (1 + 1e-12)])
    a = corr.perturb_degenerate([0.5, 0.5])
    assert corr.cov_1k(ctx, 1.0, list(a)) == pytest.approx(
        corr.cov_1k(ctx, 1.0, list(a)), rel=0
    )


# --- f_{1,k} ---------------------------------------------------------------------


def test_f11_triangle_identity():
    m = EnsembleModel(3, Laguerre(0.0))
    ctx = ctx_for(m)
    grid = bulk_grid(m, 4)
    pairs = []
    for r in grid:
        cache = corr.RadialCache(ctx, float(r))
        for a in grid:
            lhs = corr.f_1k(ctx, float(r), [float(a)], cache=cache)
            rhs = corr.rho_ev_polya(ctx, float(r)) * corr.rho_sv(ctx, float(a)) + corr.cov_closed(
                ctx, float(r), float(a)
            )
            pairs.append((lhs, rhs))
    floor = 1e-3 * max(abs(x) for x, _ in pairs)
    assert max(rel_err(x, y, floor) for x, y in pairs) < 1e-7


def test_f11_marginal_is_rho_sv():
    m = EnsembleModel(3, Laguerre(0.0))
    ctx = ctx_for(m, quad=LOOSE)
    a0 = 1.1

    def f11(r):
        return corr.rho_ev_polya(ctx, r) * corr.rho_sv(ctx, a0) + corr.cov_closed(ctx, r, a0)

    val = corr.integrate_over_support(ctx, f11, kinks=[a0], cutoff=corr.marginal_cutoff(m))
    assert abs(val - corr.rho_sv(ctx, a0)) < 1e-6


def test_f1n_bayes_factorization():
    m = EnsembleModel(3, Laguerre(0.0))
    ctx = ctx_for(m)
    a3 = [0.5, 1.0, 2.0]
    ke = ctx.kernel
    km = np.array([[ke.k_scalar(x, y) for y in a3] for x in a3])
    fsv = np.linalg.det(km) / math.factorial(3)
    for r in (0.8, 1.4):
        lhs = corr.f_1k(ctx, r, a3)
        rhs = fsv * corr.conditional_density(3, r, a3, mode="jacobi")
        assert rel_err(lhs, rhs, 1e-9) < 1e-6


def test_f1k_nonnegative():
    for model in family_models([3], [Laguerre(0.5), Jacobi(0.0, 1.0)]):
        ctx = ctx_for(model)
        grid = bulk_grid(model, 4)
        for r in grid:
            cache = corr.RadialCache(ctx, float(r))
            for a in grid:
                assert corr.f_1k(ctx, float(r), [float(a)], cache=cache) >= -1e-9


def test_f1k_derivative_form_cross_check():
    m = EnsembleModel(3, Laguerre(0.0))
    ctx = ctx_for(m)
    r, a = 1.7, 0.8  # away from the r = a kink (finite differences in r)
    v1 = corr.f_1k(ctx, r, [a])
    v2 = corr.f_1k_derivative_form(ctx, r, [a])
    assert rel_err(v1, v2, 1e-9) < 1e-7


def test_f1k_k2_matches_first_order_expansion():
    m = EnsembleModel(4, Laguerre(0.5))
    ctx = ctx_for(m)
    a2 = [0.9, 2.6]
    ke = ctx.kernel
    f02 = (
        math.factorial(2)
        / math.factorial(4)
        * (
            ke.k_scalar(a2[0], a2[0]) * ke.k_scalar(a2[1], a2[1])
            - ke.k_scalar(a2[0], a2[1]) * ke.k_scalar(a2[1], a2[0])
        )
    )
    for r in (0.7, 1.9):
        lhs = corr.f_1k(ctx, r, a2) - corr.rho_ev_polya(ctx, r) * f02
        rhs = corr.cov_1k(ctx, r, a2)
        assert rel_err(lhs, rhs, 1e-10) < 1e-7


# --- conditional density -----------------------------------------------------------


def test_conditional_normalization_r_independent():
    a3 = [0.5, 1.0, 2.0]
    for big_r in (3.0, 6.0):
        assert abs(corr.conditional_mass(3, big_r, a3) - 1.0) < 1e-6


def test_conditional_degenerate_concentration():
    a0 = 1.0
    a = [a0, a0 * (1 + 1e-3), a0 * (1 + 2e-3)]
    mass = corr.conditional_mass(3, 1.05 * a0, a) - corr.conditional_mass(3, 0.95 * a0, a)
    assert mass >= 0.99


def test_conditional_matches_n2_ratio():
    m2 = EnsembleModel(2, Laguerre(0.0))
    a2 = (0.4, 1.6)
    fsv = corr.n2_fsv(m2, *a2)
    for r in np.linspace(0.45, 1.55, 9):
        lhs = corr.conditional_density(2, float(r), a2)
        rhs = corr.n2_f12(m2, float(r), *a2) / fsv
        assert abs(lhs - rhs) < 1e-8


def test_conditional_is_ensemble_independent():
    a3 = [0.5, 1.0, 2.0]
    ctx_l = ctx_for(EnsembleModel(3, Laguerre(0.5)))
    ctx_j = ctx_for(EnsembleModel(3, Jacobi(0.0, 1.0)))
    for r in (0.6, 1.2, 1.9):
        v = corr.conditional_density(3, r, a3)
        assert corr.conditional_density(ctx_l, r, a3) == v
        assert corr.conditional_density(ctx_j, r, a3) == v


def test_conditional_modes_agree_and_domain():
    a3 = [0.5, 1.0, 2.0]
    for r in (0.7, 1.5):
        fd = corr.conditional_density(3, r, a3, mode="fd")
        jc = corr.conditional_density(3, r, a3, mode="jacobi")
        assert abs(fd - jc) < 1e-8
    with pytest.raises(DomainError):
        corr.conditional_density(3, -1.0, a3)
    with pytest.raises(DegeneracyError):
        corr.conditional_density(3, 1.0, [1.0, 1.0, 2.0])
    # perturbation path
    v = corr.conditional_density(3, 1.0, [1.0, 1.0, 2.0], degenerate="perturb")
    assert np.isfinite(v)


# --- n = 1 and n = 2 ------------------------------------------------------------


def test_n1_identity():
    ctx = ctx_for(EnsembleModel(1, Laguerre(0.0)))
    for x in (0.4, 1.0, 2.7):
        assert rel_err(corr.n1_identity(ctx, x), math.exp(-x)) < 1e-14
    val = corr.integrate_over_support(ctx, lambda x: corr.n1_identity(ctx, x))
    assert abs(val - 1.0) < 1e-8
    with pytest.raises(DomainError):
        corr.n1_identity(ctx_for(EnsembleModel(2, Laguerre(0.0))), 1.0)


def test_n2_f12_support():
    m2 = EnsembleModel(2, Laguerre(0.0))
    assert corr.n2_f12(m2, 0.2, 0.4, 1.6) == 0.0
    assert corr.n2_f12(m2, 1.8, 0.4, 1.6) == 0.0
    assert corr.n2_f12(m2, 1.0, 0.4, 1.6) > 0.0


def test_n2_f21_symmetry():
    m2 = EnsembleModel(2, Laguerre(0.0))
    assert corr.n2_f21(m2, 0.5, 1.4, 2.0) == corr.n2_f21(m2, 1.4, 0.5, 2.0)


def test_n2_f11_quad_vs_closed():
    for fam in (Laguerre(0.0), Jacobi(0.5, 1.0)):
        m2 = EnsembleModel(2, fam)
        grid = bulk_grid(m2, 4)
        for r in grid:
            for a in grid:
                v1 = corr.n2_f11(m2, float(r), float(a))
                v2 = corr.n2_f11_closed(m2, float(r), float(a))
                assert rel_err(v1, v2, 1e-10) < 1e-8


def test_n2_dispatcher():
    m2 = EnsembleModel(2, Laguerre(0.0))
    assert corr.n2_closed("f12", m2, 1.0, 0.4, 1.6) == corr.n2_f12(m2, 1.0, 0.4, 1.6)
    with pytest.raises(DomainError):
        corr.n2_closed("f99", m2, 1.0)


# --- kink probe ------------------------------------------------------------------


def test_kink_probe_n3():
    ctx = ctx_for(EnsembleModel(3, Laguerre(0.5)))
    probe = corr.kink_probe(ctx, 1.0)
    assert probe.value_gap < 1e-6
    assert abs(probe.left_deriv - probe.right_deriv) > 10.0 * probe.noise_floor


def test_kink_probe_n4_second_derivative():
    ctx = ctx_for(EnsembleModel(4, Laguerre(0.5)))
    probe = corr.kink_probe(ctx, 1.0)
    assert probe.value_gap < 1e-6
    assert abs(probe.left_deriv - probe.right_deriv) > 10.0 * probe.noise_floor


def test_kink_probe_smooth_away_from_diagonal():
    ctx = ctx_for(EnsembleModel(3, Laguerre(0.5)))
    probe = corr.kink_probe(ctx, 1.0, at=2.0)
    assert abs(probe.left_deriv - probe.right_deriv) <= 10.0 * probe.noise_floor


# --- extended precision, hooks, plumbing -------------------------------------------


def test_cov_closed_dd_matches_double():
    m_d = EnsembleModel(3, Laguerre(0.5))
    m_x = EnsembleModel(3, Laguerre(0.5), precision=DOUBLE_DOUBLE)
    cd, cx = ctx_for(m_d), ctx_for(m_x)
    for r, a in ((0.6, 0.4), (1.7, 1.2)):
        assert rel_err(corr.cov_closed(cd, r, a), corr.cov_closed(cx, r, a)) < 1e-12


def test_psi0_sign_flip_breaks_triangle(monkeypatch):
    from svev import verify as V

    monkeypatch.setattr(corr, "_PSI0_SIGN", -1.0)
    ok, _ = V.check_formula_triangle(
        [EnsembleModel(3, Laguerre(0.0))], grid_count=2
    )
    assert not ok


def test_density_table_round_trip(tmp_path):
    grid = np.array([0.1, 0.5, 2.0])
    vals = np.array([1.0 / 3.0, math.pi, 1e-17])
    t = corr.DensityTable((grid,), vals, {"formula": "test"})
    path = tmp_path / "t.csv"
    t.to_csv(path, ("x", "value"))
    text = path.read_text()
    assert text.splitlines()[0] == "x,value"
    assert "\r" not in text
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 0], grid)
    assert np.array_equal(back[:, 1], vals)  # 17 significant digits round-trip


def test_context_validation():
    m = EnsembleModel(3, Laguerre(0.0))
    with pytest.raises(DomainError):
        corr.CovContext(model=m, derivative_step=1e-2)
    ctx = ctx_for(m)
    assert ctx.kernel is not None
    mdd = EnsembleModel(3, Laguerre(0.0), precision=DOUBLE_DOUBLE)
    ctxdd = corr.make_context(mdd)
    with pytest.raises(PrecisionError):
        corr.RadialCache(ctxdd, 1.0)
