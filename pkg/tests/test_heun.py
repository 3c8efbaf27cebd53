import json
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma as Gamma

from blowuplab import heun
from blowuplab.model import Kind, ModelSpec, SimilarityProfile
from blowuplab.shooting import shooting_wronskian

WM4 = ModelSpec(Kind.WM, 4)
CELLS = [ModelSpec(k, d) for k in Kind for d in range(3, 10)]
TABLE = json.loads(resources.files("blowuplab").joinpath("data/reference_eigenvalues.json").read_text())


# ---------------------------------------------------------------- setup

def test_setup_wm4_gauge():
    s = heun.heun_setup(WM4, 1.0)
    assert (s.gamma, s.delta, s.alpha, s.beta, s.q, s.c, s.mu) == (3, 0.5, 3, 0, 0, 3, 0.5)


def test_setup_ym3_gauge():
    s = heun.heun_setup(ModelSpec(Kind.YM, 3), 1.0)
    # beta as the larger exponent; the inner square root is 40/3 + ... giving 9/2
    assert max(s.alpha, s.beta) == pytest.approx(4.5, abs=1e-13)
    assert s.c == pytest.approx(8 / 3, rel=1e-14)
    assert s.mu == 1.0


def test_setup_wm3_lambda0_literal_formula():
    s = heun.heun_setup(ModelSpec(Kind.WM, 3), 0.0)
    assert s.delta == 0 and s.alpha == 2.5 and s.beta == -0.5
    # (lambda-1)(d lambda + 5d - 2 lambda - 6)/4 at d=3, lambda=0
    assert s.q == pytest.approx(-9 / 4, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(CELLS), st.floats(-7, 1.5))
def test_fuchs_relation(m, lam):
    s = heun.heun_setup(m, lam)
    assert abs(s.fuchs_defect) <= 1e-12
    assert s.c > 1


def test_typeset_wm_epsilon_breaks_fuchs():
    for d in range(3, 10):
        m = ModelSpec(Kind.WM, d)
        s = heun.heun_setup(m, 0.3, epsilon=heun.printed_epsilon(m))
        assert abs(s.fuchs_defect) > 0.5
    assert heun.printed_epsilon(ModelSpec(Kind.YM, 5)) == pytest.approx(heun.heun_setup(ModelSpec(Kind.YM, 5), 0.3).epsilon, abs=1e-12)


# ---------------------------------------------------------------- series

def test_gauge_series_is_constant():
    sol = heun.heun_series(heun.heun_setup(WM4, 1.0), "zero")
    assert sol.coefficients[0] == 1
    assert np.max(np.abs(sol.coefficients[1:])) < 1e-15


@pytest.mark.parametrize("m", [WM4, ModelSpec(Kind.YM, 6), ModelSpec(Kind.WM, 8)], ids=str)
def test_first_derivative_at_zero(m):
    s = heun.heun_setup(m, -0.7)
    sol = heun.heun_series(s, "zero")
    assert sol(0.0, 1) == pytest.approx(s.q / (s.gamma * s.c), rel=1e-14)


def test_self_convergence_wm5():
    s = heun.heun_setup(ModelSpec(Kind.WM, 5), -0.5)
    for N in (80, 120):
        a = heun.heun_series(s, "zero", order=N)(0.5)
        b = heun.heun_series(s, "zero", order=2 * N)(0.5)
        assert abs(a - b) <= 1e-12


@pytest.mark.parametrize("m", CELLS, ids=str)
def test_series_residual_random_points(m):
    rng = np.random.default_rng(m.d + (0 if m.kind is Kind.WM else 100))
    for lam in (-2.7, -0.4, 0.9):
        s = heun.heun_setup(m, lam)
        x = rng.uniform(0.05, 0.7, 20)
        w0 = heun.heun_series(s, "zero", x_eval=0.7)
        assert np.max(np.abs(heun.heun_residual(w0, x))) <= 1e-10
        x1 = rng.uniform(0.3, 0.95, 20)
        w1 = heun.heun_series(s, "one", x_eval=0.3)
        assert np.max(np.abs(heun.heun_residual(w1, x1))) <= 1e-10


def test_anchor_one_normalization_is_regularized():
    s = heun.heun_setup(WM4, -0.2)
    sol = heun.heun_series(s, "one")
    assert sol.coefficients[0] * Gamma(s.delta) == pytest.approx(1.0, rel=1e-14)
    assert sol(1.0) == pytest.approx(1 / Gamma(s.delta), rel=1e-14)


def test_series_refuses_outside_disk():
    s = heun.heun_setup(WM4, -0.2)
    sol = heun.heun_series(s, "zero", order=50)
    with pytest.raises(heun.SeriesError):
        sol(1.2)
    with pytest.raises(heun.SeriesError):
        heun.heun_series(s, "zero", x_eval=1.0)


def test_series_order_cap():
    s = heun.heun_setup(WM4, -0.2)
    with pytest.raises(heun.SeriesError):
        heun.heun_series(s, "zero", x_eval=0.999999, tol=1e-300)


# ---------------------------------------------------------------- Wronskian

def test_wronskian_examples():
    assert abs(heun.wronskian(WM4, 1.0)) <= 1e-10
    assert abs(heun.wronskian(WM4, -0.563612)) <= 1e-5
    assert abs(heun.wronskian(WM4, 0.0)) > 1e-3


@pytest.mark.parametrize("m", CELLS, ids=str)
def test_gauge_wronskian_all_cells(m):
    assert abs(heun.wronskian(m, 1.0)) <= 1e-10


@pytest.mark.parametrize("m", CELLS, ids=str)
def test_wronskian_independent_of_match_point(m):
    rng = np.random.default_rng(10 * m.d + (m.kind is Kind.YM))
    for lam in rng.uniform(-7, 1.5, 50):
        a, b = heun.wronskian(m, lam, 0.4), heun.wronskian(m, lam, 0.6)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a)), lam


def test_wronskian_rejects_bad_match_point():
    with pytest.raises(ValueError):
        heun.wronskian(WM4, 0.2, x_match=1.0)


# ---------------------------------------------------------------- eigenvalues

def test_find_eigenvalues_wm4():
    spec = heun.find_eigenvalues(WM4, (-6, 1.5), 0.05)
    want = [1, -0.563612, -2.109131, -3.603718, -5.061116]
    assert len(spec.values) == 5
    assert np.max(np.abs(np.array(spec.values) - want)) <= 1e-4
    assert spec.values == sorted(spec.values, reverse=True)
    for e in spec.eigenvalues:
        assert e.bracket[0] <= e.lam <= e.bracket[1]


def test_find_eigenvalues_ym6():
    spec = heun.find_eigenvalues(ModelSpec(Kind.YM, 6), (-6, 1.5), 0.05)
    want = [1, -0.643402, -2.321548, -3.932725, -5.577793]
    assert np.max(np.abs(np.array(spec.values) - want)) <= 1e-4


def test_wm3_minus_two():
    spec = heun.find_eigenvalues(ModelSpec(Kind.WM, 3), (-2.5, -1.5), 0.05)
    assert len(spec.values) == 1
    assert abs(spec.values[0] + 2) <= 1e-6


@pytest.mark.parametrize("m", [m for m in CELLS if m.d <= 8], ids=str)
def test_reference_tables(m):
    spec = heun.find_eigenvalues(m)
    ref = TABLE[m.kind.value][str(m.d)]
    assert np.max(np.abs(np.array(spec.values[:5]) - ref)) <= 1e-4
    assert 1.0 in [round(v, 9) for v in spec.values]
    assert not spec.stalled


def test_scan_step_limit_and_empty_window():
    with pytest.raises(ValueError):
        heun.find_eigenvalues(WM4, step=0.1)
    spec = heun.find_eigenvalues(WM4, (-0.2, 0.5))
    assert spec.empty and spec.values == []
    assert heun.find_eigenvalues(WM4, (1.0, 0.0)).empty


def test_refine_root_reports_failure():
    root, val, ok = heun.refine_root(lambda x: x * x + 1, -1, 1)
    assert not ok


def test_parallel_scan_matches_serial():
    a = heun.find_eigenvalues(WM4, (-3, 1.5), workers=1).values
    b = heun.find_eigenvalues(WM4, (-3, 1.5), workers=4).values
    assert a == b


# ---------------------------------------------------------------- eigenfunctions

def test_gauge_eigenfunction_wm4_closed_form():
    y = np.linspace(0, 0.98, 50)
    v = heun.eigenfunction_backmap(WM4, 1.0, y)
    assert np.max(np.abs(v - 2 * y / (y**2 + 2))) <= 1e-12


@pytest.mark.parametrize("m", CELLS, ids=str)
def test_gauge_eigenfunction_matches_y_dphi(m):
    y = np.linspace(0, 0.98, 99)
    prof = SimilarityProfile.of(m)
    v = heun.eigenfunction_backmap(m, 1.0, y)
    assert np.max(np.abs(v - y * prof.dphi(y) / prof.origin_coefficient)) <= 1e-10


@pytest.mark.parametrize("m", [m for m in CELLS if m.d <= 8], ids=str)
def test_first_eigenfunction_solves_eigen_equation(m):
    lam = heun.find_eigenvalues(m, (-1.0, -0.3)).values[0]
    y = np.linspace(0.01, 0.99, 99)
    v, dv, d2v = heun.eigenfunction_derivatives(m, lam, y)
    assert np.max(np.abs(heun.eigen_residual(m, lam, y, v, dv, d2v))) <= 1e-6
    # same check with finite differences of the evaluated series
    h = 1e-4
    yy = np.linspace(0.05, 0.95, 31)
    f = lambda t: heun.eigenfunction_backmap(m, lam, t)
    fd1 = (f(yy + h) - f(yy - h)) / (2 * h)
    fd2 = (f(yy + h) - 2 * f(yy) + f(yy - h)) / h**2
    assert np.max(np.abs(heun.eigen_residual(m, lam, yy, f(yy), fd1, fd2))) <= 1e-6


def test_ym_normalization_at_origin():
    m = ModelSpec(Kind.YM, 5)
    for lam in (-2.3, -0.6, 0.7):
        y = np.array([1e-4, 1e-3])
        v = heun.eigenfunction_backmap(m, lam, y)
        assert np.allclose(v / y**2, 1.0, atol=1e-5)


def test_backmap_rejects_outside_light_cone():
    from blowuplab.model import ModelError

    with pytest.raises(ModelError):
        heun.eigenfunction_backmap(WM4, -0.5, np.array([0.5, 1.2]))
    with pytest.raises(heun.SeriesError):
        heun.eigenfunction_backmap(WM4, -0.5, np.array([0.5, 1.0]))


def test_backmap_at_non_eigenvalue_is_local_solution():
    for m in (WM4, ModelSpec(Kind.YM, 4)):
        y = np.linspace(0.05, 0.95, 40)
        v, dv, d2v = heun.eigenfunction_derivatives(m, -1.3, y)
        assert np.max(np.abs(heun.eigen_residual(m, -1.3, y, v, dv, d2v))) <= 1e-8


def test_typeset_epsilon_fails_backmap_residual():
    y = np.linspace(0.05, 0.95, 40)
    for d in (3, 4, 6):
        m = ModelSpec(Kind.WM, d)
        v, dv, d2v = heun.eigenfunction_derivatives(m, -1.3, y, epsilon=heun.printed_epsilon(m))
        assert np.max(np.abs(heun.eigen_residual(m, -1.3, y, v, dv, d2v))) > 1e-2


# ---------------------------------------------------------------- Heun vs shooting on non-roots

def test_sign_agreement_with_shooting_example():
    m = ModelSpec(Kind.YM, 5)
    assert np.sign(shooting_wronskian(m, -1.0)) == np.sign(heun.wronskian(m, -1.0))
