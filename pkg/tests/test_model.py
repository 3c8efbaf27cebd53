import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowuplab.model import (
    FieldSnapshot,
    Kind,
    ModelError,
    ModelSpec,
    PotentialMismatch,
    SimilarityProfile,
    energy,
    nonlinearity_f,
    nonlinearity_fprime,
    potential_energy_F,
    potential_V,
    printed_ym_potential,
    profile_phi0,
    profile_phi0_prime,
    profile_residual,
    y2_potential,
    ym_profile_params,
)

WM4 = ModelSpec(Kind.WM, 4)
CELLS = [ModelSpec(k, d) for k in Kind for d in range(3, 10)]


def fd(fn, x, h=1e-5):
    return (fn(x + h) - fn(x - h)) / (2 * h)


# ---------------------------------------------------------------- ModelSpec

def test_modelspec_parse_and_validation():
    assert ModelSpec.parse("wm", 4) == WM4
    assert ModelSpec("YM", 5).kind is Kind.YM
    for d in (2, 10):
        with pytest.raises(ModelError):
            ModelSpec.parse("wm", d)
    with pytest.raises(ModelError):
        ModelSpec.parse("xx", 4)
    assert ModelSpec.parse("ym", 8).degenerate
    assert not ModelSpec.parse("ym", 7).degenerate
    assert WM4.parity == 1 and ModelSpec.parse("ym", 4).parity == 2


# ---------------------------------------------------------------- nonlinearities

def test_nonlinearity_examples():
    assert nonlinearity_f(WM4, math.pi / 2) == pytest.approx(0, abs=1e-15)
    for d in range(3, 10):
        assert nonlinearity_f(ModelSpec(Kind.YM, d), 1.0) == 0
        assert nonlinearity_fprime(ModelSpec(Kind.WM, d), 0.0) == d - 1
        assert nonlinearity_fprime(ModelSpec(Kind.YM, d), 0.0) == 2 * d
    assert nonlinearity_f(WM4, math.pi / 4) == pytest.approx(1.5, rel=1e-14)


def test_fprime_matches_finite_difference():
    got = nonlinearity_fprime(WM4, 0.7)
    assert abs(got - fd(lambda u: nonlinearity_f(WM4, u), 0.7)) <= 1e-8


def test_potential_energy_examples():
    for m in CELLS:
        assert potential_energy_F(m, 0.0) == 0
    assert potential_energy_F(ModelSpec(Kind.YM, 5), 2.0) == 0
    assert abs(fd(lambda u: potential_energy_F(WM4, u), 1.1) - nonlinearity_f(WM4, 1.1)) <= 1e-8


def test_F_prime_is_f_at_random_points():
    rng = np.random.default_rng(7)
    for m in CELLS:
        u = rng.uniform(-3, 3, 100)
        err = np.abs(fd(lambda x: potential_energy_F(m, x), u) - nonlinearity_f(m, u))
        assert err.max() <= 1e-7, m
        assert np.all(potential_energy_F(m, u) >= 0)
        assert nonlinearity_f(m, 0.0) == 0


# ---------------------------------------------------------------- YM parameters and profiles

def test_ym_params_examples():
    a, b = ym_profile_params(3)
    assert a == pytest.approx(8 / 3, rel=1e-14) and b == pytest.approx(5 / 3, rel=1e-14)
    a, b = ym_profile_params(5)
    assert a == pytest.approx(2.8944272, abs=1e-7) and b == pytest.approx(4.2360680, abs=1e-7)
    assert ym_profile_params(8) == (3.0, 8.0)
    for d in (2, 10):
        with pytest.raises(ModelError):
            ym_profile_params(d)


def test_ym_params_positive_including_extrapolated_d9():
    for d in range(3, 10):
        a, b = ym_profile_params(d)
        assert a > 0 and b > 0


def test_ym_params_continuous_through_d8():
    # the limit used at d = 8 agrees with the closed forms evaluated nearby
    def closed(d):
        s = math.sqrt(3 * d * (d - 2))
        den = 3 * d - 2 * s
        return 2 * (d + 4 - s) / den, s * (8 - d) / (3 * den)

    for eps in (1e-4, -1e-4):
        a, b = closed(8 + eps)
        assert a == pytest.approx(3.0, abs=1e-3) and b == pytest.approx(8.0, abs=1e-2)


def test_profile_examples():
    assert profile_phi0(WM4, math.sqrt(2)) == pytest.approx(math.pi / 2, abs=1e-15)
    assert profile_phi0(ModelSpec(Kind.YM, 3), 1.0) == pytest.approx(1.0, abs=1e-14)
    for m in CELLS:
        assert profile_phi0(m, 0.0) == 0
    assert profile_phi0_prime(WM4, 0.0) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert profile_phi0_prime(ModelSpec(Kind.YM, 6), 0.0) == 0
    assert profile_phi0_prime(ModelSpec(Kind.WM, 5), 1.0) == pytest.approx(2 * math.sqrt(3) / 4, rel=1e-14)
    with pytest.raises(ModelError):
        profile_phi0(WM4, -0.1)


def test_profile_derivatives_match_finite_differences():
    y = np.linspace(0.1, 1.5, 30)
    for m in CELLS:
        p = SimilarityProfile.of(m)
        assert np.max(np.abs(fd(p.phi, y) - p.dphi(y))) <= 1e-8
        assert np.max(np.abs(fd(p.dphi, y) - p.d2phi(y))) <= 1e-8


def test_profile_monotone_and_below_target():
    y = np.linspace(0, 1, 1001)
    for m in CELLS:
        p = SimilarityProfile.of(m)
        assert np.all(np.diff(p.phi(y)) > 0)
        if m.d == 3:
            assert abs(p.phi(1.0) - p.phi_star) <= 1e-12
        else:
            assert p.phi(1.0) < p.phi_star


def test_origin_coefficient():
    assert SimilarityProfile.of(WM4).origin_coefficient == pytest.approx(math.sqrt(2))
    a, b = ym_profile_params(6)
    assert SimilarityProfile.of(ModelSpec(Kind.YM, 6)).origin_coefficient == pytest.approx(2 * a / b)


@pytest.mark.parametrize("m", CELLS, ids=str)
def test_profile_residual_all_cells(m):
    p = SimilarityProfile.of(m)
    y = np.linspace(1e-3, 1.0, 1000)
    assert profile_residual(m, p.phi, y, p.dphi, p.d2phi) <= 1e-10


def test_profile_residual_examples():
    y = np.linspace(1e-3, 1.0, 1000)
    wm6 = ModelSpec(Kind.WM, 6)
    p6 = SimilarityProfile.of(wm6)
    assert profile_residual(wm6, p6.phi, y, p6.dphi, p6.d2phi) <= 1e-10
    ym8 = ModelSpec(Kind.YM, 8)
    p8 = SimilarityProfile.of(ym8)
    assert (p8.a, p8.b) == (3.0, 8.0)
    assert profile_residual(ym8, p8.phi, y, p8.dphi, p8.d2phi) <= 1e-10
    p4 = SimilarityProfile.of(WM4)
    bad = profile_residual(WM4, lambda x: p4.phi(x) + 0.1, y)
    assert bad > 1e-3


def test_profile_residual_finite_difference_route():
    p = SimilarityProfile.of(WM4)
    y = np.linspace(0.05, 1.0, 200)
    assert profile_residual(WM4, p.phi, y) <= 1e-8


def test_profile_residual_rejects_origin():
    p = SimilarityProfile.of(WM4)
    with pytest.raises(ModelError):
        profile_residual(WM4, p.phi, np.linspace(0, 1, 10))


# ---------------------------------------------------------------- potential

def test_potential_examples():
    assert potential_V(WM4, 1.0) == pytest.approx(-7 / 3, rel=1e-14)
    for d in range(3, 10):
        assert y2_potential(ModelSpec(Kind.WM, d), 1e-8) == pytest.approx(d - 1, rel=1e-12)
        assert y2_potential(ModelSpec(Kind.YM, d), 1e-8) == pytest.approx(2 * d, rel=1e-12)
        ym = ModelSpec(Kind.YM, d)
        assert 1e-6**2 * potential_V(ym, 1e-6) == pytest.approx(2 * d, rel=1e-9)


def test_potential_dual_identity_all_cells():
    y = np.linspace(1e-3, 1, 1000)
    for m in CELLS:
        V = potential_V(m, y, tol=1e-12)
        composed = nonlinearity_fprime(m, profile_phi0(m, y)) / y**2
        assert np.max(np.abs(V - composed) / np.maximum(1, np.abs(V))) <= 1e-12


def test_typeset_ym_coefficients_fail_dual_check():
    y = np.linspace(0.1, 1, 50)
    for d in range(3, 10):
        good = potential_V(ModelSpec(Kind.YM, d), y)
        assert np.max(np.abs(printed_ym_potential(d, y) - good)) > 1e-3


def test_potential_guard_raises_on_mismatch(monkeypatch):
    import blowuplab.model as mm

    monkeypatch.setattr(mm, "nonlinearity_fprime", lambda model, u: 0 * u)
    with pytest.raises(PotentialMismatch):
        mm.potential_V(WM4, np.array([0.5]))


def test_potential_rejects_origin():
    with pytest.raises(ModelError):
        potential_V(WM4, 0.0)


# ---------------------------------------------------------------- snapshots and energy

def gaussian_snapshot(m, L=1.0, n=2001, R=6.0):
    r = np.linspace(0, R * L, n)
    p = m.parity
    u = (r / L) ** p * np.exp(-((r / L) ** 2))
    ut = 0.3 * (r / L) ** p * np.exp(-((r / L - 0.5) ** 2)) / L
    return FieldSnapshot(0.0, r, u, ut)


def test_snapshot_validation():
    with pytest.raises(ModelError):
        FieldSnapshot(0, np.array([0.1, 0.2]), np.zeros(2), np.zeros(2))
    with pytest.raises(ModelError):
        FieldSnapshot(0, np.array([0.0, 0.2, 0.1]), np.zeros(3), np.zeros(3))
    with pytest.raises(ModelError):
        FieldSnapshot(0, np.array([0.0, 0.2]), np.zeros(3), np.zeros(2))


def test_energy_zero_and_positive():
    r = np.linspace(0, 5, 101)
    assert energy(FieldSnapshot(0, r, np.zeros_like(r), np.zeros_like(r)), WM4) == 0
    assert 0 < energy(gaussian_snapshot(WM4), WM4) < np.inf


def test_energy_rejects_non_finite():
    r = np.linspace(0, 5, 11)
    u = np.zeros_like(r)
    u[3] = np.nan
    with pytest.raises(ModelError):
        energy(FieldSnapshot(0, r, u, np.zeros_like(r)), WM4)


@pytest.mark.parametrize("m", [WM4, ModelSpec(Kind.WM, 7), ModelSpec(Kind.YM, 5)], ids=str)
def test_energy_scaling_identity(m):
    # same discrete data on an exactly rescaled grid: a change of variables
    s1 = gaussian_snapshot(m, 1.0)
    L = 2.0
    s2 = FieldSnapshot(0.0, L * s1.r, s1.u, s1.ut / L)
    for w in (1.0, 2.0):
        ratio = energy(s2, m, w) / energy(s1, m, w)
        assert ratio == pytest.approx(L ** (m.d - 2), rel=1e-10)


def test_energy_quadrature_converges():
    # WM4 with u = r e^{-r^2}, u_t = 0 has a closed-form gradient part
    r = np.linspace(0, 8, 4001)
    u = r * np.exp(-(r**2))
    kin = energy(FieldSnapshot(0, r, u, 0 * r), WM4, potential_weight=0.0)
    # int_0^inf (1-2r^2)^2 e^{-2r^2} r^3 dr = 3/8
    assert kin == pytest.approx(3 / 8, rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2))
def test_energy_potential_term_matches_closed_form(c):
    # u = c r e^{-r^2} near zero amplitude: F(u) ~ (d-1)/2 u^2 for WM
    r = np.linspace(0, 8, 2001)
    u = 1e-4 * c * r * np.exp(-(r**2))
    e_pot = energy(FieldSnapshot(0, r, u, 0 * r), WM4, 1.0) - energy(FieldSnapshot(0, r, u, 0 * r), WM4, 0.0)
    # int 3/2 c^2 r^2 e^{-2r^2} r dr * 1e-8 = 3/2 c^2 / 8 * 1e-8
    assert e_pot == pytest.approx(1.5 * c * c / 8 * 1e-8, rel=1e-6, abs=1e-20)
