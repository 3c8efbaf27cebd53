"""Independent check of the Heun spectrum: integrate the eigenvalue ODE
directly in y from Frobenius starts at both singular endpoints and match at
y = 1/2.

With k = d-2 (WM) or b (YM), multiplying the eigenvalue equation by
y^2 (y^2+k)^2 leaves polynomial coefficients

    P2 v'' + P1 v' + P0 v = 0,
    P2 = y^2 (y^2+k)^2 (1-y^2),
    P1 = y (y^2+k)^2 ((d-1) - 2(lam+1) y^2),
    P0 = -(lam(lam+1) y^2 (y^2+k)^2 + y^2 (y^2+k)^2 V(y)),

so the local series at y = 0 and y = 1 follow from a generic recurrence.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp
from scipy.special import rgamma

from .model import Kind, ModelSpec, ym_profile_params

N_TERMS = 40
Y_START_ORIGIN = 0.1
Z_START_EDGE = 0.2
Y_MATCH = 0.5


class ShootingError(RuntimeError):
    def __init__(self, msg, lam):
        super().__init__(f"{msg} (lambda={lam})")
        self.lam = lam


def ode_polynomials(model: ModelSpec, lam: float) -> tuple[Polynomial, Polynomial, Polynomial]:
    d = model.d
    y = Polynomial([0, 1])
    y2 = y * y
    if model.kind is Kind.WM:
        k = d - 2.0
        numer = (d - 1) * (y2 * y2 + (12 - 6 * d) * y2 + (d - 2) ** 2)
    else:
        a, b = ym_profile_params(d)
        k = b
        numer = d * ((3 * a * a - 6 * a + 2) * y2 * y2 + (4 * b - 6 * a * b) * y2 + 2 * b * b)
    w = (y2 + k) ** 2
    P2 = y2 * w * (1 - y2)
    P1 = y * w * ((d - 1) - 2 * (lam + 1) * y2)
    P0 = -(lam * (lam + 1) * y2 * w + numer)
    return P2, P1, P0


def frobenius(P2, P1, P0, y0: float, exponent: float, n_terms: int = N_TERMS, other: float | None = None):
    """Coefficients a_n of v = sum a_n (y-y0)^(n+exponent) at a regular singular point.

    If ``other`` (the second indicial root) exceeds ``exponent`` by a
    positive integer the solution is returned divided by
    Gamma(1 - (other - exponent)), which keeps it finite through resonance.
    """
    shift = Polynomial([y0, 1])
    p2, p1, p0 = (np.asarray(p(shift).coef, dtype=float) for p in (P2, P1, P0))
    m = 0
    while abs(p2[m]) < 1e-14 * np.max(np.abs(p2)):
        m += 1
    if m not in (1, 2):
        raise ValueError(f"y0={y0} is not a regular singular point (order {m})")
    # t^2 At v'' + t B v' + C v = 0
    At = p2[m:]
    B = p1 if m == 1 else p1[1:]
    C = np.concatenate([np.zeros(2 - m), p0])
    if m == 2 and abs(p1[0]) > 1e-12 * np.max(np.abs(p1)):
        raise ValueError("coefficient of v' does not vanish at a double zero of P2")
    L = n_terms + 1

    def pad(c):
        out = np.zeros(L)
        out[: min(L, len(c))] = c[:L]
        return out

    At, B, C = pad(At), pad(B), pad(C)

    def F(j, r):
        return At[j] * r * (r - 1) + B[j] * r + C[j]

    s = exponent
    gap = None if other is None else other - s
    resonant = gap is not None and gap > 0 and abs(gap - round(gap)) < 1e-12
    regularize = gap is not None and gap > 0
    a = np.zeros(L)
    if not regularize:
        a[0] = 1.0
        for n in range(1, L):
            acc = sum(a[n - k] * F(k, n - k + s) for k in range(1, n + 1))
            a[n] = -acc / F(0, n + s)
        return a
    # F(0, n+s) = At0 n (n - gap); a_n = p_n / Gamma(n + 1 - gap)
    p = np.zeros(L)
    p[0] = 1.0
    for n in range(1, L):
        acc = 0.0
        for k in range(1, n + 1):
            prod = 1.0
            for j in range(n - k + 1, n):
                prod *= j - gap
            acc += p[n - k] * F(k, n - k + s) * prod
        p[n] = -acc / (At[0] * n)
    if resonant:
        g = int(round(gap))
        a = np.array([p[n] * (0.0 if n + 1 - g <= 0 else 1.0 / math.factorial(n - g)) for n in range(L)])
    else:
        a = p * rgamma(np.arange(L) + 1 - gap)
    return a


def _series_value(a, t, s):
    n = np.arange(len(a))
    val = np.sum(a * t ** (n + s))
    der = np.sum(a * (n + s) * t ** (n + s - 1))
    return val, der


def shooting_wronskian(model: ModelSpec, lam: float, n_terms: int = N_TERMS, rtol: float = 1e-12) -> float:
    """Abel-normalized Wronskian of the solutions regular at y = 0 and y = 1,
    obtained by numerical integration to y = 1/2.
    """
    d = model.d
    P2, P1, P0 = ode_polynomials(model, lam)
    p = 1 if model.kind is Kind.WM else 2
    a0 = frobenius(P2, P1, P0, 0.0, p, n_terms)
    sigma = (d - 1) / 2 - lam
    a1 = frobenius(P2, P1, P0, 1.0, 0.0, n_terms, other=sigma)

    def rhs(y, z):
        return [z[1], -(P1(y) * z[1] + P0(y) * z[0]) / P2(y)]

    ya = Y_START_ORIGIN
    v, dv = _series_value(a0, ya, p)
    left = solve_ivp(rhs, (ya, Y_MATCH), [v, dv], method="DOP853", rtol=rtol, atol=1e-300)
    # local variable t = y - 1 is negative on the integration side
    yb = 1 - Z_START_EDGE
    tb = -Z_START_EDGE
    v, dv = _series_value(a1, tb, 0.0)
    right = solve_ivp(rhs, (yb, Y_MATCH), [v, dv], method="DOP853", rtol=rtol, atol=1e-300)
    if not (left.success and right.success):
        raise ShootingError(f"integration failed: {left.message if not left.success else right.message}", lam)
    v0, dv0 = left.y[:, -1]
    v1, dv1 = right.y[:, -1]
    y = Y_MATCH
    W = dv0 * v1 - dv1 * v0
    return float(W * y ** (d - 1) * (1 - y * y) ** (lam + 1 - (d - 1) / 2))


def spectral_crosscheck_shooting(model: ModelSpec, lam: float) -> float:
    return shooting_wronskian(model, lam)
