"""Linear stability spectrum of phi0 from local Heun series.

The eigenvalue equation for perturbations e^{lambda s} v(y) is mapped by

    x = c y^2 / (y^2 + c - 1),   v = x^mu (c - x)^(lambda/2) w(x)

onto the general Heun equation with singular points 0, 1, c, infinity.
Eigenvalues are the zeros of the Wronskian of the solutions analytic at
x = 0 (y = 0) and x = 1 (y = 1).

The solution analytic at x = 1 is carried as w1 / Gamma(delta).  Whenever
delta crosses a non-positive integer the plain local solution has a pole in
lambda (a logarithm appears at y = 1); dividing by Gamma(delta) removes the
pole, so the Wronskian is entire in lambda and every sign change is a root.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq
from scipy.special import rgamma

from .model import Kind, ModelError, ModelSpec, SimilarityProfile, ym_profile_params

Anchor = Literal["zero", "one"]

FUCHS_TOL = 1e-12
TAIL_TOL = 1e-14
ORDER_MIN = 60
ORDER_CAP = 2000


class SeriesError(ArithmeticError):
    pass


@dataclass(frozen=True)
class HeunSetup:
    c: float
    q: float
    alpha: float
    beta: float
    gamma: float
    delta: float
    epsilon: float
    mu: float
    lam: float

    @property
    def fuchs_defect(self) -> float:
        return self.gamma + self.delta + self.epsilon - (self.alpha + self.beta + 1)

    def swapped(self) -> "HeunSetup":
        """Parameters of the local solution at x = 1, in the variable 1 - x."""
        return replace(
            self,
            c=1 - self.c,
            q=self.alpha * self.beta - self.q,
            gamma=self.delta,
            delta=self.gamma,
        )


def printed_epsilon(model: ModelSpec) -> float:
    """epsilon as typeset in the source tables (d/2 for WM, 1/2 for YM)."""
    return model.d / 2 if model.kind is Kind.WM else 0.5


def heun_setup(model: ModelSpec, lam: float, epsilon: float | None = None) -> HeunSetup:
    """Heun parameters for the perturbation equation at spectral parameter lam.

    epsilon defaults to the value forced by the Fuchs relation.  Passing an
    explicit epsilon (e.g. ``printed_epsilon(model)``) is only meant for
    checking that the residual oracle rejects a wrong value.
    """
    d = model.d
    lam = float(lam)
    if model.kind is Kind.WM:
        c = d - 1.0
        gamma = 1 + d / 2
        delta = (3 - d) / 2 + lam
        alpha = (lam + 5) / 2
        beta = (lam - 1) / 2
        q = (lam - 1) * (d * lam + 5 * d - 2 * lam - 6) / 4
        mu = 0.5
    else:
        a, b = ym_profile_params(d)
        disc = 3 * a * a * b * d + 3 * a * a * d + b * b + 2 * b + 1
        if disc < 0:
            raise ModelError(f"negative discriminant {disc} in YM beta for d={d}")
        c = b + 1
        gamma = 2 + d / 2
        delta = (3 - d) / 2 + lam
        beta = (b * lam + math.sqrt(disc) + 3 * b + lam + 3) / (2 * b + 2)
        alpha = 3 + lam - beta
        q = b * lam**2 / 4 - 3 * a * d / 2 + 5 * b * lam / 4 + d * lam / 4 + 3 * b / 2 + d / 2 + lam + 2
        mu = 1.0
    if epsilon is None:
        epsilon = alpha + beta + 1 - gamma - delta
    return HeunSetup(c, q, alpha, beta, gamma, delta, float(epsilon), mu, lam)


@dataclass
class SeriesSolution:
    anchor: Anchor
    coefficients: np.ndarray
    truncation_order: int
    convergence_radius: float
    setup: HeunSetup = field(repr=False)
    regularized: bool = False

    def _local(self, x):
        return np.asarray(x, dtype=float) if self.anchor == "zero" else 1 - np.asarray(x, dtype=float)

    def _check(self, z):
        if np.any(np.abs(z) >= self.convergence_radius):
            raise SeriesError(
                f"evaluation at local distance {np.max(np.abs(z)):.4g} outside convergence disk "
                f"of radius {self.convergence_radius:.4g} around x={0 if self.anchor == 'zero' else 1}"
            )

    def tail(self, x) -> float:
        z = np.max(np.abs(self._local(x)))
        cs = self.coefficients
        k = np.arange(len(cs))
        terms = np.abs(cs[-8:]) * z ** k[-8:]
        scale = max(1.0, float(np.max(np.abs(cs) * z**k)))
        return float(np.max(terms) / scale)

    def __call__(self, x, deriv: int = 0):
        """w(x), w'(x) or w''(x), derivatives taken in x."""
        z = self._local(x)
        self._check(z)
        cs = P.polyder(self.coefficients, deriv) if deriv else self.coefficients
        val = P.polyval(z, cs)
        return -val if (self.anchor == "one" and deriv % 2) else val


def _recurrence_step(A, q, al, be, g, dl, ep, j):
    """Factors of a(j+1)(j+g) c_{j+1} = X_j c_j - Y_j c_{j-1}."""
    X = j * ((j - 1 + g) * (1 + A) + A * dl + ep) + q
    Y = (j - 1 + al) * (j - 1 + be)
    return X, Y


def _coefficients(s: HeunSetup, N: int, regularize: bool) -> np.ndarray:
    A, q, al, be, g, dl, ep = s.c, s.q, s.alpha, s.beta, s.gamma, s.delta, s.epsilon
    cs = np.zeros(N + 1)
    if not regularize:
        if g <= 0 and float(g).is_integer():
            raise SeriesError(f"gamma={g} is a non-positive integer; no analytic local solution")
        cs[0] = 1.0
        if N >= 1:
            cs[1] = q / (A * g)
        j0 = 1
    else:
        # coefficients of w/Gamma(g): c_j = p_j / Gamma(g + j) with p polynomial in g
        j0 = max(1, int(math.ceil(1 - g)) + 1)
        p = np.zeros(j0 + 2)
        p[0] = 1.0
        p[1] = q / A
        for j in range(1, j0 + 1):
            X, Y = _recurrence_step(A, q, al, be, g, dl, ep, j)
            p[j + 1] = (X * p[j] - Y * (g + j - 1) * p[j - 1]) / (A * (j + 1))
        m = min(N, j0 + 1)
        cs[: m + 1] = p[: m + 1] * rgamma(g + np.arange(m + 1))
        j0 = m
    for j in range(j0, N):
        X, Y = _recurrence_step(A, q, al, be, g, dl, ep, j)
        cs[j + 1] = (X * cs[j] - Y * cs[j - 1]) / (A * (j + 1) * (j + g))
    return cs


def heun_series(
    setup: HeunSetup,
    anchor: Anchor = "zero",
    order: int | None = None,
    x_eval: float = 0.5,
    tol: float = TAIL_TOL,
) -> SeriesSolution:
    """Local Heun function analytic at x = 0 or x = 1.

    Anchor "zero" is HeunG(c, q, alpha, beta, gamma, delta; x) with w(0) = 1.
    Anchor "one" is HeunG(1-c, alpha beta - q, alpha, beta, delta, gamma; 1-x)
    divided by Gamma(delta) (the plain function has poles at delta = 0, -1, ...).

    Without ``order`` the truncation is doubled from ORDER_MIN until the tail
    at ``x_eval`` drops below ``tol``.
    """
    if anchor == "zero":
        local, regularize = setup, False
        radius = min(1.0, abs(setup.c))
    elif anchor == "one":
        local, regularize = setup.swapped(), True
        radius = min(1.0, abs(setup.c - 1))
    else:
        raise ValueError(f"unknown anchor {anchor!r}")
    z = abs(x_eval if anchor == "zero" else 1 - x_eval)
    if order is not None:
        cs = _coefficients(local, order, regularize)
        return SeriesSolution(anchor, cs, order, radius, setup, regularize)
    if z >= radius:
        raise SeriesError(f"x={x_eval} outside convergence disk of anchor {anchor}")
    N = ORDER_MIN
    while True:
        cs = _coefficients(local, N, regularize)
        sol = SeriesSolution(anchor, cs, N, radius, setup, regularize)
        if sol.tail(x_eval) < tol:
            return sol
        if N >= ORDER_CAP:
            raise SeriesError(f"series tail {sol.tail(x_eval):.3e} above {tol:.1e} at order cap {ORDER_CAP}")
        N = min(2 * N, ORDER_CAP)


def heun_residual(sol: SeriesSolution, x) -> np.ndarray:
    """Pointwise residual of the Heun equation multiplied by x(x-1)(x-c)."""
    s = sol.setup
    x = np.asarray(x, dtype=float)
    w, dw, d2w = sol(x), sol(x, 1), sol(x, 2)
    xx = x * (x - 1) * (x - s.c)
    res = (
        xx * d2w
        + (s.gamma * (x - 1) * (x - s.c) + s.delta * x * (x - s.c) + s.epsilon * x * (x - 1)) * dw
        + (s.alpha * s.beta * x - s.q) * w
    )
    scale = np.abs(xx * d2w) + np.abs(s.alpha * s.beta * x * w) + np.abs(s.q * w) + 1e-300
    return res / np.maximum(scale, 1.0)


def wronskian(model: ModelSpec, lam: float, x_match: float = 0.5, epsilon: float | None = None) -> float:
    """Abel-normalized Wronskian x^g (1-x)^d (c-x)^e (w0' w1 - w1' w0).

    Independent of x_match; vanishes exactly at eigenvalues.
    """
    if not 0 < x_match < 1:
        raise ValueError("x_match must lie in (0, 1)")
    s = heun_setup(model, lam, epsilon)
    w0 = heun_series(s, "zero", x_eval=x_match)
    w1 = heun_series(s, "one", x_eval=x_match)
    x = x_match
    W = w0(x, 1) * w1(x) - w1(x, 1) * w0(x)
    return float(x**s.gamma * (1 - x) ** s.delta * (s.c - x) ** s.epsilon * W)


@dataclass(frozen=True)
class Eigenvalue:
    lam: float
    bracket: tuple[float, float]
    wronskian_residual: float
    converged: bool = True


@dataclass
class Spectrum:
    model: ModelSpec
    eigenvalues: list[Eigenvalue]
    scan_window: tuple[float, float]
    scan_step: float
    stalled: list[tuple[float, float]] = field(default_factory=list)

    @property
    def values(self) -> list[float]:
        return [e.lam for e in self.eigenvalues]

    @property
    def empty(self) -> bool:
        return not self.eigenvalues


def scan_grid(window: tuple[float, float], step: float) -> np.ndarray:
    lo, hi = window
    if hi < lo:
        return np.empty(0)
    n = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def refine_root(func, lo: float, hi: float, xtol: float = 1e-8, maxiter: int = 200):
    """Brent refinement of a sign-change bracket; returns (root, f(root), converged)."""
    try:
        root, info = brentq(func, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps,
                            maxiter=maxiter, full_output=True, disp=False)
    except (RuntimeError, ValueError):
        root = 0.5 * (lo + hi)
        return root, func(root), False
    return root, func(root), bool(info.converged)


def find_eigenvalues(
    model: ModelSpec,
    window: tuple[float, float] = (-7.0, 1.5),
    step: float = 0.05,
    xtol: float = 1e-8,
    workers: int = 1,
) -> Spectrum:
    """Real eigenvalues in ``window`` from sign changes of the Wronskian.

    Only the real axis is scanned; complex eigenvalues would be missed.
    """
    if step > 0.05 + 1e-15:
        raise ValueError("scan step must be <= 0.05")
    grid = scan_grid(window, step)
    if len(grid) == 0:
        return Spectrum(model, [], tuple(window), step)

    def W(l):
        return wronskian(model, l)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            vals = np.array(list(pool.map(W, grid)))
    else:
        vals = np.array([W(l) for l in grid])

    found: list[Eigenvalue] = []
    stalled = []
    for i in range(len(grid)):
        if vals[i] == 0:
            found.append(Eigenvalue(float(grid[i]), (float(grid[i]), float(grid[i])), 0.0))
            continue
        if i + 1 < len(grid) and vals[i] * vals[i + 1] < 0:
            lo, hi = float(grid[i]), float(grid[i + 1])
            root, res, ok = refine_root(W, lo, hi, xtol)
            found.append(Eigenvalue(root, (lo, hi), abs(res), ok))
            if not ok:
                stalled.append((lo, hi))
    found.sort(key=lambda e: -e.lam)
    return Spectrum(model, found, (float(window[0]), float(window[1])), step, stalled)


def to_x(model: ModelSpec, y):
    c = heun_setup(model, 0.0).c
    y = np.asarray(y, dtype=float)
    return c * y**2 / (y**2 + c - 1)


def _series_for_grid(s: HeunSetup, x: np.ndarray) -> SeriesSolution:
    # away from eigenvalues the anchor-0 series converges only like x^N near x = 1
    xmax = float(np.max(x)) if x.size else 0.0
    if xmax >= 1:
        raise SeriesError("y = 1 (x = 1) lies on the boundary of the anchor-0 series disk")
    return heun_series(s, "zero", x_eval=max(xmax, 0.5), tol=1e-12)


def eigenfunction_backmap(model: ModelSpec, lam: float, y_grid, epsilon: float | None = None) -> np.ndarray:
    """v(y) = x^mu (c-x)^(lam/2) w0(x), scaled so that v ~ y^p at the origin.

    p = 1 for WM and 2 for YM.  Points with x beyond the anchor-0 series
    disk (y too close to 1) raise SeriesError.
    """
    y = np.asarray(y_grid, dtype=float)
    if np.any(y < 0) or np.any(y > 1):
        raise ModelError("eigenfunction grid must lie in [0, 1]")
    s = heun_setup(model, lam, epsilon)
    x = to_x(model, y)
    w0 = _series_for_grid(s, x)
    v = x**s.mu * (s.c - x) ** (lam / 2) * w0(x)
    # x ~ c/(c-1) y^2 near the origin
    lead = (s.c / (s.c - 1)) ** s.mu * s.c ** (lam / 2)
    return v / lead


def eigenfunction_derivatives(model: ModelSpec, lam: float, y, epsilon: float | None = None):
    """(v, v', v'') in y from the series, exact up to truncation."""
    y = np.asarray(y, dtype=float)
    s = heun_setup(model, lam, epsilon)
    c, mu = s.c, s.mu
    x = c * y**2 / (y**2 + c - 1)
    xy = 2 * c * (c - 1) * y / (y**2 + c - 1) ** 2
    xyy = 2 * c * (c - 1) * (c - 1 - 3 * y**2) / (y**2 + c - 1) ** 3
    w0 = _series_for_grid(s, x)
    w, wx, wxx = w0(x), w0(x, 1), w0(x, 2)
    # prefactor Q(x) = x^mu (c-x)^k, k = lam/2, via log-derivatives
    k = lam / 2
    Q = x**mu * (c - x) ** k
    l1 = mu / x - k / (c - x)
    l2 = -mu / x**2 - k / (c - x) ** 2
    Qx = Q * l1
    Qxx = Q * (l1 * l1 + l2)
    Vx = Q * w
    Vxd = Qx * w + Q * wx
    Vxdd = Qxx * w + 2 * Qx * wx + Q * wxx
    lead = (c / (c - 1)) ** mu * c**k
    v = Vx / lead
    dv = Vxd * xy / lead
    d2v = (Vxdd * xy**2 + Vxd * xyy) / lead
    return v, dv, d2v


def eigen_residual(model: ModelSpec, lam: float, y, v, dv, d2v) -> np.ndarray:
    """Residual of the quadratic eigenvalue equation for v(y)."""
    from .model import potential_V

    y = np.asarray(y, dtype=float)
    d = model.d
    V = potential_V(model, y)
    return (1 - y**2) * d2v + ((d - 1) / y - 2 * (lam + 1) * y) * dv - lam * (lam + 1) * v - V * v


def gauge_mode(model: ModelSpec, y) -> np.ndarray:
    """y phi0'(y) scaled to unit leading Taylor coefficient at y = 0."""
    prof = SimilarityProfile.of(model)
    y = np.asarray(y, dtype=float)
    v = y * prof.dphi(y)
    return v / prof.origin_coefficient
