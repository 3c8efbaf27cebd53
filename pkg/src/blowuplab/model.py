"""Radial wave equation u_tt = u_rr + (d-1)/r u_r - f(u)/r^2 for equivariant
wave maps (WM) and SO(d) Yang-Mills (YM): nonlinearities, energy, and the
explicit self-similar blowup profile phi0(y), y = r/(T - t).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

D_MIN, D_MAX = 3, 9


class Kind(str, enum.Enum):
    WM = "WM"
    YM = "YM"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: Kind
    d: int

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, Kind) else Kind(str(self.kind).upper())
        object.__setattr__(self, "kind", kind)
        if not isinstance(self.d, (int, np.integer)) or not D_MIN <= self.d <= D_MAX:
            raise ModelError(f"dimension d={self.d!r} outside supported range {D_MIN}..{D_MAX}")
        object.__setattr__(self, "d", int(self.d))

    @classmethod
    def parse(cls, kind: str, d: int) -> "ModelSpec":
        try:
            return cls(Kind(str(kind).upper()), d)
        except ValueError as exc:
            raise ModelError(str(exc)) from None

    @property
    def degenerate(self) -> bool:
        """YM at d=8: the closed forms for (a, b) are 0/0 there."""
        return self.kind is Kind.YM and self.d == 8

    @property
    def parity(self) -> int:
        """Leading power of u near the origin (u ~ r for WM, u ~ r^2 for YM)."""
        return 1 if self.kind is Kind.WM else 2

    def __str__(self):
        return f"{self.kind.value}{self.d}"


def nonlinearity_f(model: ModelSpec, u):
    d = model.d
    if model.kind is Kind.WM:
        return (d - 1) * np.sin(u) * np.cos(u)
    return d * u * (1 - u) * (2 - u)


def nonlinearity_fprime(model: ModelSpec, u):
    d = model.d
    if model.kind is Kind.WM:
        return (d - 1) * np.cos(2 * u)
    return d * (3 * u**2 - 6 * u + 2)


def potential_energy_F(model: ModelSpec, u):
    """Antiderivative of f with F(0) = 0; nonnegative for both models."""
    d = model.d
    if model.kind is Kind.WM:
        return 0.5 * (d - 1) * np.sin(u) ** 2
    return 0.25 * d * u**2 * (2 - u) ** 2


def ym_profile_params(d: int) -> tuple[float, float]:
    """Parameters (a, b) of the YM profile a y^2 / (y^2 + b).

    At d = 8 numerator and denominator of both closed forms vanish; the
    limit (3, 8) is returned instead.
    """
    if not isinstance(d, (int, np.integer)) or not D_MIN <= d <= D_MAX:
        raise ModelError(f"dimension d={d!r} outside supported range {D_MIN}..{D_MAX}")
    if d == 8:
        return 3.0, 8.0
    s = math.sqrt(3 * d * (d - 2))
    den = 3 * d - 2 * s
    a = 2 * (d + 4 - s) / den
    b = s * (8 - d) / (3 * den)
    return a, b


@dataclass(frozen=True)
class SimilarityProfile:
    """Closed-form self-similar solution phi0 of the similarity ODE."""

    model: ModelSpec
    a: float = field(default=float("nan"))
    b: float = field(default=float("nan"))
    phi_star: float = field(default=float("nan"))

    @classmethod
    def of(cls, model: ModelSpec) -> "SimilarityProfile":
        if model.kind is Kind.WM:
            return cls(model, float("nan"), float("nan"), math.pi / 2)
        a, b = ym_profile_params(model.d)
        return cls(model, a, b, 1.0)

    def phi(self, y):
        return profile_phi0(self.model, y, self)

    def dphi(self, y):
        return profile_phi0_prime(self.model, y, self)

    def d2phi(self, y):
        y = np.asarray(y, dtype=float)
        if self.model.kind is Kind.WM:
            k = self.model.d - 2
            return -4 * math.sqrt(k) * y / (y**2 + k) ** 2
        a, b = self.a, self.b
        return 2 * a * b * (b - 3 * y**2) / (y**2 + b) ** 3

    @property
    def origin_coefficient(self) -> float:
        """First nonvanishing Taylor coefficient of phi0 at y = 0, times n!.

        phi0'(0) for WM, phi0''(0) = 2a/b for YM.
        """
        if self.model.kind is Kind.WM:
            return 2 / math.sqrt(self.model.d - 2)
        return 2 * self.a / self.b


def _profile(model: ModelSpec, profile: SimilarityProfile | None) -> SimilarityProfile:
    if profile is None or profile.model != model:
        return SimilarityProfile.of(model)
    return profile


def profile_phi0(model: ModelSpec, y, profile: SimilarityProfile | None = None):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ModelError("profile_phi0 needs y >= 0")
    if model.kind is Kind.WM:
        out = 2 * np.arctan(y / math.sqrt(model.d - 2))
    else:
        p = _profile(model, profile)
        out = p.a * y**2 / (y**2 + p.b)
    return out if out.ndim else float(out)


def profile_phi0_prime(model: ModelSpec, y, profile: SimilarityProfile | None = None):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ModelError("profile_phi0_prime needs y >= 0")
    if model.kind is Kind.WM:
        k = model.d - 2
        out = 2 * math.sqrt(k) / (y**2 + k)
    else:
        p = _profile(model, profile)
        out = 2 * p.a * p.b * y / (y**2 + p.b) ** 2
    return out if out.ndim else float(out)


def _fd4(phi: Callable, y: np.ndarray, h: float):
    d1 = (phi(y - 2 * h) - 8 * phi(y - h) + 8 * phi(y + h) - phi(y + 2 * h)) / (12 * h)
    d2 = (-phi(y - 2 * h) + 16 * phi(y - h) - 30 * phi(y) + 16 * phi(y + h) - phi(y + 2 * h)) / (12 * h * h)
    return d1, d2


def profile_residual(model: ModelSpec, phi, y_grid, dphi=None, d2phi=None, h: float = 1e-3) -> float:
    """Max over y_grid of |(1-y^2) phi'' + ((d-1)/y - 2y) phi' - f(phi)/y^2|.

    ``phi`` is a callable.  Without ``dphi``/``d2phi`` the derivatives come
    from 4th-order central differences with step ``h``, shrunk near y = 0.
    """
    y = np.asarray(y_grid, dtype=float)
    if np.any(y <= 0) or np.any(y > 1):
        raise ModelError("residual grid must lie in (0, 1]; y=0 has no finite pointwise residual")
    if dphi is None or d2phi is None:
        # keep the stencil inside y > 0
        fd1, fd2 = _fd4(phi, y, min(h, 0.25 * float(np.min(y))))
        dphi_v = fd1 if dphi is None else dphi(y)
        d2phi_v = fd2 if d2phi is None else d2phi(y)
    else:
        dphi_v, d2phi_v = dphi(y), d2phi(y)
    p = phi(y)
    res = (1 - y**2) * d2phi_v + ((model.d - 1) / y - 2 * y) * dphi_v - nonlinearity_f(model, p) / y**2
    return float(np.max(np.abs(res)))


class PotentialMismatch(ArithmeticError):
    pass


def potential_V(model: ModelSpec, y, tol: float = 1e-12, profile: SimilarityProfile | None = None):
    """Linearization potential f'(phi0(y))/y^2 via its explicit rational form.

    The rational form is cross-checked against the composition f'(phi0)/y^2;
    disagreement beyond ``tol`` (relative to max(1, |V|)) raises.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ModelError("potential_V needs y > 0; only y^2 V(y) is finite at the origin")
    d = model.d
    y2 = y * y
    if model.kind is Kind.WM:
        rational = (d - 1) / y2 * (y2**2 + (12 - 6 * d) * y2 + (d - 2) ** 2) / (y2 + d - 2) ** 2
    else:
        p = _profile(model, profile)
        a, b = p.a, p.b
        rational = d / y2 * ((3 * a * a - 6 * a + 2) * y2**2 + (4 * b - 6 * a * b) * y2 + 2 * b * b) / (y2 + b) ** 2
    composed = nonlinearity_fprime(model, profile_phi0(model, y, profile)) / y2
    err = np.abs(rational - composed) / np.maximum(1.0, np.abs(rational))
    if np.any(err > tol):
        raise PotentialMismatch(f"V(y) rational form disagrees with f'(phi0)/y^2 by {err.max():.3e}")
    return rational if rational.ndim else float(rational)


def printed_ym_potential(d: int, y):
    """YM potential with the quartic and quadratic coefficients as typeset in
    the source, (3a^2 - 6a) and (2 - 6ab).  It does not equal f'(phi0)/y^2;
    kept only so the dual-computation guard can be shown to reject it.
    """
    a, b = ym_profile_params(d)
    y2 = np.asarray(y, dtype=float) ** 2
    return d / y2 * ((3 * a * a - 6 * a) * y2**2 + (2 - 6 * a * b) * y2 + 2 * b * b) / (y2 + b) ** 2


def y2_potential(model: ModelSpec, y):
    """y^2 V(y), finite down to y = 0."""
    return nonlinearity_fprime(model, profile_phi0(model, np.asarray(y, dtype=float)))


@dataclass(frozen=True)
class FieldSnapshot:
    t: float
    r: np.ndarray
    u: np.ndarray
    ut: np.ndarray

    def __post_init__(self):
        r, u, ut = (np.asarray(a, dtype=float) for a in (self.r, self.u, self.ut))
        if not (r.shape == u.shape == ut.shape) or r.ndim != 1:
            raise ModelError("r, u, ut must be 1-D arrays of equal length")
        if r[0] != 0 or np.any(np.diff(r) <= 0):
            raise ModelError("r must start at 0 and increase strictly")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "ut", ut)


def _radial_derivative(r, u):
    # cubic spline slope: third order on nonuniform nodes, exact under r -> L r
    return CubicSpline(r, u)(r, 1)


def energy(snapshot: FieldSnapshot, model: ModelSpec, potential_weight: float = 2.0) -> float:
    """Composite Simpson quadrature of (u_t^2 + u_r^2 + w F(u)/r^2) r^(d-1).

    With F' = f the functional conserved by the evolution has w = 2 (multiply
    the equation by u_t r^(d-1) and integrate); w = 1 gives the functional as
    usually typeset, which obeys the same scaling law but drifts in time.
    F(u)/r^2 at r = 0 is replaced by its regular limit: F ~ f'(0) u^2 / 2
    with u ~ u_r(0) r (WM) or u ~ u_rr(0) r^2 / 2 (YM).
    """
    r, u, ut = snapshot.r, snapshot.u, snapshot.ut
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut))):
        raise ModelError("non-finite field values in snapshot")
    d = model.d
    ur = _radial_derivative(r, u)
    pot = np.empty_like(u)
    pot[1:] = potential_energy_F(model, u[1:]) / r[1:] ** 2
    if model.kind is Kind.WM:
        pot[0] = 0.5 * (d - 1) * ur[0] ** 2
    else:
        pot[0] = 0.0  # F ~ d u^2 = O(r^4): vanishes at r = 0
    integrand = (ut**2 + ur**2 + potential_weight * pot) * r ** (d - 1)
    return float(simpson(integrand, x=r))
