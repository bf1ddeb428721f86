"""Variational model: parameters, action functional, Euler-Lagrange residual, identities.

The stationary problem is (-Lap)^s u + |x|^2 u = lambda*u + |u|^(q-2) u with
action Phi(u) = (K + P - lambda*mass)/2 - Q/q in the notation of
`core.Observables` (K = kinetic_s, P = potential, Q = power_q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Field, FieldError, Observables, observables, window_fractional_apply


def critical_exponents(N: int, s: float) -> tuple[float, float]:
    """(q_lower, q_upper) = (2 + 4s/N, 2N/(N-2s)); q_upper is +inf when N <= 2s."""
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ValueError(f"dimension must be a positive integer, got {N!r}")
    if not 0.0 < s <= 1.0:
        raise ValueError(f"fractional order must lie in (0, 1], got {s}")
    q_lower = 2.0 + 4.0 * s / N
    q_upper = 2.0 * N / (N - 2.0 * s) if N > 2.0 * s else math.inf
    return q_lower, q_upper


@dataclass(frozen=True)
class ModelParams:
    """Model parameters (N, s, q, lambda); regime flags are always recomputed."""

    N: int
    s: float
    q: float
    lam: float

    def __post_init__(self) -> None:
        critical_exponents(self.N, self.s)  # validates N and s
        if not self.q > 2.0:
            raise ValueError(f"nonlinearity exponent must exceed 2, got {self.q}")

    @property
    def q_lower(self) -> float:
        return critical_exponents(self.N, self.s)[0]

    @property
    def q_upper(self) -> float:
        return critical_exponents(self.N, self.s)[1]

    @property
    def mass_supercritical(self) -> bool:
        return self.q > self.q_lower

    @property
    def sobolev_subcritical(self) -> bool:
        return self.q < self.q_upper


def pohozaev_k(N: int, s: float, q: float) -> float:
    """k = ((q-2)N - 4s) / (2N - (N-2s)q); NaN when the denominator vanishes.

    Positive exactly when q lies strictly between the two critical exponents.
    """
    num = (q - 2.0) * N - 4.0 * s
    den = 2.0 * N - (N - 2.0 * s) * q
    if abs(den) <= 1e-12 * (2.0 * N + abs((N - 2.0 * s) * q)):
        return math.nan
    return num / den


def nonlinearity(values: np.ndarray, q: float) -> np.ndarray:
    """Pointwise |u|^(q-2) u, evaluated as sign(u)|u|^(q-1) to keep odd symmetry."""
    return np.sign(values) * np.abs(values) ** (q - 1.0)


def nonlinearity_derivative(values: np.ndarray, q: float) -> np.ndarray:
    """Pointwise derivative (q-1)|u|^(q-2)."""
    return (q - 1.0) * np.abs(values) ** (q - 2.0)


def action(u: Field, params: ModelParams) -> float:
    """Action Phi(u) = (K + P - lambda*mass)/2 - Q/q."""
    o = observables(u, params)
    return action_from_observables(o, params)


def action_from_observables(o: Observables, params: ModelParams) -> float:
    return 0.5 * (o.kinetic_s + o.potential - params.lam * o.mass) - o.power_q / params.q


def residual_field(u: Field, params: ModelParams) -> tuple[Field, float]:
    """F(u) = (-Lap)^s u + |x|^2 u - lambda*u - |u|^(q-2) u and its L^2 norm."""
    if not u.is_real:
        raise FieldError("residual is defined for real fields")
    grid = u.grid
    v = u.values
    arr = (
        window_fractional_apply(grid, params.s, v)
        + (grid.xsq - params.lam) * v
        - nonlinearity(v, params.q)
    )
    res = Field(grid, arr)
    return res, res.l2_norm()


def jacobian_apply(u: Field, v: Field, params: ModelParams) -> Field:
    """Linearization of F at u applied to v."""
    if u.grid != v.grid:
        raise FieldError("fields live on different grids")
    grid = u.grid
    arr = (
        window_fractional_apply(grid, params.s, v.values)
        + (grid.xsq - params.lam - nonlinearity_derivative(u.values, params.q)) * v.values
    )
    return Field(grid, arr)


@dataclass(frozen=True)
class IdentityReport:
    """Relative residuals of the integral identities satisfied by solutions.

    pohozaev_rel:      (N-2s)K + (N+2)P = N*lambda*mass + (2N/q)Q
    id1_rel:           s*K = P + ((q-2)/(2q))*N*Q
    id2_rel:           2(1+s)P - 2s*lambda*mass = (2N/q - (N-2s))*Q
    action_simple_rel: Phi = ((q-2)/(2q))*Q
    energy_lb_gap:     Phi + (1+k)*(lambda/2)*mass   (>= 0 at exact solutions)

    Residuals are relative to the largest |term| in each identity. When
    2N = (N-2s)q the constant k is undefined and k/energy_lb_gap are NaN.
    """

    pohozaev_rel: float
    id1_rel: float
    id2_rel: float
    action_simple_rel: float
    energy_lb_gap: float
    k: float

    @property
    def k_defined(self) -> bool:
        return not math.isnan(self.k)


def _rel_residual(lhs_terms: list[float], rhs_terms: list[float]) -> float:
    scale = max(abs(t) for t in lhs_terms + rhs_terms)
    if scale == 0.0:
        return 0.0
    return abs(sum(lhs_terms) - sum(rhs_terms)) / scale


def identity_residuals(u: Field, params: ModelParams) -> IdentityReport:
    """Evaluate every solution identity on u; meaningful at converged states."""
    o = observables(u, params)
    N, s, q, lam = params.N, params.s, params.q, params.lam
    K, P, m, Q = o.kinetic_s, o.potential, o.mass, o.power_q

    pohozaev = _rel_residual(
        [(N - 2.0 * s) * K, (N + 2.0) * P], [N * lam * m, (2.0 * N / q) * Q]
    )
    id1 = _rel_residual([s * K], [P, (q - 2.0) / (2.0 * q) * N * Q])
    id2 = _rel_residual(
        [2.0 * (1.0 + s) * P, -2.0 * s * lam * m], [(2.0 * N / q - (N - 2.0 * s)) * Q]
    )
    phi = action_from_observables(o, params)
    simple = (q - 2.0) / (2.0 * q) * Q
    action_simple = _rel_residual([phi], [simple])

    k = pohozaev_k(N, s, q)
    gap = phi + (1.0 + k) * (lam / 2.0) * m if not math.isnan(k) else math.nan

    return IdentityReport(
        pohozaev_rel=pohozaev,
        id1_rel=id1,
        id2_rel=id2,
        action_simple_rel=action_simple,
        energy_lb_gap=gap,
        k=k,
    )
