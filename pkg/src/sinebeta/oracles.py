"""Exact references: determinantal formulas at beta = 2 and closed bounds.

At beta = 2 the process is determinantal with kernel
``K(x, y) = sin((x-y)/2) / (pi (x-y))`` (density 1/2pi), which turns
correlation estimates into quadrature problems.  The remaining entries are
closed-form leading-order decay laws and the overcrowding bound, exposed
with explicit applicability flags instead of silent extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * math.pi

__all__ = [
    "sine_kernel",
    "rho_k_beta2",
    "rho2_truncated_beta2",
    "rho2_truncated_beta2_integrated",
    "discrepancy_beta2",
    "ForresterHaldaneLeading",
    "forrester_haldane_leading",
    "OvercrowdingBound",
    "overcrowding_bound",
]


def sine_kernel(x, y):
    """K(x, y) = sin((x-y)/2) / (pi (x-y)), K(x, x) = 1/(2 pi)."""
    u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.sinc(u / TWO_PI) / TWO_PI


def rho_k_beta2(points) -> float:
    """k-point correlation at beta = 2: det[K(x_i, x_j)]."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    if pts.ndim != 1 or not 1 <= pts.size <= 10:
        raise ValueError("need between 1 and 10 points")
    return float(np.linalg.det(sine_kernel(pts[:, None], pts[None, :])))


def rho2_truncated_beta2(r):
    """Truncated two-point function at beta = 2: -sin^2(r/2) / (pi r)^2."""
    return -(sine_kernel(r, 0.0) ** 2)


def rho2_truncated_beta2_integrated(window1, window2, *,
                                    epsabs: float = 1e-10) -> float:
    """Integral of the truncated two-point function over a window pair.

    Adaptive quadrature of -sin^2((u-v)/2) / (pi (u-v))^2 over
    window1 x window2.  The windows must be disjoint (the on-diagonal
    integrable singularity of the estimand belongs to the discrepancy
    formula, not here).
    """
    a1, b1 = map(float, window1)
    a2, b2 = map(float, window2)
    if not (a1 < b1 and a2 < b2):
        raise ValueError("windows must be non-degenerate")
    if max(a1, a2) < min(b1, b2):
        raise ValueError("windows must be disjoint")
    # reduce to 1-d: iint_{w1 x w2} g(u - v) = int tent(s) g(s) ds
    lo = a2 - b1
    hi = b2 - a1

    def tent(s: float) -> float:
        return (min(b1, b2 - s) - max(a1, a2 - s))

    def integrand(s: float) -> float:
        return tent(s) * float(rho2_truncated_beta2(s))

    val, err = integrate.quad(integrand, lo, hi, epsabs=epsabs, limit=400)
    if err > 10 * max(epsabs, 1e-14):
        raise RuntimeError(f"quadrature did not converge: err={err:.2e}")
    return float(val)


def discrepancy_beta2(length: float) -> float:
    """Variance of the count on a window of given length at beta = 2.

    Var N = iint_{B x B} rho_T + |B| / 2pi, with the diagonal value of the
    truncated kernel taken by continuity (-1/(4 pi^2)).
    """
    if length <= 0:
        raise ValueError("length must be positive")

    def integrand(s: float) -> float:
        return (length - abs(s)) * float(rho2_truncated_beta2(s))

    val, _ = integrate.quad(integrand, -length, length, epsabs=1e-10,
                            limit=400)
    return float(val + length / TWO_PI)


@dataclass(frozen=True)
class ForresterHaldaneLeading:
    """Leading-order decay of the truncated two-point function.

    ``value`` is the explicit leading term when the amplitude is known
    (beta <= 2); for beta > 2 only the envelope shape is pinned down and
    ``amplitude_known`` is False, with ``value`` left as None.
    """

    beta: float
    r: float
    value: float | None
    envelope_exponent: float
    oscillatory: bool
    amplitude_known: bool

    def envelope(self) -> float:
        """|r|^(-envelope_exponent) shape factor (unit amplitude)."""
        return abs(self.r) ** (-self.envelope_exponent)


def forrester_haldane_leading(beta: float, r: float) -> ForresterHaldaneLeading:
    """Leading asymptotics of rho_T^(2)(r) by temperature regime.

    beta < 2:  -1 / (beta pi^2 r^2)
    beta = 2:  -1 / (2 pi^2 r^2) + cos r / (2 pi^2 r^2)
    beta > 2:  oscillatory, envelope r^(-4/beta), amplitude not pinned here.
    """
    if beta <= 0 or r == 0:
        raise ValueError("need beta > 0 and r != 0")
    if beta < 2:
        return ForresterHaldaneLeading(
            beta=beta, r=r, value=-1.0 / (beta * math.pi ** 2 * r ** 2),
            envelope_exponent=2.0, oscillatory=False, amplitude_known=True)
    if beta == 2:
        val = (-1.0 + math.cos(r)) / (2.0 * math.pi ** 2 * r ** 2)
        return ForresterHaldaneLeading(
            beta=beta, r=r, value=val, envelope_exponent=2.0,
            oscillatory=True, amplitude_known=True)
    return ForresterHaldaneLeading(
        beta=beta, r=r, value=None, envelope_exponent=4.0 / beta,
        oscillatory=True, amplitude_known=False)


@dataclass(frozen=True)
class OvercrowdingBound:
    """exp(-(beta/4) n^2 ln(n/lambda)) with applicability flags."""

    value: float
    lambda_in_range: bool
    applicable: bool


def overcrowding_bound(beta: float, lam: float, n: int) -> OvercrowdingBound:
    """Upper bound on P(N[0, lam] >= n) for n well above the mean.

    ``applicable`` is False when n <= lam (the exponent would be negative
    and the bound meaningless); ``lambda_in_range`` records the lam >= 1
    validity condition.
    """
    if beta <= 0 or lam <= 0 or n < 1:
        raise ValueError("need beta > 0, lam > 0, n >= 1")
    applicable = n > lam
    value = math.exp(-(beta / 4.0) * n * n * math.log(n / lam)) \
        if applicable else 1.0
    return OvercrowdingBound(value=float(min(1.0, value)),
                             lambda_in_range=lam >= 1.0,
                             applicable=applicable)
