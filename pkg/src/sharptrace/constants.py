"""Closed-form constants: sharp-constant ingredients, Beta values, design-size bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import betaln

from .geometry import sphere_area

ORDERS = ("trace2", "trace4", "trace4D", "widom2D")


class NoClosedForm(ValueError):
    """Raised when a value is only available from the numerical solver."""


def c_subcritical(n: int, q: float) -> float:
    """(q - 1) / |S^{n-1}|^{(q-1)/(q+1)} for 1 < q <= n/(n-2)."""
    if n < 3:
        raise ValueError("c_subcritical needs n >= 3")
    if not (1.0 < q <= n / (n - 2) + 1e-15):
        raise ValueError(f"q={q} outside (1, {n / (n - 2)}]")
    return (q - 1.0) / sphere_area(n - 1) ** ((q - 1.0) / (q + 1.0))


def _require_fourth_order(n: int) -> None:
    if n < 5:
        raise ValueError("fourth-order constants need n >= 5")


def alpha_n(n: int) -> float:
    _require_fourth_order(n)
    return 4.0 / (n * (n - 2) * (n - 4) * sphere_area(n - 1) ** (3.0 / (n - 1)))


def b_n(n: int) -> float:
    return n * (n - 4) / 2.0


def c_n(n: int) -> float:
    _require_fourth_order(n)
    return n * (n - 2) * (n - 4) / 4.0


def dgs_lower_bound(m: int, n: int) -> int:
    """Lower bound on the support of a degree-m weighted design on S^{n-1}."""
    if m < 1 or n < 2:
        raise ValueError("need m >= 1 and n >= 2")
    if m % 2 == 0:
        k = m // 2
        return math.comb(n - 1 + k, n - 1) + math.comb(n + k - 2, n - 1)
    k = (m - 1) // 2
    return 2 * math.comb(n - 1 + k, n - 1)


def theta_closed_form(m: int, theta: float, n: int) -> float:
    """Known minimal values of sum(nu_i^theta) over degree-m designs, m <= 3."""
    if not (0.0 < theta <= 1.0):
        raise ValueError("theta must lie in (0, 1]")
    support = {1: 2, 2: n + 1, 3: 2 * n}.get(m)
    if support is None:
        raise NoClosedForm(f"no closed form for m={m}; use the numerical solver")
    return float(support) ** (1.0 - theta)


def n_m_closed_form(m: int, n: int) -> Optional[int]:
    """Exact minimal design size when known, otherwise ``None`` (unknown)."""
    if m < 1 or n < 2:
        raise ValueError("need m >= 1 and n >= 2")
    if n == 2:
        return m + 1
    return {1: 2, 2: n + 1, 3: 2 * n}.get(m)


def p3_eigenvalue(l: int, n: int) -> float:
    """Eigenvalue of (B-1)B(B+1) on degree-l harmonics, with B^2 = -Lap + (n-2)^2/4."""
    if l < 0:
        raise ValueError("degree must be nonnegative")
    # l(l+n-2) + ((n-2)/2)^2 is a perfect square: (l + (n-2)/2)^2.
    b = math.sqrt(l * (l + n - 2) + 0.25 * (n - 2) ** 2)
    return (b - 1.0) * b * (b + 1.0)


def beta(a: float, b: float) -> float:
    if a <= 0 or b <= 0:
        raise ValueError("Beta needs positive arguments")
    return float(np.exp(betaln(a, b)))


def beta_sphere_identity(n: int) -> float:
    """|2^{n-2} B((n-1)/2,(n-1)/2) |S^{n-2}| - |S^{n-1}||."""
    lhs = 2.0 ** (n - 2) * beta(0.5 * (n - 1), 0.5 * (n - 1)) * sphere_area(n - 2)
    return abs(lhs - sphere_area(n - 1))


@dataclass(frozen=True)
class SharpTarget:
    order: str
    n: int
    m: int
    value: float
    theta_used: Optional[float] = None
    n_m_used: Optional[int] = None


def normalize_order(order: str) -> str:
    """Canonical spelling of an order name (case-insensitive)."""
    lookup = {o.lower(): o for o in ORDERS}
    key = order.lower()
    if key not in lookup:
        raise ValueError(f"unknown order {order!r}; expected one of {ORDERS}")
    return lookup[key]


def sharp_target(order: str, n: int, m: int, theta_value: Optional[float] = None,
                 n_m_value: Optional[int] = None) -> SharpTarget:
    """Almost-sharp constant of a construction.

    ``theta_value`` (or ``n_m_value``) injects a solver result when no closed
    form is available.
    """
    order = normalize_order(order)
    if order == "trace2":
        if n < 3:
            raise ValueError("trace2 needs n >= 3")
        th = theta_value if theta_value is not None else theta_closed_form(m, (n - 2) / (n - 1), n)
        return SharpTarget(order, n, m, c_subcritical(n, n / (n - 2)) / th, theta_used=th)
    if order == "trace4":
        if n < 5:
            raise ValueError("trace4 needs n >= 5")
        th = theta_value if theta_value is not None else theta_closed_form(m, (n - 4) / (n - 1), n)
        return SharpTarget(order, n, m, alpha_n(n) / th, theta_used=th)
    if order == "trace4D":
        if n != 4:
            raise ValueError("trace4D is defined for n = 4 only")
        nm = n_m_value if n_m_value is not None else n_m_closed_form(m, 4)
        if nm is None:
            raise NoClosedForm(f"N_{m}(S^3) unknown; supply n_m_value")
        return SharpTarget(order, n, m, 3.0 / (16.0 * math.pi**2 * nm), n_m_used=nm)
    if n != 2:
        raise ValueError("widom2D is defined for n = 2 only")
    return SharpTarget(order, 2, m, 1.0 / (4.0 * math.pi * (m + 1)), n_m_used=m + 1)


def trace4_leading_terms(n: int, m: int, theta_value: Optional[float] = None) -> tuple:
    """eps^{n-4} coefficients (boundary norm squared, int (Lap u)^2) of the fourth-order construction."""
    _require_fourth_order(n)
    area = sphere_area(n - 1)
    th = theta_value if theta_value is not None else theta_closed_form(m, (n - 4) / (n - 1), n)
    boundary = 2.0 ** (4 - n) * area ** ((n - 4) / (n - 1))
    interior = 2.0 ** (2 - n) * area * th * n * (n - 2) * (n - 4)
    return boundary, interior
