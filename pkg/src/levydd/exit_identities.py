"""First-passage and drawdown exit identities in gap coordinates.

Every function takes distances to the barriers (the lower barrier sits at 0),
which is all that matters for a spatially homogeneous process.  Values are
Laplace transforms at the killing rate ``table.gamma``.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .scale_functions import ScaleTable

__all__ = [
    "one_sided_up",
    "one_sided_down",
    "two_sided_up",
    "two_sided_down",
    "updown_before_drawdown",
    "drawdown_before_up",
    "w_quotient",
]


def _arr(x):
    a = np.asarray(x, dtype=float)
    return a, a.ndim == 0


def _ret(v, scalar):
    return float(v) if scalar else v


def _require(cond, msg):
    if not np.all(cond):
        raise DomainError(msg)


def w_quotient(table: ScaleTable, x, y):
    """``W(x) / W(y)`` for ``0 <= x``, ``0 < y``, without overflow."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return np.exp(-table.phi_gamma * (y - x)) * table.w_tilted(x) / table.w_tilted(y)


def one_sided_up(table: ScaleTable, x):
    """``E[exp(-gamma tau_x^+)] = exp(-Phi(gamma) x)``."""
    x, scalar = _arr(x)
    _require(x >= 0, "one_sided_up: x must be >= 0")
    return _ret(np.exp(-table.phi_gamma * x), scalar)


def one_sided_down(table: ScaleTable, x):
    """``E_x[exp(-gamma tau_0^-); tau_0^- < inf] = Z(x) - (gamma/Phi) W(x)``."""
    x, scalar = _arr(x)
    _require(x >= 0, "one_sided_down: x must be >= 0")
    return _ret(table.down_lt(x), scalar)


def _check_interval(x, b, name):
    _require((b > 0) & (x >= 0) & (x <= b), f"{name}: need 0 <= x <= b and b > 0")


def two_sided_up(table: ScaleTable, x, b):
    """``E_x[exp(-gamma tau_b^+); tau_b^+ < tau_0^-] = W(x) / W(b)``."""
    (x, sx), (b, sb) = _arr(x), _arr(b)
    _check_interval(x, b, "two_sided_up")
    return _ret(w_quotient(table, x, b), sx and sb)


def two_sided_down(table: ScaleTable, x, b):
    """``E_x[exp(-gamma tau_0^-); tau_0^- < tau_b^+] = Z(x) - Z(b) W(x)/W(b)``.

    Rewritten as ``K(x) - K(b) W(x)/W(b)`` with ``K = Z - (gamma/Phi) W``,
    where the growing parts cancel exactly.
    """
    (x, sx), (b, sb) = _arr(x), _arr(b)
    _check_interval(x, b, "two_sided_down")
    return _ret(table.down_lt(x) - table.down_lt(b) * w_quotient(table, x, b), sx and sb)


def updown_before_drawdown(table: ScaleTable, x, b, d):
    """``E_x[exp(-gamma tau_b^+); tau_b^+ <= alpha_d ^ tau_0^-]``.

    Equals ``W(x)/W(d) * exp(-(b - d) W'(d)/W(d))`` for ``0 <= x <= d <= b``.
    """
    (x, sx), (b, sb), (d, sd) = _arr(x), _arr(b), _arr(d)
    _require(
        (d > 0) & (x >= 0) & (x <= d) & (d <= b),
        "updown_before_drawdown: need 0 <= x <= d <= b and d > 0",
    )
    val = w_quotient(table, x, d) * np.exp(-(b - d) * table.w_ratio(d))
    return _ret(val, sx and sb and sd)


def drawdown_before_up(table: ScaleTable, x_gap, d):
    """``E_x[exp(-gamma alpha_d); alpha_d < tau_b^+]`` with ``x_gap = b - x``.

    The process starts at its running maximum.  The value factorises as
    ``(1 - exp(-x_gap W'(d)/W(d))) * (Z(d) - gamma W(d)^2 / W'(d))``; the
    second factor is evaluated as ``K(d) + rho W(d)(W'(d) - Phi W(d)) / W'(d)``.
    ``x_gap = inf`` gives the unconstrained transform of ``alpha_d``.
    """
    (g, sg), (d, sd) = _arr(x_gap), _arr(d)
    _require((g >= 0) & (d > 0), "drawdown_before_up: need x_gap >= 0 and d > 0")
    ratio = table.w_ratio(d)
    alpha_lt = table.down_lt(d) + table.rho * table.w_prime_excess(d) / ratio
    reach = -np.expm1(-g * ratio)
    return _ret(reach * alpha_lt, sg and sd)
