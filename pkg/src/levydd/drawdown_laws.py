"""Laws of drawdowns and drawdown durations around the extremes of ``X`` on
``[0, T]``, with ``T`` exponential of rate ``gamma`` and independent of ``X``.

Every law is written in terms of the stable table primitives

    Phi = Phi(gamma),  rho = gamma / Phi,  K = Z - rho W,
    D = W' - Phi W,    W'/W = Phi + D / W,

so that growing exponentials never get subtracted from each other.  Two
laws also ship in a ``*_printed`` variant: algebraically different
expressions kept only as negative controls for the verifier.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .exit_identities import w_quotient
from .scale_functions import ScaleTable

__all__ = [
    "LawKind",
    "LawValue",
    "ConditionSpec",
    "HVariant",
    "sup_cdf",
    "joint_inf_sup",
    "pre_sup_mdd_cdf",
    "post_sup_mdd_sf",
    "post_inf_mdd_sf",
    "post_inf_sup_cdf",
    "intermediate_mdd_cdf",
    "post_sup_mdd_cdf_cond",
    "duration_lt_post_sup",
    "duration_lt_post_sup_cond",
    "duration_lt_at_alpha",
    "h_function",
    "cor1_printed",
    "intermediate_mdd_cdf_printed",
    "LAWS",
    "evaluate",
]

# Below this argument the 0/0 ratios switch to their first-order expansion.
SERIES_CUTOFF = 1e-4


class LawKind(str, enum.Enum):
    CDF = "CDF"
    SF = "SurvivalFunction"
    LT = "LaplaceTransform"
    H = "HFunction"


@dataclass(frozen=True)
class LawValue:
    """Result of a law evaluation; ``value`` is a float or an array matching
    the broadcast arguments."""

    kind: LawKind
    value: float | np.ndarray
    formula_id: str
    args: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class ConditionSpec:
    """Conditioning of a Monte Carlo estimate: ``S_T = b``, ``I_T = a`` and
    optionally the event ``H_I < H_S``."""

    sup_level: float | None = None
    inf_level: float | None = None
    inf_before_sup: bool = False

    def __post_init__(self):
        b, a = self.sup_level, self.inf_level
        if b is not None and not b > 0:
            raise DomainError("sup_level must be > 0")
        if a is not None and not a < 0:
            raise DomainError("inf_level must be < 0")
        if self.inf_before_sup and (a is None or b is None):
            raise DomainError("inf_before_sup requires both sup_level and inf_level")


def _arr(x):
    return np.asarray(x, dtype=float)


def _pack(kind, value, formula_id, **args):
    scalar = all(np.ndim(v) == 0 for v in args.values())
    value = float(value) if scalar else np.asarray(value, dtype=float)
    return LawValue(LawKind(kind), value, formula_id, args)


def _require(cond, msg):
    if not np.all(cond):
        raise DomainError(msg)


def _need_horizon(table: ScaleTable, name: str):
    if not table.gamma > 0:
        raise DomainError(f"{name}: needs an exponential horizon, i.e. gamma > 0")


def _ratio_excess(table, x):
    """``W'(x)/W(x) - Phi`` for ``x > 0``."""
    return table.w_ratio(x) - table.phi_gamma


def _g(table: ScaleTable, u):
    """``(Z(u) - 1) W'(u)/W(u) - gamma W(u)``, which is ``<= 0`` and
    ``~ -gamma W'(0+) u / 2`` near the origin."""
    u = _arr(u)
    small = u < SERIES_CUTOFF
    us = np.where(small, 1.0, u)
    raw = (table.down_lt(us) - 1.0) * table.w_ratio(us) + table.rho * table.w_prime_excess(us)
    w0 = 2.0 / table.model.sigma**2
    return np.where(small, -0.5 * table.gamma * w0 * u, raw)


# ----------------------------------------------------------------------------
# Extremes at the horizon


def sup_cdf(table: ScaleTable, b) -> LawValue:
    """``P(S_T <= b) = 1 - exp(-Phi b)``: the supremum is exponential."""
    _need_horizon(table, "sup_cdf")
    b_ = _arr(b)
    _require(b_ >= 0, "sup_cdf: b must be >= 0")
    return _pack("CDF", -np.expm1(-table.phi_gamma * b_), "sup_cdf", b=b)


def joint_inf_sup(table: ScaleTable, a, b) -> LawValue:
    """``P(a < I_T, S_T < b) = 1 - Z(-a) + (Z(b - a) - 1) W(-a)/W(b - a)``.

    Evaluated as ``1 - K(-a) + (K(b-a) - 1) W(-a)/W(b-a)``; the ``rho W``
    parts of the two ``Z`` terms cancel identically.
    Infinite barriers reduce to the one-sided marginals.
    """
    _need_horizon(table, "joint_inf_sup")
    a_, b_ = np.broadcast_arrays(_arr(a), _arr(b))
    _require((a_ < 0) & (b_ > 0), "joint_inf_sup: need a < 0 < b")
    fa, fb = np.isfinite(a_), np.isfinite(b_)
    both = fa & fb
    out = np.where(fb, -np.expm1(-table.phi_gamma * np.where(fb, b_, 0.0)), 1.0)
    if np.any(fa & ~fb):
        sel = fa & ~fb
        out = np.array(out)
        out[sel] = 1.0 - table.down_lt(-a_[sel])
    if np.any(both):
        out = np.array(out)
        na, gap = -a_[both], b_[both] - a_[both]
        out[both] = 1.0 - table.down_lt(na) + (table.down_lt(gap) - 1.0) * w_quotient(table, na, gap)
    return _pack("CDF", out, "joint_inf_sup", a=a, b=b)


# ----------------------------------------------------------------------------
# Maximum drawdowns of the segments


def pre_sup_mdd_cdf(table: ScaleTable, b, d) -> LawValue:
    """``P(M^-_{0,H_S} < d | S_T = b) = exp(-b (W'(d)/W(d) - Phi))``."""
    _need_horizon(table, "pre_sup_mdd_cdf")
    b_, d_ = _arr(b), _arr(d)
    _require((b_ > 0) & (d_ > 0), "pre_sup_mdd_cdf: need b > 0 and d > 0")
    return _pack("CDF", np.exp(-b_ * _ratio_excess(table, d_)), "pre_sup_mdd_cdf", b=b, d=d)


def post_sup_mdd_sf(table: ScaleTable, d) -> LawValue:
    """``P(M^-_{H_S,T} > d) = 1 + g(d) / Phi``, the same for every ``S_T = b``.

    ``g(d) = (Z(d) - 1) W'(d)/W(d) - gamma W(d)``.
    """
    _need_horizon(table, "post_sup_mdd_sf")
    d_ = _arr(d)
    _require(d_ > 0, "post_sup_mdd_sf: d must be > 0")
    phi, rho = table.phi_gamma, table.rho
    near = 1.0 + _g(table, d_) / phi
    # Once rho W(d) >= 1 the same value is a sum of non-negative decaying
    # terms, K W'/W + D (rho - 1/W), free of the cancellation in 1 + g/Phi.
    dd = np.where(d_ > 0, d_, 1.0)
    inv_w = 1.0 / table.w(dd)
    far = (table.down_lt(dd) * table.w_ratio(dd) + table.w_prime_excess(dd) * (rho - inv_w)) / phi
    val = np.where(rho * inv_w <= 1.0, far, near)
    return _pack("SurvivalFunction", val, "post_sup_mdd_sf", d=d)


def post_inf_mdd_sf(table: ScaleTable, d) -> LawValue:
    """``P(M^-_{H_I,T} > d) = 1 - Phi W(d) / W'(d)``."""
    _need_horizon(table, "post_inf_mdd_sf")
    d_ = _arr(d)
    _require(d_ > 0, "post_inf_mdd_sf: d must be > 0")
    excess = _ratio_excess(table, d_)
    return _pack("SurvivalFunction", excess / (table.phi_gamma + excess), "post_inf_mdd_sf", d=d)


def post_inf_sup_cdf(table: ScaleTable, u) -> LawValue:
    """``P(S_{H_I,T} - I_T <= u) = Phi (Z(u) - 1) / (gamma W(u))``.

    Written as ``1 - (1 - K(u)) / (rho W(u))``; tends to ``Phi u / 2`` at 0.
    """
    _need_horizon(table, "post_inf_sup_cdf")
    u_ = _arr(u)
    _require(u_ > 0, "post_inf_sup_cdf: u must be > 0")
    small = u_ < SERIES_CUTOFF
    us = np.where(small, 1.0, u_)
    raw = 1.0 - (1.0 - table.down_lt(us)) / (table.rho * table.w(us))
    val = np.where(small, 0.5 * table.phi_gamma * u_, raw)
    return _pack("CDF", val, "post_inf_sup_cdf", u=u)


def intermediate_mdd_cdf(table: ScaleTable, gap, d) -> LawValue:
    """``P(M^-_{H_I,H_S} < d | S_T - I_T = gap, H_I < H_S)``.

    Equals ``W(gap)/W(d) * exp(-(gap - d) W'(d)/W(d))`` for ``0 < d <= gap``,
    the log-concavity gap of ``W`` between ``d`` and ``gap``.
    """
    _need_horizon(table, "intermediate_mdd_cdf")
    gap_, d_ = _arr(gap), _arr(d)
    _require((d_ > 0) & (d_ <= gap_), "intermediate_mdd_cdf: need 0 < d <= gap")
    # log of W~(gap)/W~(d) via the increment, so the value cannot drift above 1
    growth = np.log1p(table.w_tilted_increment(d_, gap_) / table.w_tilted(d_))
    val = np.exp(growth - (gap_ - d_) * _ratio_excess(table, d_))
    return _pack("CDF", val, "intermediate_mdd_cdf", gap=gap, d=d)


def intermediate_mdd_cdf_printed(table: ScaleTable, gap, d) -> LawValue:
    """Negative control: the same prefactor with the exponent rate
    ``W'(d)/W(d) - Phi W(d) + Phi``.  Not a distribution function."""
    gap_, d_ = _arr(gap), _arr(d)
    _require((d_ > 0) & (d_ <= gap_), "intermediate_mdd_cdf_printed: need 0 < d <= gap")
    rate = table.w_ratio(d_) - table.phi_gamma * table.w(d_) + table.phi_gamma
    val = w_quotient(table, d_, gap_) ** -1 * np.exp(-(gap_ - d_) * rate)
    return _pack("CDF", val, "intermediate_mdd_cdf_printed", gap=gap, d=d)


def post_sup_mdd_cdf_cond(table: ScaleTable, gap, d) -> LawValue:
    """``P(M^-_{H_S,T} < d | S_T - I_T = gap, H_I < H_S) = g(d) / g(gap)``."""
    _need_horizon(table, "post_sup_mdd_cdf_cond")
    gap_, d_ = _arr(gap), _arr(d)
    _require((d_ > 0) & (d_ <= gap_), "post_sup_mdd_cdf_cond: need 0 < d <= gap")
    return _pack("CDF", _g(table, d_) / _g(table, gap_), "post_sup_mdd_cdf_cond", gap=gap, d=d)


# ----------------------------------------------------------------------------
# Drawdown durations


def duration_lt_post_sup(table: ScaleTable, d) -> LawValue:
    """``E[exp(-gamma T^d_{H_S,T})]`` for the post-supremum segment.

    The duration beats the residual exponential clock exactly when the
    post-supremum drawdown exceeds ``d``, so the transform is the survival
    function :func:`post_sup_mdd_sf`.
    """
    sf = post_sup_mdd_sf(table, d)
    return LawValue(LawKind.LT, sf.value, "duration_lt_post_sup", sf.args)


def cor1_printed(table: ScaleTable, d) -> LawValue:
    """Negative control: ``1 - Z W'/(Phi W) - gamma W / Phi`` at ``d``.

    Negative and unbounded for Brownian motion, hence not a transform.
    """
    d_ = _arr(d)
    _require(d_ > 0, "cor1_printed: d must be > 0")
    phi = table.phi_gamma
    val = 1.0 - table.z(d_) * table.w_ratio(d_) / phi - table.gamma * table.w(d_) / phi
    return _pack("LaplaceTransform", val, "cor1_printed", d=d)


def duration_lt_post_sup_cond(table: ScaleTable, gap, d) -> LawValue:
    """``E[exp(-gamma T^d_{H_S,T}) | S_T - I_T = gap, H_I < H_S]``."""
    cdf = post_sup_mdd_cdf_cond(table, gap, d)
    return LawValue(LawKind.LT, 1.0 - cdf.value, "duration_lt_post_sup_cond", cdf.args)


def duration_lt_at_alpha(table0: ScaleTable, table: ScaleTable, d) -> LawValue:
    """``E[exp(-gamma T^d)]`` for the duration of the first drawdown above ``d``.

    ``(W(d)/W'(d)) (Z_g(d) W_g'(d) - gamma W_g(d)^2) / W_g(d)`` with ``W`` the
    0-scale function and ``W_g`` the gamma-scale function; the last factor is
    ``K_g(d) W_g'(d)/W_g(d) + rho (W_g'(d) - Phi W_g(d))``.
    """
    if table0.model != table.model:
        raise ValueError("duration_lt_at_alpha: tables belong to different models")
    if table0.gamma != 0:
        raise ValueError("duration_lt_at_alpha: table0 must be built at gamma = 0")
    d_ = _arr(d)
    _require(d_ > 0, "duration_lt_at_alpha: d must be > 0")
    killed = table.down_lt(d_) * table.w_ratio(d_) + table.rho * table.w_prime_excess(d_)
    return _pack("LaplaceTransform", killed / table0.w_ratio(d_), "duration_lt_at_alpha", d=d)


# ----------------------------------------------------------------------------
# h-transform functions


class HVariant(str, enum.Enum):
    PRE_SUP = "PreSup"
    POST_SUP = "PostSup"
    POST_INF = "PostInf"
    INTERMEDIATE = "Intermediate"
    POST_SUP_COND = "PostSupCond"
    POST_KAPPA = "PostKappa"


def h_function(table: ScaleTable, which, x, *, a=None, b=None, m=None, d=None) -> LawValue:
    """Harmonic functions of the conditioned segments, evaluated at level ``x``.

    ``PreSup``        ``exp(-Phi (b - x))``, ``x <= b``
    ``PostSup``       ``1 - exp(-Phi (b - x))``, ``x <= b``
    ``PostInf``       ``1 - Z(x - a) + rho W(x - a)``, ``x >= a``
    ``Intermediate``  ``exp(-Phi (b - x)) W(x - a)/W(b - a)``, ``a <= x <= b``
    ``PostSupCond``   ``1 - Z(x - a) + (Z(b - a) - 1) W(x - a)/W(b - a)``
    ``PostKappa``     ``1 - exp(-(m - x) W'(d)/W(d))``, ``x <= m``; ``table``
                      must hold the 0-scale function.
    """
    which = HVariant(which)
    x_ = _arr(x)

    def need(name, v):
        if v is None:
            raise DomainError(f"h_function {which.value}: missing argument {name!r}")
        return _arr(v)

    phi = table.phi_gamma
    if which in (HVariant.PRE_SUP, HVariant.POST_SUP):
        b_ = need("b", b)
        _require(x_ <= b_, f"h_function {which.value}: need x <= b")
        up = np.exp(-phi * (b_ - x_))
        val = up if which is HVariant.PRE_SUP else -np.expm1(-phi * (b_ - x_))
        args = dict(x=x, b=b)
    elif which is HVariant.POST_INF:
        a_ = need("a", a)
        _require(x_ >= a_, "h_function PostInf: need x >= a")
        val = 1.0 - table.down_lt(x_ - a_)
        args = dict(x=x, a=a)
    elif which in (HVariant.INTERMEDIATE, HVariant.POST_SUP_COND):
        a_, b_ = need("a", a), need("b", b)
        _require((a_ <= x_) & (x_ <= b_) & (a_ < b_), f"h_function {which.value}: need a <= x <= b, a < b")
        q = w_quotient(table, x_ - a_, b_ - a_)
        if which is HVariant.INTERMEDIATE:
            val = np.exp(-phi * (b_ - x_)) * q
        else:
            val = 1.0 - table.down_lt(x_ - a_) + (table.down_lt(b_ - a_) - 1.0) * q
        args = dict(x=x, a=a, b=b)
    else:
        m_, d_ = need("m", m), need("d", d)
        if table.gamma != 0:
            raise DomainError("h_function PostKappa: table must be built at gamma = 0")
        _require((x_ <= m_) & (d_ > 0), "h_function PostKappa: need x <= m and d > 0")
        val = -np.expm1(-(m_ - x_) * table.w_ratio(d_))
        args = dict(x=x, m=m, d=d)
    return _pack("HFunction", val, f"h_{which.value}", **args)


# ----------------------------------------------------------------------------
# Registry used by the harness


@dataclass(frozen=True)
class LawSpec:
    func: Callable
    kind: LawKind
    params: tuple[str, ...]
    needs_zero_table: bool = False
    hidden: bool = False


LAWS: dict[str, LawSpec] = {
    "sup_cdf": LawSpec(sup_cdf, LawKind.CDF, ("b",)),
    "joint_inf_sup": LawSpec(joint_inf_sup, LawKind.CDF, ("a", "b")),
    "pre_sup_mdd_cdf": LawSpec(pre_sup_mdd_cdf, LawKind.CDF, ("b", "d")),
    "post_sup_mdd_sf": LawSpec(post_sup_mdd_sf, LawKind.SF, ("d",)),
    "post_inf_mdd_sf": LawSpec(post_inf_mdd_sf, LawKind.SF, ("d",)),
    "post_inf_sup_cdf": LawSpec(post_inf_sup_cdf, LawKind.CDF, ("u",)),
    "intermediate_mdd_cdf": LawSpec(intermediate_mdd_cdf, LawKind.CDF, ("gap", "d")),
    "post_sup_mdd_cdf_cond": LawSpec(post_sup_mdd_cdf_cond, LawKind.CDF, ("gap", "d")),
    "duration_lt_post_sup": LawSpec(duration_lt_post_sup, LawKind.LT, ("d",)),
    "duration_lt_post_sup_cond": LawSpec(duration_lt_post_sup_cond, LawKind.LT, ("gap", "d")),
    "duration_lt_at_alpha": LawSpec(duration_lt_at_alpha, LawKind.LT, ("d",), needs_zero_table=True),
    "cor1_printed": LawSpec(cor1_printed, LawKind.LT, ("d",), hidden=True),
    "intermediate_mdd_cdf_printed": LawSpec(
        intermediate_mdd_cdf_printed, LawKind.CDF, ("gap", "d"), hidden=True
    ),
}


def evaluate(law_id: str, table: ScaleTable, args: dict, table0: ScaleTable | None = None) -> LawValue:
    """Evaluate a registered law with keyword arguments ``args``."""
    try:
        spec = LAWS[law_id]
    except KeyError:
        raise KeyError(f"unknown law {law_id!r}") from None
    missing = [p for p in spec.params if p not in args]
    if missing:
        raise DomainError(f"{law_id}: missing arguments {missing}")
    kwargs = {p: args[p] for p in spec.params}
    if spec.needs_zero_table:
        if table0 is None:
            raise ValueError(f"{law_id}: needs the gamma = 0 scale table")
        return spec.func(table0, table, **kwargs)
    return spec.func(table, **kwargs)
