"""Spectrally negative Lévy models of unbounded variation.

Jump families are finite-activity and use the non-compensated convention:
``mu`` is the total drift, so

    psi(lam) = mu*lam + sigma**2*lam**2/2 + int (exp(lam*x) - 1) Pi(dx).

For downward exponential jumps of rate ``r`` and mean ``m`` the integral is
``-r*m*lam / (1 + m*lam)``.  Moving the compensator of the small jumps into
``mu`` is a reparametrisation, not a change of model.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError

__all__ = ["Family", "LevyModel", "TiltedModel"]

_MAX_DOUBLINGS = 2000


class Family(str, enum.Enum):
    BROWNIAN_DRIFT = "BrownianDrift"
    EXP_JUMP_DIFFUSION = "ExpJumpDiffusion"


def _check_nonneg(lam, name="lambda"):
    arr = np.asarray(lam)
    if np.iscomplexobj(arr) or np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be real and >= 0, got {lam!r}")


@dataclass(frozen=True)
class LevyModel:
    """Lévy triplet of a supported spectrally negative family.

    Parameters
    ----------
    family : Family
        ``BrownianDrift`` or ``ExpJumpDiffusion``.
    mu : float
        Total drift per unit time (non-compensated convention).
    sigma : float
        Diffusion volatility, strictly positive.
    jump_rate : float
        Intensity of the downward jumps; zero for ``BrownianDrift``.
    jump_mean : float
        Mean of the exponential jump magnitude (jumps have size ``-xi``).
    """

    family: Family
    mu: float
    sigma: float
    jump_rate: float = 0.0
    jump_mean: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        for name in ("mu", "sigma", "jump_rate", "jump_mean"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.sigma <= 0:
            raise DomainError("sigma must be > 0 (unbounded variation case only)")
        if self.jump_mean <= 0:
            raise DomainError("jump_mean must be > 0")
        if self.jump_rate < 0:
            raise DomainError("jump_rate must be >= 0")
        if (self.jump_rate == 0) != (self.family is Family.BROWNIAN_DRIFT):
            raise DomainError("jump_rate must be 0 exactly when family is BrownianDrift")

    @classmethod
    def brownian(cls, mu: float = 0.0, sigma: float = 1.0) -> "LevyModel":
        return cls(Family.BROWNIAN_DRIFT, mu, sigma)

    @classmethod
    def exp_jump_diffusion(
        cls, mu: float, sigma: float, jump_rate: float, jump_mean: float
    ) -> "LevyModel":
        return cls(Family.EXP_JUMP_DIFFUSION, mu, sigma, jump_rate, jump_mean)

    @property
    def has_jumps(self) -> bool:
        return self.jump_rate > 0

    @property
    def pole(self) -> float:
        """Left end of the real domain of ``psi`` (``-inf`` without jumps)."""
        return -1.0 / self.jump_mean if self.has_jumps else -math.inf

    def key(self) -> str:
        """Short stable hash identifying the parameter set."""
        text = f"{self.family.value}|{self.mu!r}|{self.sigma!r}|{self.jump_rate!r}|{self.jump_mean!r}"
        return hashlib.sha1(text.encode()).hexdigest()[:12]

    # Unchecked evaluators; accept complex arguments (used by the inversion).

    def _psi(self, lam):
        out = self.mu * lam + 0.5 * self.sigma**2 * lam * lam
        if self.has_jumps:
            m = self.jump_mean
            out = out - self.jump_rate * m * lam / (1.0 + m * lam)
        return out

    def _psi_prime(self, lam):
        out = self.mu + self.sigma**2 * lam
        if self.has_jumps:
            m = self.jump_mean
            out = out - self.jump_rate * m / (1.0 + m * lam) ** 2
        return out

    def psi_slope(self, s, t):
        """Divided difference ``(psi(s) - psi(t)) / (s - t)``, exact at ``s == t``.

        Evaluated without subtraction, so it stays accurate when ``s`` is close
        to ``t``; complex arguments are accepted.
        """
        out = self.mu + 0.5 * self.sigma**2 * (s + t)
        if self.has_jumps:
            m = self.jump_mean
            out = out - self.jump_rate * m / ((1.0 + m * s) * (1.0 + m * t))
        return out

    def psi(self, lam):
        """Laplace exponent ``log E[exp(lam X_1)]`` for ``lam >= 0``."""
        _check_nonneg(lam)
        return self._psi(np.asarray(lam, dtype=float)) if np.ndim(lam) else float(self._psi(float(lam)))

    def psi_prime(self, lam):
        _check_nonneg(lam)
        return (
            self._psi_prime(np.asarray(lam, dtype=float))
            if np.ndim(lam)
            else float(self._psi_prime(float(lam)))
        )

    def _bracket_up(self, f, hi):
        """Double ``hi`` until ``f(hi) > 0``; returns the last two points."""
        lo = 0.0
        for _ in range(_MAX_DOUBLINGS):
            if f(hi) > 0:
                return lo, hi
            lo, hi = hi, 2.0 * hi
        raise RuntimeError("failed to bracket a root of psi")

    def psi_argmin(self) -> float:
        """Minimiser of ``psi`` over ``[0, inf)``."""
        if self._psi_prime(0.0) >= 0:
            return 0.0
        lo, hi = self._bracket_up(self._psi_prime, 1.0)
        return brentq(self._psi_prime, lo, hi, xtol=1e-300, maxiter=2000)

    def phi(self, gamma: float) -> float:
        """Right inverse of ``psi``: the largest root of ``psi(lam) = gamma``.

        ``psi`` is convex, so the root lies to the right of its minimiser,
        where ``psi - gamma`` changes sign exactly once.
        """
        gamma = float(gamma)
        if not gamma >= 0:
            raise DomainError(f"gamma must be >= 0, got {gamma!r}")
        floor = self.psi_argmin()
        if gamma == 0 and floor == 0.0:
            return 0.0

        def f(lam):
            return self._psi(lam) - gamma

        lo, hi = self._bracket_up(f, max(floor, 1.0))
        lo = max(lo, floor)
        if f(lo) == 0:
            return lo
        return brentq(f, lo, hi, xtol=1e-300, maxiter=2000)

    def esscher_tilt(self, theta: float) -> "TiltedModel":
        return TiltedModel(self, theta)


@dataclass(frozen=True)
class TiltedModel:
    """Esscher transform of ``base`` with parameter ``theta``.

    Its Laplace exponent is ``psi(lam + theta) - psi(theta)``.
    """

    base: LevyModel
    theta: float

    def __post_init__(self):
        theta = float(self.theta)
        if not theta >= 0:
            raise DomainError(f"theta must be >= 0, got {self.theta!r}")
        object.__setattr__(self, "theta", theta)

    def psi(self, lam):
        _check_nonneg(lam)
        lam = np.asarray(lam, dtype=float) if np.ndim(lam) else float(lam)
        return self.base._psi(lam + self.theta) - self.base._psi(self.theta)

    def psi_prime(self, lam):
        _check_nonneg(lam)
        lam = np.asarray(lam, dtype=float) if np.ndim(lam) else float(lam)
        return self.base._psi_prime(lam + self.theta)

    def as_levy_model(self) -> LevyModel:
        """The tilted process written as a model of the same family.

        Drift gains ``sigma**2 * theta``; exponential jumps keep their shape
        with rate and mean both divided by ``1 + jump_mean * theta``.
        """
        b = self.base
        mu = b.mu + b.sigma**2 * self.theta
        if not b.has_jumps:
            return LevyModel.brownian(mu, b.sigma)
        shrink = 1.0 + b.jump_mean * self.theta
        return LevyModel.exp_jump_diffusion(mu, b.sigma, b.jump_rate / shrink, b.jump_mean / shrink)
