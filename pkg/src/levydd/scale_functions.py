"""Scale functions W, Z of a spectrally negative Lévy process.

``W`` is defined through ``int exp(-lam x) W(x) dx = 1 / (psi(lam) - gamma)``
for ``lam > Phi(gamma)`` and ``Z(x) = 1 + gamma * int_0^x W``.

Internally every table works with four well-conditioned functions instead of
``W`` and ``Z`` themselves, since ``W`` grows like ``exp(Phi x)`` and most
fluctuation identities are differences of such growing terms:

``w_tilted``        ``exp(-Phi x) W(x)``, bounded, tends to ``1/psi'(Phi)``
``w_prime_excess``  ``W'(x) - Phi W(x)``, decays to 0
``down_lt``         ``Z(x) - rho W(x)`` with ``rho = gamma/Phi``, which is
                    ``E_x[exp(-gamma tau_0^-); tau_0^- < inf]``, decays to 0

Each has a Laplace transform with the pole at ``Phi`` removed, written with
the divided difference ``Delta(s) = (psi(s) - gamma) / (s - Phi)``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BPoly, CubicHermiteSpline

from .errors import DomainError
from .inversion import invert, talbot_mp
from .levy_model import Family, LevyModel

__all__ = ["ScaleMethod", "ScaleTable", "scale_table", "invert_scale", "default_grid"]

N_GRID = 512
X_MIN = 1e-4
X_MAX = 20.0


class ScaleMethod(str, enum.Enum):
    CLOSED_FORM = "ClosedForm"
    INVERTED = "Inverted"


def default_grid(x_max: float = X_MAX, n: int = N_GRID) -> np.ndarray:
    """``0`` followed by ``n`` geometrically spaced nodes on ``[1e-4, x_max]``."""
    return np.concatenate([[0.0], np.geomspace(X_MIN, x_max, n)])


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


class _ClosedForm:
    """Residue expansion ``W(x) = sum_i c_i exp(p_i x)`` over the simple
    roots ``p_i`` of ``psi(lam) = gamma`` (rational ``psi`` only)."""

    def __init__(self, model: LevyModel, gamma: float, phi: float, rho: float):
        s2 = model.sigma**2
        quad = np.array([0.5 * s2, model.mu, -gamma])  # sigma^2/2 l^2 + mu l - gamma
        if model.has_jumps:
            m, r = model.jump_mean, model.jump_rate
            num = np.polymul(quad, [m, 1.0])
            num = np.polyadd(num, [-r * m, 0.0])
            den = np.array([m, 1.0])
        else:
            num, den = quad, np.array([1.0])
        roots = np.roots(num)
        if np.any(np.abs(roots.imag) > 1e-9 * np.maximum(1.0, np.abs(roots))):
            raise ValueError("closed form unavailable: complex roots")
        roots = np.sort(roots.real)[::-1]
        roots[0] = phi
        if np.any(np.abs(np.diff(roots)) <= 1e-6 * np.maximum(1.0, np.abs(roots[:-1]))):
            raise ValueError("closed form unavailable: repeated roots")
        dnum = np.polyder(num)
        # Newton polish of the remaining roots; the largest is already phi.
        for _ in range(3):
            roots[1:] -= np.polyval(num, roots[1:]) / np.polyval(dnum, roots[1:])
        self.gamma, self.phi, self.rho = gamma, phi, rho
        self.poles = roots
        self.coef = np.polyval(den, roots) / np.polyval(dnum, roots)

    def values(self, x):
        p, c = self.poles[1:], self.coef[1:]
        xe = x[..., None]
        ex = np.exp(p * xe)
        # The residues sum to W(0) = 0, so each term is taken relative to its
        # value at the origin; this keeps W and Z - 1 accurate for small x.
        wt = (c * np.expm1((p - self.phi) * xe)).sum(-1)
        dev = (c * (p - self.phi) * ex).sum(-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            integ = np.where(p == 0, xe, np.expm1(p * xe) / np.where(p == 0, 1.0, p))
        near = 1.0 + (c * (self.gamma * integ - self.rho * np.expm1(p * xe))).sum(-1)
        # Away from the origin the constant terms cancel to K(inf), which is 0
        # unless rho = 0 (then K = Z = 1); dropping them avoids cancellation.
        with np.errstate(invalid="ignore", divide="ignore"):
            decay = np.where(p == 0, 0.0, self.gamma / np.where(p == 0, 1.0, p)) - self.rho
        far = (0.0 if self.rho > 0 else 1.0) + (c * decay * ex).sum(-1)
        k = np.where(near >= 0.5, near, far)
        return wt, k, dev


    def tilted_increment(self, x, y):
        p = self.poles[1:] - self.phi
        return (self.coef[1:] * np.exp(p * x[..., None]) * np.expm1(p * (y - x)[..., None])).sum(-1)


class _LinearBrownian:
    """Driftless Brownian motion at gamma = 0, where psi has a double root."""

    def __init__(self, sigma: float):
        self.slope = 2.0 / sigma**2

    def values(self, x):
        return self.slope * x, np.ones_like(x), np.full_like(x, self.slope)

    def tilted_increment(self, x, y):
        return self.slope * (y - x)


class _Inverted:
    """Fixed-Talbot inversion at the grid nodes plus Hermite interpolation;
    abscissae past the grid are inverted pointwise.

    ``w_tilted`` and ``down_lt`` get quintic Hermite pieces, since their first
    two derivatives follow from ``w_prime_excess`` and its derivative.
    """

    def __init__(self, model, gamma, phi, rho, grid, precision="double"):
        self.model, self.gamma, self.phi, self.rho = model, gamma, phi, rho
        self.precision = precision
        self.x_max = float(grid[-1])
        s2 = model.sigma**2
        self.w0 = 2.0 / s2  # W'(0+) for sigma > 0
        self.dev_p0 = -4.0 * model.mu / s2**2 - phi * self.w0

        interior = grid[1:]
        wt, k, dev, devp = self._invert(interior)
        x = grid
        wt = np.concatenate([[0.0], wt])
        k = np.concatenate([[1.0], k])
        dev = np.concatenate([[self.w0], dev])
        devp = np.concatenate([[self.dev_p0], devp])
        self.node_values = (wt, k, dev)
        tilt = np.exp(-phi * x)
        self._wt = BPoly.from_derivatives(
            x, np.column_stack([wt, tilt * dev, tilt * (devp - phi * dev)])
        )
        self._k = BPoly.from_derivatives(x, np.column_stack([k, -rho * dev, -rho * devp]))
        self._dev = CubicHermiteSpline(x, dev, devp)

    def _transforms(self):
        """Transform and absolute-accuracy scale of each inverted function."""
        model, phi, rho, w0 = self.model, self.phi, self.rho, self.w0
        slope = model.psi_slope
        return {
            "w_tilted": (lambda s: 1.0 / (s * slope(s + phi, phi)), w0),
            "down_lt": (lambda s: (1.0 - rho / slope(s, phi)) / s, 1.0),
            "w_prime_excess": (lambda s: 1.0 / slope(s, phi), w0),
            "w_prime_excess'": (lambda s: s / slope(s, phi) - w0, max(w0, abs(self.dev_p0))),
        }

    def _invert(self, x):
        x = np.asarray(x, dtype=float)
        out = []
        for name, (F, scale) in self._transforms().items():
            if self.precision == "mp":
                out.append(np.array([talbot_mp(F, xi) for xi in x.ravel()]).reshape(x.shape))
            else:
                out.append(invert(F, x, atol=1e-8 * scale, name=name))
        return out

    def values(self, x):
        wt, k, dev = self._wt(x), self._k(x), self._dev(x)
        far = x > self.x_max
        if np.any(far):
            fw, fk, fd, _ = self._invert(x[far])
            wt, k, dev = np.array(wt), np.array(k), np.array(dev)
            wt[far], k[far], dev[far] = fw, fk, fd
        return wt, k, dev


class ScaleTable:
    """Evaluator for ``W``, ``W'`` and ``Z`` at a fixed ``gamma``.

    Use :func:`scale_table` or :func:`invert_scale` to build one.  Tables are
    immutable once constructed.
    """

    def __init__(
        self,
        model: LevyModel,
        gamma: float,
        method: ScaleMethod | str = "auto",
        grid: np.ndarray | None = None,
        precision: str = "double",
    ):
        gamma = float(gamma)
        if not gamma >= 0:
            raise DomainError(f"gamma must be >= 0, got {gamma!r}")
        grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing and start at 0")
        self.model = model
        self.gamma = gamma
        self.phi_gamma = model.phi(gamma)
        # gamma / Phi(gamma), continued to gamma = 0 by psi'(0) when Phi(0) = 0.
        if gamma > 0:
            self.rho = gamma / self.phi_gamma
        elif self.phi_gamma > 0:
            self.rho = 0.0
        else:
            self.rho = float(model.psi_prime(0.0))
        self.grid = grid
        self.precision = precision
        self._w0 = 2.0 / model.sigma**2

        backend = None
        if method == "auto":
            try:
                backend, method = self._closed_form(), ScaleMethod.CLOSED_FORM
            except ValueError:
                method = ScaleMethod.INVERTED
        method = ScaleMethod(method)
        if method is ScaleMethod.INVERTED:
            backend = _Inverted(model, gamma, self.phi_gamma, self.rho, grid, precision)
        elif backend is None:
            backend = self._closed_form()
        self._backend = backend
        self.method = method

        self.W = self.w(grid)
        self.Wprime = self._w_prime_unchecked(grid)
        self.Z = self.z(grid)

    def _closed_form(self):
        if (
            self.model.family is Family.BROWNIAN_DRIFT
            and self.gamma == 0
            and self.model.mu == 0
        ):
            return _LinearBrownian(self.model.sigma)
        return _ClosedForm(self.model, self.gamma, self.phi_gamma, self.rho)

    def __repr__(self):
        return (
            f"ScaleTable(model={self.model!r}, gamma={self.gamma!r}, "
            f"method={self.method.value}, grid=[0..{self.grid[-1]:g}] n={self.grid.size})"
        )

    def _values(self, x, name, strict=False):
        arr, scalar = _as_array(x)
        if np.any(np.isnan(arr)) or np.any(arr < 0) or (strict and np.any(arr == 0)):
            bound = "> 0" if strict else ">= 0"
            raise DomainError(f"{name}: x must be {bound}, got {x!r}")
        wt, k, dev = (np.asarray(v, dtype=float) for v in self._backend.values(arr))
        origin = arr == 0
        if np.any(origin):
            # Exact boundary values: W(0) = 0, Z(0) = 1, W'(0+) = 2 / sigma^2.
            wt, k, dev = (np.where(origin, v0, v) for v, v0 in zip((wt, k, dev), (0.0, 1.0, self._w0)))
        return wt, k, dev, arr, scalar

    def w(self, x):
        """``W^(gamma)(x)``; zero at the origin."""
        wt, _, _, arr, scalar = self._values(x, "w")
        return _out(np.exp(self.phi_gamma * arr) * wt, scalar)

    def w_tilted(self, x):
        """``exp(-Phi(gamma) x) W^(gamma)(x)``, the 0-scale function of the
        Esscher-tilted process."""
        wt, _, _, _, scalar = self._values(x, "w_tilted")
        return _out(wt, scalar)

    def _w_prime_unchecked(self, x):
        wt, _, dev, arr, _ = self._values(x, "w_prime")
        return self.phi_gamma * np.exp(self.phi_gamma * arr) * wt + dev

    def w_prime(self, x):
        """Derivative of ``W^(gamma)``; defined for ``x > 0``."""
        wt, _, dev, arr, scalar = self._values(x, "w_prime", strict=True)
        return _out(self.phi_gamma * np.exp(self.phi_gamma * arr) * wt + dev, scalar)

    def w_tilted_increment(self, x, y):
        """``w_tilted(y) - w_tilted(x)``, free of cancellation where the
        backend allows it."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        self._values(x, "w_tilted_increment")
        self._values(y, "w_tilted_increment")
        inc = getattr(self._backend, "tilted_increment", None)
        if inc is None:
            out = self.w_tilted(y) - self.w_tilted(x)
        else:
            out = np.asarray(inc(x, y), dtype=float)
        return float(out) if out.ndim == 0 else out

    def w_prime_excess(self, x):
        """``W'(x) - Phi(gamma) W(x)`` evaluated without cancellation."""
        _, _, dev, _, scalar = self._values(x, "w_prime_excess")
        return _out(dev, scalar)

    def w_ratio(self, x):
        """``W'(x) / W(x)`` for ``x > 0``, decreasing to ``Phi(gamma)``."""
        wt, _, dev, arr, scalar = self._values(x, "w_ratio", strict=True)
        return _out(self.phi_gamma + np.exp(-self.phi_gamma * arr) * dev / wt, scalar)

    def down_lt(self, x):
        """``Z(x) - (gamma/Phi) W(x)``: Laplace transform of the first passage below 0."""
        _, k, _, _, scalar = self._values(x, "down_lt")
        return _out(k, scalar)

    def z(self, x):
        """``Z^(gamma)(x) = 1 + gamma * int_0^x W``."""
        wt, k, _, arr, scalar = self._values(x, "z")
        return _out(k + self.rho * np.exp(self.phi_gamma * arr) * wt, scalar)

    # CSV persistence -----------------------------------------------------

    def to_csv(self, path) -> None:
        """Write the cached grid as columns ``x, W, Wprime, Z``.

        The first line is a ``#`` comment carrying the model hash, gamma,
        method and the model parameters.
        """
        m = self.model
        header = (
            f"# model={m.key()} gamma={self.gamma!r} method={self.method.value} "
            f"family={m.family.value} mu={m.mu!r} sigma={m.sigma!r} "
            f"jump_rate={m.jump_rate!r} jump_mean={m.jump_mean!r}"
        )
        wp = self.Wprime.copy()
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "W", "Wprime", "Z"])
            for row in zip(self.grid, self.W, wp, self.Z):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, rtol: float = 1e-9) -> "ScaleTable":
        """Rebuild a table written by :meth:`to_csv` and check it reproduces
        the stored values."""
        meta, cols = read_scale_csv(path)
        model = LevyModel(
            meta["family"],
            float(meta["mu"]),
            float(meta["sigma"]),
            float(meta["jump_rate"]),
            float(meta["jump_mean"]),
        )
        if model.key() != meta["model"]:
            raise ValueError(f"{path}: model hash mismatch")
        table = cls(model, float(meta["gamma"]), meta["method"], grid=cols["x"])
        for name in ("W", "Wprime", "Z"):
            ref = cols[name]
            got = getattr(table, name)
            if not np.allclose(got, ref, rtol=rtol, atol=rtol):
                raise ValueError(f"{path}: stored {name} column does not match the model")
        return table


def read_scale_csv(path):
    """Parse a scale-table CSV into ``(metadata, columns)``."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '#' metadata header")
        meta = dict(item.split("=", 1) for item in first[1:].split())
        rows = list(csv.reader(fh))
    names = rows[0]
    data = np.array(rows[1:], dtype=float)
    return meta, {n: data[:, i] for i, n in enumerate(names)}


def scale_table(model: LevyModel, gamma: float, method="auto", grid=None, precision="double"):
    """Build a :class:`ScaleTable`, preferring the closed form when one exists."""
    return ScaleTable(model, gamma, method, grid, precision)


def invert_scale(model: LevyModel, gamma: float, grid=None, precision="double") -> ScaleTable:
    """Build a table by numerical Laplace inversion regardless of the family."""
    return ScaleTable(model, gamma, ScaleMethod.INVERTED, grid, precision)


@dataclass(frozen=True)
class ScalePair:
    """Scale tables at ``gamma = 0`` and ``gamma`` for the same model."""

    zero: ScaleTable
    killed: ScaleTable

    @classmethod
    def build(cls, model: LevyModel, gamma: float, method="auto") -> "ScalePair":
        return cls(scale_table(model, 0.0, method), scale_table(model, gamma, method))


def brownian_scale(x, gamma: float, mu: float = 0.0, sigma: float = 1.0):
    """Textbook closed form of ``W^(gamma)`` for Brownian motion with drift.

    ``W(x) = 2/sigma^2 * exp(-mu x / sigma^2) * sinh(k x) / k`` with
    ``k = sqrt(mu^2 + 2 gamma sigma^2) / sigma^2``.  Independent of the
    residue machinery above; used as a reference.
    """
    x = np.asarray(x, dtype=float)
    s2 = sigma**2
    k = math.sqrt(mu * mu + 2.0 * gamma * s2) / s2
    core = x if k == 0 else np.sinh(k * x) / k
    return 2.0 / s2 * np.exp(-mu * x / s2) * core
