"""Run configuration, analytic sweeps and analytic-versus-Monte-Carlo reports.

Configuration is INI.  Sections::

    [model]       family, mu, sigma, jump_rate, jump_mean
    [run]         gamma, method (auto | ClosedForm | Inverted), x_max, points
    [sim]         dt, n_paths, seed, mode, d, eps, allowance
    [law:NAME]    id = <law id>, one value per law argument
    [exit:NAME]   id = <exit identity>, one value per argument
    [check:NAME]  law = <law id>, arguments, optional sup_level, inf_level,
                  inf_before_sup, eps, allowance, dt, n_paths, expect

An argument value is a number, a comma-separated list, or ``start:stop:num``
(``num`` evenly spaced points).  At most one argument per section may hold
more than one value; that argument is the sweep variable.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import drawdown_laws, exit_identities
from .drawdown_laws import LAWS, ConditionSpec
from .errors import DomainError
from .levy_model import LevyModel
from .mc_oracle import SimConfig, SimMode, estimate_law, simulate_batch
from .scale_functions import ScaleMethod, default_grid, scale_table

__all__ = [
    "ConfigError",
    "RunConfig",
    "Sweep",
    "CheckSpec",
    "ComparisonRow",
    "ComparisonReport",
    "load_config",
    "parse_config",
    "run_law",
    "run_exit",
    "run_verify",
    "EXITS",
]

EXITS = {
    "one_sided_up": ("x",),
    "one_sided_down": ("x",),
    "two_sided_up": ("x", "b"),
    "two_sided_down": ("x", "b"),
    "updown_before_drawdown": ("x", "b", "d"),
    "drawdown_before_up": ("x_gap", "d"),
}


class ConfigError(ValueError):
    """Invalid configuration; carries the offending line when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Sweep:
    """Arguments of one law or exit section; ``sweep`` names the swept one."""

    name: str
    target: str
    args: dict
    sweep: str

    def points(self):
        values = self.args[self.sweep]
        for v in values:
            yield {k: (v if k == self.sweep else vals[0]) for k, vals in self.args.items()}


@dataclass(frozen=True)
class CheckSpec:
    name: str
    sweep: Sweep
    conditioning: ConditionSpec | None
    eps: float
    allowance: float
    dt: float
    n_paths: int
    expect_inside: bool = True


@dataclass
class RunConfig:
    model: LevyModel
    gamma: float = 0.5
    method: str = "auto"
    x_max: float = 20.0
    points: int = 512
    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    mode: SimMode = SimMode.EXP_HORIZON
    d: float | None = None
    eps: float = 0.05
    allowance: float = 0.0
    laws: list = field(default_factory=list)
    exits: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    source: str = "<config>"

    def sim_config(self, seed: int | None = None, **overrides) -> SimConfig:
        kw = dict(
            model=self.model,
            gamma=self.gamma,
            dt=self.dt,
            n_paths=self.n_paths,
            seed=self.seed if seed is None else seed,
            mode=self.mode,
            d=self.d,
        )
        kw.update(overrides)
        return SimConfig(**kw)

    def grid(self):
        return default_grid(self.x_max, self.points)


# ----------------------------------------------------------------------------
# Parsing

_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` to the 1-based line of its definition."""
    index, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = n
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            index.setdefault((section, m.group(1).strip().lower()), n)
    return index


class _Reader:
    def __init__(self, parser, lines, source):
        self.parser, self.lines, self.source = parser, lines, source

    def fail(self, section, key, message):
        raise ConfigError(message, self.source, self.lines.get((section, key), self.lines.get((section, None))))

    def raw(self, section, key, default=None):
        if not self.parser.has_option(section, key):
            return default
        return self.parser.get(section, key).strip()

    def number(self, section, key, default=None, kind=float):
        text = self.raw(section, key)
        if text is None:
            if default is None:
                self.fail(section, key, f"missing key {key!r} in [{section}]")
            return default
        try:
            return kind(text)
        except ValueError:
            self.fail(section, key, f"{key} = {text!r} is not a valid {kind.__name__}")

    def values(self, section, key):
        text = self.raw(section, key)
        try:
            if text.count(":") == 2:
                lo, hi, num = text.split(":")
                return [float(v) for v in np.linspace(float(lo), float(hi), int(num))]
            vals = [float(v) for v in text.split(",") if v.strip()]
            if not vals:
                raise ValueError
            return vals
        except ValueError:
            self.fail(section, key, f"{key} = {text!r} is not a number, list or start:stop:num")

    def boolean(self, section, key, default=False):
        if not self.parser.has_option(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            self.fail(section, key, f"{key} must be a boolean")


def _sweep(reader, section, name, target, params):
    args = {}
    for p in params:
        if not reader.parser.has_option(section, p):
            reader.fail(section, None, f"[{section}] lacks argument {p!r} required by {target}")
        args[p] = reader.values(section, p)
    multi = [p for p, v in args.items() if len(v) > 1]
    if len(multi) > 1:
        reader.fail(section, multi[1], f"only one swept argument per section, got {multi}")
    sweep = multi[0] if multi else params[0]
    return Sweep(name, target, args, sweep)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse INI ``text`` into a :class:`RunConfig`; errors cite line numbers."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
        raise ConfigError(msg, source, line) from None
    reader = _Reader(parser, _line_index(text), source)

    if not parser.has_section("model"):
        raise ConfigError("missing [model] section", source)
    try:
        model = LevyModel(
            reader.raw("model", "family", "BrownianDrift"),
            reader.number("model", "mu", 0.0),
            reader.number("model", "sigma", 1.0),
            reader.number("model", "jump_rate", 0.0),
            reader.number("model", "jump_mean", 1.0),
        )
    except (DomainError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        reader.fail("model", None, f"invalid model: {exc}")

    cfg = RunConfig(model=model, source=source)
    if parser.has_section("run"):
        cfg.gamma = reader.number("run", "gamma", cfg.gamma)
        cfg.method = reader.raw("run", "method", cfg.method)
        cfg.x_max = reader.number("run", "x_max", cfg.x_max)
        cfg.points = reader.number("run", "points", cfg.points, int)
        if cfg.method != "auto":
            try:
                ScaleMethod(cfg.method)
            except ValueError:
                reader.fail("run", "method", f"unknown method {cfg.method!r}")
        if not cfg.gamma >= 0:
            reader.fail("run", "gamma", "gamma must be >= 0")
    if parser.has_section("sim"):
        cfg.dt = reader.number("sim", "dt", cfg.dt)
        cfg.n_paths = reader.number("sim", "n_paths", cfg.n_paths, int)
        cfg.seed = reader.number("sim", "seed", cfg.seed, int)
        mode = reader.raw("sim", "mode", cfg.mode.value)
        try:
            cfg.mode = SimMode(mode)
        except ValueError:
            reader.fail("sim", "mode", f"unknown mode {mode!r}")
        if parser.has_option("sim", "d"):
            cfg.d = reader.number("sim", "d")
        cfg.eps = reader.number("sim", "eps", cfg.eps)
        cfg.allowance = reader.number("sim", "allowance", cfg.allowance)
        if not 0 < cfg.dt <= 1e-2:
            reader.fail("sim", "dt", "dt must lie in (0, 1e-2]")
        if cfg.n_paths < 1:
            reader.fail("sim", "n_paths", "n_paths must be >= 1")
        if cfg.mode is SimMode.STOP_AT_ALPHA_D and not (cfg.d and cfg.d > 0):
            reader.fail("sim", "d", "StopAtAlphaD mode needs d > 0")

    for section in parser.sections():
        kind, _, name = section.partition(":")
        kind, name = kind.strip(), name.strip() or section
        if kind == "law":
            law_id = reader.raw(section, "id")
            if law_id not in LAWS:
                reader.fail(section, "id", f"unknown law id {law_id!r}")
            cfg.laws.append(_sweep(reader, section, name, law_id, LAWS[law_id].params))
        elif kind == "exit":
            exit_id = reader.raw(section, "id")
            if exit_id not in EXITS:
                reader.fail(section, "id", f"unknown exit identity {exit_id!r}")
            cfg.exits.append(_sweep(reader, section, name, exit_id, EXITS[exit_id]))
        elif kind == "check":
            law_id = reader.raw(section, "law")
            if law_id not in LAWS:
                reader.fail(section, "law", f"unknown law id {law_id!r}")
            sweep = _sweep(reader, section, name, law_id, LAWS[law_id].params)
            sup = reader.number(section, "sup_level", math.nan)
            inf = reader.number(section, "inf_level", math.nan)
            order = reader.boolean(section, "inf_before_sup")
            cond = None
            if not (math.isnan(sup) and math.isnan(inf)) or order:
                try:
                    cond = ConditionSpec(
                        None if math.isnan(sup) else sup, None if math.isnan(inf) else inf, order
                    )
                except DomainError as exc:
                    reader.fail(section, None, str(exc))
            expect = reader.raw(section, "expect", "inside")
            if expect not in ("inside", "outside"):
                reader.fail(section, "expect", "expect must be 'inside' or 'outside'")
            dt = reader.number(section, "dt", cfg.dt)
            if not 0 < dt <= 1e-2:
                reader.fail(section, "dt", "dt must lie in (0, 1e-2]")
            cfg.checks.append(
                CheckSpec(
                    name,
                    sweep,
                    cond,
                    reader.number(section, "eps", cfg.eps),
                    reader.number(section, "allowance", cfg.allowance),
                    dt,
                    reader.number(section, "n_paths", cfg.n_paths, int),
                    expect == "inside",
                )
            )
        elif kind not in ("model", "run", "sim"):
            reader.fail(section, None, f"unknown section [{section}]")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


# ----------------------------------------------------------------------------
# Analytic sweeps


class _Tables:
    """Lazily built scale tables of one run, keyed by gamma."""

    def __init__(self, cfg: RunConfig):
        self.cfg, self.cache = cfg, {}

    def __call__(self, gamma):
        if gamma not in self.cache:
            self.cache[gamma] = scale_table(self.cfg.model, gamma, self.cfg.method, self.cfg.grid())
        return self.cache[gamma]


def _fmt(v) -> str:
    return repr(float(v))


def run_law(cfg: RunConfig, printed_cor1: bool = False, tables=None) -> list[dict]:
    """Evaluate every ``[law:*]`` sweep; one row per point."""
    tables = tables or _Tables(cfg)
    rows = []
    for sw in cfg.laws:
        for args in sw.points():
            val = _analytic(cfg, tables, sw.target, args, printed_cor1)
            rows.append(
                dict(name=sw.name, law=sw.target, arg_name=sw.sweep, arg=args[sw.sweep],
                     value=val.value, formula_id=val.formula_id)
            )
    return rows


def _analytic(cfg, tables, law_id, args, printed_cor1=False):
    if printed_cor1 and law_id in ("duration_lt_post_sup", "post_sup_mdd_sf"):
        law_id = "cor1_printed"
    zero = tables(0.0) if LAWS[law_id].needs_zero_table else None
    return drawdown_laws.evaluate(law_id, tables(cfg.gamma), args, zero)


def run_exit(cfg: RunConfig, tables=None) -> list[dict]:
    tables = tables or _Tables(cfg)
    rows = []
    for sw in cfg.exits:
        func = getattr(exit_identities, sw.target)
        for args in sw.points():
            rows.append(
                dict(name=sw.name, identity=sw.target, arg_name=sw.sweep, arg=args[sw.sweep],
                     value=func(tables(cfg.gamma), **args))
            )
    return rows


# ----------------------------------------------------------------------------
# Verification


@dataclass(frozen=True)
class ComparisonRow:
    check: str
    law: str
    arg_name: str
    arg: float
    analytic: float
    estimate: float
    ci_low: float
    ci_high: float
    gap: float
    accepted: int
    expect_inside: bool
    passed: bool


@dataclass
class ComparisonReport:
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def sup_gaps(self) -> dict:
        """Largest ``|analytic - estimate|`` per check over its sweep."""
        out = {}
        for r in self.rows:
            out[r.check] = max(out.get(r.check, 0.0), r.gap)
        return out

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "n_rows": len(self.rows),
            "n_failed": sum(not r.passed for r in self.rows),
            "checks": {
                name: {
                    "law": next(r.law for r in self.rows if r.check == name),
                    "sup_gap": gap,
                    "passed": all(r.passed for r in self.rows if r.check == name),
                }
                for name, gap in self.sup_gaps().items()
            },
        }

    def text(self) -> str:
        lines = []
        for r in self.rows:
            flag = "PASS" if r.passed else "FAIL"
            where = "inside" if r.expect_inside else "outside"
            lines.append(
                f"{flag} {r.check} {r.law} {r.arg_name}={r.arg:g}: analytic {r.analytic:.5f}, "
                f"MC {r.estimate:.5f} [{r.ci_low:.5f}, {r.ci_high:.5f}] n={r.accepted} "
                f"(expect {where})"
            )
        lines.append(f"{'PASS' if self.passed else 'FAIL'}: {len(self.rows)} comparisons")
        return "\n".join(lines)


def run_verify(
    cfg: RunConfig,
    seed: int | None = None,
    threads: int | None = None,
    printed_cor1: bool = False,
) -> ComparisonReport:
    """Compare every ``[check:*]`` against the Monte Carlo oracle.

    A row passes when the analytic value lies inside the 95% interval widened
    by ``allowance`` (or outside the bare interval for ``expect = outside``).
    Batches are shared between checks with the same simulation settings.
    """
    tables = _Tables(cfg)
    batches = {}
    rows = []
    for chk in cfg.checks:
        for args in chk.sweep.points():
            law_id = chk.sweep.target
            if law_id == "duration_lt_at_alpha":
                key = (chk.dt, chk.n_paths, SimMode.STOP_AT_ALPHA_D, args["d"])
                sim = dict(dt=chk.dt, n_paths=chk.n_paths, mode=SimMode.STOP_AT_ALPHA_D, d=args["d"])
            else:
                key = (chk.dt, chk.n_paths, SimMode.EXP_HORIZON, None)
                sim = dict(dt=chk.dt, n_paths=chk.n_paths, mode=SimMode.EXP_HORIZON, d=None)
            if key not in batches:
                batches[key] = simulate_batch(cfg.sim_config(seed, **sim), threads=threads)
            est = estimate_law(batches[key], law_id, args, chk.conditioning, chk.eps)
            value = _analytic(cfg, tables, law_id, args, printed_cor1).value
            if chk.expect_inside:
                ok = est.covers(value, chk.allowance)
            else:
                ok = not est.covers(value)
            rows.append(
                ComparisonRow(chk.name, law_id, chk.sweep.sweep, args[chk.sweep.sweep], value,
                              est.value, est.ci_low, est.ci_high, abs(value - est.value),
                              est.accepted, chk.expect_inside, bool(ok))
            )
    return ComparisonReport(rows)


# ----------------------------------------------------------------------------
# Output


def write_rows_csv(path, rows: list[dict]) -> None:
    """CSV with a fixed header taken from the first row; floats as ``repr``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if not rows:
            return
        writer.writerow(list(rows[0]))
        for r in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r.values()])


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
