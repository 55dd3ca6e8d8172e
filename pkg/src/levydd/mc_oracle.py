"""Brute-force Monte Carlo oracle.

Paths of the jump diffusion are simulated on a uniform time grid with the
jump epochs inserted exactly, then decomposed at their extremes.  Nothing
here touches the scale-function machinery, so agreement with the analytic
laws is an independent check.

Each path draws from its own counter-based stream keyed by
``(path_index, seed)``, so any subset of paths can be regenerated alone and
batches come out bitwise identical under any worker count.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields

import numpy as np

from .drawdown_laws import ConditionSpec
from .errors import DomainError, InsufficientSampleError
from .levy_model import LevyModel

__all__ = [
    "SimMode",
    "SimConfig",
    "PathRecord",
    "DecompRecord",
    "DecompBatch",
    "MCEstimate",
    "simulate_path",
    "decompose",
    "decompose_reference",
    "simulate_batch",
    "iter_records",
    "resolve_threads",
    "estimate_law",
    "write_decomp_csv",
    "DECOMP_FIELDS",
]

MIN_ACCEPTED = 200
Z95 = 1.959963984540054


class SimMode(str, enum.Enum):
    EXP_HORIZON = "ExpHorizon"
    STOP_AT_ALPHA_D = "StopAtAlphaD"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.  ``d`` is the drawdown level that stops paths in
    ``StopAtAlphaD`` mode; ``gamma`` is then only the discount rate."""

    model: LevyModel
    gamma: float
    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    mode: SimMode = SimMode.EXP_HORIZON
    d: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SimMode(self.mode))
        if not self.gamma > 0:
            raise DomainError("gamma must be > 0")
        if not 0 < self.dt <= 1e-2:
            raise DomainError("dt must lie in (0, 1e-2]")
        if int(self.n_paths) < 1:
            raise DomainError("n_paths must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.mode is SimMode.STOP_AT_ALPHA_D and not (self.d is not None and self.d > 0):
            raise DomainError("StopAtAlphaD mode needs d > 0")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass
class PathRecord:
    """One path.  At a jump epoch the time appears twice, holding the pre- and
    post-jump values in that order."""

    times: np.ndarray
    values: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray  # negative
    end_time: float


@dataclass(frozen=True)
class DecompRecord:
    """Extremes decomposition of one path.

    ``sup_post_inf`` is the level ``sup_{H_I <= t <= T} X_t``.  Fields tied to
    ``alpha_d`` are NaN when the drawdown never exceeds ``d``;
    ``mdd_intermediate`` is NaN unless ``H_I < H_S``.
    """

    S_T: float
    I_T: float
    H_S: float
    H_I: float
    mdd_total: float
    mdd_pre_sup: float
    mdd_post_sup: float
    mdd_post_inf: float
    mdd_intermediate: float
    sup_post_inf: float
    alpha_d: float
    kappa: float
    duration: float
    sup_at_alpha: float
    end_time: float


DECOMP_FIELDS = tuple(f.name for f in fields(DecompRecord))


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([index, seed], dtype=np.uint64)))


def _segment(rng, model: LevyModel, t0, t1, x0, dt):
    """Simulate on ``t0 + k dt`` (``k >= 1``, last node clipped to ``t1``).

    Returns times, values (excluding ``t0``), jump times and sizes.
    """
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    grid = t0 + dt * np.arange(1, n + 1)
    grid[-1] = t1
    if model.has_jumps:
        k = rng.poisson(model.jump_rate * (t1 - t0))
        jt = np.sort(rng.uniform(t0, t1, k))
        js = -rng.exponential(model.jump_mean, k)
    else:
        jt, js = np.empty(0), np.empty(0)
    times = np.concatenate([grid, jt])
    is_jump = np.concatenate([np.zeros(n, bool), np.ones(jt.size, bool)])
    order = np.argsort(times, kind="stable")
    times, is_jump = times[order], is_jump[order]
    steps = np.diff(times, prepend=t0)
    diff = x0 + np.cumsum(model.mu * steps + model.sigma * np.sqrt(steps) * rng.standard_normal(times.size))
    if jt.size == 0:
        return times, diff, jt, js
    jumps = np.zeros(times.size)
    jumps[is_jump] = js
    after = np.cumsum(jumps)
    reps = np.where(is_jump, 2, 1)
    out_t = np.repeat(times, reps)
    out_x = np.repeat(diff + after, reps)
    # The first copy of each jump epoch holds the pre-jump value.
    first = np.cumsum(reps) - reps
    out_x[first[is_jump]] = diff[is_jump] + after[is_jump] - js
    return out_t, out_x, jt, js


def simulate_path(config: SimConfig, path_index: int) -> PathRecord:
    """Simulate path ``path_index``; deterministic in ``(config.seed, path_index)``."""
    rng = _rng(config.seed, int(path_index))
    model, dt = config.model, config.dt
    if config.mode is SimMode.EXP_HORIZON:
        horizon = rng.exponential(1.0 / config.gamma)
        if horizon <= 0:
            horizon = np.finfo(float).tiny
        t, x, jt, js = _segment(rng, model, 0.0, horizon, 0.0, dt)
        return PathRecord(
            np.concatenate([[0.0], t]), np.concatenate([[0.0], x]), jt, js, float(horizon)
        )

    d = config.d
    steps = max(1024, int(round(1.0 / dt)))
    ts, xs, jts, jss = [np.zeros(1)], [np.zeros(1)], [], []
    t0, x0, running_max = 0.0, 0.0, 0.0
    while True:
        t1 = t0 + steps * dt
        t, x, jt, js = _segment(rng, model, t0, t1, x0, dt)
        rm = np.maximum.accumulate(np.maximum(x, running_max))
        hit = np.flatnonzero(rm - x > d)
        if hit.size:
            stop = hit[0] + 1
            t, x = t[:stop], x[:stop]
            keep = jt <= t[-1]
            ts.append(t), xs.append(x), jts.append(jt[keep]), jss.append(js[keep])
            break
        ts.append(t), xs.append(x), jts.append(jt), jss.append(js)
        t0, x0, running_max = t1, x[-1], rm[-1]
    times = np.concatenate(ts)
    return PathRecord(
        times,
        np.concatenate(xs),
        np.concatenate(jts) if jts else np.empty(0),
        np.concatenate(jss) if jss else np.empty(0),
        float(times[-1]),
    )


def _mdd(seg: np.ndarray) -> float:
    if seg.size < 2:
        return 0.0
    return float(np.max(np.maximum.accumulate(seg) - seg))


def decompose(path: PathRecord, d: float | None = None) -> DecompRecord:
    """Decompose a path at its first grid argmax and argmin in one pass each."""
    if d is not None and not d > 0:
        raise DomainError(f"d must be > 0, got {d!r}")
    t, x = path.times, path.values
    if x.size == 0:
        raise DomainError("empty path")
    i_s, i_i = int(np.argmax(x)), int(np.argmin(x))
    rm = np.maximum.accumulate(x)
    nan = math.nan
    alpha = kappa = duration = sup_alpha = nan
    if d is not None:
        hit = np.flatnonzero(rm - x > d)
        if hit.size:
            a = int(hit[0])
            k = int(np.flatnonzero(x[: a + 1] == rm[: a + 1])[-1])
            alpha, kappa = float(t[a]), float(t[k])
            duration, sup_alpha = alpha - kappa, float(rm[a])
    return DecompRecord(
        S_T=float(x[i_s]),
        I_T=float(x[i_i]),
        H_S=float(t[i_s]),
        H_I=float(t[i_i]),
        mdd_total=float(np.max(rm - x)),
        mdd_pre_sup=_mdd(x[: i_s + 1]),
        mdd_post_sup=_mdd(x[i_s:]),
        mdd_post_inf=_mdd(x[i_i:]),
        mdd_intermediate=_mdd(x[i_i : i_s + 1]) if i_i < i_s else nan,
        sup_post_inf=float(np.max(x[i_i:])),
        alpha_d=alpha,
        kappa=kappa,
        duration=duration,
        sup_at_alpha=sup_alpha,
        end_time=float(path.end_time),
    )


def decompose_reference(path: PathRecord, d: float | None = None) -> DecompRecord:
    """Quadratic-time decomposition straight from the definitions.

    Maximum drawdowns are maxima over all pairs ``u <= v``; used only to
    check :func:`decompose`.
    """
    if d is not None and not d > 0:
        raise DomainError(f"d must be > 0, got {d!r}")
    t, x = list(map(float, path.times)), list(map(float, path.values))
    n = len(x)

    def first_arg(better):
        best = 0
        for j in range(1, n):
            if better(x[j], x[best]):
                best = j
        return best

    def mdd(lo, hi):
        return max((x[u] - x[v] for u in range(lo, hi + 1) for v in range(u, hi + 1)), default=0.0)

    i_s = first_arg(lambda a, b: a > b)
    i_i = first_arg(lambda a, b: a < b)
    nan = math.nan
    alpha = kappa = duration = sup_alpha = nan
    if d is not None:
        for j in range(n):
            peak = max(x[: j + 1])
            if peak - x[j] > d:
                k = max(i for i in range(j + 1) if x[i] == max(x[: i + 1]))
                alpha, kappa, duration, sup_alpha = t[j], t[k], t[j] - t[k], peak
                break
    return DecompRecord(
        S_T=x[i_s],
        I_T=x[i_i],
        H_S=t[i_s],
        H_I=t[i_i],
        mdd_total=mdd(0, n - 1),
        mdd_pre_sup=mdd(0, i_s),
        mdd_post_sup=mdd(i_s, n - 1),
        mdd_post_inf=mdd(i_i, n - 1),
        mdd_intermediate=mdd(i_i, i_s) if i_i < i_s else nan,
        sup_post_inf=max(x[i_i:]),
        alpha_d=alpha,
        kappa=kappa,
        duration=duration,
        sup_at_alpha=sup_alpha,
        end_time=float(path.end_time),
    )


# ----------------------------------------------------------------------------
# Batches


@dataclass
class DecompBatch:
    """Column-wise decomposition records of paths ``0 .. n_paths - 1``."""

    config: SimConfig
    d: float | None
    columns: dict

    def __len__(self):
        return self.columns["S_T"].size

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    def records(self):
        cols = [self.columns[f] for f in DECOMP_FIELDS]
        for row in zip(*cols):
            yield DecompRecord(*map(float, row))


def _run_chunk(args):
    config, d, start, stop = args
    out = np.empty((stop - start, len(DECOMP_FIELDS)))
    for row, i in enumerate(range(start, stop)):
        out[row] = astuple(decompose(simulate_path(config, i), d))
    return out


def resolve_threads(threads: int | None) -> int:
    """Explicit value, else ``LEVY_DD_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("LEVY_DD_THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def iter_chunks(
    config: SimConfig, d: float | None = None, threads: int | None = None, chunk: int = 2000
):
    """Yield decomposition arrays (one row per path, columns in field order)
    for consecutive index ranges, in order, whatever the worker count."""
    d = config.d if d is None else d
    threads = resolve_threads(threads)
    jobs = [(config, d, s, min(s + chunk, config.n_paths)) for s in range(0, config.n_paths, chunk)]
    if threads == 1 or len(jobs) == 1:
        for job in jobs:
            yield _run_chunk(job)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(_run_chunk, jobs)


def iter_records(config: SimConfig, d: float | None = None, threads: int | None = None):
    """Stream :class:`DecompRecord` objects in path order."""
    for part in iter_chunks(config, d, threads):
        for row in part:
            yield DecompRecord(*map(float, row))


def simulate_batch(
    config: SimConfig, d: float | None = None, threads: int | None = None, chunk: int = 2000
) -> DecompBatch:
    """Simulate and decompose every path of ``config``.

    ``d`` defaults to ``config.d``; without it the ``alpha_d`` fields are NaN.
    """
    d = config.d if d is None else d
    data = np.concatenate(list(iter_chunks(config, d, threads, chunk)), axis=0)
    return DecompBatch(config, d, {f: data[:, i] for i, f in enumerate(DECOMP_FIELDS)})


def write_decomp_csv(path, records, header: bool = True) -> int:
    """Stream DecompRecords to CSV, one row per path; returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["path"] + list(DECOMP_FIELDS))
        for n, rec in enumerate(records, start=1):
            writer.writerow([n - 1] + [repr(float(v)) for v in astuple(rec)])
    return n


# ----------------------------------------------------------------------------
# Estimators


@dataclass(frozen=True)
class MCEstimate:
    law_id: str
    args: dict
    value: float
    stderr: float
    ci_low: float
    ci_high: float
    accepted: int
    total: int

    def covers(self, target: float, allowance: float = 0.0) -> bool:
        return self.ci_low - allowance <= target <= self.ci_high + allowance


# Statistic per law: (name of the sample, how it is turned into a number).
_GAP_LAWS = {
    "intermediate_mdd_cdf",
    "intermediate_mdd_cdf_printed",
    "post_sup_mdd_cdf_cond",
    "duration_lt_post_sup_cond",
}


def _sample(batch: DecompBatch, law_id: str, args: dict):
    S, I = batch["S_T"], batch["I_T"]
    if law_id == "sup_cdf":
        return (S <= args["b"]).astype(float)
    if law_id == "joint_inf_sup":
        return ((I > args["a"]) & (S < args["b"])).astype(float)
    if law_id == "pre_sup_mdd_cdf":
        return (batch["mdd_pre_sup"] < args["d"]).astype(float)
    if law_id in ("post_sup_mdd_sf", "duration_lt_post_sup", "cor1_printed"):
        # The post-supremum duration outlives the residual exponential clock
        # exactly when that segment's drawdown exceeds d.
        return (batch["mdd_post_sup"] > args["d"]).astype(float)
    if law_id == "post_inf_mdd_sf":
        return (batch["mdd_post_inf"] > args["d"]).astype(float)
    if law_id == "post_inf_sup_cdf":
        return (batch["sup_post_inf"] - I <= args["u"]).astype(float)
    if law_id in ("intermediate_mdd_cdf", "intermediate_mdd_cdf_printed"):
        return (batch["mdd_intermediate"] < args["d"]).astype(float)
    if law_id == "post_sup_mdd_cdf_cond":
        return (batch["mdd_post_sup"] < args["d"]).astype(float)
    if law_id == "duration_lt_post_sup_cond":
        return (batch["mdd_post_sup"] >= args["d"]).astype(float)
    if law_id == "duration_lt_at_alpha":
        if batch.config.mode is not SimMode.STOP_AT_ALPHA_D or batch.d != args["d"]:
            raise ValueError("duration_lt_at_alpha needs a StopAtAlphaD batch at the same d")
        return np.exp(-batch.config.gamma * batch["duration"])
    raise KeyError(f"no Monte Carlo estimator for law {law_id!r}")


def _mask(batch: DecompBatch, law_id: str, args: dict, cond: ConditionSpec | None, eps: float):
    S, I = batch["S_T"], batch["I_T"]
    mask = np.ones(len(batch), bool)
    if cond is None:
        if law_id == "pre_sup_mdd_cdf":
            cond = ConditionSpec(sup_level=args["b"])
        elif law_id in _GAP_LAWS:
            mask &= np.abs(S - I - args["gap"]) <= eps
            cond = ConditionSpec()
    if law_id in _GAP_LAWS:
        mask &= batch["H_I"] < batch["H_S"]
        if cond.sup_level is not None and cond.inf_level is not None:
            if not math.isclose(cond.sup_level - cond.inf_level, args["gap"]):
                raise DomainError(f"{law_id}: sup_level - inf_level must equal gap")
    if cond is not None:
        if cond.sup_level is not None:
            mask &= np.abs(S - cond.sup_level) <= eps
        if cond.inf_level is not None:
            mask &= np.abs(I - cond.inf_level) <= eps
        if cond.inf_before_sup:
            mask &= batch["H_I"] < batch["H_S"]
    return mask


def estimate_law(
    source,
    law_id: str,
    args: dict,
    conditioning: ConditionSpec | None = None,
    eps: float = 0.05,
    threads: int | None = None,
    min_accepted: int = MIN_ACCEPTED,
) -> MCEstimate:
    """Empirical counterpart of a law with a 95% normal confidence interval.

    ``source`` is a :class:`DecompBatch` or a :class:`SimConfig` (simulated on
    the fly).  Conditioning on ``S_T = b`` or ``I_T = a`` uses acceptance
    bands of half-width ``eps``.  Laws conditioned on the range
    ``S_T - I_T = gap`` band that range when no explicit levels are given,
    and always require ``H_I < H_S``.
    """
    batch = source if isinstance(source, DecompBatch) else simulate_batch(
        source, d=args.get("d") if source.mode is SimMode.STOP_AT_ALPHA_D else None, threads=threads
    )
    sample = _sample(batch, law_id, args)
    mask = _mask(batch, law_id, args, conditioning, eps) & np.isfinite(sample)
    n = int(mask.sum())
    if n < min_accepted:
        raise InsufficientSampleError(law_id, n, min_accepted)
    vals = sample[mask]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n))
    return MCEstimate(law_id, dict(args), mean, se, mean - Z95 * se, mean + Z95 * se, n, len(batch))
