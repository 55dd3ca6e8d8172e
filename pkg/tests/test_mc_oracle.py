import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levydd.drawdown_laws import ConditionSpec
from levydd.errors import DomainError, InsufficientSampleError
from levydd.levy_model import LevyModel
from levydd.mc_oracle import (
    DECOMP_FIELDS,
    PathRecord,
    SimConfig,
    SimMode,
    decompose,
    decompose_reference,
    estimate_law,
    iter_records,
    resolve_threads,
    simulate_batch,
    simulate_path,
    write_decomp_csv,
)

BM = LevyModel.brownian(0, 1)
JUMP = LevyModel.exp_jump_diffusion(0.5, 0.7, 2.0, 0.4)


def _path(values, times=None):
    values = np.asarray(values, dtype=float)
    times = np.arange(values.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    return PathRecord(times, values, np.empty(0), np.empty(0), float(times[-1]))


def _same(a, b):
    for name in DECOMP_FIELDS:
        x, y = getattr(a, name), getattr(b, name)
        assert (math.isnan(x) and math.isnan(y)) or x == y, name


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(BM, 0.0)
    with pytest.raises(DomainError):
        SimConfig(BM, 0.5, dt=0.02)
    with pytest.raises(DomainError):
        SimConfig(BM, 0.5, n_paths=0)
    with pytest.raises(DomainError):
        SimConfig(BM, 0.5, seed=2**64)
    with pytest.raises(DomainError):
        SimConfig(BM, 0.5, mode="StopAtAlphaD")
    assert SimConfig(BM, 0.5, mode="StopAtAlphaD", d=1.0).mode is SimMode.STOP_AT_ALPHA_D


def test_determinism():
    cfg = SimConfig(JUMP, 0.5, seed=42)
    a, b = simulate_path(cfg, 7), simulate_path(cfg, 7)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.jump_sizes, b.jump_sizes)
    c = simulate_path(SimConfig(JUMP, 0.5, seed=43), 7)
    assert not np.array_equal(a.values[:5], c.values[:5]) or a.end_time != c.end_time


def test_path_structure():
    cfg = SimConfig(JUMP, 0.2, dt=1e-3, seed=3)
    for i in range(20):
        p = simulate_path(cfg, i)
        assert p.values[0] == 0.0 and p.times[0] == 0.0
        assert p.times[-1] == pytest.approx(p.end_time)
        assert np.all(np.diff(p.times) >= 0)
        assert np.all(p.jump_sizes < 0)
        # each jump epoch appears twice; the gap between the copies is the jump
        for jt, js in zip(p.jump_times, p.jump_sizes):
            idx = np.flatnonzero(p.times == jt)
            assert idx.size == 2
            assert p.values[idx[1]] - p.values[idx[0]] == pytest.approx(js, abs=1e-12)


def test_increment_variance():
    cfg = SimConfig(BM, 1e-3, dt=1e-3, seed=11)
    p = simulate_path(cfg, 0)
    inc = np.diff(p.values)[:10_000]
    assert inc.size == 10_000
    # var of the sample variance of N(0, dt) is 2 dt^2 / n
    assert abs(inc.var() - 1e-3) <= 3 * math.sqrt(2 / inc.size) * 1e-3


def test_jump_count_mean():
    model = LevyModel.exp_jump_diffusion(0, 1, 2.0, 1.0)
    cfg = SimConfig(model, 0.5, dt=1e-2, seed=5)
    counts = np.array([simulate_path(cfg, i).jump_times.size for i in range(2000)])
    # N(T) with T ~ Exp(0.5): mean 4, variance 4 + 16
    assert abs(counts.mean() - 4) <= 3 * math.sqrt(20 / counts.size)


def test_decompose_examples():
    r = decompose(_path([0, 1, -1, 0.5]), d=1.5)
    assert (r.S_T, r.I_T, r.mdd_total) == (1.0, -1.0, 2.0)
    assert r.H_S < r.H_I
    assert (r.alpha_d, r.kappa, r.duration, r.sup_at_alpha) == (2.0, 1.0, 1.0, 1.0)
    assert math.isnan(r.mdd_intermediate)
    up = decompose(_path([0, 1, 2, 3]), d=1.0)
    assert up.mdd_total == up.mdd_pre_sup == up.mdd_post_sup == up.mdd_post_inf == 0
    assert (up.H_S, up.H_I) == (3.0, 0.0)
    assert math.isnan(up.alpha_d)
    # ties go to the earliest index
    tie = decompose(_path([0, 2, 0, 2, -1, -1]))
    assert (tie.H_S, tie.H_I) == (1.0, 4.0)
    with pytest.raises(DomainError):
        decompose(_path([0, 1]), d=0.0)


def _random_path(rng, n=50, jumps=True):
    steps = rng.standard_normal(n)
    if jumps:
        steps -= np.where(rng.random(n) < 0.1, rng.exponential(1.5, n), 0.0)
    values = np.concatenate([[0.0], np.cumsum(steps)])
    # coarse rounding creates ties
    values = np.round(values, 1)
    return _path(values, np.linspace(0, 1, n + 1))


def test_scan_matches_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        p = _random_path(rng)
        d = float(rng.uniform(0.2, 3))
        _same(decompose(p, d), decompose_reference(p, d))
        _same(decompose(p), decompose_reference(p))


def test_simulated_paths_match_brute_force():
    cfg = SimConfig(JUMP, 5.0, dt=1e-2, seed=9)
    for i in range(15):
        p = simulate_path(cfg, i)
        if p.values.size > 300:
            continue
        _same(decompose(p, 0.3), decompose_reference(p, 0.3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40), st.floats(0.05, 5))
def test_record_invariants(steps, d):
    p = _path(np.concatenate([[0.0], np.cumsum(steps)]))
    r = decompose(p, d)
    assert r.I_T <= 0 <= r.S_T
    assert 0 <= r.H_S <= r.end_time and 0 <= r.H_I <= r.end_time
    for m in (r.mdd_total, r.mdd_pre_sup, r.mdd_post_sup, r.mdd_post_inf):
        assert m >= 0
    assert r.mdd_total >= max(r.mdd_pre_sup, r.mdd_post_sup)
    assert r.S_T - r.I_T >= r.mdd_total
    if not math.isnan(r.alpha_d):
        assert r.duration >= 0 and r.kappa <= r.alpha_d
        assert r.sup_at_alpha - p.values[int(r.alpha_d)] > d


def test_stop_at_alpha_mode():
    cfg = SimConfig(JUMP, 0.5, dt=1e-3, seed=1, mode="StopAtAlphaD", d=0.8)
    for i in range(10):
        p = simulate_path(cfg, i)
        r = decompose(p, 0.8)
        assert r.alpha_d == p.end_time
        rm = np.maximum.accumulate(p.values)
        assert np.all((rm - p.values)[:-1] <= 0.8)


def test_threads_do_not_change_results():
    cfg = SimConfig(JUMP, 1.0, dt=5e-3, n_paths=600, seed=77)
    one = simulate_batch(cfg, threads=1)
    two = simulate_batch(cfg, threads=2)
    chunks = simulate_batch(cfg, threads=2, chunk=97)
    for f in DECOMP_FIELDS:
        np.testing.assert_array_equal(one[f], two[f])
        np.testing.assert_array_equal(one[f], chunks[f])
    # a path regenerated alone matches its place in the batch
    _same(decompose(simulate_path(cfg, 321)), list(one.records())[321])


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv("LEVY_DD_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("LEVY_DD_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    with pytest.raises(ValueError):
        resolve_threads(0)


def test_csv_stream(tmp_path):
    cfg = SimConfig(BM, 1.0, dt=1e-2, n_paths=25, seed=4)
    path = tmp_path / "d.csv"
    n = write_decomp_csv(path, iter_records(cfg))
    lines = path.read_text().splitlines()
    assert n == 25 and len(lines) == 26
    assert lines[0].split(",") == ["path", *DECOMP_FIELDS]


@pytest.fixture(scope="module")
def small_batch():
    return simulate_batch(SimConfig(BM, 0.5, dt=2e-3, n_paths=20_000, seed=123))


def test_estimates_cover_targets(small_batch):
    est = estimate_law(small_batch, "sup_cdf", {"b": 1.0})
    assert est.accepted == est.total == 20_000
    assert est.covers(1 - math.exp(-1), allowance=0.02)
    est = estimate_law(small_batch, "post_inf_mdd_sf", {"d": 1.0})
    assert est.covers(1 - math.tanh(1), allowance=0.03)
    assert est.ci_low < est.value < est.ci_high


def test_conditioning_consistency(small_batch):
    # Integrating the banded estimate over the S_T histogram recovers the
    # unconditional frequency of the same event.
    uncond = estimate_law(small_batch, "post_sup_mdd_sf", {"d": 1.0})
    S = small_batch["S_T"]
    edges = np.arange(0, S.max() + 0.1, 0.1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (S >= lo) & (S < hi)
        if sel.sum():
            total += sel.mean() * (small_batch["mdd_post_sup"][sel] > 1.0).mean()
    assert abs(total - uncond.value) <= 2 * (uncond.ci_high - uncond.value)
    banded = estimate_law(small_batch, "post_sup_mdd_sf", {"d": 1.0}, ConditionSpec(sup_level=0.5), eps=0.1)
    assert banded.accepted < banded.total
    assert abs(banded.value - uncond.value) <= 0.05


def test_insufficient_sample(small_batch):
    with pytest.raises(InsufficientSampleError) as info:
        estimate_law(small_batch, "pre_sup_mdd_cdf", {"b": 6.0, "d": 1.0}, eps=0.01)
    assert info.value.law_id == "pre_sup_mdd_cdf"
    with pytest.raises(ValueError):
        estimate_law(small_batch, "duration_lt_at_alpha", {"d": 1.0})
    with pytest.raises(KeyError):
        estimate_law(small_batch, "nope", {})
    with pytest.raises(DomainError):
        estimate_law(
            small_batch, "intermediate_mdd_cdf", {"gap": 2.0, "d": 1.0},
            ConditionSpec(sup_level=1.0, inf_level=-0.5, inf_before_sup=True),
        )


def test_discretization_bias_shrinks():
    target = 1 - math.tanh(1)
    errs = []
    for dt in (1e-2, 2.5e-3):
        cfg = SimConfig(BM, 0.5, dt=dt, n_paths=20_000, seed=99)
        errs.append(abs(estimate_law(cfg, "post_inf_mdd_sf", {"d": 1.0}).value - target))
    assert errs[1] < errs[0]
