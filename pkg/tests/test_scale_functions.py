import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from levydd.errors import DomainError
from levydd.levy_model import LevyModel
from levydd.scale_functions import (
    ScaleMethod,
    ScalePair,
    ScaleTable,
    brownian_scale,
    invert_scale,
    read_scale_csv,
    scale_table,
)

BM = LevyModel.brownian(0.0, 1.0)
JUMP = LevyModel.exp_jump_diffusion(1.0, 1.0, 1.0, 0.5)


@pytest.fixture(scope="module")
def bm_half():
    return scale_table(BM, 0.5)


@pytest.fixture(scope="module")
def bm_half_inv():
    return invert_scale(BM, 0.5)


@pytest.fixture(scope="module")
def jump_pair():
    return scale_table(JUMP, 0.5), invert_scale(JUMP, 0.5)


def test_examples(bm_half):
    assert bm_half.method is ScaleMethod.CLOSED_FORM
    assert bm_half.w(1.0) == pytest.approx(2.35040, abs=5e-6)
    assert bm_half.w(2.0) == pytest.approx(7.25372, abs=5e-6)
    assert bm_half.w_prime(1.0) == pytest.approx(3.08616, abs=5e-6)
    # 2 cosh 2 = 7.5243914, so the five-figure value is 7.52439
    assert bm_half.w_prime(2.0) == pytest.approx(2 * math.cosh(2.0), rel=1e-13)
    assert bm_half.w_prime(2.0) == pytest.approx(7.52440, abs=1e-5)
    assert bm_half.z(1.0) == pytest.approx(1.54308, abs=5e-6)
    assert bm_half.z(2.0) == pytest.approx(3.76220, abs=5e-6)
    assert bm_half.w_tilted(1.0) == pytest.approx(0.86466, abs=5e-6)


def test_boundary_values(bm_half, bm_half_inv, jump_pair):
    for t in (bm_half, bm_half_inv, *jump_pair):
        assert t.w(0.0) == 0.0
        assert t.z(0.0) == 1.0
        assert t.w_prime_excess(0.0) == 2.0  # 2 / sigma^2
    with pytest.raises(DomainError):
        bm_half.w(-1.0)
    with pytest.raises(DomainError):
        bm_half.w_prime(0.0)
    with pytest.raises(DomainError):
        bm_half.w_ratio(np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        scale_table(BM, -0.1)
    with pytest.raises(DomainError):
        ScaleTable(BM, 0.5, grid=np.array([0.1, 1.0]))


@pytest.mark.parametrize("mu, sigma, gamma", [(0, 1, 0.5), (0.7, 1.3, 0.2), (-1, 0.8, 2.0), (-1, 1, 0.0), (0.5, 1, 0.0)])
def test_closed_form_against_textbook(mu, sigma, gamma):
    table = scale_table(LevyModel.brownian(mu, sigma), gamma)
    x = np.linspace(0, 6, 61)
    np.testing.assert_allclose(table.w(x), brownian_scale(x, gamma, mu, sigma), rtol=1e-11, atol=1e-14)


def test_driftless_zero_rate_is_linear():
    t = scale_table(BM, 0.0)
    np.testing.assert_allclose(t.w([0.5, 3.0]), [1.0, 6.0])
    np.testing.assert_allclose(t.z([0.5, 3.0]), [1.0, 1.0])


@pytest.mark.parametrize("gamma", [0.25, 0.5, 1.0])
def test_inverted_matches_brownian(gamma):
    inv = invert_scale(BM, gamma)
    x = np.linspace(0.01, 5, 500)
    exact = math.sqrt(2 / gamma) * np.sinh(math.sqrt(2 * gamma) * x)
    assert np.max(np.abs(inv.w(x) - exact)) <= 1e-6
    assert np.max(np.abs(inv.w_prime(x) - 2 * np.cosh(math.sqrt(2 * gamma) * x))) <= 1e-6


def test_inverted_matches_closed_form_jumps(jump_pair):
    closed, inv = jump_pair
    x = np.linspace(0, 15, 301)
    for name in ("w_tilted", "down_lt", "w_prime_excess", "z"):
        a, b = getattr(closed, name)(x), getattr(inv, name)(x)
        np.testing.assert_allclose(b, a, rtol=1e-7, atol=1e-8, err_msg=name)
    # Past the grid the inverted table switches to pointwise inversion.
    far = np.array([22.0, 30.0])
    np.testing.assert_allclose(inv.w_ratio(far), closed.w_ratio(far), rtol=1e-8)


@pytest.mark.parametrize("model", [BM, JUMP, LevyModel.exp_jump_diffusion(-0.5, 0.8, 2, 0.3)])
@pytest.mark.parametrize("gamma", [0.0, 0.5])
def test_transform_round_trip(model, gamma):
    table = scale_table(model, gamma)
    lam = table.phi_gamma + 1.0
    # int_0^inf e^{-lam x} W(x) dx = 1 / (psi(lam) - gamma)
    shift = lam - table.phi_gamma
    val, _ = quad(lambda x: math.exp(-shift * x) * table.w_tilted(x), 0, math.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    assert val == pytest.approx(1 / (model.psi(lam) - gamma), rel=1e-5)


def test_independent_mp_inversion():
    # mpmath's own Talbot on the shifted naive transform gives e^{-c x} W(x).
    gamma, c = 0.5, 3.0
    table = scale_table(JUMP, gamma)
    mu, s2, r, m = JUMP.mu, JUMP.sigma**2, JUMP.jump_rate, JUMP.jump_mean

    def F(s):
        lam = s + c
        return 1 / (mu * lam + s2 * lam**2 / 2 - r * m * lam / (1 + m * lam) - gamma)

    for x in (0.3, 1.0, 4.0):
        ref = float(mpmath.invertlaplace(F, x, method="talbot")) * math.exp(c * x)
        assert table.w(x) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("model", [BM, JUMP])
@pytest.mark.parametrize("method", ["ClosedForm", "Inverted"])
def test_z_is_integral_of_w(model, method):
    table = scale_table(model, 0.5, method)
    for x in (0.5, 2.0, 7.0):
        integral, _ = quad(table.w, 0, x, epsabs=1e-13, epsrel=1e-13)
        assert table.z(x) == pytest.approx(1 + 0.5 * integral, rel=1e-9)


@pytest.mark.parametrize("model", [BM, JUMP])
@pytest.mark.parametrize("gamma", [0.25, 1.0])
def test_ratio_decreases_to_phi(model, gamma):
    table = scale_table(model, gamma)
    phi = table.phi_gamma
    x = np.linspace(0.01, 40 / phi, 200)
    ratio = table.w_ratio(x)
    assert np.all(np.diff(ratio) <= 0)
    excess = table.w_prime_excess(x) / np.exp(phi * x) / table.w_tilted(x)
    resolved = excess > 1e-12 * phi
    assert np.all(np.diff(ratio[resolved]) < 0)
    assert ratio[-1] - phi <= 1e-3
    assert np.all(ratio >= phi)


def test_tilted_scale_function_is_zero_scale_of_tilt(jump_pair):
    closed, _ = jump_pair
    tilted = JUMP.esscher_tilt(closed.phi_gamma).as_levy_model()
    t0 = scale_table(tilted, 0.0)
    x = np.linspace(0, 8, 33)
    np.testing.assert_allclose(closed.w_tilted(x), t0.w(x), rtol=1e-10, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-2, 2),
    st.floats(0.3, 2),
    st.floats(0.1, 3),
    st.floats(0.1, 2),
    st.floats(0.01, 3),
    st.floats(0.0, 10),
)
def test_properties_jump_family(mu, sigma, rate, mean, gamma, x):
    table = scale_table(LevyModel.exp_jump_diffusion(mu, sigma, rate, mean), gamma)
    assert table.w(x) >= 0
    assert table.z(x) >= 1
    if x > 0:
        assert table.w_ratio(x) >= table.phi_gamma
        assert table.w_prime(x) > 0
    k = table.down_lt(x)
    assert -1e-12 <= k <= 1 + 1e-12
    # W'(x) - Phi W(x) >= 0
    assert table.w_prime_excess(x) >= 0


def test_csv_round_trip(tmp_path, jump_pair):
    closed, _ = jump_pair
    path = tmp_path / "scale.csv"
    closed.to_csv(path)
    meta, cols = read_scale_csv(path)
    assert meta["model"] == JUMP.key()
    assert float(meta["gamma"]) == 0.5
    assert meta["method"] == "ClosedForm"
    np.testing.assert_array_equal(cols["W"], closed.W)
    again = ScaleTable.from_csv(path)
    np.testing.assert_array_equal(again.Z, closed.Z)
    text = path.read_text().splitlines()
    text[5] = text[5].replace(text[5].split(",")[1], "999.0")
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(ValueError):
        ScaleTable.from_csv(path)


def test_pair_and_mp_precision():
    pair = ScalePair.build(BM, 0.5)
    assert pair.zero.gamma == 0.0 and pair.killed.gamma == 0.5
    mp = invert_scale(BM, 0.5, grid=np.linspace(0, 3, 13), precision="mp")
    np.testing.assert_allclose(mp.W, brownian_scale(mp.grid, 0.5), rtol=1e-12, atol=1e-14)
