import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import quad
from hypothesis import strategies as st

from levydd.errors import DomainError
from levydd.levy_model import Family, LevyModel

models = st.one_of(
    st.builds(
        LevyModel.brownian,
        st.floats(-3, 3),
        st.floats(0.2, 3),
    ),
    st.builds(
        LevyModel.exp_jump_diffusion,
        st.floats(-3, 3),
        st.floats(0.2, 3),
        st.floats(0.05, 5),
        st.floats(0.05, 3),
    ),
)


def test_psi_examples():
    assert LevyModel.brownian(1, 2).psi(1.0) == pytest.approx(3.0, abs=1e-15)
    assert LevyModel.brownian(0.3, 1.1).psi(0.0) == 0.0
    # Exp(1) downward jumps at rate 1: 1 + 1/2 - 1 * 1/(1 + 1)
    assert LevyModel.exp_jump_diffusion(1, 1, 1, 1).psi(1.0) == pytest.approx(1.0, abs=1e-15)


def test_psi_jump_term_matches_levy_integral():
    m = LevyModel.exp_jump_diffusion(0.4, 0.7, 2.0, 0.6)
    lam = 1.3
    # int_0^inf (e^{-lam y} - 1) r (1/m) e^{-y/m} dy
    jump, _ = quad(lambda y: (math.exp(-lam * y) - 1) * 2.0 / 0.6 * math.exp(-y / 0.6), 0, math.inf, epsabs=1e-14, epsrel=1e-13)
    expected = 0.4 * lam + 0.5 * 0.49 * lam**2 + jump
    assert m.psi(lam) == pytest.approx(expected, rel=1e-11)


def test_psi_prime_examples():
    assert LevyModel.brownian(1, 2).psi_prime(0.0) == 1.0
    assert LevyModel.brownian(0, 1).psi_prime(2.0) == 2.0
    assert LevyModel.exp_jump_diffusion(1, 1, 1, 1).psi_prime(1.0) == pytest.approx(1.75)


@given(models, st.floats(0.01, 8))
def test_psi_prime_matches_central_difference(model, lam):
    h = 1e-5 * max(1.0, lam)
    fd = (model.psi(lam + h) - model.psi(lam - h)) / (2 * h)
    assert model.psi_prime(lam) == pytest.approx(fd, rel=1e-8, abs=1e-8)


def test_phi_examples():
    assert LevyModel.brownian(0, 1).phi(0.5) == pytest.approx(1.0, abs=1e-12)
    assert LevyModel.brownian(0, 1).phi(0.0) == 0.0
    assert LevyModel.brownian(-1, 1).phi(0.0) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=200)
@given(models, st.floats(0, 10))
def test_phi_solves_psi(model, gamma):
    phi = model.phi(gamma)
    assert phi >= 0
    assert abs(model.psi(phi) - gamma) <= 1e-12 * max(1.0, gamma)
    # largest root: psi is increasing beyond phi
    assert model.psi_prime(phi) >= -1e-9


@given(models, st.floats(0, 10), st.floats(0, 10))
def test_phi_monotone(model, g1, g2):
    lo, hi = sorted((g1, g2))
    assert model.phi(lo) <= model.phi(hi) + 1e-14


@given(models, st.lists(st.floats(0, 10), min_size=3, max_size=3, unique=True))
def test_psi_convex(model, lams):
    a, b, c = sorted(lams)
    if b - a < 1e-3 or c - b < 1e-3:
        return
    s1 = (model.psi(b) - model.psi(a)) / (b - a)
    s2 = (model.psi(c) - model.psi(b)) / (c - b)
    assert s1 <= s2 + 1e-9 * max(1.0, abs(s2))


def test_esscher_examples():
    bm = LevyModel.brownian(0, 1)
    tilt = bm.esscher_tilt(1.0)
    for lam in (0.0, 0.5, 2.0):
        assert tilt.psi(lam) == pytest.approx(lam + lam * lam / 2)
    assert tilt.psi_prime(0.0) == pytest.approx(1.0) == bm.psi_prime(1.0)
    ident = bm.esscher_tilt(0.0)
    assert ident.psi(1.7) == bm.psi(1.7)


@given(models, st.floats(0.01, 5), st.floats(0, 6))
def test_tilt_at_phi(model, gamma, lam):
    phi = model.phi(gamma)
    tilt = model.esscher_tilt(phi)
    assert tilt.psi(0.0) == 0.0
    assert tilt.psi(lam) == pytest.approx(model.psi(lam + phi) - gamma, rel=1e-10, abs=1e-10 * max(1, gamma))
    as_model = tilt.as_levy_model()
    assert as_model.psi(lam) == pytest.approx(tilt.psi(lam), rel=1e-10, abs=1e-10)


def test_validation():
    with pytest.raises(DomainError):
        LevyModel.brownian(0, 0)
    with pytest.raises(DomainError):
        LevyModel(Family.BROWNIAN_DRIFT, 0, 1, jump_rate=1.0)
    with pytest.raises(DomainError):
        LevyModel(Family.EXP_JUMP_DIFFUSION, 0, 1, jump_rate=0.0)
    with pytest.raises(DomainError):
        LevyModel.exp_jump_diffusion(0, 1, 1, -1)
    with pytest.raises(DomainError):
        LevyModel.brownian(math.nan, 1)
    m = LevyModel.brownian()
    for bad in (-1.0, np.array([0.5, -0.1]), 1j, math.nan):
        with pytest.raises(DomainError):
            m.psi(bad)
        with pytest.raises(DomainError):
            m.psi_prime(bad)
    with pytest.raises(DomainError):
        m.phi(-0.1)
    with pytest.raises(DomainError):
        m.esscher_tilt(-1.0)


def test_vectorised_and_key():
    m = LevyModel.exp_jump_diffusion(1, 1, 1, 1)
    lam = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(m.psi(lam), [m.psi(v) for v in lam])
    assert m.key() == LevyModel.exp_jump_diffusion(1.0, 1.0, 1.0, 1.0).key()
    assert m.key() != LevyModel.exp_jump_diffusion(1.0, 1.0, 1.0, 2.0).key()
    assert LevyModel("BrownianDrift", 0, 1).family is Family.BROWNIAN_DRIFT
