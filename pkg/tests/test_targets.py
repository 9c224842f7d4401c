import itertools
import math

import numpy as np
import pytest

from diffmh.core import DualValue
from diffmh.targets import (
    GaussianTarget,
    IsingTarget,
    MixtureTarget,
    TargetEvaluationError,
    TargetModel,
    acceptance,
    critical_temperature,
    ising_hamiltonian,
    ising_local_hamiltonian_delta,
    two_state_target,
)


def literal_hamiltonian(x, theta):
    """Double loop over every site, both orientation terms, wrapped indices."""
    L = x.shape[0]
    total = 0
    for j in range(L):
        for k in range(L):
            total += x[j, k] * x[j, (k + 1) % L] + x[(j + 1) % L, k] * x[j, k]
    return -theta * total


# --- acceptance -----------------------------------------------------------------

def test_acceptance_identity_proposal():
    a = acceptance(GaussianTarget(0.5), 0.0, 0.3, 0.3)
    assert a == DualValue(1.0, 0.0)


def test_acceptance_downhill_gaussian():
    a = acceptance(GaussianTarget(0.5), 0.0, 0.5, 1.5)
    assert a.value == pytest.approx(math.exp(-0.5), rel=1e-14)
    assert a.deriv == pytest.approx(math.exp(-0.5), rel=1e-14)


def test_acceptance_uphill_gaussian_is_flat():
    assert acceptance(GaussianTarget(0.5), 0.0, 1.5, 0.5) == DualValue(1.0, 0.0)


def test_acceptance_non_finite_names_state():
    class Bad(TargetModel):
        def log_g(self, x):
            return DualValue(-math.inf if x == 2 else 0.0, 0.0)

    with pytest.raises(TargetEvaluationError, match="state 2"):
        acceptance(Bad(), 0.0, 1, 2)


def test_detailed_balance_and_min_bound():
    rng = np.random.default_rng(1)
    tg = GaussianTarget(0.3)
    for _ in range(1000):
        x, xp = rng.normal(scale=2, size=2)
        gx = math.exp(tg.log_g(x).value)
        gxp = math.exp(tg.log_g(xp).value)
        fwd = gx * acceptance(tg, 0.0, x, xp).value
        bwd = gxp * acceptance(tg, 0.0, xp, x).value
        assert fwd == pytest.approx(bwd, rel=1e-12)
        assert fwd >= min(gx, gxp) * (1 - 1e-12)


def test_acceptance_derivative_matches_finite_difference():
    rng = np.random.default_rng(2)
    for _ in range(200):
        theta, x, xp = rng.normal(size=3)
        a = acceptance(GaussianTarget(theta), 0.0, x, xp)
        if a.value == 1.0:
            continue
        eps = 1e-6
        fd = (acceptance(GaussianTarget(theta + eps), 0.0, x, xp).value
              - acceptance(GaussianTarget(theta - eps), 0.0, x, xp).value) / (2 * eps)
        assert a.deriv == pytest.approx(fd, rel=1e-5, abs=1e-9)


# --- mixture / two-state --------------------------------------------------------------

@pytest.mark.parametrize("h", [-3.0, 0.4, 1.07, 4.0, 9.0])
def test_mixture_log_g_derivative(h):
    eps = 1e-6
    for j in (1, 2, 3):
        d = MixtureTarget(h).log_g(j)
        fd = (MixtureTarget(h + eps).log_g(j).value - MixtureTarget(h - eps).log_g(j).value) / (2 * eps)
        assert d.deriv == pytest.approx(fd, rel=1e-5, abs=1e-9)
        mu = MixtureTarget.MEANS[j - 1]
        assert d.deriv == pytest.approx(-(h - mu) / 16.0)


def test_mixture_ratio_matches_gaussian_likelihoods():
    tg = MixtureTarget(4.0)
    r = tg.log_ratio(1, 3).value
    assert r == pytest.approx((-(4 - 5) ** 2 + (4 + 2.5) ** 2) / 32)


def test_two_state_target():
    tg = two_state_target(-0.5)
    assert tg.log_g(1) == DualValue(0.0, 0.0)
    assert tg.log_g(2) == DualValue(-0.5, 1.0)
    assert tg.at(0.2).log_g(2).value == 0.2


# --- Ising --------------------------------------------------------------------------------

def test_hamiltonian_small_lattices():
    assert ising_hamiltonian(np.ones((2, 2), dtype=int), 1.0) == -8.0
    checker = np.array([[1, -1], [-1, 1]])
    assert ising_hamiltonian(checker, 1.0) == 8.0
    x = np.ones((3, 3), dtype=int)
    x[1, 1] = -1
    assert ising_hamiltonian(x, 1.0) == -10.0


def test_hamiltonian_matches_literal_sum():
    rng = np.random.default_rng(3)
    for L in (2, 3, 5):
        for _ in range(20):
            x = rng.choice([-1, 1], size=(L, L))
            theta = rng.uniform(0.1, 2)
            assert ising_hamiltonian(x, theta) == pytest.approx(literal_hamiltonian(x, theta), rel=1e-14)


def test_local_delta_examples():
    x = np.ones((3, 3), dtype=int)
    assert ising_local_hamiltonian_delta(x, (0, 0), 1, 1.0) == 0.0
    for j, k in itertools.product(range(3), range(3)):
        assert ising_local_hamiltonian_delta(x, (j, k), -1, 1.0) == 8.0


def test_local_delta_matches_full_recomputation():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        L = int(rng.integers(3, 7))
        x = rng.choice([-1, 1], size=(L, L))
        site = (int(rng.integers(L)), int(rng.integers(L)))
        spin = int(rng.choice([-1, 1]))
        theta = float(rng.integers(1, 8)) / 4
        after = x.copy()
        after[site] = spin
        assert ising_local_hamiltonian_delta(x, site, spin, theta) == \
            ising_hamiltonian(after, theta) - ising_hamiltonian(x, theta)


def test_ising_temperature_derivative():
    rng = np.random.default_rng(5)
    x = rng.choice([-1, 1], size=(4, 4))
    for T in (1.0, 2.269, 3.5):
        d = IsingTarget(4, 1.0, T).log_g(x)
        eps = 1e-6
        fd = (IsingTarget(4, 1.0, T + eps).log_g(x).value - IsingTarget(4, 1.0, T - eps).log_g(x).value) / (2 * eps)
        assert d.deriv == pytest.approx(fd, rel=1e-5)
        assert d.deriv == pytest.approx(ising_hamiltonian(x, 1.0) / T ** 2)


def test_ising_log_ratio_uses_local_delta_consistently():
    rng = np.random.default_rng(6)
    tg = IsingTarget(4, 1.0, 2.0)
    for _ in range(100):
        x = rng.choice([-1, 1], size=(4, 4))
        xp = x.copy()
        xp[rng.integers(4), rng.integers(4)] *= -1
        full = tg.log_g(xp) - tg.log_g(x)
        fast = tg.log_ratio(x, xp)
        assert fast.value == pytest.approx(full.value, abs=1e-12)
        assert fast.deriv == pytest.approx(full.deriv, abs=1e-12)


def test_critical_temperature():
    assert critical_temperature(1.0) == pytest.approx(2.26919, abs=1e-5)
    assert critical_temperature(2.0) == pytest.approx(2 * critical_temperature(1.0))
    assert critical_temperature(0.5) == pytest.approx(0.5 * critical_temperature(1.0))
    with pytest.raises(ValueError):
        critical_temperature(0.0)
