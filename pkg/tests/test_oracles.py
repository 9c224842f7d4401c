import itertools
import math

import numpy as np
import pytest

from diffmh.oracles import (
    DiscreteChain,
    entropy_argmax,
    enumerate_posterior,
    exact_entropy,
    finite_difference,
    finite_T_expectation,
    ising_exhaustive_energy,
    ising_exhaustive_heat_capacity,
    mh_transition_matrix,
    mixture_chain,
    two_state_chain,
)
from diffmh.targets import ising_hamiltonian

ind2 = lambda x: float(x == 2)  # noqa: E731


def test_enumerate_posterior_h4():
    p, dp = enumerate_posterior(4.0)
    lik = np.exp(-(4.0 - np.array([-2.5, 2.0, 5.0])) ** 2 / 32)
    np.testing.assert_allclose(p, lik / lik.sum(), rtol=1e-14)
    np.testing.assert_allclose(p, [0.126, 0.417, 0.457], atol=1e-3)
    assert abs(dp.sum()) < 1e-15


def test_enumerate_posterior_derivative_and_dominance():
    _, dp = enumerate_posterior(0.7)
    fd = finite_difference(lambda h: enumerate_posterior(h)[0], 0.7)
    np.testing.assert_allclose(dp, fd, rtol=1e-6)
    p, _ = enumerate_posterior(2.0, means=[-1e3, 2.0, 1e3])
    assert p[1] == pytest.approx(1.0)
    assert enumerate_posterior(-20.0)[0][0] > 0.99


def test_entropy_argmax_is_stationary():
    h = entropy_argmax()
    assert abs(finite_difference(exact_entropy, h)) < 1e-6
    assert h == pytest.approx(1.06608, abs=1e-4)


def test_finite_T_two_state():
    assert finite_T_expectation(two_state_chain(1), ind2, 0.3) == 0.0
    assert finite_T_expectation(two_state_chain(2), ind2, 0.0) == pytest.approx(0.5)
    assert finite_T_expectation(two_state_chain(2), ind2, -0.5) == pytest.approx(math.exp(-0.5) / 2)
    d = finite_difference(lambda t: finite_T_expectation(two_state_chain(2), ind2, t), -0.5)
    assert d == pytest.approx(math.exp(-0.5) / 2, rel=1e-6)


def test_finite_T_matches_path_enumeration():
    """Brute force over all accept/reject paths of a 3-step mixture chain."""
    chain = mixture_chain(1, 4)
    h = 0.4
    P = mh_transition_matrix(chain, h)
    brute = 0.0
    for path in itertools.product([1, 2, 3], repeat=3):
        prob = 1.0
        prev = 1
        for s in path:
            prob *= P[prev - 1, s - 1]
            prev = s
        brute += prob * (ind2(1) + sum(ind2(s) for s in path)) / 4
    assert finite_T_expectation(chain, ind2, h) == pytest.approx(brute, rel=1e-12)


def test_transition_matrix_row_stochastic_and_reversible():
    chain = mixture_chain(1, 10)
    for h in (-3.0, 0.4, 4.0):
        P = mh_transition_matrix(chain, h)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        pi, _ = enumerate_posterior(h)
        flow = pi[:, None] * P
        np.testing.assert_allclose(flow, flow.T, atol=1e-15)


def test_chain_rejects_bad_proposal():
    with pytest.raises(ValueError):
        DiscreteChain([1, 2], lambda t: [0, t], [[0.5, 0.6], [1.0, 0.0]], 1, 3)


def test_finite_difference_quadratic():
    assert finite_difference(lambda t: t * t, 3.0, 1e-5) == pytest.approx(6.0, abs=1e-6)
    with pytest.raises(ValueError):
        finite_difference(lambda t: t, 0.0, 0.0)


def _brute_moments(L, T):
    Hs = []
    for bits in itertools.product((-1, 1), repeat=L * L):
        Hs.append(ising_hamiltonian(np.array(bits).reshape(L, L), 1.0))
    Hs = np.array(Hs)
    w = np.exp(-(Hs - Hs.min()) / T)
    w /= w.sum()
    m1 = w @ Hs
    return m1, w @ Hs ** 2 - m1 ** 2


def test_ising_exhaustive_frozen_value():
    C, dC = ising_exhaustive_heat_capacity(2, 1.0, 2.0)
    _, var = _brute_moments(2, 2.0)
    assert C == pytest.approx(var / 4.0, rel=1e-12)
    assert C == pytest.approx(1.4443839501910603, rel=1e-12)
    assert dC == pytest.approx(0.9057648220878365, rel=1e-10)


@pytest.mark.parametrize("L,T", [(2, 1.3), (2, 3.0), (3, 2.2), (4, 2.5)])
def test_ising_exhaustive_derivatives(L, T):
    C, dC = ising_exhaustive_heat_capacity(L, 1.0, T)
    fd = finite_difference(lambda t: ising_exhaustive_heat_capacity(L, 1.0, t)[0], T, 1e-5)
    assert dC == pytest.approx(fd, rel=1e-6)
    E, dE = ising_exhaustive_energy(L, 1.0, T)
    assert dE == pytest.approx(finite_difference(lambda t: ising_exhaustive_energy(L, 1.0, t)[0], T, 1e-5), rel=1e-6)


def test_ising_exhaustive_limits_and_guards():
    assert ising_exhaustive_heat_capacity(2, 1.0, 100.0)[0] < 0.05
    with pytest.raises(ValueError):
        ising_exhaustive_heat_capacity(5, 1.0, 2.0)
    with pytest.raises(ValueError):
        ising_exhaustive_heat_capacity(2, 1.0, 0.0)
