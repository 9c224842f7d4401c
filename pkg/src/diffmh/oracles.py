"""Exact reference computations: enumeration, finite-chain expectations, finite differences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .targets import MixtureTarget


@dataclass
class DiscreteChain:
    """A finite MH chain: states, theta-parameterized log-weights, proposal matrix, start, length."""

    states: Sequence[Hashable]
    log_weights: Callable[[float], Sequence[float]]
    proposal: np.ndarray
    start: Hashable
    T: int

    def __post_init__(self):
        self.proposal = np.asarray(self.proposal, dtype=float)
        if np.any(np.abs(self.proposal.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("proposal rows must sum to 1")


def enumerate_posterior(h: float, means: Sequence[float] = MixtureTarget.MEANS,
                        sigma: float = MixtureTarget.SIGMA) -> tuple[np.ndarray, np.ndarray]:
    """Exact mixture posterior ``P(J = j | H = h)`` and its h-derivative."""
    mu = np.asarray(means, dtype=float)
    l = -(h - mu) ** 2 / (2 * sigma ** 2)
    dl = -(h - mu) / sigma ** 2
    p = np.exp(l - l.max())
    p /= p.sum()
    dp = p * (dl - np.dot(p, dl))
    return p, dp


def exact_entropy(h: float) -> float:
    p, _ = enumerate_posterior(h)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def exact_entropy_gradient(h: float) -> float:
    p, dp = enumerate_posterior(h)
    nz = p > 0
    return float(-np.sum((1 + np.log(p[nz])) * dp[nz]))


def entropy_argmax(lo: float = -10.0, hi: float = 10.0) -> float:
    """Observation maximizing the exact posterior entropy."""
    r = minimize_scalar(lambda h: -exact_entropy(h), bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-12})
    return float(r.x)


def mh_transition_matrix(chain: DiscreteChain, theta: float) -> np.ndarray:
    lw = np.asarray(chain.log_weights(theta), dtype=float)
    Q = chain.proposal
    n = len(lw)
    P = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j or Q[i, j] == 0.0:
                continue
            log_r = lw[j] - lw[i] + math.log(Q[j, i]) - math.log(Q[i, j]) if Q[j, i] > 0 else -math.inf
            P[i, j] = Q[i, j] * min(1.0, math.exp(log_r))
        P[i, i] = 1.0 - P[i].sum()
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-10):
        raise ValueError("transition matrix is not row-stochastic")
    return P


def finite_T_expectation(chain: DiscreteChain, f: Callable, theta: float) -> float:
    """``E[(1/T) sum_{t=1..T} f(Z_t)]`` for the MH chain started at ``chain.start``."""
    if len(chain.states) > 64:
        raise ValueError("finite_T_expectation is limited to 64 states")
    P = mh_transition_matrix(chain, theta)
    fv = np.array([f(s) for s in chain.states], dtype=float)
    dist = np.zeros(len(chain.states))
    dist[list(chain.states).index(chain.start)] = 1.0
    total = dist @ fv
    for _ in range(chain.T - 1):
        dist = dist @ P
        total += dist @ fv
    return float(total / chain.T)


def finite_difference(fn: Callable[[float], float], theta: float, eps: float = 1e-6) -> float:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return (fn(theta + eps) - fn(theta - eps)) / (2 * eps)


def two_state_chain(T: int) -> DiscreteChain:
    """Swap proposal on ``{1, 2}`` with ``g = (1, e^theta)``, started at 1."""
    return DiscreteChain([1, 2], lambda t: [0.0, t], np.array([[0.0, 1.0], [1.0, 0.0]]), 1, T)


def mixture_chain(h_start: int, T: int) -> DiscreteChain:
    """Mixture posterior chain with uniform independent proposals; theta is the observation."""
    mu = np.asarray(MixtureTarget.MEANS)
    s = MixtureTarget.SIGMA
    return DiscreteChain([1, 2, 3], lambda h: -(h - mu) ** 2 / (2 * s * s),
                             np.full((3, 3), 1 / 3), h_start, T)


_ISING_CACHE: dict[tuple[int, float], np.ndarray] = {}


def _ising_energies(L: int, theta: float) -> np.ndarray:
    key = (L, theta)
    if key not in _ISING_CACHE:
        n = L * L
        codes = np.arange(2 ** n, dtype=np.int64)
        spins = (((codes[:, None] >> np.arange(n)) & 1) * 2 - 1).reshape(-1, L, L)
        bonds = (spins * np.roll(spins, -1, axis=2)).sum(axis=(1, 2)) \
            + (np.roll(spins, -1, axis=1) * spins).sum(axis=(1, 2))
        _ISING_CACHE[key] = -theta * bonds.astype(float)
    return _ISING_CACHE[key]


def ising_exact_moments(L: int, theta: float, T: float) -> dict[str, float]:
    """Boltzmann moments of H by full enumeration: ``E[H^k]`` for k = 1..4."""
    if L * L > 16:
        raise ValueError("exhaustive enumeration needs L <= 4")
    E = _ising_energies(L, theta)
    a = -E / T
    wts = np.exp(a - a.max())
    wts /= wts.sum()
    return {f"m{k}": float(np.dot(wts, E ** k)) for k in range(1, 5)}


def ising_exhaustive_heat_capacity(L: int, theta: float, T: float) -> tuple[float, float]:
    """Exact ``C(T) = Var(H)/T^2`` and ``dC/dT`` for ``L <= 4``.

    Uses ``d E[H^k]/dT = Cov(H^k, H)/T^2``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    m = ising_exact_moments(L, theta, T)
    m1, m2, m3 = m["m1"], m["m2"], m["m3"]
    var = m2 - m1 * m1
    dm1 = var / T ** 2
    dm2 = (m3 - m2 * m1) / T ** 2
    C = var / T ** 2
    dC = (dm2 - 2 * m1 * dm1) / T ** 2 - 2 * var / T ** 3
    return C, dC


def ising_exhaustive_energy(L: int, theta: float, T: float) -> tuple[float, float]:
    """Exact ``E[H]`` and its T-derivative for ``L <= 4``."""
    m = ising_exact_moments(L, theta, T)
    return m["m1"], (m["m2"] - m["m1"] ** 2) / T ** 2
