"""Parameterized unnormalized target densities and the MH acceptance probability."""

from __future__ import annotations

import math
from typing import Callable, Hashable, Sequence

import numpy as np

from .core import DualValue

K_B = 1.0


class TargetModel:
    """Unnormalized log-density ``log g_theta(x)`` together with its theta-derivative.

    Subclasses implement ``log_g``. ``states`` is a list for discrete enumerable
    targets and ``None`` for continuous ones, in which case ``dim`` gives the
    dimension.
    """

    states: Sequence[Hashable] | None = None
    dim: int | None = None

    def log_g(self, x) -> DualValue:
        raise NotImplementedError

    def log_ratio(self, x, x_prime) -> DualValue:
        return self.log_g(x_prime) - self.log_g(x)


class TargetEvaluationError(ValueError):
    pass


def acceptance(target: TargetModel, proposal_logratio_correction: float, x, x_prime) -> DualValue:
    """MH acceptance probability ``min(1, g(x')q(x|x') / (g(x)q(x'|x)))`` as a DualValue.

    ``proposal_logratio_correction`` is ``log q(x|x') - log q(x'|x)``. The
    derivative is ``alpha * dDelta`` below the kink and 0 from ``Delta >= 0`` on.
    """
    delta = target.log_ratio(x, x_prime)
    if not math.isfinite(delta.value) or not math.isfinite(delta.deriv):
        # find out which side is at fault for the message
        for s in (x, x_prime):
            lg = target.log_g(s)
            if not (math.isfinite(lg.value) and math.isfinite(lg.deriv)):
                raise TargetEvaluationError(f"non-finite log-density {lg!r} at state {s!r}")
        raise TargetEvaluationError(f"non-finite log-ratio between {x!r} and {x_prime!r}")
    d = delta.value + proposal_logratio_correction
    if d < 0.0:
        a = math.exp(d)
        return DualValue(a, a * delta.deriv)
    return DualValue(1.0, 0.0)


class DiscreteTarget(TargetModel):
    """Finite state space with log-weights given as a function of theta.

    ``log_weights(theta)`` returns one log-weight per state. The derivative is
    taken by the supplied ``dlog_weights`` when given, else by central
    differences with step ``1e-6``.
    """

    def __init__(
        self,
        states: Sequence[Hashable],
        log_weights: Callable[[float], Sequence[float]],
        theta: float,
        dlog_weights: Callable[[float], Sequence[float]] | None = None,
    ):
        self.states = list(states)
        self.theta = float(theta)
        self._log_weights = log_weights
        self._dlog_weights = dlog_weights
        lw = np.asarray(log_weights(self.theta), dtype=float)
        if dlog_weights is not None:
            dlw = np.asarray(dlog_weights(self.theta), dtype=float)
        else:
            eps = 1e-6 * max(1.0, abs(self.theta))
            dlw = (np.asarray(log_weights(self.theta + eps), dtype=float)
                   - np.asarray(log_weights(self.theta - eps), dtype=float)) / (2 * eps)
        self._index = {s: i for i, s in enumerate(self.states)}
        self._lw = lw
        self._dlw = dlw

    def at(self, theta: float) -> "DiscreteTarget":
        return DiscreteTarget(self.states, self._log_weights, theta, self._dlog_weights)

    def log_g(self, x) -> DualValue:
        i = self._index[x]
        return DualValue(self._lw[i], self._dlw[i])


def two_state_target(theta: float) -> DiscreteTarget:
    """States ``{1, 2}`` with ``g = (1, e^theta)``."""
    return DiscreteTarget([1, 2], lambda t: [0.0, t], theta, lambda t: [0.0, 1.0])


class MixtureTarget(TargetModel):
    """Posterior over the component ``J`` of a 3-component Gaussian mixture given observation ``h``.

    ``h`` is the differentiation parameter. States are ``1, 2, 3``.
    """

    MEANS = (-2.5, 2.0, 5.0)
    SIGMA = 4.0

    def __init__(self, h: float, means: Sequence[float] = MEANS, sigma: float = SIGMA):
        self.h = float(h)
        self.means = tuple(float(m) for m in means)
        self.sigma = float(sigma)
        self.states = list(range(1, len(self.means) + 1))
        # uniform prior and Gaussian normalizer are constants in h
        self._const = -math.log(len(self.means)) - math.log(self.sigma * math.sqrt(2 * math.pi))

    def log_g(self, j) -> DualValue:
        mu = self.means[j - 1]
        s2 = self.sigma * self.sigma
        r = self.h - mu
        return DualValue(self._const - r * r / (2 * s2), -r / s2)


class GaussianTarget(TargetModel):
    """``N(theta, 1)`` on the real line."""

    dim = 1

    def __init__(self, theta: float = 0.5):
        self.theta = float(theta)

    def log_g(self, x) -> DualValue:
        r = float(x) - self.theta
        return DualValue(-0.5 * r * r, r)


def ising_hamiltonian(spins: np.ndarray, theta: float) -> float:
    """``-theta * sum_{j,k} (x[j,k] x[j,k+1] + x[j+1,k] x[j,k])`` with periodic wrap."""
    s = np.asarray(spins, dtype=np.int64)
    bonds = np.sum(s * np.roll(s, -1, axis=1)) + np.sum(np.roll(s, -1, axis=0) * s)
    return -theta * float(bonds)


def ising_local_hamiltonian_delta(spins: np.ndarray, site: tuple[int, int], new_spin: int, theta: float) -> float:
    """Change in the Hamiltonian from setting ``spins[site] = new_spin``, using the 4 incident bonds."""
    j, k = site
    L = spins.shape[0]
    old = int(spins[j, k])
    if old == new_spin:
        return 0.0
    nbr = (int(spins[(j + 1) % L, k]) + int(spins[(j - 1) % L, k])
           + int(spins[j, (k + 1) % L]) + int(spins[j, (k - 1) % L]))
    return -theta * float((new_spin - old) * nbr)


def critical_temperature(theta: float = 1.0) -> float:
    """Infinite-lattice critical temperature ``2 theta / (k_B ln(1 + sqrt 2))``."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    return 2.0 * theta / (K_B * math.log(1.0 + math.sqrt(2.0)))


class IsingTarget(TargetModel):
    """Boltzmann distribution of the periodic 2D Ising model, differentiated in temperature.

    States are ``L x L`` int8 arrays of +-1 spins.
    """

    def __init__(self, L: int = 12, theta: float = 1.0, temperature: float = 2.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.L = int(L)
        self.theta = float(theta)
        self.temperature = float(temperature)
        self.dim = self.L * self.L

    def log_g(self, x) -> DualValue:
        H = ising_hamiltonian(x, self.theta)
        T = self.temperature
        return DualValue(-H / (K_B * T), H / (K_B * T * T))

    def log_ratio(self, x, x_prime) -> DualValue:
        diff = np.argwhere(x != x_prime)
        if len(diff) == 0:
            return DualValue(0.0, 0.0)
        if len(diff) == 1:
            j, k = diff[0]
            dH = ising_local_hamiltonian_delta(x, (int(j), int(k)), int(x_prime[j, k]), self.theta)
        else:
            dH = ising_hamiltonian(x_prime, self.theta) - ising_hamiltonian(x, self.theta)
        T = self.temperature
        return DualValue(-dH / (K_B * T), dH / (K_B * T * T))
