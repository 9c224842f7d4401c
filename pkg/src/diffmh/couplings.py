"""Proposal kernels and joint proposals for a primal/alternative chain pair.

A proposal splits sampling into ``draw(stream)``, which produces the raw noise
(a normal increment, a uniform, a lattice move), and ``apply(x, noise)``, a
deterministic map. Common random numbers then means applying one draw to both
states.

Every coupled proposal takes the primal's draw from ``stream`` exactly as the
base proposal would, and takes any extra randomness from ``aux``. A primal chain
therefore sees the same proposals whether or not an alternative is tracked.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import RandomStream


def states_equal(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return bool(np.array_equal(a, b))
    return a == b


class Proposal:
    symmetric = True

    def draw(self, stream: RandomStream):
        raise NotImplementedError

    def apply(self, x, noise):
        raise NotImplementedError

    def sample(self, x, stream: RandomStream):
        return self.apply(x, self.draw(stream))

    def log_density(self, x_prime, x) -> float:
        """``log q(x' | x)``; only ratios are used."""
        raise NotImplementedError

    def log_correction(self, x, x_prime) -> float:
        """``log q(x | x') - log q(x' | x)``."""
        if self.symmetric:
            return 0.0
        return self.log_density(x, x_prime) - self.log_density(x_prime, x)


class GaussianRandomWalk(Proposal):
    def __init__(self, sigma: float = 1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)

    def draw(self, stream):
        return stream.normal()

    def apply(self, x, noise):
        return float(x) + self.sigma * noise

    def log_density(self, x_prime, x):
        z = (x_prime - x) / self.sigma
        return -0.5 * z * z - math.log(self.sigma * math.sqrt(2 * math.pi))


class DiscreteProposal(Proposal):
    """Proposal on a finite state list given by a row-stochastic matrix."""

    def __init__(self, states: Sequence, matrix):
        self.states = list(states)
        self.matrix = np.asarray(matrix, dtype=float)
        n = len(self.states)
        if self.matrix.shape != (n, n):
            raise ValueError(f"proposal matrix must be {n}x{n}")
        if np.any(self.matrix < 0) or np.any(np.abs(self.matrix.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("proposal matrix must be row-stochastic")
        self._index = {s: i for i, s in enumerate(self.states)}
        self.symmetric = bool(np.allclose(self.matrix, self.matrix.T, rtol=0, atol=0))

    def probs(self, x) -> np.ndarray:
        return self.matrix[self._index[x]]

    def draw(self, stream):
        return stream.uniform()

    def apply(self, x, noise):
        row = self.probs(x)
        acc = 0.0
        last = 0
        for i, p in enumerate(row):
            if p <= 0.0:
                continue
            acc += p
            last = i
            if noise < acc:
                return self.states[i]
        return self.states[last]

    def log_density(self, x_prime, x):
        p = self.matrix[self._index[x], self._index[x_prime]]
        return math.log(p) if p > 0 else -math.inf


def uniform_proposal(states: Sequence) -> DiscreteProposal:
    """State-independent uniform proposal."""
    n = len(states)
    return DiscreteProposal(states, np.full((n, n), 1.0 / n))


def swap_proposal() -> DiscreteProposal:
    """Deterministic swap on the two states ``{1, 2}``."""
    return DiscreteProposal([1, 2], [[0.0, 1.0], [1.0, 0.0]])


class IsingHeatBathProposal(Proposal):
    """Pick a site uniformly and propose setting it to +1 or -1 with equal probability.

    The noise is the move ``((j, k), spin)``; two uniforms per draw.
    """

    def __init__(self, L: int):
        self.L = int(L)

    def draw(self, stream):
        n = self.L * self.L
        idx = stream.choice(n)
        spin = 1 if stream.uniform() < 0.5 else -1
        return (idx // self.L, idx % self.L), spin

    def apply(self, x, noise):
        (j, k), spin = noise
        if x[j, k] == spin:
            return x
        out = x.copy()
        out[j, k] = spin
        return out

    def log_density(self, x_prime, x):
        # symmetric: every single-site change has probability 1 / (2 L^2)
        return -math.log(2 * self.L * self.L)


# --- coupled proposals -------------------------------------------------------

class CoupledProposal:
    """Joint proposal ``(x', y')`` with the right marginals and ``x == y => x' == y'``."""

    def __init__(self, proposal: Proposal):
        self.proposal = proposal

    def sample_pair(self, x, y, stream: RandomStream, aux: RandomStream | None = None):
        raise NotImplementedError


def crn_couple(p: Proposal, x, y, stream: RandomStream):
    noise = p.draw(stream)
    return p.apply(x, noise), p.apply(y, noise)


class CRNCoupling(CoupledProposal):
    def sample_pair(self, x, y, stream, aux=None):
        return crn_couple(self.proposal, x, y, stream)


def reflection_maximal_gaussian(x: float, y: float, sigma: float, stream: RandomStream,
                                aux: RandomStream | None = None):
    """Maximal reflection coupling of ``N(x, sigma^2)`` and ``N(y, sigma^2)``.

    Meets with probability ``2 Phi(-|x - y| / (2 sigma))``; otherwise ``y'`` is
    the reflection ``x + y - x'``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    aux = stream if aux is None else aux
    xi = stream.normal()
    u = aux.uniform()
    xp = x + sigma * xi
    if x == y:
        return xp, xp
    zx = xi
    zy = (xp - y) / sigma
    # phi(zy)/phi(zx) in log form
    log_ratio = 0.5 * (zx * zx - zy * zy)
    if log_ratio >= 0.0 or u < math.exp(log_ratio):
        return xp, xp
    return xp, x + y - xp


class ReflectionMaximalCoupling(CoupledProposal):
    def __init__(self, proposal: GaussianRandomWalk):
        super().__init__(proposal)

    def sample_pair(self, x, y, stream, aux=None):
        return reflection_maximal_gaussian(x, y, self.proposal.sigma, stream, aux)


def _check_normalized(p: np.ndarray, name: str):
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"{name} is not a normalized distribution (sum={p.sum()!r})")


def maximal_independent_couple(p_x, p_y, stream: RandomStream, aux: RandomStream | None = None):
    """Maximal coupling of two distributions over ``range(len(p_x))``; returns indices.

    ``x'`` is drawn from ``p_x``; it is kept for ``y'`` with probability
    ``min(1, p_y(x')/p_x(x'))``, otherwise ``y'`` comes from the normalized
    residual ``max(0, p_y - p_x)``.
    """
    p_x = np.asarray(p_x, dtype=float)
    p_y = np.asarray(p_y, dtype=float)
    if p_x.shape != p_y.shape:
        raise ValueError("distributions must share a support")
    _check_normalized(p_x, "p_x")
    _check_normalized(p_y, "p_y")
    aux = stream if aux is None else aux
    i = stream.categorical(p_x)
    u = aux.uniform()
    if u * p_x[i] < p_y[i]:
        return i, i
    resid = np.maximum(0.0, p_y - p_x)
    resid /= resid.sum()
    return i, aux.categorical(resid)


class MaximalIndependentCoupling(CoupledProposal):
    def __init__(self, proposal: DiscreteProposal):
        super().__init__(proposal)

    def sample_pair(self, x, y, stream, aux=None):
        p = self.proposal
        i, j = maximal_independent_couple(p.probs(x), p.probs(y), stream, aux)
        return p.states[i], p.states[j]


def ising_heatbath_coupled_proposal(x: np.ndarray, y: np.ndarray, stream: RandomStream):
    """Draw one heat-bath move and return it for both chains."""
    if x.shape != y.shape:
        raise ValueError("lattices must have the same shape")
    move = IsingHeatBathProposal(x.shape[0]).draw(stream)
    return move, move


class IsingHeatBathCoupling(CoupledProposal):
    """Same site and spin for both chains; with a shared accept uniform this is monotone."""

    def __init__(self, proposal: IsingHeatBathProposal):
        super().__init__(proposal)

    def sample_pair(self, x, y, stream, aux=None):
        mx, my = ising_heatbath_coupled_proposal(x, y, stream)
        return self.proposal.apply(x, mx), self.proposal.apply(y, my)


class IndependentCoupling(CoupledProposal):
    """Independent proposals for distinct states, identical ones for equal states.

    The uncoupled baseline. ``aux`` is consumed on every call.
    """

    def sample_pair(self, x, y, stream, aux=None):
        aux = stream if aux is None else aux
        p = self.proposal
        xp = p.apply(x, p.draw(stream))
        yp = p.apply(y, p.draw(aux))
        if states_equal(x, y):
            return xp, xp
        return xp, yp
