"""Scalar objectives built from estimated expectations, and a small gradient-ascent driver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import RandomStream
from .couplings import MaximalIndependentCoupling, uniform_proposal
from .ising import ising_dmh
from .samplers import dmh_run, mean_and_se, replicate, score_run
from .targets import MixtureTarget


@dataclass
class ProbVector:
    p: np.ndarray
    dp: np.ndarray
    p_se: np.ndarray | None = None
    dp_se: np.ndarray | None = None

    def check(self, tol: float = 0.02):
        if np.any(self.p < -tol):
            raise ValueError(f"negative probability in {self.p}")
        if abs(self.p.sum() - 1.0) > tol or abs(self.dp.sum()) > tol:
            raise ValueError(f"probability vector off the simplex: sum p={self.p.sum()}, sum dp={self.dp.sum()}")
        return self


@dataclass
class MomentPair:
    m1: float
    m2: float
    dm1: float
    dm2: float
    T: float


@dataclass
class OptimizerConfig:
    algorithm: str = "adam"
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    iterations: int = 200
    chain_length: int = 1000
    seed: int = 0
    lr_decay: float = 0.0
    clip: float | None = None
    bounds: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip must be positive")


def entropy_and_gradient(pv: ProbVector, tol: float = 0.02) -> tuple[float, float]:
    """Entropy ``-sum p ln p`` and its derivative ``-sum (1 + ln p) dp``; zero components are skipped."""
    p = np.asarray(pv.p, dtype=float)
    dp = np.asarray(pv.dp, dtype=float)
    if np.any(p < -tol):
        raise ValueError(f"negative probability in {p}")
    nz = p > 0
    lp = np.log(p[nz])
    return float(-np.sum(p[nz] * lp)), float(-np.sum((1.0 + lp) * dp[nz]))


def heat_capacity_and_gradient(mp: MomentPair) -> tuple[float, float]:
    """``C = (m2 - m1^2)/T^2`` and its total T-derivative (``k_B = 1``)."""
    T = mp.T
    if T <= 0:
        raise ValueError("temperature must be positive")
    var = mp.m2 - mp.m1 * mp.m1
    C = var / T ** 2
    dC = (mp.dm2 - 2.0 * mp.m1 * mp.dm1) / T ** 2 - 2.0 * var / T ** 3
    return C, dC


# --- mixture ---------------------------------------------------------------

def _indicators(n: int):
    return [lambda j, k=k: 1.0 if j == k else 0.0 for k in range(1, n + 1)]


class MixtureRun:
    """Picklable replication body for the mixture chain."""

    def __init__(self, h: float, T: int, method: str = "dmh", x1: int = 1):
        self.h, self.T, self.method, self.x1 = h, T, method, x1

    def __call__(self, stream: RandomStream):
        target = MixtureTarget(self.h)
        prop = uniform_proposal(target.states)
        fs = _indicators(len(target.states))
        if self.method == "dmh":
            r = dmh_run(target, prop, MaximalIndependentCoupling(prop), fs, self.x1, self.T, stream)
        elif self.method == "score":
            r = score_run(target, prop, fs, self.x1, self.T, stream)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        return r.primal_avg, r.deriv_est


def mixture_replications(h: float, T: int, reps: int, seed: int, method: str = "dmh",
                         workers: int = 1, key=()) -> tuple[np.ndarray, np.ndarray]:
    """Per-replication ``(p, dp)`` arrays, each of shape ``(reps, 3)``."""
    out = replicate(MixtureRun(h, T, method), reps, seed, key, workers)
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])


def estimate_mixture_posterior(h: float, T: int, reps: int, seed: int, workers: int = 1,
                               key=()) -> ProbVector:
    """Posterior of the mixture component and its h-derivative, averaged over replications."""
    if T < 1 or reps < 1:
        raise ValueError("T and reps must be >= 1")
    P, DP = mixture_replications(h, T, reps, seed, "dmh", workers, key)
    p, p_se = mean_and_se(P)
    dp, dp_se = mean_and_se(DP)
    return ProbVector(p, dp, p_se, dp_se)


def mixture_entropy_objective(T: int, reps: int = 1, workers: int = 1):
    """``(h, stream) -> (entropy, d entropy / dh)`` from differentiable MH."""

    def objective(h: float, stream: RandomStream):
        pv = estimate_mixture_posterior(h, T, reps, stream.seed, workers, key=stream.key)
        return entropy_and_gradient(pv)

    return objective


# --- Ising -----------------------------------------------------------------

class IsingRun:
    """Picklable replication body: per-chain plug-in ``(C, dC/dT, E[H])``."""

    def __init__(self, L: int, theta: float, T: float, n_sweeps: int, coupled: bool = True,
                 discard_sweeps: int = 0):
        self.L, self.theta, self.T, self.n_sweeps = L, theta, T, n_sweeps
        self.coupled, self.discard_sweeps = coupled, discard_sweeps

    def __call__(self, stream: RandomStream):
        r = ising_dmh(self.L, self.theta, self.T, self.n_sweeps, stream, self.coupled,
                      self.discard_sweeps)
        m1, m2 = r.primal_avg
        dm1, dm2 = r.deriv_est
        C, dC = heat_capacity_and_gradient(MomentPair(m1, m2, dm1, dm2, self.T))
        return C, dC, m1


def ising_heat_capacity(L: int, theta: float, T: float, n_sweeps: int, reps: int, seed: int,
                        coupled: bool = True, discard_sweeps: int = 0, workers: int = 1,
                        key=()) -> dict[str, float]:
    """Replication means and standard errors of ``C``, ``dC/dT`` and the mean energy at one T."""
    out = np.array(replicate(IsingRun(L, theta, T, n_sweeps, coupled, discard_sweeps), reps, seed,
                             key, workers))
    m, se = mean_and_se(out)
    return {"C": m[0], "dC": m[1], "energy": m[2], "C_se": se[0], "dC_se": se[1], "energy_se": se[2],
            "dC_var": float(np.var(out[:, 1], ddof=1)) if reps > 1 else math.nan}


def ising_heat_capacity_objective(L: int, theta: float, n_sweeps: int, reps: int = 1,
                                  coupled: bool = True, discard_sweeps: int = 0, workers: int = 1):
    """``(T, stream) -> (C, dC/dT)`` from differentiable MH."""

    def objective(T: float, stream: RandomStream):
        r = ising_heat_capacity(L, theta, T, n_sweeps, reps, stream.seed, coupled, discard_sweeps,
                                workers, key=stream.key)
        return r["C"], r["dC"]

    return objective


# --- optimizer ---------------------------------------------------------------

def gradient_ascent(objective: Callable[[float, RandomStream], tuple[float, float]],
                    config: OptimizerConfig, theta0: float) -> list[tuple[int, float, float, float]]:
    """Maximize a stochastic objective; returns rows ``(iteration, theta, value, grad)``.

    Row ``i`` holds the objective evaluated at the i-th iterate, evaluated with
    substream ``i`` of ``config.seed``. The last row is the final iterate, so
    a run of ``iterations`` updates produces ``iterations + 1`` rows. A
    non-finite gradient stops the run and returns the trace so far. With
    ``config.clip`` set, the update uses the gradient clipped to
    ``[-clip, clip]``; the trace keeps the raw estimate.
    """
    root = RandomStream(config.seed)
    lo, hi = config.bounds
    theta = float(theta0)
    m = v = 0.0
    trace = []
    for it in range(config.iterations + 1):
        value, grad = objective(theta, root.spawn(it))
        trace.append((it, theta, float(value), float(grad)))
        if not math.isfinite(grad) or it == config.iterations:
            break
        if config.clip is not None:
            grad = min(max(grad, -config.clip), config.clip)
        lr = config.learning_rate / (1.0 + config.lr_decay * it)
        if config.algorithm == "sgd":
            step = lr * grad
        else:
            k = it + 1
            m = config.beta1 * m + (1 - config.beta1) * grad
            v = config.beta2 * v + (1 - config.beta2) * grad * grad
            mhat = m / (1 - config.beta1 ** k)
            vhat = v / (1 - config.beta2 ** k)
            step = lr * mhat / (math.sqrt(vhat) + config.epsilon)
        theta = float(min(max(theta + step, lo), hi))
    return trace
