"""Metropolis-Hastings, its differentiable coupled-chain version, and the score baseline.

``dmh_run`` propagates an alternative chain ``y`` next to the primal chain ``x``.
Each accept/reject step could have gone the other way; ``flip_weight`` gives the
rate of that flip and ``prune`` decides whether the flipped branch replaces the
currently tracked alternative. The derivative estimate accumulates
``w * (f(y) - f(x))``. Once ``y`` recouples with ``x`` it is dropped, since a
sticky coupling with a shared accept uniform keeps them together forever.

Randomness per step is drawn in a fixed order from independent per-purpose
substreams (proposal, coupling, accept, prune), so ``mh_run`` and ``dmh_run``
with the same seed produce bitwise identical primal paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ChainStreams, InvalidStateError, RandomStream, flip_weight, prune
from .couplings import CoupledProposal, Proposal, states_equal
from .targets import TargetModel, acceptance


class CouplingError(RuntimeError):
    """A coupled proposal broke stickiness (``x == y`` but ``x' != y'``)."""


@dataclass
class ChainPair:
    x: object
    y: object
    w: float = 0.0
    coupled: bool = True


@dataclass
class BranchRecord:
    start: int
    end: int
    status: str  # "recoupled", "replaced" or "end"

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass
class EstimateReport:
    primal_avg: np.ndarray
    deriv_est: np.ndarray
    acceptance_rate: float
    steps: int
    recoupling_times: list[int] = field(default_factory=list)
    trace: list[BranchRecord] | None = None


def _as_tests(f) -> tuple[Callable, ...]:
    if callable(f):
        return (f,)
    return tuple(f)


def _eval(fs, x) -> np.ndarray:
    return np.array([fk(x) for fk in fs], dtype=float)


def _recorded(t: int, record_every: int, discard: int) -> bool:
    return t > discard and (t - 1) % record_every == 0


def _n_records(T: int, record_every: int, discard: int) -> int:
    return sum(1 for t in range(1, T + 1) if _recorded(t, record_every, discard))


def _check_args(T, record_every, discard):
    if T < 1:
        raise ValueError("T must be >= 1")
    if record_every < 1 or discard < 0:
        raise ValueError("record_every must be >= 1 and discard >= 0")
    if _n_records(T, record_every, discard) == 0:
        raise ValueError("no states are recorded with these settings")


def mh_run(target: TargetModel, proposal: Proposal, f, x1, T: int, stream: RandomStream,
           record_every: int = 1, discard: int = 0) -> EstimateReport:
    """Plain MH: ``T - 1`` accept/reject steps, returns the average of ``f`` over the path.

    The average runs over states ``t = 1..T`` (the start state included) that
    are past ``discard`` and on the ``record_every`` grid.
    """
    _check_args(T, record_every, discard)
    fs = _as_tests(f)
    st = ChainStreams(stream)
    x = x1
    S = np.zeros(len(fs))
    n_rec = 0
    if _recorded(1, record_every, discard):
        S += _eval(fs, x)
        n_rec += 1
    n_acc = 0
    for t in range(2, T + 1):
        xp = proposal.sample(x, st.proposal)
        u = st.accept.uniform()
        a = acceptance(target, proposal.log_correction(x, xp), x, xp)
        if u <= a.value:
            x = xp
            n_acc += 1
        if _recorded(t, record_every, discard):
            S += _eval(fs, x)
            n_rec += 1
    return EstimateReport(S / n_rec, np.zeros(len(fs)), n_acc / max(T - 1, 1), T)


def dmh_run(target: TargetModel, proposal: Proposal, coupled_proposal: CoupledProposal, f, x1,
            T: int, stream: RandomStream, record_every: int = 1, discard: int = 0,
            trace: bool = False) -> EstimateReport:
    """Differentiable MH: primal averages plus unbiased derivative estimates of them.

    ``deriv_est[k]`` estimates the theta-derivative of ``E[primal_avg[k]]`` for
    the finite chain of length ``T``. With ``trace=True`` the report carries
    one ``BranchRecord`` per alternative branch.
    """
    _check_args(T, record_every, discard)
    fs = _as_tests(f)
    st = ChainStreams(stream)
    pair = ChainPair(x1, x1)
    S = np.zeros(len(fs))
    dS = np.zeros(len(fs))
    n_rec = 0
    if _recorded(1, record_every, discard):
        S += _eval(fs, x1)
        n_rec += 1
    n_acc = 0
    records: list[BranchRecord] = []
    live_start: int | None = None

    for t in range(2, T + 1):
        x, y = pair.x, pair.y
        xp, yp = coupled_proposal.sample_pair(x, y, st.proposal, st.coupling)
        if pair.coupled and not states_equal(xp, yp):
            raise CouplingError(f"coupled proposal is not sticky at state {x!r}")
        u = st.accept.uniform()
        ax = acceptance(target, proposal.log_correction(x, xp), x, xp)
        bx = u <= ax.value
        x_next = xp if bx else x
        if pair.coupled:
            y_next = x_next
        else:
            ay = acceptance(target, proposal.log_correction(y, yp), y, yp)
            y_next = yp if u <= ay.value else y
        n_acc += bx

        w = flip_weight(ax, bx)
        w_prev = pair.w
        if states_equal(y_next, x_next):
            # recoupled alternatives never separate again: drop them
            if live_start is not None:
                records.append(BranchRecord(live_start, t, "recoupled"))
                live_start = None
            w_prev = 0.0
        w_comb, take_new = prune(w_prev, w, st.prune)
        if take_new:
            if live_start is not None:
                records.append(BranchRecord(live_start, t, "replaced"))
            live_start = t
            y_next = x if bx else xp
        if w_comb == 0.0:
            y_next = x_next
        coupled = states_equal(x_next, y_next)
        if coupled and live_start is not None:
            raise InvalidStateError("selected alternative coincides with the primal")
        pair = ChainPair(x_next, y_next, w_comb, coupled)

        if _recorded(t, record_every, discard):
            fx = _eval(fs, x_next)
            S += fx
            n_rec += 1
            if not coupled:
                dS += w_comb * (_eval(fs, y_next) - fx)
    if live_start is not None:
        records.append(BranchRecord(live_start, T, "end"))

    return EstimateReport(
        primal_avg=S / n_rec,
        deriv_est=dS / n_rec,
        acceptance_rate=n_acc / max(T - 1, 1),
        steps=T,
        recoupling_times=[r.duration for r in records if r.status == "recoupled"],
        trace=records if trace else None,
    )


def score_run(target: TargetModel, proposal: Proposal, f, x1, T: int, stream: RandomStream,
              literal: bool = False, record_every: int = 1, discard: int = 0) -> EstimateReport:
    """Score-function baseline: ``w`` accumulates the score of every realized transition.

    A rejection contributes ``d log(1 - alpha)``. With ``literal=True`` it
    contributes ``d log alpha(x_i | x_i) = 0`` instead, which is biased.
    """
    _check_args(T, record_every, discard)
    fs = _as_tests(f)
    st = ChainStreams(stream)
    x = x1
    S = np.zeros(len(fs))
    dS = np.zeros(len(fs))
    n_rec = 0
    if _recorded(1, record_every, discard):
        S += _eval(fs, x)
        n_rec += 1
    n_acc = 0
    w = 0.0
    for t in range(2, T + 1):
        xp = proposal.sample(x, st.proposal)
        u = st.accept.uniform()
        a = acceptance(target, proposal.log_correction(x, xp), x, xp)
        if u <= a.value:
            if a.value <= 0.0:
                raise InvalidStateError("accepted a proposal with zero acceptance probability")
            w += a.deriv / a.value
            x = xp
            n_acc += 1
        else:
            if a.value >= 1.0:
                raise InvalidStateError("rejected a proposal with acceptance probability 1")
            if not literal:
                w -= a.deriv / (1.0 - a.value)
        if _recorded(t, record_every, discard):
            fx = _eval(fs, x)
            S += fx
            dS += w * fx
            n_rec += 1
    return EstimateReport(S / n_rec, dS / n_rec, n_acc / max(T - 1, 1), T)


def recoupling_trace(report: EstimateReport) -> list[tuple[int, int]]:
    """``(branch_step, end_step)`` for every branch of a traced ``dmh_run``."""
    if report.trace is None:
        raise ValueError("run dmh_run with trace=True")
    return [(r.start, r.end) for r in report.trace]


def _run_chunk(fn, seed, key, indices):
    base = RandomStream(seed, key)
    return [fn(base.spawn(i)) for i in indices]


def replicate(fn: Callable[[RandomStream], object], reps: int, seed: int, key: Sequence[int] = (),
              workers: int = 1) -> list:
    """Run ``fn`` on ``reps`` independent substreams; results come back in replication order.

    ``fn`` must be picklable when ``workers > 1``.
    """
    if workers <= 1 or reps < 2:
        return _run_chunk(fn, seed, tuple(key), range(reps))
    chunks = [list(c) for c in np.array_split(np.arange(reps), min(workers, reps)) if len(c)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(_run_chunk, fn, seed, tuple(key), [int(i) for i in c]) for c in chunks]
        out = []
        for fut in futures:
            out.extend(fut.result())
    return out


def mean_and_se(values) -> tuple[np.ndarray, np.ndarray]:
    """Replication mean and its standard error (sample std / sqrt(n))."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    m = v.mean(axis=0)
    se = v.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full_like(m, np.inf)
    return m, se
