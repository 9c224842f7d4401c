"""Compiled single-site heat-bath chains for the Ising model.

``ising_dmh`` is the same algorithm as ``samplers.dmh_run`` with
``IsingTarget``, ``IsingHeatBathProposal`` and either ``IsingHeatBathCoupling``
(``coupled=True``) or ``IndependentCoupling`` (``coupled=False``), recording
``f = (H, H^2)`` once per sweep. It consumes its substreams in the same order,
so for equal seeds the two produce the same numbers; the compiled loop exists
because L = 12 runs need tens of millions of steps.

Energies are tracked incrementally and the number of sites where primal and
alternative differ is kept as a counter, so every step is O(1) except when a
new branch is copied off the primal.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .core import ChainStreams, RandomStream
from .samplers import BranchRecord, EstimateReport
from .targets import K_B, ising_hamiltonian

_CHUNK = 1 << 16
_STATUS = {1: "recoupled", 2: "replaced", 3: "end"}

# layout of the scalar state vector carried between chunks
_HX, _HY, _W, _NDIFF, _NACC, _LIVE, _NREC = range(7)


@numba.njit(cache=True)
def _delta_h(s, L, j, k, spin, theta):
    old = s[j, k]
    if old == spin:
        return 0.0
    nbr = s[(j + 1) % L, k] + s[(j - 1) % L, k] + s[j, (k + 1) % L] + s[j, (k - 1) % L]
    return -theta * float((spin - old) * nbr)


@numba.njit(cache=True)
def _alpha(dH, T):
    # acceptance probability and its T-derivative; derivative 0 at and above the kink
    d = -dH / (1.0 * T)
    if d < 0.0:
        a = math.exp(d)
        return a, a * (dH / (1.0 * T * T))
    return 1.0, 0.0


@numba.njit(cache=True)
def _dmh_chunk(x, y, st, L, theta, T, coupled, t0, n, prop_u, alt_u, acc_u, prune_u,
               record_every, discard, sums, trace, ntrace):
    nsite = L * L
    for i in range(n):
        t = t0 + i + 1
        idx = min(int(prop_u[2 * i] * nsite), nsite - 1)
        jx = idx // L
        kx = idx % L
        sx = 1 if prop_u[2 * i + 1] < 0.5 else -1
        ndiff = st[_NDIFF]
        if coupled or ndiff == 0.0:
            jy, ky, sy = jx, kx, sx
        else:
            idy = min(int(alt_u[2 * i] * nsite), nsite - 1)
            jy = idy // L
            ky = idy % L
            sy = 1 if alt_u[2 * i + 1] < 0.5 else -1
        u = acc_u[i]

        dHx = _delta_h(x, L, jx, kx, sx, theta)
        ax, dax = _alpha(dHx, T)
        bx = u <= ax
        old_x = x[jx, kx]

        # diff bookkeeping over the (at most two) touched sites
        before = 0
        if x[jx, kx] != y[jx, kx]:
            before += 1
        if (jy != jx or ky != kx) and x[jy, ky] != y[jy, ky]:
            before += 1

        if ndiff == 0.0:
            if bx:
                x[jx, kx] = sx
                y[jx, kx] = sx
                st[_HX] += dHx
                st[_HY] = st[_HX]
        else:
            dHy = _delta_h(y, L, jy, ky, sy, theta)
            ay, day = _alpha(dHy, T)
            if bx:
                x[jx, kx] = sx
                st[_HX] += dHx
            if u <= ay:
                y[jy, ky] = sy
                st[_HY] += dHy
            after = 0
            if x[jx, kx] != y[jx, kx]:
                after += 1
            if (jy != jx or ky != kx) and x[jy, ky] != y[jy, ky]:
                after += 1
            st[_NDIFF] = ndiff - before + after
        if bx:
            st[_NACC] += 1.0

        # flip weight of the primal decision
        if bx:
            if ax <= 0.0:
                raise RuntimeError("accepted a proposal with zero acceptance probability")
            w = max(0.0, -dax) / ax
        else:
            if ax >= 1.0:
                raise RuntimeError("rejected a proposal with acceptance probability 1")
            w = max(0.0, dax) / (1.0 - ax)

        w_prev = st[_W]
        if st[_NDIFF] == 0.0:
            if st[_LIVE] >= 0.0:
                if ntrace[0] < trace.shape[0]:
                    trace[ntrace[0], 0] = int(st[_LIVE])
                    trace[ntrace[0], 1] = t
                    trace[ntrace[0], 2] = 1
                    ntrace[0] += 1
                st[_LIVE] = -1.0
            w_prev = 0.0
        w_comb = w_prev + w
        take_new = w_comb > 0.0 and prune_u[i] * w_comb < w
        if take_new:
            if st[_LIVE] >= 0.0 and ntrace[0] < trace.shape[0]:
                trace[ntrace[0], 0] = int(st[_LIVE])
                trace[ntrace[0], 1] = t
                trace[ntrace[0], 2] = 2
                ntrace[0] += 1
            st[_LIVE] = t
            y[:, :] = x
            if bx:
                # alternative rejected: back to the previous spin
                y[jx, kx] = old_x
                st[_HY] = st[_HX] - dHx
            else:
                # alternative accepted the proposal
                y[jx, kx] = sx
                st[_HY] = st[_HX] + dHx
            st[_NDIFF] = 1.0
        if w_comb == 0.0 and st[_NDIFF] != 0.0:
            y[:, :] = x
            st[_HY] = st[_HX]
            st[_NDIFF] = 0.0
        st[_W] = w_comb

        if t > discard and (t - 1) % record_every == 0:
            hx = st[_HX]
            sums[0] += hx
            sums[1] += hx * hx
            st[_NREC] += 1.0
            if st[_NDIFF] != 0.0:
                hy = st[_HY]
                sums[2] += w_comb * (hy - hx)
                sums[3] += w_comb * (hy * hy - hx * hx)


def ising_dmh(L: int, theta: float, T: float, n_sweeps: int, stream: RandomStream,
              coupled: bool = True, discard_sweeps: int = 0, start: np.ndarray | None = None,
              trace: bool = False) -> EstimateReport:
    """Differentiable heat-bath chain; moments ``(E[H], E[H^2])`` and their T-derivatives.

    Runs ``n_sweeps * L^2`` steps from ``start`` (all spins up by default) and
    records ``H`` after every sweep, skipping the first ``discard_sweeps``
    records.
    """
    if T <= 0:
        raise ValueError("temperature must be positive")
    if n_sweeps < 1 or discard_sweeps < 0 or discard_sweeps > n_sweeps:
        raise ValueError("need n_sweeps >= 1 and 0 <= discard_sweeps <= n_sweeps")
    nsite = L * L
    x = np.ones((L, L), dtype=np.int64) if start is None else np.array(start, dtype=np.int64)
    if x.shape != (L, L) or not np.all(np.abs(x) == 1):
        raise ValueError("start must be an L x L array of +-1")
    y = x.copy()
    H0 = ising_hamiltonian(x, theta)
    st = np.array([H0, H0, 0.0, 0.0, 0.0, -1.0, 0.0])
    sums = np.zeros(4)
    record_every = nsite
    discard = discard_sweeps * nsite
    if discard == 0:
        sums[0] += H0
        sums[1] += H0 * H0
        st[_NREC] = 1.0
    total = n_sweeps * nsite + 1
    streams = ChainStreams(stream)
    records: list[BranchRecord] = []
    t0 = 1
    dummy = np.zeros(0)
    while t0 < total:
        n = min(_CHUNK, total - t0)
        prop_u = streams.proposal.uniforms(2 * n)
        alt_u = dummy if coupled else streams.coupling.uniforms(2 * n)
        acc_u = streams.accept.uniforms(n)
        prune_u = streams.prune.uniforms(n)
        tbuf = np.zeros((n + 1 if trace else 0, 3), dtype=np.int64)
        ntrace = np.zeros(1, dtype=np.int64)
        _dmh_chunk(x, y, st, L, float(theta), float(T) * K_B, coupled, t0, n, prop_u, alt_u, acc_u,
                   prune_u, record_every, discard, sums, tbuf, ntrace)
        records.extend(BranchRecord(int(a), int(b), _STATUS[int(c)]) for a, b, c in tbuf[:ntrace[0]])
        t0 += n
    if trace and st[_LIVE] >= 0:
        records.append(BranchRecord(int(st[_LIVE]), total, "end"))
    nrec = st[_NREC]
    return EstimateReport(
        primal_avg=sums[:2] / nrec,
        deriv_est=sums[2:] / nrec,
        acceptance_rate=st[_NACC] / (total - 1),
        steps=total,
        recoupling_times=[r.duration for r in records if r.status == "recoupled"],
        trace=records if trace else None,
    )
