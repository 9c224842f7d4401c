import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from diffmh.core import DualValue, InvalidStateError, RandomStream, flip_weight, prune


def _random_expression(rng, depth=0):
    """Random composite expression as a function of a DualValue or float argument."""
    if depth > 3 or rng.random() < 0.25:
        c = rng.uniform(-2, 2)
        return (lambda t: t) if rng.random() < 0.6 else (lambda t, c=c: t * 0 + c)
    a = _random_expression(rng, depth + 1)
    b = _random_expression(rng, depth + 1)
    op = rng.integers(6)
    if op == 0:
        return lambda t: a(t) + b(t)
    if op == 1:
        return lambda t: a(t) * b(t)
    if op == 2:
        return lambda t: a(t) - b(t)
    if op == 3:
        return lambda t: _exp(0.3 * a(t))
    if op == 4:
        return lambda t: _log(1.5 + a(t) * a(t))
    return lambda t: _min1(a(t))


def _exp(v):
    return v.exp() if isinstance(v, DualValue) else math.exp(v)


def _log(v):
    return v.log() if isinstance(v, DualValue) else math.log(v)


def _min1(v):
    return v.min_const(1.0) if isinstance(v, DualValue) else min(v, 1.0)


def test_dual_chain_rule_matches_finite_differences():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 1000:
        fn = _random_expression(rng)
        theta = rng.uniform(-2, 2)
        eps = 1e-6 * max(1.0, abs(theta))
        try:
            d = fn(DualValue(theta, 1.0))
            d = DualValue._coerce(d)
            # skip points within eps of the min(., 1) kink
            if isinstance(fn(theta), float) and abs(fn(theta) - 1.0) < 1e-4:
                continue
            fd = (fn(theta + eps) - fn(theta - eps)) / (2 * eps)
        except (OverflowError, ValueError):
            continue
        assert d.value == pytest.approx(fn(theta), rel=1e-12, abs=1e-12)
        assert d.deriv == pytest.approx(fd, rel=1e-5, abs=1e-6)
        checked += 1


def test_dual_arithmetic_basics():
    x = DualValue(2.0, 1.0)
    assert (x * x).deriv == 4.0
    assert (1 / x).deriv == pytest.approx(-0.25)
    assert (3 - x).value == 1.0 and (3 - x).deriv == -1.0
    assert x.exp().deriv == pytest.approx(math.exp(2.0))
    assert DualValue(0.5, 3.0).min_const(1.0) == DualValue(0.5, 3.0)
    assert DualValue(1.5, 3.0).min_const(1.0) == DualValue(1.0, 0.0)
    with pytest.raises(ValueError):
        DualValue(0.0, 1.0).log()


# --- flip_weight --------------------------------------------------------------

def test_flip_weight_examples():
    assert flip_weight(DualValue(0.5, 0.2), True) == 0.0
    assert flip_weight(DualValue(0.5, -0.2), True) == pytest.approx(0.4)
    assert flip_weight(DualValue(0.5, 0.2), False) == pytest.approx(0.4)


def test_flip_weight_impossible_branches():
    with pytest.raises(InvalidStateError):
        flip_weight(DualValue(0.0, 0.1), True)
    with pytest.raises(InvalidStateError):
        flip_weight(DualValue(1.0, 0.0), False)


@given(a=st.floats(0.001, 0.999), da=st.floats(-10, 10), accepted=st.booleans())
def test_flip_weight_closed_forms(a, da, accepted):
    w = flip_weight(DualValue(a, da), accepted)
    expected = max(0.0, -da) / a if accepted else max(0.0, da) / (1 - a)
    assert w == expected
    assert w >= 0 and math.isfinite(w)


# --- prune -----------------------------------------------------------------------

def test_prune_fresh_branch_always_taken():
    s = RandomStream(1)
    for _ in range(1000):
        w, take = prune(0.0, 0.4, s)
        assert w == 0.4 and take


def test_prune_no_branch():
    s = RandomStream(1)
    assert prune(0.0, 0.0, s) == (0.0, False)


@pytest.mark.parametrize("w_prev,w_new", [(0.3, 0.1), (1.0, 2.0), (0.05, 0.95)])
def test_prune_selection_frequency(w_prev, w_new):
    s = RandomStream(42, (int(w_new * 100),))
    n = 100_000
    hits = 0
    for _ in range(n):
        w, take = prune(w_prev, w_new, s)
        hits += take
    assert w == pytest.approx(w_prev + w_new)
    p = w_new / (w_prev + w_new)
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) < 4 * sigma


def test_prune_rejects_negative_weights():
    with pytest.raises(ValueError):
        prune(-0.1, 0.2, RandomStream(0))


# --- RandomStream ----------------------------------------------------------------

def test_stream_determinism_and_buffer_independence():
    a = RandomStream(5, (1, 2))
    b = RandomStream(5, (1, 2))
    xs = [a.uniform() for _ in range(100)]
    ys = list(b.uniforms(37)) + [b.uniform() for _ in range(20)] + list(b.uniforms(43))
    assert xs == ys
    assert RandomStream(5).spawn(3).uniform() == RandomStream(5, (3,)).uniform()


def test_stream_normals_are_standard():
    s = RandomStream(11)
    z = np.array([s.normal() for _ in range(20_000)])
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_substreams_uncorrelated():
    root = RandomStream(2024)
    a = root.spawn(0).uniforms(10_000)
    b = root.spawn(1).uniforms(10_000)
    # 10x10 contingency table of paired draws
    table, _, _ = np.histogram2d(a, b, bins=10, range=[[0, 1], [0, 1]])
    assert stats.chi2_contingency(table).pvalue > 0.01
    assert stats.chisquare(np.histogram(a, bins=20, range=(0, 1))[0]).pvalue > 0.01


def test_choice_and_categorical():
    s = RandomStream(3)
    counts = np.bincount([s.choice(7) for _ in range(70_000)], minlength=7)
    assert stats.chisquare(counts).pvalue > 0.01
    p = np.array([0.2, 0.0, 0.5, 0.3])
    counts = np.bincount([s.categorical(p) for _ in range(50_000)], minlength=4)
    assert counts[1] == 0
    assert stats.chisquare(counts[[0, 2, 3]], 50_000 * p[[0, 2, 3]]).pvalue > 0.01


@settings(max_examples=25)
@given(seed=st.integers(0, 2**63 - 1), key=st.lists(st.integers(0, 1000), max_size=3))
def test_same_seed_same_sequence(seed, key):
    assert RandomStream(seed, key).uniforms(8).tolist() == RandomStream(seed, key).uniforms(8).tolist()
