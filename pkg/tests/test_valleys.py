import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from simlab.levy_env import DriftedBrownian, LevyPath, sample_path
from simlab.oracles import h_extrema_bruteforce, overshoot_index_bruteforce, sup_before_crossing_bruteforce
from simlab.valleys import (
    RenewalSequence,
    default_delta,
    first_valley_samples,
    iter_valleys,
    overshoot_index,
    scan_h_extrema,
    standard_valleys,
    sup_at_crossing,
    sup_before_crossing,
    tail_statistics,
    traverse_valleys,
    valley_spacing_check,
    valleys_match_extrema,
    y_processes,
)


def test_sawtooth():
    h = 3.0
    v = [0.0]
    for _ in range(4):
        v += [-h - 1, 1.0]
    v = np.array(v)
    scan = scan_h_extrema(v, h)
    assert list(scan.minima) == [1, 3, 5, 7]
    assert list(scan.maxima) == [2, 4, 6]


def test_monotone_path_has_no_minimum():
    scan = scan_h_extrema(-np.arange(100.0), 2.0)
    assert scan.minima.size == 0


def test_scan_matches_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = np.concatenate(([0.0], np.cumsum(rng.standard_normal(500))))
        h = rng.uniform(0.5, 6.0)
        scan = scan_h_extrema(v, h)
        mins, maxs = h_extrema_bruteforce(v, h)
        assert np.array_equal(scan.minima, mins)
        assert np.array_equal(scan.maxima, maxs)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=2, max_size=60), st.integers(1, 16), st.integers(-400, 400))
def test_scan_properties(steps, h, shift):
    # quarter-integer values keep the shift exact, so ties at the threshold h survive it
    v = np.concatenate(([0.0], np.cumsum(steps))) / 4
    h, shift = h / 4, shift / 4
    scan = scan_h_extrema(v, h)
    # alternation
    merged = sorted([(i, 0) for i in scan.minima] + [(i, 1) for i in scan.maxima])
    assert all(a[1] != b[1] for a, b in zip(merged, merged[1:]))
    # witness property of every minimum
    for x in scan.minima:
        left = v[:x + 1][::-1]
        right = v[x:]
        ul = np.flatnonzero(left >= v[x] + h)
        ur = np.flatnonzero(right >= v[x] + h)
        assert ul.size and ur.size
        assert left[: ul[0]].min() >= v[x] and right[: ur[0]].min() >= v[x]
    # invariance under adding a constant
    shifted = scan_h_extrema(v + shift, h)
    assert np.array_equal(shifted.minima, scan.minima) and np.array_equal(shifted.maxima, scan.maxima)


def test_scan_positions_are_translation_equivariant():
    rng = np.random.default_rng(1)
    v = np.concatenate(([0.0], np.cumsum(rng.standard_normal(400))))
    grid = np.arange(v.size) * 0.1
    a = scan_h_extrema(LevyPath(grid, v, np.zeros(v.size - 1, bool)), 3.0)
    b = scan_h_extrema(LevyPath(grid + 7.0, v, np.zeros(v.size - 1, bool)), 3.0)
    assert np.allclose(grid[a.minima] + 7.0, (grid + 7.0)[b.minima])


def test_default_delta_keeps_margin():
    for k in (0.1, 0.5, 0.9):
        assert (1 + 3 * default_delta(k)) * k < 1
    assert default_delta(2.0) == 0.1


def test_standard_valley_records():
    env = sample_path(DriftedBrownian(0.5), 4000, 0.01, np.random.default_rng(2))
    recs, truncated = standard_valleys(env, 4.0, kappa=0.5)
    assert truncated and len(recs) >= 3
    for r in recs:
        assert r.ordered()
        assert r.S > 0 and r.R > 0
        seg = env.values[env.index_of(r.L_sharp): env.index_of(r.tau_h) + 1]
        assert env.values[env.index_of(r.m)] == seg.min()
    with pytest.raises(ValueError):
        standard_valleys(env, 4.0)


@pytest.mark.xfail(strict=True, reason="at h = 10 the long descent into a valley often holds an extra "
                   "h-minimum before the bottom; about 37% of replicas match")
def test_valley_bottoms_are_the_h_minima():
    rng = np.random.default_rng(12)
    n = 200
    ok = 0
    for _ in range(n):
        env = sample_path(DriftedBrownian(0.5), 6000, 0.05, rng)
        recs, _ = standard_valleys(env, 10.0, kappa=0.5)
        ok += valleys_match_extrema(env, recs, 10.0)
    assert ok >= 0.95 * n


def test_streamed_valleys_are_ordered():
    rng = np.random.default_rng(3)
    it = iter_valleys(DriftedBrownian(0.5), 6.0, 0.01, rng)
    prev = 0.0
    for _ in range(20):
        rec, values, offset = next(it)
        assert rec.ordered()
        assert rec.L_prev == pytest.approx(prev, abs=1e-9)
        prev = rec.L


def test_y_processes_examples():
    seq = RenewalSequence(e=[1, 2], S=[1, 1], R=[1, 2], t=1.0, kappa_phi=1.0)
    assert y_processes(seq, 2) == (3.0, 5.0)
    assert y_processes(seq, 0) == (0.0, 0.0)
    with pytest.raises(IndexError):
        y_processes(seq, 3)


def test_y_processes_monotone():
    rng = np.random.default_rng(4)
    seq = RenewalSequence(rng.exponential(2, 50), rng.pareto(1, 50) + 1, rng.exponential(1, 50) + 0.1, 3.0, 10.0)
    ys = np.array([y_processes(seq, s) for s in np.linspace(0, 5, 40)])
    assert np.all(np.diff(ys, axis=0) >= 0)


def test_overshoot_examples():
    seq = RenewalSequence(e=[1, 1, 1], S=[0.3, 0.4, 0.5], R=[1, 1, 1])
    assert overshoot_index(seq, 1.0) == 3
    assert overshoot_index(seq, 0.0) == 1
    assert overshoot_index(seq, 5.0) is None


def test_sup_before_crossing_examples():
    t = 2.0
    seq = RenewalSequence(e=[1, 1, 1], S=[0.5, 2.0, 1.0], R=[1, 1, 1], t=t)
    assert overshoot_index(seq, 3.0 / t) == 3
    assert sup_before_crossing(seq, 3.0 / t) == 2.0 / t
    assert sup_before_crossing(seq, 0.1 / t) == 0.0
    assert sup_at_crossing(seq, 0.1 / t) == 0.5 / t


def test_functionals_match_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        seq = RenewalSequence(rng.exponential(2, n), rng.exponential(1, n), rng.exponential(1, n), t=rng.uniform(0.5, 2))
        b = rng.uniform(0, 1.5 * seq.products.sum() / seq.t)
        assert overshoot_index(seq, b) == overshoot_index_bruteforce(seq.products, b, seq.t)
        assert sup_before_crossing(seq, b) == pytest.approx(
            sup_before_crossing_bruteforce(seq.first, seq.products, b, seq.t))
        assert sup_at_crossing(seq, b) == pytest.approx(
            sup_before_crossing_bruteforce(seq.first, seq.products, b, seq.t, closed=True))
        assert sup_at_crossing(seq, b) >= sup_before_crossing(seq, b)


def test_synthetic_first_valleys_agree_with_scanned():
    m = DriftedBrownian(0.5)
    S1, R1 = first_valley_samples(m, 6.0, 400, np.random.default_rng(6), method="synthetic")
    S2, R2 = first_valley_samples(m, 6.0, 400, np.random.default_rng(7), method="scan")
    assert stats.ks_2samp(R1, R2).pvalue > 0.01
    assert stats.ks_2samp(S1, S2).pvalue > 0.01


def test_tail_table_shape():
    m = DriftedBrownian(0.5)
    S, R = first_valley_samples(m, 8.0, 3000, np.random.default_rng(8))
    tab = tail_statistics(S, R, 0.5, np.random.default_rng(9))
    assert np.all(np.diff(tab.x) > 0)
    assert np.all(tab.c_first > 0)
    assert tab.slope_first == pytest.approx(-0.5, abs=0.2)
    # exponential moment of R stays put as N grows
    assert np.exp(0.1 * R[:1500]).mean() == pytest.approx(np.exp(0.1 * R).mean(), rel=0.05)


def test_spacings_positive():
    rep = valley_spacing_check(DriftedBrownian(0.5), 4.0, 100, np.random.default_rng(10))
    assert rep.spacings.size == 100
    assert np.all(rep.spacings > 0)


def test_renewal_observations():
    _, obs = traverse_valleys(DriftedBrownian(0.5), 8.0, 150, np.random.default_rng(11))
    e = np.array([o.e for o in obs])
    assert np.all(e > 0)
    assert e.mean() == pytest.approx(2.0, abs=4 * e.std() / math.sqrt(e.size))
    for o in obs:
        assert o.time_increment == o.time_to_bottom + o.time_in_valley
