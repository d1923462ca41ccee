import math

import numpy as np
import pytest
from scipy import stats

from simlab.diffusion import (
    WindowExhausted,
    besq0_from,
    besq2_log_path,
    environment_window,
    grid_walk_local_time,
    hitting_time,
    local_time_field,
    natural_scale,
    quenched_mean_hitting_time,
    ray_knight_local_time,
    scale_function,
    simulate_diffusion,
    sup_before,
)
from simlab.levy_env import DriftedBrownian, LevyPath


def flat_env(left, right, step=0.01):
    n_left, n_right = int(round(left / step)), int(round(right / step))
    grid = np.arange(-n_left, n_right + 1) * step
    return LevyPath(grid, np.zeros(grid.size), np.zeros(grid.size - 1, dtype=bool))


def shifted(env, x0):
    """The same environment seen from the grid node nearest x0 (V is defined up to a constant)."""
    k = env.index_of(x0)
    return LevyPath(env.grid - env.grid[k], env.values - env.values[k], env.jump_flags)


def test_scale_function_closed_forms():
    assert scale_function(flat_env(1, 3), 2.0) == pytest.approx(2.0)
    env = flat_env(0, 1)
    env.values[:] = -math.log(2)
    assert scale_function(env, 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        scale_function(env, 1.5)


def test_scale_function_increasing():
    env = environment_window(DriftedBrownian(0.5), 20, 0.01, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for _ in range(100):
        x, y = np.sort(rng.uniform(env.grid[0], env.grid[-1], 2))
        assert scale_function(env, x) < scale_function(env, y)


def test_natural_scale_keeps_precision_far_right():
    # A is about -1e7 at the left end and exp(V) about 1e-9 on the right: the right increments
    # must not be lost against the size of the left part
    v = np.concatenate((np.linspace(20, 0, 6001)[:-1], -np.linspace(0, 20, 2001)))
    a = natural_scale(v, 0.01, 6000)
    assert a[6000] == 0
    assert a[0] < -1e6
    assert np.all(np.diff(a[-100:]) > 0)


def test_flat_environment_gives_brownian_motion():
    env = flat_env(10, 10)
    rng = np.random.default_rng(2)
    ends = np.array([simulate_diffusion(env, 1.0, 1e-3, rng, record_every=1000).positions[-1] for _ in range(2000)])
    assert abs(ends.mean()) < 3 * math.sqrt(1 / 2000)
    assert ends.var() == pytest.approx(1.0, abs=3 * math.sqrt(2 / 2000))


def test_flat_environment_hitting_time_reflection_principle():
    env = flat_env(10, 2)
    rng = np.random.default_rng(3)
    n = 1500
    hit = 0
    for _ in range(n):
        tr = simulate_diffusion(env, 1.0, 1e-3, rng, stop_levels=[1.0], record_every=1000)
        hit += bool(np.isfinite(tr.hit_times[0]))
    p = 2 * stats.norm.sf(1.0)
    # grid crossing detection misses a few bridge excursions: allow the O(sqrt(dt)) bias on top of MC error
    assert abs(hit / n - p) < 3 * math.sqrt(p * (1 - p) / n) + 0.02


def test_window_exhausted():
    with pytest.raises(WindowExhausted):
        simulate_diffusion(flat_env(0.5, 0.5), 10.0, 1e-3, np.random.default_rng(0))


def test_trace_invariants_and_occupation_identity():
    env = environment_window(DriftedBrownian(2.0), 30, 0.01, np.random.default_rng(4))
    times = [5.0, 10.0, 20.0, 40.0]
    tr = simulate_diffusion(env, 40.0, 1e-3, np.random.default_rng(5), record_times=times, stop_levels=[29.0])
    assert tr.positions[0] == 0
    assert np.all(tr.local_time >= 0)
    assert np.all(np.diff(tr.local_time, axis=0) >= 0)
    ratio = tr.occupation_ratio()
    assert np.all((ratio > 0.98) & (ratio < 1.02))
    star = tr.local_time.max(axis=1)
    assert np.all(np.diff(star) >= 0)
    plus = tr.local_time[:, tr.lt_grid >= 0].max(axis=1)
    assert np.all(plus <= star)
    assert np.array_equal(local_time_field(tr, 10.0), tr.local_time[1])


def test_local_time_two_estimators_agree():
    # kernel on X versus the kernel on the Brownian motion in natural scale; the boxes only match
    # up to the roughness of V inside one box, so use the narrowest allowed width 2 dx
    for seed in range(4):
        env = environment_window(DriftedBrownian(2.0), 12, 0.01, np.random.default_rng(6 + seed))
        tr = simulate_diffusion(env, 200.0, 1e-3, np.random.default_rng(7), stop_levels=[10.0],
                                lt_window=(-2.0, 10.0), kernel_width=0.02)
        lx = tr.hit_local_time[0]
        lb = tr.hit_scale_local_time[0]
        assert abs(lx.max() - lb.max()) / lx.max() < 0.1


def test_hitting_time_edge_cases():
    env = flat_env(10, 10)
    tr = simulate_diffusion(env, 1.0, 1e-3, np.random.default_rng(8))
    assert hitting_time(tr, 0.0) == 0.0
    assert math.isnan(hitting_time(tr, tr.positions.max() + 1))
    assert sup_before(tr, 1.0) == tr.positions.max()


def test_exit_side_matches_scale_function():
    # walkers killed at -10 or stopped at 20: the fraction leaving on the left is A(20) / (A(20) - A(-10))
    m = DriftedBrownian(0.5)
    rng = np.random.default_rng(9)
    left, exact = 0, []
    n = 400
    for _ in range(n):
        env = environment_window(m, 20, 0.02, rng)
        i0 = env.index_of(-10.0)
        if i0 > 0:
            env = LevyPath(env.grid[i0:], env.values[i0:], env.jump_flags[i0:])
        a = natural_scale(env.values, env.step, env.index_of(0.0))
        exact.append(a[-1] / (a[-1] - a[0]))
        try:
            simulate_diffusion(env, 1e6, 0.01, rng, stop_levels=[19.98], record_every=0)
        except WindowExhausted as err:
            assert "on the left" in str(err)
            left += 1
    p = float(np.mean(exact))
    assert abs(left / n - p) < 3 * math.sqrt(p * (1 - p) / n) + 0.01


@pytest.mark.xfail(strict=True, reason="about 7% of walkers sit in deep valleys left of 0 at t = 1e4; "
                   "see test_exit_side_matches_scale_function for the exact check")
def test_transient_to_the_right():
    m = DriftedBrownian(0.5)
    rng = np.random.default_rng(9)
    right = 0
    n = 100
    for _ in range(n):
        env = environment_window(m, 60, 0.02, rng)
        tr = simulate_diffusion(env, 1e4, 0.01, rng, stop_levels=[58.0], record_every=100)
        right += tr.positions[-1] > 0
    assert right >= 0.99 * n


def test_markov_restart():
    env = environment_window(DriftedBrownian(1.0), 20, 0.01, np.random.default_rng(10))
    rng = np.random.default_rng(11)
    n = 400
    direct = [simulate_diffusion(env, 2.0, 1e-3, rng, record_every=1000).positions[-1] for _ in range(n)]
    restarted = []
    for _ in range(n):
        mid = simulate_diffusion(env, 1.0, 1e-3, rng, record_every=1000).positions[-1]
        x0 = env.grid[env.index_of(mid)]
        tail = simulate_diffusion(shifted(env, x0), 1.0, 1e-3, rng, record_every=1000).positions[-1]
        restarted.append(x0 + tail)
    assert stats.ks_2samp(direct, restarted).pvalue > 0.01


def test_mean_speed_kappa_two():
    # E H(r) / r -> m = 4 / (kappa - 1)
    m = DriftedBrownian(2.0)
    rng = np.random.default_rng(12)
    r = 200.0
    vals = [quenched_mean_hitting_time(environment_window(m, r, 0.02, rng), r) / r for _ in range(60)]
    assert np.mean(vals) == pytest.approx(4.0, rel=0.1)


def test_besq2_mean():
    rng = np.random.default_rng(13)
    clock = np.log(np.full(5, 1.0))
    z = np.exp(np.array([besq2_log_path(clock, rng) for _ in range(20000)]))
    for x in (1, 5):
        se = z[:, x].std() / math.sqrt(z.shape[0])
        assert abs(z[:, x].mean() - 2 * x) < 3 * se
    # BESQ(2) at time x is 2x times an Exp(1)
    assert stats.kstest(z[:, 5] / 10.0, "expon").pvalue > 0.01


def test_besq0_mean_and_absorption():
    rng = np.random.default_rng(14)
    ends = np.array([besq0_from(3.0, np.full(4, 0.5), rng)[-1] for _ in range(20000)])
    # BESQ(0) is a martingale absorbed at 0 with P(Z_t = 0) = exp(-z / 2t)
    assert ends.mean() == pytest.approx(3.0, abs=3 * ends.std() / math.sqrt(ends.size))
    assert np.mean(ends == 0) == pytest.approx(math.exp(-3.0 / 4.0), abs=0.01)


def test_ray_knight_matches_grid_walk():
    m = DriftedBrownian(2.0)
    rng = np.random.default_rng(15)
    rk, gw = [], []
    for _ in range(300):
        env = environment_window(m, 6, 0.01, rng)
        a = ray_knight_local_time(env, 5.0, rng)
        b = grid_walk_local_time(env, 5.0, rng)
        rk.append((a.local_time[a.grid >= 0].max(), a.hitting_time))
        gw.append((b.local_time[b.grid >= 0].max(), b.hitting_time))
    rk, gw = np.array(rk), np.array(gw)
    assert stats.ks_2samp(rk[:, 0], gw[:, 0]).pvalue > 0.01
    assert stats.ks_2samp(rk[:, 1], gw[:, 1]).pvalue > 0.01
