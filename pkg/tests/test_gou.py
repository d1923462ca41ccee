import math

import numpy as np
import pytest
from scipy import special, stats

from simlab import gou
from simlab.levy_env import DriftedBrownian, LevyPath, StableWithDrift, sample_path


def flat(r, step=0.01):
    grid = np.arange(int(round(r / step)) + 1) * step
    return LevyPath(grid, np.zeros(grid.size), np.zeros(grid.size - 1, dtype=bool))


def test_flat_environment_gives_besq2():
    rng = np.random.default_rng(0)
    env = flat(5.0)
    z = np.array([gou.simulate_Z(env, rng).z for _ in range(5000)])
    assert z[:, 0].max() == 0
    for x in (1.0, 5.0):
        col = z[:, env.index_of(x)]
        assert abs(col.mean() - 2 * x) < 3 * col.std() / math.sqrt(col.size)


def test_besq2_marginal_is_sum_of_two_squares():
    # BESQ(2) from 0 at clock time s is |B_s|^2 for a planar Brownian motion
    rng = np.random.default_rng(1)
    env = flat(3.0)
    z = np.array([gou.simulate_Z(env, rng).z for _ in range(3000)])
    for x in (0.5, 1.5, 3.0):
        ref = rng.normal(0, math.sqrt(x), (3000, 2))
        assert stats.ks_2samp(z[:, env.index_of(x)], (ref ** 2).sum(axis=1)).pvalue > 0.01


def test_Z_nonnegative():
    rng = np.random.default_rng(2)
    for m in (DriftedBrownian(2.0), StableWithDrift(1.5, 1.0, 2.0)):
        for _ in range(20):
            tr = gou.simulate_Z(sample_path(m, 5.0, 0.01, rng), rng)
            assert np.all(tr.z >= 0)
            assert tr.bridge_sup(m.gaussian_variance, rng) >= tr.sup


@pytest.mark.parametrize("kappa", [2.0, 3.0])
def test_estimate_K(kappa):
    est, se = gou.estimate_K(DriftedBrownian(kappa), 4000, np.random.default_rng(3))
    assert est == pytest.approx(2 ** (kappa - 1) / special.gamma(kappa), rel=0.1)
    assert se > 0


def test_heavy_regime_required():
    for k in (0.5, 1.0):
        with pytest.raises(ValueError):
            gou.estimate_K(DriftedBrownian(k), 10, np.random.default_rng(0))
        with pytest.raises(ValueError):
            gou.compute_m(DriftedBrownian(k))


def test_compute_m():
    assert gou.compute_m(DriftedBrownian(2.0)) == 4.0
    assert gou.compute_m(DriftedBrownian(3.0)) == 2.0
    assert gou.compute_m(StableWithDrift(2.0, 0.5, 1.0)) == pytest.approx(4.0)
    for m in (DriftedBrownian(1.7), StableWithDrift(1.5, 1.0, 2.0)):
        assert gou.compute_m(m) * float(m.psi(1.0)) == pytest.approx(-2.0, abs=1e-15)


def test_liminf_constant():
    m = DriftedBrownian(2.0)
    assert gou.liminf_constant_J(m, 2.0) == pytest.approx(2.8284, abs=1e-4)
    for k in (1.5, 2.5, 4.0):
        closed = 4 * (k * k * (k - 1) / 8) ** (1 / k)
        K = 2 ** (k - 1) / special.gamma(k)
        assert gou.liminf_constant_J(DriftedBrownian(k), K) == pytest.approx(closed)
    est, _ = gou.estimate_K(m, 4000, np.random.default_rng(4))
    assert gou.liminf_constant_J(m, est) == pytest.approx(2.8284, rel=0.1)


def test_plateau_constant():
    assert gou.tail_plateau_constant(DriftedBrownian(2.0), 2.0) == pytest.approx(32.0)
    assert gou.tail_plateau_constant(DriftedBrownian(1.5), 1.0) > 0


def test_excursion_tail_table_from_given_sups():
    rng = np.random.default_rng(5)
    # sups with P(sup > h) = r c / h^2 exactly on the tail
    c, r = 32.0, 2.0
    sups = np.sqrt(r * c / rng.uniform(size=200000))
    tab = gou.excursion_tail_constant(DriftedBrownian(2.0), r, [30, 40, 60], 0, rng, sups=sups)
    assert np.all(np.isfinite(tab.c_hat)) and np.all(tab.c_hat > 0)
    assert tab.c_linear == pytest.approx([c] * 3, rel=0.05)
    assert tab.flat


def test_liminf_statistic_positive():
    stat = gou.liminf_scaled_statistic(DriftedBrownian(2.0), [100.0, 400.0], 60, np.random.default_rng(6), step=0.05)
    assert np.all(stat.quantile > 0)
    assert np.all(np.diff(stat.levels) < 0)


@pytest.mark.parametrize("kappa", [1.5, 2.0, 3.0])
def test_integral_test_dichotomy(kappa):
    # f(t) = (log t)^(-2/kappa) converges, (log t)^(-1/kappa) and constants diverge
    assert gou.integral_test(lambda u: u ** (-2.0 / kappa), kappa) == "converges"
    assert gou.integral_test(lambda u: u ** (-1.0 / kappa), kappa) == "diverges"
    assert gou.integral_test(lambda u: 1.0, kappa) == "diverges"
    assert gou.integral_test(lambda u: 0.0, kappa) == "converges"
