import math

import numpy as np
import pytest
from scipy import stats

from simlab.conditioned import (
    DUAL_UP,
    UP,
    drifted_brownian_log_laplace,
    laplace_transform,
    left_tail_regression,
    liminf_upper_bound,
    sample_conditioned,
    sample_exp_functional_conditioned,
    sample_R,
)
from simlab.levy_env import DriftedBrownian, StableWithDrift


def test_conditioned_path_stays_positive_and_stops_at_level():
    m = DriftedBrownian(0.5)
    for seed in range(5):
        p = sample_conditioned(m, UP, 5.0, 0.01, np.random.default_rng(seed))
        assert np.all(p.values >= 0)
        assert p.values[-1] == pytest.approx(5.0, abs=0.5)


def test_dual_conditioned_stable_path_positive():
    m = StableWithDrift(1.5, 1.0, 1.0)
    p = sample_conditioned(m, DUAL_UP, 3.0, 0.01, np.random.default_rng(1))
    assert np.all(p.values >= 0)


def test_unknown_direction():
    with pytest.raises(ValueError):
        sample_conditioned(DriftedBrownian(0.5), "sideways", 3.0, 0.01, np.random.default_rng(0))


def test_riccati_oracle_gives_known_mean():
    # d/dlam of -log E exp(-lam I) at 0 is E I = 2 / (1 + kappa)
    for k in (0.3, 0.5, 0.8):
        eps = 1e-4
        assert drifted_brownian_log_laplace(k, eps) / eps == pytest.approx(2 / (1 + k), rel=1e-3)
    assert drifted_brownian_log_laplace(0.5, 0.0) == 0.0


def test_conditioned_mean_and_laplace_against_riccati():
    k = 0.5
    s = sample_exp_functional_conditioned(DriftedBrownian(k), UP, 20000, np.random.default_rng(2))
    assert np.all(s.values > 0)
    assert s.values.mean() == pytest.approx(2 / (1 + k), rel=0.05)
    lt, se = laplace_transform(s.values, 1.0)
    assert abs(-math.log(lt) - drifted_brownian_log_laplace(k, 1.0)) < 4 * se / lt


def test_up_and_dual_agree_for_brownian():
    m = DriftedBrownian(0.5)
    a = sample_exp_functional_conditioned(m, UP, 4000, np.random.default_rng(3)).values
    b = sample_exp_functional_conditioned(m, DUAL_UP, 4000, np.random.default_rng(4)).values
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_R_exceeds_each_piece():
    m = DriftedBrownian(0.5)
    rng = np.random.default_rng(5)
    up = sample_exp_functional_conditioned(m, UP, 500, rng).values
    dual = sample_exp_functional_conditioned(m, DUAL_UP, 500, rng).values
    r = up + dual
    assert np.all(r > np.maximum(up, dual))
    assert sample_R(m, 10, np.random.default_rng(0)).shape == (10,)


def test_second_moment_matches_laplace_curvature():
    x = sample_exp_functional_conditioned(DriftedBrownian(0.8), UP, 20000, np.random.default_rng(6)).values
    eps = 1e-3
    lp, _ = laplace_transform(x, eps)
    l0, _ = laplace_transform(x, 0.0)
    l2, _ = laplace_transform(x, 2 * eps)
    curvature = (l2 - 2 * lp + l0) / eps**2
    assert l0 == 1.0
    assert curvature == pytest.approx(np.mean(x**2), rel=0.01)


def test_exponential_moment_finite():
    x = sample_exp_functional_conditioned(DriftedBrownian(0.5), UP, 20000, np.random.default_rng(8)).values
    half = np.exp(0.1 * x[:10000]).mean()
    full = np.exp(0.1 * x).mean()
    assert math.isfinite(full) and full == pytest.approx(half, rel=0.02)


def test_left_tail_regression_on_known_law():
    # X = 1 / E with E exponential: -log P(X <= x) = 1 / x exactly
    x = 1.0 / np.random.default_rng(0).exponential(size=200000)
    fit = left_tail_regression(x)
    assert fit.exponent == pytest.approx(1.0, abs=0.05)
    assert fit.amplitude == pytest.approx(1.0, rel=0.1)
    with pytest.raises(ValueError):
        left_tail_regression(x[:500])


def test_liminf_bound_brownian_value():
    k = 0.5
    assert liminf_upper_bound(k, 2 / (1 + k), 2 / (1 + k)) == pytest.approx((1 - k * k) / (4 * k))
    assert liminf_upper_bound(k, 2 / (1 + k), 2 / (1 + k)) == pytest.approx(0.375)
