"""Environments conditioned to stay positive, and their exponential functionals.

Two samplers:

* ``bessel``: for the drifted Brownian environment the conditioned process is the norm of a
  3-d Brownian motion with drift (kappa/2, 0, 0); exact at any step size.
* ``rejection``: generic. For the upward direction the environment is tilted by exp(kappa V),
  which drifts up, started at a small eps and killed on entering (-inf, 0]. The dual direction
  runs -V (already drifting up) the same way. Gaussian parts use the Brownian-bridge
  crossing probability, so the killing is exact on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .levy_env import DriftedBrownian, LaplaceExponentModel

UP = "up"
DUAL_UP = "dual_up"
# steps grow like exp(X - FINE_LEVEL) once the path is this high
FINE_LEVEL = 2.0


@dataclass
class ConditionedPath:
    grid: np.ndarray
    values: np.ndarray
    direction: str
    stop_level: float
    trials: int = 1


@dataclass
class ExpFunctionalSample:
    value: float
    truncation_level: float
    tail_bound: float


@dataclass
class ExpFunctionalSamples:
    """Batch of samples of int_0^tau(L) exp(-X) for a conditioned process X."""

    values: np.ndarray
    truncation_level: float
    tail_bound: float
    direction: str
    acceptance: float = 1.0

    def __len__(self):
        return self.values.size

    def __getitem__(self, i) -> ExpFunctionalSample:
        return ExpFunctionalSample(float(self.values[i]), self.truncation_level, self.tail_bound)


def default_truncation(kappa: float) -> float:
    # the neglected piece is of order exp(-min(kappa, 1) L)
    return max(20.0, 12.0 / min(kappa, 1.0))


def _tail_bound(kappa, level):
    k = min(kappa, 1.0)
    return 2.0 / k * math.exp(-k * level)


def _resolve_method(model, method):
    if method == "auto":
        return "bessel" if isinstance(model, DriftedBrownian) else "rejection"
    if method == "bessel" and not isinstance(model, DriftedBrownian):
        raise ValueError("the bessel sampler needs a drifted Brownian environment")
    if method not in ("bessel", "rejection"):
        raise ValueError(f"unknown method {method!r}")
    return method


def _check_direction(direction):
    if direction not in (UP, DUAL_UP):
        raise ValueError(f"direction must be {UP!r} or {DUAL_UP!r}")


def _bessel_integrals(kappa, level, n, step, max_step, rng, batch=50000):
    out = np.empty(n)
    mu = 0.5 * kappa
    for start in range(0, n, batch):
        m = min(batch, n - start)
        pos = np.zeros((3, m))
        x = np.zeros(m)
        acc = np.zeros(m)
        idx = np.arange(m)
        while idx.size:
            dt = np.minimum(max_step, step * np.exp(np.maximum(0.0, x - FINE_LEVEL)))
            pos += np.sqrt(dt) * rng.standard_normal((3, idx.size))
            pos[0] += mu * dt
            nx = np.sqrt((pos * pos).sum(axis=0))
            acc += 0.5 * dt * (np.exp(-x) + np.exp(-nx))
            x = nx
            done = x >= level
            if done.any():
                out[start + idx[done]] = acc[done]
                keep = ~done
                idx, x, acc, pos = idx[keep], x[keep], acc[keep], pos[:, keep]
    return out


def _proposal(model, direction):
    if direction == UP:
        return model.tilted_increments
    return lambda dt, size, rng: -model.increments(dt, size, rng)


def _rejection_run(model, direction, level, step, eps, n_target, rng, adaptive=True, max_step=0.5,
                   batch=100000, record=False, max_trials=None):
    """Accept n_target trials; returns (integrals, trials, paths or None)."""
    propose = _proposal(model, direction)
    q = model.gaussian_variance
    results, paths = [], []
    trials = 0
    if max_trials is None:
        max_trials = max(10**7, int(1e3 * n_target / max(eps, 1e-12)))
    while len(results) < n_target:
        if trials > max_trials:
            raise RuntimeError(
                f"acceptance below {n_target / trials:.2e} after {trials} trials: eps too small or level too high")
        m = batch
        trials += m
        x = np.full(m, eps)
        acc = np.zeros(m)
        ids = np.arange(m)
        hist = [(ids, x.copy(), np.zeros(m))] if record else None
        t = np.zeros(m)
        while ids.size:
            if adaptive:
                dt = np.minimum(max_step, step * np.exp(np.maximum(0.0, x - FINE_LEVEL)))
            else:
                dt = np.full(ids.size, step)
            nx = x + propose(dt, ids.size, rng)
            alive = nx > 0
            if q > 0:
                # bridge crossing of zero between two positive grid values
                cross = np.exp(-2.0 * x * np.maximum(nx, 0.0) / (q * dt))
                alive &= rng.uniform(size=ids.size) >= cross
            acc += 0.5 * dt * (np.exp(-x) + np.exp(-nx))
            t = t + dt
            ids, x, acc, t, nx = ids[alive], nx[alive], acc[alive], t[alive], nx[alive]
            if record:
                hist.append((ids, x.copy(), t.copy()))
            done = x >= level
            if done.any():
                for i in np.flatnonzero(done):
                    if len(results) < n_target:
                        results.append(acc[i])
                        if record:
                            paths.append(_trace_back(hist, ids[i]))
                keep = ~done
                ids, x, acc, t = ids[keep], x[keep], acc[keep], t[keep]
    return np.array(results), trials, (paths if record else None)


def _trace_back(hist, trial_id):
    ts, xs = [], []
    for ids, vals, times in hist:
        j = np.searchsorted(ids, trial_id)
        if j < ids.size and ids[j] == trial_id:
            ts.append(times[j])
            xs.append(vals[j])
    return np.array(ts), np.array(xs)


def sample_conditioned(
    model: LaplaceExponentModel,
    direction: str,
    stop_level: float,
    step: float,
    rng: np.random.Generator,
    start_eps: float | None = None,
    method: str = "auto",
) -> ConditionedPath:
    """One path of the conditioned process on a uniform grid, stopped when it first exceeds stop_level."""
    _check_direction(direction)
    if stop_level <= 0:
        raise ValueError("stop_level must be positive")
    method = _resolve_method(model, method)
    if method == "bessel":
        mu = 0.5 * model.kappa_param
        xs = [0.0]
        pos = np.zeros(3)
        chunk = 4096
        while xs[-1] < stop_level:
            incs = math.sqrt(step) * rng.standard_normal((chunk, 3))
            incs[:, 0] += mu * step
            traj = pos + np.cumsum(incs, axis=0)
            norms = np.sqrt((traj * traj).sum(axis=1))
            hit = np.flatnonzero(norms >= stop_level)
            end = hit[0] + 1 if hit.size else chunk
            xs.extend(norms[:end])
            pos = traj[end - 1]
        values = np.array(xs)
        return ConditionedPath(np.arange(values.size) * step, values, direction, stop_level)
    eps = start_eps if start_eps is not None else 10.0 * step * model.noise_scale(step)
    _, trials, paths = _rejection_run(model, direction, stop_level, step, eps, 1, rng, adaptive=False,
                                      batch=20000, record=True)
    grid, values = paths[0]
    return ConditionedPath(grid, values, direction, stop_level, trials)


def sample_exp_functional_conditioned(
    model: LaplaceExponentModel,
    direction: str,
    n_samples: int,
    rng: np.random.Generator,
    truncation_level: float | None = None,
    step: float = 0.01,
    method: str = "auto",
    start_eps: float | None = None,
    max_step: float = 0.5,
) -> ExpFunctionalSamples:
    """Samples of int_0^tau(L) exp(-X_t) dt for X the conditioned process in the given direction."""
    _check_direction(direction)
    method = _resolve_method(model, method)
    kappa = model.kappa
    level = truncation_level if truncation_level is not None else default_truncation(kappa)
    if method == "bessel":
        vals = _bessel_integrals(kappa, level, n_samples, step, max_step, rng)
        acceptance = 1.0
    else:
        eps = start_eps if start_eps is not None else 10.0 * step * model.noise_scale(step)
        vals, trials, _ = _rejection_run(model, direction, level, step, eps, n_samples, rng, max_step=max_step)
        acceptance = n_samples / trials
    return ExpFunctionalSamples(vals, level, _tail_bound(kappa, level), direction, acceptance)


def sample_R(model, n_samples, rng, **kwargs) -> np.ndarray:
    """R = I(V_up) + I(V_hat_up) with the two pieces independent."""
    up = sample_exp_functional_conditioned(model, UP, n_samples, rng, **kwargs)
    dual = sample_exp_functional_conditioned(model, DUAL_UP, n_samples, rng, **kwargs)
    return up.values + dual.values


def laplace_transform(samples, lam: float) -> tuple[float, float]:
    """Empirical E exp(-lam X) and its standard error."""
    vals = np.exp(-lam * np.asarray(samples))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


@dataclass
class LeftTail:
    exponent: float
    amplitude: float
    alpha_hat: float
    n_points: int


def left_tail_regression(samples, min_count: int = 100, max_prob: float = 0.1) -> LeftTail:
    """Fit -log P(X <= x) ~ A x^(-p) over the lowest decile; for stable environments p = 1/(alpha - 1)."""
    xs = np.sort(np.asarray(samples))
    n = xs.size
    if n * max_prob < min_count:
        raise ValueError("left tail undersampled: need at least min_count samples in the lowest decile")
    probs = np.geomspace(min_count / n, max_prob, 20)
    qs = xs[np.ceil(probs * n).astype(int) - 1]
    coef = np.polyfit(np.log(qs), np.log(-np.log(probs)), 1)
    p = -coef[0]
    return LeftTail(float(p), float(math.exp(coef[1])), float(1.0 + 1.0 / p), len(probs))


def liminf_upper_bound(kappa: float, mean_up: float, mean_dual: float) -> float:
    """(1 - kappa) / (kappa (E I(V_up) + E I(V_hat_up))), the lim inf bound for 0 < kappa < 1."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("the bound needs 0 < kappa < 1")
    return (1.0 - kappa) / (kappa * (mean_up + mean_dual))


def drifted_brownian_log_laplace(kappa: float, lam: float, x_max: float = 60.0) -> float:
    """-log E exp(-lam I(W_kappa_up)), computed without sampling.

    With u(x) = -log E_x exp(-lam int_0^inf exp(-X)) for the conditioned process started at x,
    w = -u' solves the Riccati equation w' = 2 lam e^{-x} - kappa coth(kappa x / 2) w - w^2
    with w(x) ~ 2 lam x / 3 near 0; the answer is int_0^inf w.
    """
    if lam == 0:
        return 0.0

    def rhs(x, y):
        w = y[0]
        return [2.0 * lam * math.exp(-x) - kappa / math.tanh(0.5 * kappa * x) * w - w * w, w]

    x0 = 1e-6
    slope = 2.0 * lam / 3.0
    sol = integrate.solve_ivp(rhs, (x0, x_max), [slope * x0, 0.5 * slope * x0 * x0], rtol=1e-10, atol=1e-12,
                              method="LSODA")
    return float(sol.y[1, -1])
