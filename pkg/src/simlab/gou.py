"""Generalized Ornstein-Uhlenbeck process Z(x) = exp(V(x)) R(int_0^x exp(-V)) and the liminf constants.

R is a squared Bessel process of dimension 2 started at 0. For kappa > 1 the tail of
sup Z over an excursion decays like h^(-kappa); the constants below describe it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .diffusion import besq2_log_path, log_cell_clock
from .levy_env import LaplaceExponentModel, LevyPath, sample_exp_functional, sample_path


@dataclass
class GouTrace:
    grid: np.ndarray
    z: np.ndarray
    env: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.z.max())

    def bridge_sup(self, variance: float, rng: np.random.Generator) -> float:
        """Supremum with the within-cell maximum of log Z drawn from a Brownian bridge.

        Near high levels the fluctuations of log Z come from the Gaussian part of V,
        so the grid maximum alone is biased low by about sqrt(variance * step).
        """
        if variance <= 0:
            return self.sup
        with np.errstate(divide="ignore"):
            lz = np.log(self.z)
        a, b = lz[:-1], lz[1:]
        ok = np.isfinite(a) & np.isfinite(b)
        step = self.grid[1] - self.grid[0]
        u = rng.uniform(size=int(ok.sum()))
        d = a[ok] - b[ok]
        top = 0.5 * (a[ok] + b[ok] + np.sqrt(d * d - 2.0 * variance * step * np.log(u)))
        return float(max(self.sup, np.exp(top.max()) if top.size else 0.0))


def simulate_Z(env: LevyPath, rng: np.random.Generator) -> GouTrace:
    """Z on the environment grid (non-negative part of the grid, starting at 0)."""
    start = env.index_of(0.0)
    v = env.values[start:]
    lz = besq2_log_path(log_cell_clock(v, env.step, sign=-1.0), rng)
    return GouTrace(env.grid[start:], np.exp(v + lz), v)


def sup_Z_samples(model: LaplaceExponentModel, r: float, n_paths: int, rng: np.random.Generator,
                  step: float = 0.01, bridge: bool = True) -> np.ndarray:
    """sup of Z over [0, r] for independent environments; bridge=False keeps the raw grid maximum."""
    q = model.gaussian_variance if bridge else 0.0
    return np.array([simulate_Z(sample_path(model, r, step, rng), rng).bridge_sup(q, rng)
                     for _ in range(n_paths)])


def _require_heavy(model):
    if model.kappa <= 1.0:
        raise ValueError("the liminf constants need kappa > 1")


def estimate_K(model: LaplaceExponentModel, n_paths: int, rng: np.random.Generator, step: float = 0.01):
    """K = E[I(V)^(kappa - 1)] by Monte Carlo; returns (estimate, standard error)."""
    _require_heavy(model)
    vals = sample_exp_functional(model, n_paths, rng, step=step) ** (model.kappa - 1.0)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths))


def compute_m(model: LaplaceExponentModel) -> float:
    """m = -2 / Psi(1), the mean speed scale (E H(r) ~ m r)."""
    _require_heavy(model)
    return -2.0 / float(model.psi(1.0))


def liminf_constant_J(model: LaplaceExponentModel, K: float) -> float:
    k = model.kappa
    return 2.0 * (special.gamma(k) * k * k * K / compute_m(model)) ** (1.0 / k)


def tail_plateau_constant(model: LaplaceExponentModel, K: float) -> float:
    """Limit of h^kappa P(excursion sup of Z > h) per unit length: 2^kappa Gamma(kappa) kappa^2 K."""
    k = model.kappa
    return 2.0 ** k * special.gamma(k) * k * k * K


@dataclass
class TailConstants:
    h: np.ndarray
    prob: np.ndarray
    c_hat: np.ndarray
    c_linear: np.ndarray
    c_se: np.ndarray
    plateau: float
    plateau_se: float
    flat: bool


def excursion_tail_constant(model: LaplaceExponentModel, r: float, h_grid, n_paths: int,
                            rng: np.random.Generator, step: float = 0.01, sups=None) -> TailConstants:
    """h^kappa P(sup_[0,r] Z > h) / r across h_grid.

    The probability is inverted through the Poisson approximation P = 1 - exp(-r c / h^kappa),
    which agrees with the linear form when P is small; both are returned.
    """
    h = np.asarray(h_grid, dtype=float)
    if sups is None:
        sups = sup_Z_samples(model, r, n_paths, rng, step)
    n = sups.size
    p = np.array([(sups > x).mean() for x in h])
    k = model.kappa
    c_lin = h ** k * p / r
    c_hat = -(h ** k) * np.log1p(-np.minimum(p, 1 - 1.0 / n)) / r
    se = h ** k / r * np.sqrt(p * (1 - p) / n) / np.maximum(1 - p, 1.0 / n)
    use = (p > 0) & (p <= 0.3)
    if not use.any():
        return TailConstants(h, p, c_hat, c_lin, se, float("nan"), float("nan"), False)
    w = 1.0 / se[use] ** 2
    plateau = float(np.sum(w * c_hat[use]) / w.sum())
    plateau_se = float(1.0 / math.sqrt(w.sum()))
    flat = bool(np.all(np.abs(c_hat[use] - plateau) <= 3 * se[use] + 0.1 * plateau))
    return TailConstants(h, p, c_hat, c_lin, se, plateau, plateau_se, flat)


@dataclass
class LiminfStatistic:
    r: np.ndarray
    quantile: np.ndarray
    levels: np.ndarray


def liminf_scaled_statistic(model: LaplaceExponentModel, r_grid, n_paths: int, rng: np.random.Generator,
                            step: float = 0.05) -> LiminfStatistic:
    """Lower 1/log r quantile of sup_[0, r/m] Z scaled by (log log r / r)^(1/kappa)."""
    m = compute_m(model)
    k = model.kappa
    rs = np.asarray(r_grid, dtype=float)
    q, levels = [], []
    for r in rs:
        sups = sup_Z_samples(model, r / m, n_paths, rng, step)
        level = 1.0 / math.log(r)
        q.append(np.quantile(sups, level) * (math.log(math.log(r)) / r) ** (1.0 / k))
        levels.append(level)
    return LiminfStatistic(rs, np.array(q), np.array(levels))


def integral_test(f_of_log, kappa: float, n_blocks: int = 40, converge_below: float = 0.9,
                  diverge_above: float = 0.99) -> str:
    """Classify int_1^inf f(t)^kappa dt / t as "converges", "diverges" or "inconclusive".

    f_of_log(u) must return f(e^u), so that very large t never has to be formed. With u = log t
    the integral is int g(u)^kappa du; it is cut into blocks u in [2^k, 2^(k+1)] and the
    ratio of successive blocks decides (a geometric ratio below one converges).
    """
    def block(k):
        # u = exp(s) over s in [k log 2, (k+1) log 2]
        val, _ = integrate.quad(lambda s: f_of_log(math.exp(s)) ** kappa * math.exp(s),
                                k * math.log(2.0), (k + 1) * math.log(2.0))
        return val

    pieces = np.array([block(k) for k in range(n_blocks - 4, n_blocks)])
    if np.all(pieces == 0.0):
        return "converges"
    if np.any(pieces[:-1] <= 0.0):
        return "inconclusive"
    ratio = float(np.exp(np.mean(np.log(pieces[1:] / pieces[:-1]))))
    if ratio < converge_below:
        return "converges"
    if ratio >= diverge_above:
        return "diverges"
    return "inconclusive"
