"""Spectrally negative Levy environments: exponents, roots, paths and exponential functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import optimize, stats

# a cell whose stable part falls below this many noise scales is flagged as a jump cell
JUMP_FLAG_SCALES = 5.0


class InvalidModelError(ValueError):
    """The exponent has no positive root (Psi'(0+) >= 0) or bad parameters."""


def stable_left_skewed(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Standard totally left-skewed alpha-stable draws, E exp(lam X) = exp(lam**alpha / |cos(pi alpha / 2)|).

    Chambers-Mallows-Stuck with beta = -1.
    """
    if alpha == 2.0:
        return rng.standard_normal(size) * math.sqrt(2.0)
    u = rng.uniform(-math.pi / 2, math.pi / 2, size)
    w = rng.standard_exponential(size)
    t = -math.tan(math.pi * alpha / 2)
    b = math.atan(t) / alpha
    s = (1.0 + t * t) ** (1.0 / (2.0 * alpha))
    ab = alpha * (u + b)
    return s * np.sin(ab) / np.cos(u) ** (1.0 / alpha) * (np.cos(u - ab) / w) ** ((1.0 - alpha) / alpha)


@lru_cache(maxsize=64)
def _stable_upper_quantile(alpha: float) -> float:
    # point beyond which a standard left-skewed stable has mass < 1e-13
    if alpha == 2.0:
        return 10.6
    return float(stats.levy_stable(alpha, -1.0).isf(1e-13))


@dataclass(frozen=True)
class LaplaceExponentModel:
    """Base class: E exp(lam V_t) = exp(t Psi(lam))."""

    def psi(self, lam):
        raise NotImplementedError

    @property
    def gaussian_variance(self) -> float:
        """Coefficient Q of the Brownian part (variance per unit time)."""
        return 0.0

    @cached_property
    def kappa(self) -> float:
        return find_kappa_root(self)

    def increments(self, dt, size, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def tilted_increments(self, dt, size, rng: np.random.Generator) -> np.ndarray:
        """Increments of the process tilted by exp(kappa V), exponent Psi(lam + kappa)."""
        raise NotImplementedError

    def noise_scale(self, dt: float) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DriftedBrownian(LaplaceExponentModel):
    """V = W - kappa t / 2, Psi(lam) = lam^2/2 - kappa lam/2."""

    kappa_param: float

    def __post_init__(self):
        if not self.kappa_param > 0:
            raise InvalidModelError(f"kappa must be positive, got {self.kappa_param}")

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        return 0.5 * lam * lam - 0.5 * self.kappa_param * lam

    @property
    def gaussian_variance(self) -> float:
        return 1.0

    def increments(self, dt, size, rng):
        dt = np.asarray(dt, dtype=float)
        return np.sqrt(dt) * rng.standard_normal(size) - 0.5 * self.kappa_param * dt

    def tilted_increments(self, dt, size, rng):
        dt = np.asarray(dt, dtype=float)
        return np.sqrt(dt) * rng.standard_normal(size) + 0.5 * self.kappa_param * dt

    def noise_scale(self, dt):
        return math.sqrt(dt)

    def to_dict(self):
        return {"kind": "drifted_brownian", "kappa": self.kappa_param}


@dataclass(frozen=True)
class StableWithDrift(LaplaceExponentModel):
    """Psi(lam) = C lam^alpha - d lam with alpha in (1, 2]: no positive jumps, negative drift."""

    alpha: float
    scale: float
    drift: float

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise InvalidModelError(f"alpha must lie in (1, 2], got {self.alpha}")
        if not self.scale > 0:
            raise InvalidModelError(f"scale must be positive, got {self.scale}")
        if not self.drift > 0:
            raise InvalidModelError("Psi'(0+) >= 0: the process does not drift to -infinity")

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        return self.scale * np.abs(lam) ** self.alpha - self.drift * lam

    @property
    def gaussian_variance(self) -> float:
        return 2.0 * self.scale if self.alpha == 2.0 else 0.0

    def noise_scale(self, dt):
        if self.alpha == 2.0:
            return math.sqrt(2.0 * self.scale * dt)
        return (self.scale * dt * abs(math.cos(math.pi * self.alpha / 2))) ** (1.0 / self.alpha)

    def _sigma(self, dt):
        dt = np.asarray(dt, dtype=float)
        if self.alpha == 2.0:
            return np.sqrt(self.scale * dt)
        return (self.scale * dt * abs(math.cos(math.pi * self.alpha / 2))) ** (1.0 / self.alpha)

    def stable_part(self, dt, size, rng):
        return self._sigma(dt) * stable_left_skewed(self.alpha, size, rng)

    def increments(self, dt, size, rng):
        return self.stable_part(dt, size, rng) - self.drift * np.asarray(dt, dtype=float)

    def tilted_increments(self, dt, size, rng):
        # rejection: accept a draw y with probability exp(kappa (y - cap)), cap far in the right tail
        dt = np.broadcast_to(np.asarray(dt, dtype=float), size)
        sigma = self._sigma(dt)
        cap = sigma * _stable_upper_quantile(self.alpha)
        k = self.kappa
        out = np.empty(size)
        todo = np.arange(out.size)
        flat_sigma, flat_cap = sigma.ravel(), cap.ravel()
        flat = out.ravel()
        while todo.size:
            y = flat_sigma[todo] * stable_left_skewed(self.alpha, todo.size, rng)
            ok = np.log(rng.uniform(size=todo.size)) <= np.minimum(0.0, k * (y - flat_cap[todo]))
            flat[todo[ok]] = y[ok]
            todo = todo[~ok]
        return flat.reshape(size) - self.drift * dt

    def to_dict(self):
        return {"kind": "stable", "alpha": self.alpha, "scale": self.scale, "drift": self.drift}


def model_from_dict(spec: dict) -> LaplaceExponentModel:
    kind = spec.get("kind")
    if kind == "drifted_brownian":
        return DriftedBrownian(float(spec["kappa"]))
    if kind == "stable":
        return StableWithDrift(float(spec["alpha"]), float(spec["scale"]), float(spec["drift"]))
    raise InvalidModelError(f"unknown model kind {kind!r}")


def eval_psi(model: LaplaceExponentModel, lam):
    if np.any(np.asarray(lam) < 0):
        raise ValueError("Psi is evaluated on lam >= 0 only")
    return model.psi(lam)


def find_kappa_root(model: LaplaceExponentModel) -> float:
    """Unique positive root of Psi, found by bracketing (Psi is convex with Psi(0) = 0)."""
    h = 1e-8
    if float(model.psi(h)) >= 0.0:
        raise InvalidModelError("Psi'(0+) >= 0: no positive root")
    lo, hi = h, 1.0
    while float(model.psi(hi)) <= 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise InvalidModelError("no positive root below 1e12")
    root = optimize.brentq(lambda x: float(model.psi(x)), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    # one Newton polish step using a central difference
    d = (float(model.psi(root * (1 + 1e-6))) - float(model.psi(root * (1 - 1e-6)))) / (2e-6 * root)
    polished = root - float(model.psi(root)) / d
    return polished if abs(float(model.psi(polished))) < abs(float(model.psi(root))) else root


@dataclass
class LevyPath:
    """A sampled environment on a uniform grid, V(0) = 0."""

    grid: np.ndarray
    values: np.ndarray
    jump_flags: np.ndarray

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def index_of(self, x: float) -> int:
        return int(round((x - self.grid[0]) / self.step))


def _jump_flags(model, dt, incs):
    if isinstance(model, StableWithDrift) and model.alpha < 2.0:
        return incs + model.drift * dt < -JUMP_FLAG_SCALES * model.noise_scale(dt)
    return np.zeros(incs.shape, dtype=bool)


def sample_path(model: LaplaceExponentModel, horizon: float, step: float, rng: np.random.Generator) -> LevyPath:
    if horizon <= 0 or step <= 0:
        raise ValueError("horizon and step must be positive")
    n = int(round(horizon / step))
    incs = model.increments(step, n, rng)
    values = np.concatenate(([0.0], np.cumsum(incs)))
    return LevyPath(np.arange(n + 1) * step, values, _jump_flags(model, step, incs))


def sample_two_sided(model, right: float, left: float, step: float, rng: np.random.Generator) -> LevyPath:
    """V on [-left, right]; V(-x) = -V'(x) for an independent copy V'."""
    pos = sample_path(model, right, step, rng)
    neg = sample_path(model, left, step, rng)
    grid = np.concatenate((-neg.grid[:0:-1], pos.grid))
    values = np.concatenate((-neg.values[:0:-1], pos.values))
    flags = np.concatenate((neg.jump_flags[::-1], pos.jump_flags))
    return LevyPath(grid, values, flags)


def sample_exp_functional(
    model: LaplaceExponentModel,
    n_samples: int,
    rng: np.random.Generator,
    step: float = 0.01,
    max_step: float = 0.5,
    cut: float = 30.0,
    batch: int = 20000,
) -> np.ndarray:
    """Samples of I(V) = int_0^inf exp(V_t) dt.

    Trapezoid rule with a per-path step that grows as V falls below its running max;
    a path stops once V <= max - cut, the neglected remainder being of order exp(-cut).
    """
    out = np.empty(n_samples)
    for start in range(0, n_samples, batch):
        m = min(batch, n_samples - start)
        v = np.zeros(m)
        top = np.zeros(m)
        acc = np.zeros(m)
        idx = np.arange(m)
        while idx.size:
            dt = np.minimum(max_step, step * np.exp(np.maximum(0.0, top - v - 2.0)))
            nv = v + model.increments(dt, idx.size, rng)
            acc += 0.5 * dt * (np.exp(v) + np.exp(nv))
            top = np.maximum(top, nv)
            v = nv
            done = v <= top - cut
            if done.any():
                out[start + idx[done]] = acc[done]
                keep = ~done
                idx, v, top, acc = idx[keep], v[keep], top[keep], acc[keep]
    return out


@dataclass
class TailEstimate:
    x: np.ndarray
    survival: np.ndarray
    counts: np.ndarray
    slope: float
    slope_se: float
    undersampled: bool


def tail_slope(samples: np.ndarray, x_grid) -> TailEstimate:
    """Weighted log-log regression of the empirical survival function on x_grid."""
    samples = np.sort(np.asarray(samples))
    x = np.asarray(x_grid, dtype=float)
    n = samples.size
    counts = n - np.searchsorted(samples, x, side="left")
    surv = counts / n
    use = counts >= 10
    undersampled = bool(use.sum() < len(x))
    if use.sum() < 2:
        return TailEstimate(x, surv, counts, float("nan"), float("nan"), True)
    lx, ly = np.log(x[use]), np.log(surv[use])
    # var(log p_hat) ~ (1 - p) / (n p)
    w = counts[use] / (1.0 - surv[use] + 1.0 / n)
    coef, cov = np.polyfit(lx, ly, 1, w=np.sqrt(w), cov="unscaled")
    return TailEstimate(x, surv, counts, float(coef[0]), float(np.sqrt(cov[0, 0])), undersampled)


def exp_functional_tail(
    model: LaplaceExponentModel,
    x_grid,
    n_paths: int,
    rng: np.random.Generator,
    step: float = 0.01,
) -> TailEstimate:
    samples = sample_exp_functional(model, n_paths, rng, step=step)
    return tail_slope(samples, x_grid)


def exp_moment(model: LaplaceExponentModel, lam: float, horizon: float, step: float, n_paths: int,
               rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate of E exp(lam V_horizon) and its standard error."""
    n = int(round(horizon / step))
    total = np.zeros(n_paths)
    for _ in range(n):
        total += model.increments(step, n_paths, rng)
    vals = np.exp(lam * total)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths))
