"""h-extrema, standard valleys and the renewal sequence (e_j, S_j, R_j) they generate.

Valleys are parameterized directly by their depth h. The per-valley normalization count
(how many valleys make up one unit of the renewal clock) is carried as ``kappa_phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from .diffusion import besq0_from, besq2_log_path, log_cell_clock
from .levy_env import DriftedBrownian, LaplaceExponentModel, LevyPath, sample_path


def default_delta(kappa: float) -> float:
    return 0.1 * min(1.0, (1.0 / kappa - 1.0) / 3.0) if kappa < 1 else 0.1


# h-extrema


@dataclass
class HExtremaScan:
    h: float
    minima: np.ndarray
    maxima: np.ndarray


@numba.njit(cache=True)
def _scan(v, h):
    n = v.size
    mins = np.empty(n, dtype=np.int64)
    maxs = np.empty(n, dtype=np.int64)
    nmin = 0
    nmax = 0
    # phase 0: undecided, 1: last turn was a low (seek a high), -1: last turn was a high
    phase = 0
    lo = 0
    hi = 0
    max_before_lo = -np.inf
    min_before_hi = np.inf
    for i in range(1, n):
        x = v[i]
        if phase == 0:
            # lo, hi are the earliest prefix argmin / argmax
            if x < v[lo]:
                max_before_lo = v[hi]
                lo = i
            if x > v[hi]:
                min_before_hi = v[lo]
                hi = i
            if x >= v[lo] + h:
                # lo is an h-minimum only if something h above it precedes it
                if max_before_lo >= v[lo] + h:
                    mins[nmin] = lo
                    nmin += 1
                phase = 1
                hi = i
            elif x <= v[hi] - h:
                if min_before_hi <= v[hi] - h:
                    maxs[nmax] = hi
                    nmax += 1
                phase = -1
                lo = i
        elif phase == 1:
            if x > v[hi]:
                hi = i
            elif x <= v[hi] - h:
                maxs[nmax] = hi
                nmax += 1
                phase = -1
                lo = i
        else:
            if x < v[lo]:
                lo = i
            elif x >= v[lo] + h:
                mins[nmin] = lo
                nmin += 1
                phase = 1
                hi = i
    return mins[:nmin], maxs[:nmax]


def scan_h_extrema(env, h: float) -> HExtremaScan:
    """h-minima and h-maxima of a grid path (indices into the path); ties go to the smaller index."""
    if h <= 0:
        raise ValueError("h must be positive")
    v = np.ascontiguousarray(env.values if isinstance(env, LevyPath) else env, dtype=float)
    if v.size < 2:
        return HExtremaScan(h, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    mins, maxs = _scan(v, float(h))
    return HExtremaScan(h, mins, maxs)


# standard valleys


@dataclass
class ValleyRecord:
    index: int
    L_prev: float
    L_sharp: float
    tau_h: float
    m: float
    L: float
    tau_minus: float
    tau_plus: float
    tau_minus_deep: float
    tau_plus_deep: float
    S: float
    R: float
    depth: float

    def ordered(self) -> bool:
        # tau_minus may precede L_sharp when the bottom comes right after the descent ends
        return (self.L_prev <= self.L_sharp <= self.m and self.L_prev <= self.tau_minus <= self.m
                <= self.tau_plus <= self.tau_h <= self.L)


@numba.njit(cache=True)
def _next_valley(v, s, h, drop, deep):
    """Grid indices (L_sharp, tau_h, m, L, tau_minus, tau_plus, tau_minus_deep, tau_plus_deep) or -1s."""
    out = np.full(8, -1, dtype=np.int64)
    n = v.size
    thr = v[s] - drop
    i = s + 1
    while i < n and v[i] > thr:
        i += 1
    if i >= n:
        return out
    ls = i
    m = i
    j = i
    while j < n:
        if v[j] < v[m]:
            m = j
        if v[j] - v[m] >= h:
            break
        j += 1
    if j >= n:
        return out
    tau = j
    base = v[m]
    k = tau + 1
    while k < n and v[k] > base + 0.5 * h:
        k += 1
    if k >= n:
        return out
    out[0] = ls
    out[1] = tau
    out[2] = m
    out[3] = k
    for q, a in enumerate((0.5 * h, deep)):
        b = m - 1
        while b > s and v[b] - base < a:
            b -= 1
        f = m + 1
        while v[f] - base < a:
            f += 1
        out[4 + 2 * q] = b
        out[5 + 2 * q] = f
    return out


def _trapz_exp(v, dx, sign):
    e = np.exp(sign * v)
    return float(dx * (e.sum() - 0.5 * (e[0] + e[-1]))) if e.size > 1 else 0.0


def _record(idx, j, v, s, x0, dx, h):
    ls, tau, m, L, tm, tp, tmd, tpd = (int(k) for k in idx)
    base = v[m]
    S = _trapz_exp(v[tp: L + 1] - base, dx, 1.0)
    R = _trapz_exp(v[tm: tp + 1] - base, dx, -1.0)
    pos = lambda k: x0 + k * dx  # noqa: E731
    return ValleyRecord(j, pos(s), pos(ls), pos(tau), pos(m), pos(L), pos(tm), pos(tp), pos(tmd), pos(tpd),
                        S, R, h)


def standard_valleys(env: LevyPath, h: float, delta: float | None = None, kappa: float | None = None,
                     deep_level: float | None = None):
    """Valleys of a fixed path by the stopping-time recursion from x = 0.

    Returns (records, truncated) where truncated is True when the path ran out mid-valley.
    """
    if kappa is None:
        raise ValueError("kappa is required to set the descent between valleys")
    delta = default_delta(kappa) if delta is None else delta
    drop = math.exp((1 - delta) * kappa * h)
    deep = 0.25 * h if deep_level is None else deep_level
    v = np.ascontiguousarray(env.values, dtype=float)
    s = env.index_of(0.0)
    out = []
    while True:
        idx = _next_valley(v, s, h, drop, deep)
        if idx[0] < 0:
            return out, True
        out.append(_record(idx, len(out) + 1, v, s, env.grid[0], env.step, h))
        s = int(idx[3])


def iter_valleys(model: LaplaceExponentModel, h: float, step: float, rng: np.random.Generator,
                 delta: float | None = None, deep_level: float | None = None, chunk: float | None = None,
                 margin: int = 2000):
    """Stream valleys of a fresh environment; yields (record, values, offset) with values covering
    [L_prev - margin cells, L] and offset the grid index of values[0]."""
    kappa = model.kappa
    delta = default_delta(kappa) if delta is None else delta
    drop = math.exp((1 - delta) * kappa * h)
    deep = 0.25 * h if deep_level is None else deep_level
    if chunk is None:
        # a few expected valley lengths
        chunk = 4.0 * (2 * drop / kappa + math.exp(kappa * h) / kappa ** 2 + 4 * h / kappa)
    buf = sample_path(model, chunk, step, rng).values
    offset = 0
    s = 0
    j = 0
    while True:
        idx = _next_valley(buf, s, h, drop, deep)
        if idx[0] < 0:
            more = sample_path(model, chunk, step, rng).values
            buf = np.concatenate((buf, buf[-1] + more[1:]))
            continue
        j += 1
        rec = _record(idx, j, buf, s, offset * step, step, h)
        lo = max(0, s - margin)
        yield rec, buf[lo: int(idx[3]) + 1], offset + lo
        # keep a margin to the left of the new start for local-time spill
        cut = max(0, int(idx[3]) - margin)
        buf = buf[cut:]
        offset += cut
        s = int(idx[3]) - cut


def valleys_match_extrema(env: LevyPath, valleys, h: float) -> bool:
    """True when every valley bottom is the h-minimum of the same rank among those right of 0."""
    scan = scan_h_extrema(env, h)
    mins = env.grid[scan.minima]
    mins = mins[mins > 0]
    if len(valleys) > mins.size:
        return False
    return all(abs(mins[k] - v.m) < 0.5 * env.step for k, v in enumerate(valleys))


# renewal sequence and its functionals


@dataclass
class RenewalSequence:
    e: np.ndarray
    S: np.ndarray
    R: np.ndarray
    t: float = 1.0
    kappa_phi: float = 1.0

    def __post_init__(self):
        self.e, self.S, self.R = (np.asarray(a, dtype=float) for a in (self.e, self.S, self.R))

    @property
    def first(self) -> np.ndarray:
        return self.e * self.S

    @property
    def products(self) -> np.ndarray:
        return self.e * self.S * self.R


def y_processes(seq: RenewalSequence, s: float) -> tuple[float, float]:
    if s < 0:
        raise ValueError("s must be non-negative")
    k = int(math.floor(s * seq.kappa_phi))
    if k > seq.e.size:
        raise IndexError(f"need {k} valleys, sequence has {seq.e.size}")
    return float(seq.first[:k].sum() / seq.t), float(seq.products[:k].sum() / seq.t)


def overshoot_index(seq: RenewalSequence, a: float) -> int | None:
    """Smallest j with sum_{i<=j} e_i S_i R_i > a t, or None if the sequence never gets there."""
    if a < 0:
        raise ValueError("a must be non-negative")
    csum = np.cumsum(seq.products)
    j = int(np.searchsorted(csum, a * seq.t, side="right"))
    return j + 1 if j < csum.size else None


def _sup_first(seq, b, closed):
    n = overshoot_index(seq, b)
    if n is None:
        n = seq.e.size + 1
    stop = min(n if closed else n - 1, seq.e.size)
    return float(seq.first[:stop].max() / seq.t) if stop > 0 else 0.0


def sup_before_crossing(seq: RenewalSequence, b: float) -> float:
    """Largest e_j S_j / t over j < N_b (0 for an empty range)."""
    return _sup_first(seq, b, closed=False)


def sup_at_crossing(seq: RenewalSequence, b: float) -> float:
    """Largest e_j S_j / t over j <= N_b."""
    return _sup_first(seq, b, closed=True)


# first-valley law for the drifted Brownian environment


def synthesize_first_valleys(kappa: float, h: float, n: int, rng: np.random.Generator, step: float = 0.01,
                             batch: int = 5000):
    """(S / e^h, R) of the first valley without scanning an environment.

    Seen from its bottom the valley is the environment conditioned to stay positive: on the right
    up to level h, then free until it falls back to h/2; on the left up to level h/2. For the
    drifted Brownian environment both sides are 3-d Bessel-type norms with drift kappa/2.
    """
    S = np.empty(n)
    R = np.empty(n)
    mu = 0.5 * kappa
    sq = math.sqrt(step)
    for start in range(0, n, batch):
        m = min(batch, n - start)
        # right side
        pos = np.zeros((3, m))
        x = np.zeros(m)
        r_acc = np.zeros(m)
        s_acc = np.zeros(m)
        past_half = np.zeros(m, dtype=bool)
        climbing = np.ones(m, dtype=bool)
        active = np.ones(m, dtype=bool)
        while active.any():
            ids = np.flatnonzero(active)
            c = climbing[ids]
            nx = np.empty(ids.size)
            cl = ids[c]
            if cl.size:
                p = pos[:, cl] + sq * rng.standard_normal((3, cl.size))
                p[0] += mu * step
                pos[:, cl] = p
                nx[c] = np.sqrt((p * p).sum(axis=0))
            fr = ~c
            if fr.any():
                nx[fr] = x[ids[fr]] + sq * rng.standard_normal(fr.sum()) - mu * step
            ox = x[ids]
            half = past_half[ids]
            r_acc[ids] += np.where(half, 0.0, 0.5 * step * (np.exp(-ox) + np.exp(-nx)))
            s_acc[ids] += np.where(half, 0.5 * step * (np.exp(ox - h) + np.exp(nx - h)), 0.0)
            x[ids] = nx
            past_half[ids] |= nx >= 0.5 * h
            top = c & (nx >= h)
            climbing[ids[top]] = False
            x[ids[top]] = h
            active[ids[(~c) & (nx <= 0.5 * h)]] = False
        # left side
        pos = np.zeros((3, m))
        x = np.zeros(m)
        l_acc = np.zeros(m)
        ids = np.arange(m)
        while ids.size:
            pos[:, ids] += sq * rng.standard_normal((3, ids.size))
            pos[0, ids] += mu * step
            nx = np.sqrt((pos[:, ids] ** 2).sum(axis=0))
            l_acc[ids] += 0.5 * step * (np.exp(-x[ids]) + np.exp(-nx))
            x[ids] = nx
            ids = ids[nx < 0.5 * h]
        S[start: start + m] = s_acc
        R[start: start + m] = r_acc + l_acc
    return S, R


def first_valley_samples(model: LaplaceExponentModel, h: float, n: int, rng: np.random.Generator,
                         step: float | None = None, method: str = "auto"):
    """(S / e^h, R) of the first standard valley; synthetic for drifted Brownian, scanned otherwise."""
    if method == "auto":
        method = "synthetic" if isinstance(model, DriftedBrownian) else "scan"
    if method == "synthetic":
        return synthesize_first_valleys(model.kappa, h, n, rng, step or 0.01)
    S, R = np.empty(n), np.empty(n)
    for i in range(n):
        rec, _, _ = next(iter_valleys(model, h, step or 0.01, rng))
        S[i], R[i] = rec.S * math.exp(-h), rec.R
    return S, R


@dataclass
class TailTable:
    x: np.ndarray
    c_first: np.ndarray
    c_product: np.ndarray
    slope_first: float
    slope_product: float
    plateau_first: float
    plateau_product: float
    ratio: float
    moment_R: float
    flat: bool


def _plateau(samples, x):
    n = samples.size
    p = np.array([(samples > u).mean() for u in x])
    return p, n


def tail_statistics(S: np.ndarray, R: np.ndarray, kappa: float, rng: np.random.Generator, x_grid=None,
                    R_moment_samples: np.ndarray | None = None) -> TailTable:
    """Tails of e S and e S R with e ~ Exp(mean 2) drawn independently.

    x^kappa P(e S > x) and x^kappa P(e S R > x) should both plateau; the ratio of plateaus
    estimates E[R^kappa].
    """
    e = rng.exponential(2.0, size=S.size)
    first = e * S
    prod = first * R
    if x_grid is None:
        lo, hi = np.quantile(first, [0.9, 1 - 30.0 / S.size])
        x_grid = np.geomspace(lo, hi, 12)
    x = np.asarray(x_grid, dtype=float)
    p1 = np.array([(first > u).mean() for u in x])
    p2 = np.array([(prod > u).mean() for u in x])
    c1, c2 = x ** kappa * p1, x ** kappa * p2
    ok1, ok2 = p1 > 0, p2 > 0
    slope1 = float(np.polyfit(np.log(x[ok1]), np.log(p1[ok1]), 1)[0])
    slope2 = float(np.polyfit(np.log(x[ok2]), np.log(p2[ok2]), 1)[0])
    pl1, pl2 = float(np.mean(c1[ok1])), float(np.mean(c2[ok2]))
    flat = bool((c1[ok1].max() - c1[ok1].min()) / pl1 <= 0.5)
    moment = R if R_moment_samples is None else R_moment_samples
    return TailTable(x, c1, c2, slope1, slope2, pl1, pl2, pl2 / pl1, float(np.mean(moment ** kappa)), flat)


@dataclass
class SpacingReport:
    h: float
    spacings: np.ndarray
    mean: float
    ks_pvalue: float
    loc: float
    scale: float


def valley_spacing_check(model: LaplaceExponentModel, h: float, n_valleys: int, rng: np.random.Generator,
                         step: float = 0.05) -> SpacingReport:
    """Spacings L_j - L_{j-1} against an exponential with fitted location and scale."""
    gaps = []
    for rec, _, _ in iter_valleys(model, h, step, rng, margin=0):
        gaps.append(rec.L - rec.L_prev)
        if len(gaps) >= n_valleys:
            break
    gaps = np.array(gaps)
    loc, scale = stats.expon.fit(gaps)
    p = stats.kstest(gaps, stats.expon(loc, scale).cdf).pvalue
    return SpacingReport(h, gaps, float(gaps.mean()), float(p), float(loc), float(scale))


def spacing_slope(reports) -> float:
    hs = np.array([r.h for r in reports])
    return float(np.polyfit(hs, np.log([r.mean for r in reports]), 1)[0])


# traversal of valleys by the diffusion


@dataclass
class RenewalObservation:
    e: float
    S: float
    R: float
    local_time_bottom: float
    time_to_bottom: float
    time_in_valley: float
    A_L: float

    @property
    def time_increment(self) -> float:
        """H(L_j) - H(L_{j-1})."""
        return self.time_to_bottom + self.time_in_valley


def _sweep(vt, start, stop, step, rng):
    """Local-time increment (in units where the bottom sits at 0) of a run from grid index start
    until the hit of index stop > start: BESQ(2) from stop back to start, BESQ(0) further left."""
    right = vt[start: stop + 1][::-1]
    lz = besq2_log_path(log_cell_clock(right, step), rng)
    prof = np.zeros(vt.size)
    prof[start: stop + 1] = np.exp(lz - right)[::-1]
    if start > 0:
        # BESQ(0) is scale invariant: run it in units of its starting value exp(lz[-1])
        left = vt[: start + 1][::-1]
        c = lz[-1]
        z = besq0_from(1.0, np.exp(np.minimum(log_cell_clock(left, step) - c, 700.0)), rng)
        prof[: start + 1] = (z * np.exp(c - left))[::-1]
    return prof


def _integral(prof, step):
    return float(step * (prof.sum() - 0.5 * (prof[0] + prof[-1])))


def _traverse_one(rec: ValleyRecord, values: np.ndarray, offset: int, step: float, rng):
    i_prev = int(round(rec.L_prev / step)) - offset
    i_m = int(round(rec.m / step)) - offset
    i_L = values.size - 1
    vt = values - values[i_m]
    down = _sweep(vt, i_prev, i_m, step, rng)
    up = _sweep(vt, i_m, i_L, step, rng)
    a_L = float(np.exp(np.logaddexp.reduce(log_cell_clock(vt[i_m: i_L + 1], step))))
    lt = float(up[i_m])
    return RenewalObservation(lt / a_L, rec.S, rec.R, lt, _integral(down, step), _integral(up, step), a_L)


def traverse_valleys(model: LaplaceExponentModel, h: float, n_valleys: int, rng: np.random.Generator,
                     step: float = 0.01):
    """Walk the diffusion through n_valleys successive valleys via the Ray-Knight description.

    Returns (records, observations).
    """
    recs, obs = [], []
    for rec, values, offset in iter_valleys(model, h, step, rng):
        recs.append(rec)
        obs.append(_traverse_one(rec, values, offset, step, rng))
        if len(recs) >= n_valleys:
            break
    return recs, obs
