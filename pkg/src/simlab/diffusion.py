"""Brox-type diffusion dX = dbeta - V'(X)/2 dt in a sampled environment.

The walker moves in natural scale: Y = A(X) with A' = exp(V) is a time-changed Brownian
motion, so one X-time step dt is a Gaussian Y-step of variance exp(2 V(X)) dt. A is
piecewise linear between grid nodes and X = A^{-1}(Y) is found by walking cells.

Local time is the occupation density of the eps-boxes around each grid node. With
2 eps / dx an integer every step lands in exactly that many boxes, so the field integrates
to the elapsed time exactly (away from the window edges).

Valley-scale runs use the Ray-Knight description instead: at the hitting time of r the local
time profile, read in natural scale, is a squared Bessel process of dimension 2 from 0
(between the start and r) continued as dimension 0 on the left of the start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .levy_env import LevyPath, sample_path

BLOCK = 1 << 16


class WindowExhausted(RuntimeError):
    """The walker left the sampled environment window."""


def natural_scale(values: np.ndarray, dx: float, origin: int) -> np.ndarray:
    """A on the grid: trapezoid of exp(V), A = 0 at index origin."""
    # accumulate outward from the origin: a sum started at the far left loses the tiny
    # increments where V is very negative
    e = np.exp(values)
    inc = 0.5 * dx * (e[1:] + e[:-1])
    a = np.zeros(e.size)
    a[origin + 1:] = np.cumsum(inc[origin:])
    a[:origin] = -np.cumsum(inc[:origin][::-1])[::-1]
    return a


def scale_function(env: LevyPath, x: float) -> float:
    """A(x) = int_0^x exp(V), linear between grid nodes."""
    lo, hi = float(env.grid[0]), float(env.grid[-1])
    if not lo <= x <= hi:
        raise ValueError(f"x={x} outside the environment range [{lo}, {hi}]")
    a = natural_scale(env.values, env.step, env.index_of(0.0))
    return float(np.interp(x, env.grid, a))


@numba.njit(cache=True)
def _tail_scale(vals, dx):
    """G_k = int_{x_k}^{x_end} exp(V(z) - V(x_k)) dz, by a backward recursion with no cancellation."""
    n = vals.size
    g = np.zeros(n)
    for k in range(n - 2, -1, -1):
        q = math.exp(vals[k + 1] - vals[k])
        g[k] = q * g[k + 1] + 0.5 * dx * (1.0 + q)
    return g


def quenched_mean_hitting_time(env: LevyPath, r: float) -> float:
    """E_0[H(r)] = int_{-inf}^r (A(r) - A(max(y, 0))) 2 exp(-V(y)) dy over the window, reflected at its left end."""
    dx = env.step
    origin = env.index_of(0.0)
    ir = env.index_of(r)
    vals = np.ascontiguousarray(env.values[: ir + 1])
    g = _tail_scale(vals, dx)
    # A(r) - A(y) = exp(V(y)) G(y) on the right of the start; on the left the weight is A(r) - A(0) = G(0)
    f = 2.0 * g
    f[:origin] = 2.0 * g[origin] * np.exp(vals[origin] - vals[:origin])
    return float(np.sum(0.5 * dx * (f[1:] + f[:-1])))


def exit_left_probability(env: LevyPath, r: float) -> float:
    """Quenched probability of reaching the left end of the window before r, from 0."""
    a = natural_scale(env.values, env.step, env.index_of(0.0))
    ar = a[env.index_of(r)]
    return float(ar / (ar - a[0]))


def environment_window(model, right: float, step: float, rng: np.random.Generator, escape_tol: float = 1e-4,
                       chunk: float = 5.0, max_left: float = 3000.0) -> LevyPath:
    """Two-sided environment on [-w, right], w grown until leaving on the left before right is unlikely."""
    pos = sample_path(model, right, step, rng)
    neg_vals = np.zeros(1)
    neg_flags = np.zeros(0, dtype=bool)
    while True:
        more = sample_path(model, chunk, step, rng)
        neg_vals = np.concatenate((neg_vals, neg_vals[-1] + more.values[1:]))
        neg_flags = np.concatenate((neg_flags, more.jump_flags))
        n = neg_vals.size - 1
        env = LevyPath(
            np.concatenate((-np.arange(n, 0, -1) * step, pos.grid)),
            np.concatenate((-neg_vals[:0:-1], pos.values)),
            np.concatenate((neg_flags[::-1], pos.jump_flags)),
        )
        if exit_left_probability(env, right) <= escape_tol or n * step >= max_left:
            return env


SPLIT_DV = 1.0
MAX_SPLIT = 8


@numba.njit(cache=True)
def _locate(w, cell, u):
    n = w.size
    while u >= w[cell] and cell + 1 < n:
        u -= w[cell]
        cell += 1
    while u < 0.0 and cell > 0:
        cell -= 1
        u += w[cell]
    return cell, u


@numba.njit(cache=True)
def _walk(xs, vals, w, lo_idx, hi_idx, state, normals, extra, dt, width, occ, occ_b, stops, stop_hits,
          rec_every, rec_buf):
    # state: [cell, u, t, n_steps, n_rec, next_stop]; u = Y - A(x_cell) is kept relative to the
    # current cell so that steps far smaller than A itself are not rounded away
    n = w.size
    cell = int(state[0])
    u = state[1]
    t = state[2]
    nsteps = int(state[3])
    nrec = int(state[4])
    nxt = int(state[5])
    dx = xs[1] - xs[0]
    n_extra = 0
    seg_w = np.empty(2 * MAX_SPLIT + 2)
    seg_tau = np.empty(2 * MAX_SPLIT + 2)
    for i in range(normals.size):
        # Brownian increments still to apply in this step, last one on top
        top = 0
        seg_w[0] = math.sqrt(dt) * normals[i]
        seg_tau[0] = dt
        while top >= 0:
            bw = seg_w[top]
            tau = seg_tau[top]
            frac = u / w[cell]
            v = vals[cell] + frac * (vals[cell + 1] - vals[cell])
            new_cell, new_u = _locate(w, cell, u + math.exp(v) * bw)
            inside = 0.0 <= new_u < w[new_cell]
            # leaving the window also counts as a large change, so such steps get refined first
            v_new = vals[new_cell] + (new_u / w[new_cell]) * (vals[new_cell + 1] - vals[new_cell]) \
                if inside else v + 2.0 * SPLIT_DV
            if abs(v_new - v) > SPLIT_DV and tau > dt / (1 << MAX_SPLIT) and n_extra < extra.size:
                # the rate exp(2V) changes along the move: split with a Brownian bridge midpoint
                mid = 0.5 * bw + 0.5 * math.sqrt(tau) * extra[n_extra]
                n_extra += 1
                seg_w[top] = bw - mid
                seg_tau[top] = 0.5 * tau
                top += 1
                seg_w[top] = mid
                seg_tau[top] = 0.5 * tau
                continue
            top -= 1
            # natural-scale occupation: B-time exp(2v) tau in the y-box of half-width width*exp(V_j) around A(x_j)
            xc = xs[cell] + dx * frac
            du = math.exp(2.0 * v) * tau
            j0 = max(int(math.ceil((xc - 4.0 * width - xs[0]) / dx)), lo_idx)
            j1 = min(int(math.floor((xc + 4.0 * width - xs[0]) / dx)), hi_idx)
            if j0 <= j1:
                # d = A(x_cell) - A(x_j), summed over the few cells in between
                d = 0.0
                for k in range(j0, cell):
                    d += w[k]
                for k in range(cell, j0):
                    d -= w[k]
                for j in range(j0, j1 + 1):
                    if abs(u + d) < width * math.exp(vals[j]):
                        occ_b[j - lo_idx] += du
                    if j < n:
                        d -= w[j]
            cell = new_cell
            u = new_u
            if not inside:
                if u >= w[cell]:
                    # past the right edge: the path crossed every stop level on the way
                    t += tau
                    while nxt < stops.size and xs[n] >= stops[nxt]:
                        stop_hits[nxt] = t
                        nxt += 1
                    if nxt >= stops.size and stops.size > 0:
                        u = w[cell]
                        x = xs[n]
                        nsteps += 1
                        state[0] = cell
                        state[1] = u
                        state[2] = t
                        state[3] = nsteps
                        state[4] = nrec
                        state[5] = nxt
                        return 2
                state[0] = cell
                state[1] = u
                state[2] = t
                state[3] = nsteps
                state[4] = nrec
                state[5] = nxt
                return 1
            t += tau
            x = xs[cell] + dx * u / w[cell]
            j0 = int(math.ceil((x - width - xs[0]) / dx))
            j1 = int(math.floor((x + width - xs[0]) / dx))
            for j in range(max(j0, lo_idx), min(j1, hi_idx) + 1):
                if abs(x - xs[j]) < width:
                    occ[j - lo_idx] += tau
            while nxt < stops.size and x >= stops[nxt]:
                stop_hits[nxt] = t
                nxt += 1
        nsteps += 1
        if rec_every > 0 and nsteps % rec_every == 0 and nrec < rec_buf.size:
            rec_buf[nrec] = x
            nrec += 1
        if nxt >= stops.size and stops.size > 0:
            state[0] = cell
            state[1] = u
            state[2] = t
            state[3] = nsteps
            state[4] = nrec
            state[5] = nxt
            return 2
    state[0] = cell
    state[1] = u
    state[2] = t
    state[3] = nsteps
    state[4] = nrec
    state[5] = nxt
    return 0


@dataclass
class DiffusionTrace:
    """Positions on a uniform X-time grid plus local-time snapshots."""

    times: np.ndarray
    positions: np.ndarray
    lt_grid: np.ndarray
    record_times: np.ndarray
    local_time: np.ndarray
    scale_local_time: np.ndarray
    kernel_width: float
    hit_levels: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hit_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hit_local_time: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    hit_scale_local_time: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    final_time: float = 0.0

    def hitting_time(self, r: float) -> float:
        """First time the path is at or above r (nan if not reached)."""
        k = np.flatnonzero(np.isclose(self.hit_levels, r))
        if k.size:
            return float(self.hit_times[k[0]])
        above = np.flatnonzero(self.positions >= r)
        return float(self.times[above[0]]) if above.size else float("nan")

    def occupation_ratio(self) -> np.ndarray:
        """int L(t, x) dx / t at every recorded time."""
        dx = self.lt_grid[1] - self.lt_grid[0]
        return self.local_time.sum(axis=1) * dx / self.record_times


def simulate_diffusion(
    env: LevyPath,
    t_max: float,
    time_step: float,
    rng: np.random.Generator,
    kernel_width: float | None = None,
    record_times=None,
    stop_levels=None,
    record_every: int = 1,
    lt_window: tuple[float, float] | None = None,
) -> DiffusionTrace:
    """Run the diffusion from 0 until t_max or until every level in stop_levels has been hit.

    Local time is kept on the environment grid restricted to lt_window; kernel_width
    defaults to 4 grid cells so that 2 eps / dx is an integer.
    """
    dx = env.step
    xs = env.grid
    origin = env.index_of(0.0)
    e = np.exp(env.values)
    widths = 0.5 * dx * (e[1:] + e[:-1])
    if kernel_width is None:
        kernel_width = 4 * dx
    lo, hi = (xs[0], xs[-1]) if lt_window is None else lt_window
    lo_idx = max(0, int(math.floor((lo - xs[0]) / dx)))
    hi_idx = min(xs.size - 1, int(math.ceil((hi - xs[0]) / dx)))
    stops = np.sort(np.asarray([] if stop_levels is None else stop_levels, dtype=float))
    stop_hits = np.full(stops.size, np.nan)
    hit_lt = np.zeros((stops.size, hi_idx - lo_idx + 1))
    hit_lt_b = np.zeros_like(hit_lt)
    rec_t = np.sort(np.asarray([t_max] if record_times is None else record_times, dtype=float))
    rec_lt = np.zeros((rec_t.size, hi_idx - lo_idx + 1))
    rec_lt_b = np.zeros_like(rec_lt)
    occ = np.zeros(hi_idx - lo_idx + 1)
    occ_b = np.zeros(hi_idx - lo_idx + 1)
    # e^{-V_j} / (2 width e^{V_j}) turns B-occupation into X local time
    b_scale = np.exp(-2.0 * env.values[lo_idx: hi_idx + 1]) / (2 * kernel_width)
    n_total = int(round(t_max / time_step))
    positions = np.empty(n_total // record_every + 1 if record_every > 0 else 1)
    positions[0] = 0.0
    state = np.array([float(min(origin, xs.size - 2)), 0.0, 0.0, 0.0, 1.0, 0.0])
    rec_k = 0
    done_steps = 0
    while done_steps < n_total:
        # stop each block at the next recording time so snapshots are exact
        next_rec = int(round(rec_t[rec_k] / time_step)) if rec_k < rec_t.size else n_total
        m = min(BLOCK, next_rec - done_steps, n_total - done_steps)
        if m <= 0:
            rec_lt[rec_k] = occ / (2 * kernel_width)
            rec_lt_b[rec_k] = occ_b * b_scale
            rec_k += 1
            continue
        normals = rng.standard_normal(m)
        extra = rng.standard_normal(m // 4 + 16)
        prev_hits = int(state[5])
        code = _walk(xs, env.values, widths, lo_idx, hi_idx, state, normals, extra, time_step, kernel_width,
                     occ, occ_b, stops, stop_hits, record_every, positions)
        done_steps = int(state[3])
        for k in range(prev_hits, int(state[5])):
            hit_lt[k] = occ / (2 * kernel_width)
            hit_lt_b[k] = occ_b * b_scale
        if code == 1:
            side = "left" if state[1] < 0 else "right"
            raise WindowExhausted(f"walker exited the environment window on the {side} at t={state[2]:.4g} "
                                  f"(cell {int(state[0])} of {xs.size - 1})")
        if code == 2:
            break
    while rec_k < rec_t.size and rec_t[rec_k] <= state[2] + 0.5 * time_step:
        rec_lt[rec_k] = occ / (2 * kernel_width)
        rec_lt_b[rec_k] = occ_b * b_scale
        rec_k += 1
    nrec = int(state[4])
    keep = rec_t <= state[2] + 0.5 * time_step
    return DiffusionTrace(
        times=np.arange(nrec) * time_step * max(record_every, 1),
        positions=positions[:nrec].copy(),
        lt_grid=xs[lo_idx: hi_idx + 1].copy(),
        record_times=rec_t[keep],
        local_time=rec_lt[keep],
        scale_local_time=rec_lt_b[keep],
        kernel_width=kernel_width,
        hit_levels=stops,
        hit_times=stop_hits,
        hit_local_time=hit_lt,
        hit_scale_local_time=hit_lt_b,
        final_time=float(state[2]),
    )


def local_time_field(trace: DiffusionTrace, t: float) -> np.ndarray:
    """Local-time profile at a recorded time (nearest snapshot)."""
    k = int(np.argmin(np.abs(trace.record_times - t)))
    return trace.local_time[k]


def hitting_time(trace: DiffusionTrace, r: float) -> float:
    return trace.hitting_time(r)


def sup_before(trace: DiffusionTrace, t: float) -> float:
    """Running maximum of the recorded path up to time t."""
    k = int(np.searchsorted(trace.times, t, side="right"))
    return float(trace.positions[:k].max())


# Ray-Knight local time at hitting times


@numba.njit(cache=True)
def _besq2_log(log_dt, normals):
    """log of a BESQ(2) path from 0 on clock increments exp(log_dt); normals has shape (n, 2)."""
    n = log_dt.size
    out = np.empty(n + 1)
    out[0] = -np.inf
    lz = -np.inf
    for k in range(n):
        lt = log_dt[k]
        m = max(lz, lt)
        rz = math.exp(lz - m)
        rt = math.exp(lt - m)
        u = math.sqrt(rz) + math.sqrt(rt) * normals[k, 0]
        w = u * u + rt * normals[k, 1] * normals[k, 1]
        lz = m + math.log(w) if w > 0 else -np.inf
        out[k + 1] = lz
    return out


def besq2_log_path(log_dt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact BESQ(2) from 0 in log form, stable for clock increments spanning hundreds of e-folds."""
    return _besq2_log(np.ascontiguousarray(log_dt, dtype=float), rng.standard_normal((log_dt.size, 2)))


def log_cell_clock(values: np.ndarray, dx: float, sign: float = 1.0) -> np.ndarray:
    """log of the trapezoid integral of exp(sign V) over each grid cell."""
    v = sign * values
    return math.log(0.5 * dx) + np.logaddexp(v[1:], v[:-1])


@numba.njit(cache=True)
def _besq0(z0, clock, seed):
    np.random.seed(seed)
    out = np.zeros(clock.size + 1)
    out[0] = z0
    z = z0
    for k in range(clock.size):
        if z <= 0.0:
            break
        n = np.random.poisson(z / (2.0 * clock[k]))
        z = 2.0 * clock[k] * np.random.gamma(n) if n > 0 else 0.0
        out[k + 1] = z
    return out


def besq0_from(z0: float, clock: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """BESQ(0) started at z0 on successive clock increments: Poisson mixture of Gammas."""
    seed = int(rng.integers(2**31 - 1))
    return _besq0(float(z0), np.ascontiguousarray(clock, dtype=float), seed)


@dataclass
class HittingProfile:
    """Local time L_X(H(r), x) on the grid [x_left, r] and the hitting time itself."""

    grid: np.ndarray
    local_time: np.ndarray
    hitting_time: float
    truncated: bool


def ray_knight_local_time(env: LevyPath, r: float, rng: np.random.Generator) -> HittingProfile:
    """Sample the local-time profile at H(r) for the diffusion started at 0."""
    dx = env.step
    origin = env.index_of(0.0)
    ir = env.index_of(r)
    vals = env.values
    # BESQ(2) from 0 swept from r back to the start, in natural-scale units
    right = vals[origin: ir + 1][::-1]
    lz = besq2_log_path(log_cell_clock(right, dx), rng)
    lt_right = np.exp(lz - right)[::-1]
    # BESQ(0) to the left of the start, clock = natural scale increments
    left = vals[: origin + 1][::-1]
    clock = np.exp(log_cell_clock(left, dx))
    z0 = lt_right[0] * math.exp(vals[origin])
    z = besq0_from(z0, clock, rng)
    lt_left = (z * np.exp(-left))[::-1]
    truncated = bool(z[-1] > 0)
    profile = np.concatenate((lt_left[:-1], lt_right))
    grid = env.grid[: ir + 1]
    h = float(np.sum(0.5 * dx * (profile[1:] + profile[:-1])))
    return HittingProfile(grid, profile, h, truncated)


# Grid-embedded walk: the diffusion watched at successive hits of grid nodes


@numba.njit(cache=True)
def _grid_walk(p_right, start, target, visits, uniforms, state):
    k = int(state[0])
    for i in range(uniforms.size):
        if k == target:
            state[0] = k
            return 2
        if k == 0:
            state[0] = k
            return 1
        visits[k] += 1
        if uniforms[i] < p_right[k]:
            k += 1
        else:
            k -= 1
    state[0] = k
    return 2 if k == target else 0


def grid_walk_local_time(env: LevyPath, r: float, rng: np.random.Generator) -> HittingProfile:
    """Local time at H(r) on grid nodes, sampled exactly from the embedded nearest-neighbour walk.

    In natural scale the walk steps right from node k with probability
    (a_k - a_{k-1}) / (a_{k+1} - a_{k-1}); each visit adds an exponential amount of Brownian local
    time with mean 2 (a_k - a_{k-1})(a_{k+1} - a_k) / (a_{k+1} - a_{k-1}).
    """
    dx = env.step
    origin = env.index_of(0.0)
    ir = env.index_of(r)
    e = np.exp(env.values[: ir + 1])
    widths = 0.5 * dx * (e[1:] + e[:-1])
    left = widths[:-1]
    right = widths[1:]
    p_right = np.zeros(ir + 1)
    p_right[1:ir] = left / (left + right)
    mean_lt = np.zeros(ir + 1)
    mean_lt[1:ir] = 2.0 * left * right / (left + right)
    visits = np.zeros(ir + 1, dtype=np.int64)
    state = np.array([float(origin)])
    while True:
        code = _grid_walk(p_right, origin, ir, visits, rng.uniform(size=BLOCK), state)
        if code == 1:
            raise WindowExhausted("embedded walk reached the left end of the window")
        if code == 2:
            break
    lt_b = np.zeros(ir + 1)
    hit = visits > 0
    lt_b[hit] = rng.gamma(visits[hit]) * mean_lt[hit]
    profile = lt_b * np.exp(-env.values[: ir + 1])
    h = float(np.sum(0.5 * dx * (profile[1:] + profile[:-1])))
    return HittingProfile(env.grid[: ir + 1], profile, h, False)
