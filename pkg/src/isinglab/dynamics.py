"""The Gibbs sampler: discrete/continuous runs, monotone grand coupling,
censoring schedules, and disagreement-decay measurement.

The hot path is a compiled kernel applying shared (vertex, uniform) update
pairs to the all-+ and all-- chains at once while maintaining a disagreement
counter, so coupling detection is O(1) per update.  Continuous time is
realized by drawing a Poisson number of uniform-site updates per interval,
which has the same law as per-site rate-1 clocks.

Censoring comparisons run in exact rational arithmetic on instances with at
most a few free vertices: the Gibbs weights are rationalized once, every
update probability is then an exact fraction, and stochastic dominance in
the partial order (up-set mass dominance) is decided with zero tolerance.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit

from .errors import SizeCapError
from .graphs import CLAMP_FREE, IsingInstance
from .rng import stream
from .stats import wilson_interval

__all__ = [
    "ChainState",
    "UpdateSchedule",
    "CouplingTrace",
    "DecayCurve",
    "CensoringReport",
    "initial_state",
    "step_discrete",
    "run_discrete",
    "run_continuous",
    "grand_coupling_run",
    "apply_update_stream",
    "censoring_dominance_check",
    "disagreement_decay",
    "discrete_from_continuous_bound",
    "geometric_checkpoints",
]


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _heat_bath_p(s):
    # overflow-free logistic(2s)
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-2.0 * s))
    e = math.exp(2.0 * s)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _coupled_block(xp, xm, vs, us, mask, indptr, indices, weights, h, clamp, dis):
    """Shared updates on both chains; returns (dis, coupled_at, sandwich_ok).

    coupled_at is the in-block index of the update after which the
    disagreement count reached zero, or -1.  Processing stops there: both
    chains receive identical updates forever after.
    """
    coupled_at = -1
    sandwich_ok = True
    for i in range(vs.shape[0]):
        v = vs[i]
        if mask[v] == 0 or clamp[v] != 0:
            continue
        sp = h[v]
        sm = h[v]
        for t in range(indptr[v], indptr[v + 1]):
            u = indices[t]
            w = weights[t]
            sp += w * xp[u]
            sm += w * xm[u]
        u01 = us[i]
        was = xp[v] != xm[v]
        xp[v] = 1 if u01 <= _heat_bath_p(sp) else -1
        xm[v] = 1 if u01 <= _heat_bath_p(sm) else -1
        if xp[v] < xm[v]:
            sandwich_ok = False
        now = xp[v] != xm[v]
        if now and not was:
            dis += 1
        elif was and not now:
            dis -= 1
        if dis == 0:
            coupled_at = i
            break
    return dis, coupled_at, sandwich_ok


@njit(cache=True, nogil=True)
def _single_block(x, vs, us, mask, indptr, indices, weights, h, clamp):
    for i in range(vs.shape[0]):
        v = vs[i]
        if mask[v] == 0 or clamp[v] != 0:
            continue
        s = h[v]
        for t in range(indptr[v], indptr[v + 1]):
            s += weights[t] * x[indices[t]]
        x[v] = 1 if us[i] <= _heat_bath_p(s) else -1


# ---------------------------------------------------------------------------
# Chain state and elementary runs
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    """Mutable state of one chain; clamped vertices never change sign."""

    spins: np.ndarray
    steps: int = 0
    time: float = 0.0


def initial_state(instance: IsingInstance, start="plus", rng=None) -> ChainState:
    """Fresh chain from 'plus', 'minus', 'random' or an explicit +-1 array."""
    n = instance.n
    if isinstance(start, str):
        if start == "plus":
            spins = np.ones(n, dtype=np.int8)
        elif start == "minus":
            spins = -np.ones(n, dtype=np.int8)
        elif start == "random":
            if rng is None:
                raise ValueError("random start needs an rng")
            spins = (2 * rng.integers(0, 2, size=n) - 1).astype(np.int8)
        else:
            raise ValueError(f"unknown start {start!r}")
    else:
        spins = np.asarray(start, dtype=np.int8).copy()
        if spins.shape != (n,) or not np.all(np.abs(spins) == 1):
            raise ValueError("explicit start must be a +-1 vector of length n")
    frozen = instance.clamp != CLAMP_FREE
    spins[frozen] = instance.clamp[frozen]
    return ChainState(spins=spins)


def _full_mask(n):
    return np.ones(n, dtype=np.uint8)


def step_discrete(state: ChainState, instance: IsingInstance, rng) -> ChainState:
    """One heat-bath update at a uniformly chosen vertex (clamps are no-ops)."""
    vs = rng.integers(0, instance.n, size=1, dtype=np.int64)
    us = rng.random(1)
    g = instance.graph
    _single_block(state.spins, vs, us, _full_mask(instance.n),
                  g.indptr, g.indices, instance.weights, instance.h, instance.clamp)
    state.steps += 1
    return state


def run_discrete(state: ChainState, instance: IsingInstance, steps: int, rng,
                 block: int = 8192) -> ChainState:
    g = instance.graph
    mask = _full_mask(instance.n)
    left = int(steps)
    while left > 0:
        chunk = min(left, block)
        vs = rng.integers(0, instance.n, size=chunk, dtype=np.int64)
        us = rng.random(chunk)
        _single_block(state.spins, vs, us, mask, g.indptr, g.indices,
                      instance.weights, instance.h, instance.clamp)
        left -= chunk
        state.steps += chunk
    return state


def run_continuous(state: ChainState, instance: IsingInstance, t: float,
                   rng, block: int = 8192) -> ChainState:
    """Advance continuous time t: Poisson(n t) uniform-site updates."""
    if t < 0:
        raise ValueError("duration must be nonnegative")
    m = int(rng.poisson(instance.n * t)) if t > 0 else 0
    run_discrete(state, instance, m, rng, block=block)
    state.time += t
    return state


def apply_update_stream(instance: IsingInstance, spins: np.ndarray,
                        vs: np.ndarray, us: np.ndarray) -> np.ndarray:
    """Apply a recorded (vertex, uniform) stream to a copy of ``spins``."""
    x = np.asarray(spins, dtype=np.int8).copy()
    g = instance.graph
    _single_block(x, np.asarray(vs, dtype=np.int64), np.asarray(us, dtype=np.float64),
                  _full_mask(instance.n), g.indptr, g.indices,
                  instance.weights, instance.h, instance.clamp)
    return x


# ---------------------------------------------------------------------------
# Schedules and the grand coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UpdateSchedule:
    """Run plan: mode, horizon and censor windows.

    A window (t_start, allowed) censors every update at a vertex outside
    ``allowed`` from t_start until the next window starts (or the horizon).
    Before the first window all updates are allowed.  In discrete mode times
    are update counts, in continuous mode they are real times.
    """

    mode: str
    horizon: float
    censor_windows: tuple = ()

    def __post_init__(self):
        if self.mode not in ("discrete", "continuous"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        starts = [t for t, _ in self.censor_windows]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("censor windows must be time-ordered and disjoint")

    def mask_at(self, t: float, n: int) -> np.ndarray:
        mask = _full_mask(n)
        active = None
        for start, allowed in self.censor_windows:
            if t >= start:
                active = allowed
            else:
                break
        if active is not None:
            mask[:] = 0
            for v in active:
                mask[int(v)] = 1
        return mask


@dataclass(frozen=True)
class CouplingTrace:
    """Outcome of one monotone grand-coupling run."""

    mode: str
    checkpoints: tuple
    disagreements: tuple
    coupling_time: float | None
    coupled: bool
    censored_at_horizon: bool
    sandwich_ok: bool
    n_updates: int
    per_vertex: np.ndarray | None = None   # (len(checkpoints), n) bool
    update_stream: tuple | None = None     # (vs, us) when recorded


def geometric_checkpoints(horizon: float, first: float = 1.0,
                          factor: float = 2.0) -> tuple:
    """Geometric grid first, 2*first, ... capped and terminated at horizon."""
    pts = []
    t = first
    while t < horizon:
        pts.append(t)
        t *= factor
    pts.append(horizon)
    return tuple(pts)


def grand_coupling_run(instance: IsingInstance, schedule: UpdateSchedule,
                       seed: int, replica: int = 0, checkpoints=None,
                       record_per_vertex: bool = False,
                       record_stream: bool = False,
                       block: int = 8192) -> CouplingTrace:
    """Run X+ from all-+ and X- from all-- on one shared update stream.

    Censored updates are skipped by both chains but still consume their
    (vertex, uniform) draw, so a censored run and its full-schedule partner
    with the same seed share the identical stream.  In continuous mode the
    coupling time within a segment is linearly interpolated across that
    segment's updates.
    """
    n = instance.n
    g = instance.graph
    rng = stream(seed, f"couple/{schedule.mode}", replica)
    if checkpoints is None:
        checkpoints = geometric_checkpoints(schedule.horizon)
    checkpoints = tuple(float(c) if schedule.mode == "continuous" else int(c)
                        for c in checkpoints)
    if any(c <= 0 or c > schedule.horizon for c in checkpoints):
        raise ValueError("checkpoints must lie in (0, horizon]")

    xp = initial_state(instance, "plus").spins
    xm = initial_state(instance, "minus").spins
    dis = int(np.count_nonzero(xp != xm))
    already_coupled = dis == 0  # every vertex clamped

    breakpoints = sorted(set(checkpoints)
                         | {t for t, _ in schedule.censor_windows if 0 < t < schedule.horizon}
                         | {schedule.horizon})
    checkpoint_set = set(checkpoints)

    disagreements = []
    per_vertex = [] if record_per_vertex else None
    streams = [] if record_stream else None
    sandwich_ok = True
    coupled_time = 0.0 if already_coupled else None
    n_updates = 0
    pos = 0.0

    for end in breakpoints:
        seg = end - pos
        if seg > 0 and coupled_time is None and dis > 0:
            mask = schedule.mask_at(pos, n)
            if schedule.mode == "discrete":
                m_seg = int(round(seg))
            else:
                m_seg = int(rng.poisson(n * seg))
            done = 0
            while done < m_seg:
                chunk = min(block, m_seg - done)
                vs = rng.integers(0, n, size=chunk, dtype=np.int64)
                us = rng.random(chunk)
                if streams is not None:
                    streams.append((vs, us))
                dis, coupled_at, ok = _coupled_block(
                    xp, xm, vs, us, mask, g.indptr, g.indices,
                    instance.weights, instance.h, instance.clamp, dis)
                sandwich_ok = sandwich_ok and ok
                if coupled_at >= 0:
                    applied = done + coupled_at + 1
                    n_updates += applied
                    if schedule.mode == "discrete":
                        coupled_time = pos + applied
                    else:
                        coupled_time = pos + seg * applied / m_seg
                    break
                done += chunk
                n_updates += chunk
        pos = end
        if end in checkpoint_set:
            disagreements.append(dis)
            if not np.all(xp >= xm):
                sandwich_ok = False
            if per_vertex is not None:
                per_vertex.append(xp != xm)

    coupled = coupled_time is not None
    return CouplingTrace(
        mode=schedule.mode,
        checkpoints=checkpoints,
        disagreements=tuple(disagreements),
        coupling_time=coupled_time,
        coupled=coupled,
        censored_at_horizon=not coupled,
        sandwich_ok=sandwich_ok,
        n_updates=n_updates,
        per_vertex=np.array(per_vertex) if per_vertex is not None else None,
        update_stream=(np.concatenate([v for v, _ in streams]) if streams else np.empty(0, np.int64),
                       np.concatenate([u for _, u in streams]) if streams else np.empty(0)) if streams is not None else None,
    )


# ---------------------------------------------------------------------------
# Censoring dominance
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _up_sets(k: int) -> tuple:
    """All upward-closed subsets of {-1,+1}^k, as bitmasks over 2^k states."""
    m = 1 << k
    ups = []
    for mask in range(1 << m):
        ok = True
        for s in range(m):
            if mask >> s & 1:
                for b in range(k):
                    t = s | (1 << b)
                    if not (mask >> t & 1):
                        ok = False
                        break
                if not ok:
                    break
        if ok:
            ups.append(mask)
    return tuple(ups)


def _rational_ratio_tables(instance: IsingInstance, free, precision=10 ** 12):
    """Per free vertex v: constant odds factor and per-free-neighbor factors.

    p_v(+ | neighborhood) = rho/(1+rho) with
    rho = base_v * prod over free neighbors u of fac_{v,u}^{sigma_u},
    everything an exact Fraction (whose weights approximate exp once).
    """
    pos = {int(v): i for i, v in enumerate(free)}
    base = []
    facs = []
    g = instance.graph
    for v in free:
        v = int(v)
        b0 = Fraction(math.exp(2.0 * instance.h[v])).limit_denominator(precision)
        f = {}
        for t in range(g.indptr[v], g.indptr[v + 1]):
            u = int(g.indices[t])
            w = float(instance.weights[t])
            r = max(Fraction(math.exp(2.0 * w)).limit_denominator(precision),
                    Fraction(1))  # ferromagnetic: never below 1
            if instance.clamp[u] != CLAMP_FREE:
                b0 = b0 * r if instance.clamp[u] > 0 else b0 / r
            else:
                f[pos[u]] = r
        base.append(b0)
        facs.append(f)
    return base, facs


def _evolve_exact(base, facs, k, sequence, free_pos, start_plus):
    """Evolve the exact 2^k distribution under a deterministic site sequence."""
    m = 1 << k
    dist = [Fraction(0)] * m
    dist[m - 1 if start_plus else 0] = Fraction(1)
    for v in sequence:
        b = free_pos.get(int(v))
        if b is None:
            continue  # clamped site: the update is a no-op
        bit = 1 << b
        new = [Fraction(0)] * m
        for s in range(m):
            if s & bit:
                continue
            mass = dist[s] + dist[s | bit]
            if mass == 0:
                continue
            rho = base[b]
            for j, r in facs[b].items():
                rho = rho * r if s >> j & 1 else rho / r
            p_plus = rho / (1 + rho)
            new[s | bit] += mass * p_plus
            new[s] += mass * (1 - p_plus)
        dist = new
    return dist


def _dominates(hi, lo, ups, m):
    """hi stochastically dominates lo: every up-set has at least as much mass."""
    for mask in ups:
        a = sum(hi[s] for s in range(m) if mask >> s & 1)
        b = sum(lo[s] for s in range(m) if mask >> s & 1)
        if a < b:
            return False
    return True


@dataclass(frozen=True)
class CensoringReport:
    mode: str
    dominance_ok: bool
    chain_ok: bool                 # Y- <= X- <= X+ <= Y+ in the up-set order
    magnetizations: dict           # label -> per-free-vertex E[sigma]
    details: dict


def _is_subsequence(sub, full) -> bool:
    it = iter(full)
    return all(any(x == y for y in it) for x in sub)


def censoring_dominance_check(instance: IsingInstance, seq_full, seq_sub,
                              mode: str = "exact", free_cap: int = 4,
                              replicas: int = 2000, seed: int = 0) -> CensoringReport:
    """Check that dropping updates keeps extremal chains more extremal.

    X runs the full sequence, Y the subsequence, both deterministic site
    sequences from the all-+ and all-- starts.  Exact mode evolves the full
    distribution in rational arithmetic and decides up-set dominance
    Y- <= X- <= X+ <= Y+ with zero tolerance; sampling mode estimates
    per-vertex magnetizations with Wilson intervals instead.
    """
    seq_full = [int(v) for v in seq_full]
    seq_sub = [int(v) for v in seq_sub]
    if not _is_subsequence(seq_sub, seq_full):
        raise ValueError("censored sequence is not a subsequence of the full one")
    free = instance.free_vertices
    if mode == "exact":
        k = len(free)
        if k > free_cap:
            raise SizeCapError(f"{k} free vertices exceeds exact-mode cap {free_cap}")
        base, facs = _rational_ratio_tables(instance, free)
        free_pos = {int(v): i for i, v in enumerate(free)}
        m = 1 << k
        runs = {
            "X+": _evolve_exact(base, facs, k, seq_full, free_pos, True),
            "X-": _evolve_exact(base, facs, k, seq_full, free_pos, False),
            "Y+": _evolve_exact(base, facs, k, seq_sub, free_pos, True),
            "Y-": _evolve_exact(base, facs, k, seq_sub, free_pos, False),
        }
        ups = _up_sets(k)
        pair_ok = {
            "Y+>=X+": _dominates(runs["Y+"], runs["X+"], ups, m),
            "X+>=X-": _dominates(runs["X+"], runs["X-"], ups, m),
            "X->=Y-": _dominates(runs["X-"], runs["Y-"], ups, m),
        }
        mags = {}
        for label, dist in runs.items():
            mags[label] = [float(sum(dist[s] * (1 if s >> b & 1 else -1)
                                     for s in range(m))) for b in range(k)]
        chain_ok = all(pair_ok.values())
        mag_chain_ok = all(
            mags["Y+"][b] >= mags["X+"][b] - 0.0 and
            mags["X+"][b] >= mags["X-"][b] - 0.0 and
            mags["X-"][b] >= mags["Y-"][b] - 0.0
            for b in range(k))
        return CensoringReport(mode="exact", dominance_ok=chain_ok and mag_chain_ok,
                               chain_ok=chain_ok, magnetizations=mags,
                               details={"pairs": pair_ok})
    if mode != "sampling":
        raise ValueError(f"unknown mode {mode!r}")

    def estimate(seq, start_plus, tag):
        acc = np.zeros(instance.n, dtype=np.int64)
        vs = np.asarray(seq, dtype=np.int64)
        for rep in range(replicas):
            rng = stream(seed, f"censor/{tag}", rep)
            x = initial_state(instance, "plus" if start_plus else "minus").spins
            us = rng.random(len(seq))
            g = instance.graph
            _single_block(x, vs, us, _full_mask(instance.n), g.indptr, g.indices,
                          instance.weights, instance.h, instance.clamp)
            acc += x
        return acc / replicas

    mags = {
        "X+": estimate(seq_full, True, "X+"),
        "X-": estimate(seq_full, False, "X-"),
        "Y+": estimate(seq_sub, True, "Y+"),
        "Y-": estimate(seq_sub, False, "Y-"),
    }
    half = 2.0 * 1.96 / math.sqrt(replicas)  # magnetization CI half-width bound
    chain_ok = bool(
        np.all(mags["Y+"] >= mags["X+"] - half)
        and np.all(mags["X+"] >= mags["X-"] - half)
        and np.all(mags["X-"] >= mags["Y-"] - half))
    return CensoringReport(mode="sampling", dominance_ok=chain_ok, chain_ok=chain_ok,
                           magnetizations={k_: v.tolist() for k_, v in mags.items()},
                           details={"replicas": replicas, "ci_half": half})


# ---------------------------------------------------------------------------
# Disagreement decay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayCurve:
    times: tuple
    estimate: tuple       # max over vertices of P(X+_t(u) != X-_t(u))
    wilson_lo: tuple
    wilson_hi: tuple
    replicas: int


def disagreement_decay(instance: IsingInstance, checkpoint_times, replicas: int,
                       seed: int, horizon: float | None = None) -> DecayCurve:
    """Estimate max_u P(X+_t(u) != X-_t(u)) at each checkpoint (continuous time)."""
    if replicas < 30:
        raise ValueError("need at least 30 replicas")
    times = tuple(sorted(float(t) for t in checkpoint_times))
    horizon = horizon if horizon is not None else times[-1]
    schedule = UpdateSchedule(mode="continuous", horizon=horizon)
    counts = np.zeros((len(times), instance.n), dtype=np.int64)
    for rep in range(replicas):
        trace = grand_coupling_run(instance, schedule, seed, replica=rep,
                                   checkpoints=times, record_per_vertex=True)
        counts += trace.per_vertex
    est, lo, hi = [], [], []
    for i in range(len(times)):
        u_star = int(np.argmax(counts[i]))
        c = int(counts[i, u_star])
        w = wilson_interval(c, replicas)
        est.append(c / replicas)
        lo.append(w[0])
        hi.append(w[1])
    return DecayCurve(times=times, estimate=tuple(est), wilson_lo=tuple(lo),
                      wilson_hi=tuple(hi), replicas=replicas)


def discrete_from_continuous_bound(t_cont: float, n: int) -> int:
    """ceil(5 T n): discrete mixing bound from a continuous coupling bound T >= 1."""
    if t_cont < 1.0:
        raise ValueError("the conversion requires a continuous bound T >= 1")
    if n < 1:
        raise ValueError("n must be positive")
    return int(math.ceil(5.0 * t_cont * n - 1e-9))
