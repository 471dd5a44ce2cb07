"""Exact continuous-time simulation of the two equilibrium processes.

Both engines are pure-jump chains simulated by thinning: propose at an
a-priori bound on the total rate, accept with the ratio of true to bounding
rate.  For a positive potential at s=0 the energy factors are <= 1 and the
bound is exact without any cap; otherwise the model's rate_cap caps them and
any violation aborts the run (the regime is then unsupported).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Optional, Sequence

import numpy as np

from . import kernels
from .geometry import wrap
from .model import Configuration, ModelSpec, RateBoundError, total_energy
from .stats import Estimate, batch_means

__all__ = [
    "Event", "Trajectory", "DynamicsSpec", "run_kawasaki", "run_glauber",
    "detailed_balance_audit", "stationarity_audit",
    "DetailedBalanceReport", "StationarityReport",
]


@dataclass(frozen=True)
class Event:
    time: float
    kind: Literal["jump", "birth", "death"]
    x: tuple[float, ...]
    y: Optional[tuple[float, ...]] = None  # jump target


@dataclass
class Trajectory:
    """Time-stamped event record of one continuous-time run.

    `events` is None when only snapshots were recorded.  Replaying the events
    validates structural consistency (no death of an absent particle, no
    duplicate birth, strictly increasing times).
    """

    initial: Configuration
    final_time: float
    events: Optional[list[Event]] = None
    snapshots: list[tuple[float, Configuration]] = field(default_factory=list)

    @property
    def n_events(self) -> int:
        return len(self.events) if self.events is not None else -1

    def _find(self, rows: list, x: tuple) -> int:
        matches = [i for i, r in enumerate(rows) if r == x]
        if len(matches) != 1:
            raise AssertionError(
                f"replay: expected exactly one particle at {x}, found {len(matches)}")
        return matches[0]

    def segments(self) -> Iterator[tuple[float, float, np.ndarray]]:
        """Yield (t0, t1, points) over the piecewise-constant path."""
        if self.events is None:
            raise ValueError("trajectory was recorded snapshots-only")
        rows = [tuple(p) for p in self.initial.points]
        t_prev = 0.0
        for ev in self.events:
            if not ev.time > t_prev:
                raise AssertionError("event times must be strictly increasing")
            yield t_prev, ev.time, np.asarray(rows, dtype=float).reshape(-1, self.initial.dom.d)
            if ev.kind == "jump":
                rows[self._find(rows, ev.x)] = ev.y
            elif ev.kind == "death":
                rows.pop(self._find(rows, ev.x))
            else:  # birth
                if any(r == ev.x for r in rows):
                    raise AssertionError(f"replay: duplicate birth at {ev.x}")
                rows.append(ev.x)
            t_prev = ev.time
        yield t_prev, self.final_time, np.asarray(rows, dtype=float).reshape(
            -1, self.initial.dom.d)

    def replay(self) -> Configuration:
        """Validate the whole event list; return the final configuration."""
        last = self.initial.points
        for _, _, pts in self.segments():
            last = pts
        return Configuration(last, self.initial.dom)

    def states_at(self, times: Sequence[float]) -> list[Configuration]:
        """Right-continuous states at the given times."""
        if self.events is None:
            out = []
            for t in times:
                hits = [c for ts, c in self.snapshots
                        if abs(ts - t) <= 1e-9 * max(1.0, abs(t))]
                if not hits:
                    raise KeyError(f"snapshot for time {t} was not recorded")
                out.append(hits[0])
            return out
        segs = list(self.segments())
        starts = [s[0] for s in segs]
        out = []
        for t in times:
            if not 0.0 <= t <= self.final_time:
                raise ValueError(f"time {t} outside [0, {self.final_time}]")
            idx = bisect.bisect_right(starts, t) - 1
            out.append(Configuration(segs[idx][2], self.initial.dom))
        return out


@dataclass(frozen=True)
class DynamicsSpec:
    """Which engine to run, for how long, and what to record."""

    model: ModelSpec
    engine: Literal["kawasaki", "glauber"]
    horizon: float
    alpha: Optional[float] = None           # required for glauber
    record: Literal["events", "snapshots"] = "events"
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.engine not in ("kawasaki", "glauber"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "glauber" and not (self.alpha and self.alpha > 0):
            raise ValueError("glauber dynamics needs alpha > 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if any(t < 0 or t > self.horizon for t in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, horizon]")


class _Snapshots:
    def __init__(self, times: Sequence[float], dom):
        self.times = sorted(times)
        self.dom = dom
        self.idx = 0
        self.taken: list[tuple[float, Configuration]] = []

    def advance(self, t_event: float, pts: np.ndarray) -> None:
        """Record all pending snapshot times strictly before t_event."""
        while self.idx < len(self.times) and self.times[self.idx] < t_event:
            self.taken.append((self.times[self.idx],
                               Configuration(pts.copy(), self.dom)))
            self.idx += 1

    def finish(self, pts: np.ndarray) -> None:
        while self.idx < len(self.times):
            self.taken.append((self.times[self.idx],
                               Configuration(pts.copy(), self.dom)))
            self.idx += 1


def _energy_factor(e_x: float, e_y: float, s: float) -> float:
    if math.isinf(e_y) or math.isinf(e_x):
        return 0.0
    arg = s * e_x - (1.0 - s) * e_y
    return math.exp(arg) if arg < 700.0 else math.inf


def run_kawasaki(gamma0: Configuration, spec: DynamicsSpec, seed) -> Trajectory:
    """Hop process: propose per-particle at rate cap * mass(a), draw the
    target from the scaled kernel itself, accept with (energy factor)/cap.

    Particle number is conserved along the trajectory.
    """
    if spec.engine != "kawasaki":
        raise ValueError("spec.engine must be 'kawasaki'")
    m = spec.model
    rng = np.random.default_rng(seed)
    pts = gamma0.points.copy()
    n = len(pts)
    kid, kp, L = m.phi.kind_id, m.phi.kernel_params, m.dom.L
    cap = m.thinning_cap
    keep_events = spec.record == "events"
    events: list[Event] = []
    snaps = _Snapshots(spec.snapshot_times, m.dom)
    t = 0.0
    if n > 0:
        inv_rate = 1.0 / (n * cap * m.a.mass)
        while True:
            t += rng.exponential(inv_rate)
            if t > spec.horizon:
                break
            i = int(rng.integers(n))
            disp = m.a.sample(rng, 1)[0] / m.eps
            y = wrap(pts[i] + disp, m.dom)
            e_x = kernels.rel_energy_excl(pts, i, pts[i], L, kid, kp)
            e_y = kernels.rel_energy_excl(pts, i, y, L, kid, kp)
            factor = _energy_factor(e_x, e_y, m.s)
            if factor > cap * (1.0 + 1e-9):
                raise RateBoundError(
                    f"hop energy factor {factor:.3e} exceeded the thinning cap "
                    f"{cap:.3e} at t={t:.4g}")
            if rng.random() < factor / cap:
                snaps.advance(t, pts)
                if keep_events:
                    events.append(Event(t, "jump", tuple(pts[i]), tuple(y)))
                pts[i] = y
    snaps.finish(pts)
    return Trajectory(gamma0.copy(), spec.horizon,
                      events if keep_events else None, snaps.taken)


def run_glauber(gamma0: Configuration, spec: DynamicsSpec, seed) -> Trajectory:
    """Birth-death process: deaths proposed at alpha*cap per particle, births
    at alpha*z*cap*V total (uniform location), accepted with factor/cap."""
    if spec.engine != "glauber":
        raise ValueError("spec.engine must be 'glauber'")
    m = spec.model
    alpha = float(spec.alpha)
    rng = np.random.default_rng(seed)
    d, L = m.dom.d, m.dom.L
    V = m.dom.volume
    n = len(gamma0)
    buf = np.zeros((max(64, 4 * n, int(8 * m.z * V) + 8), d))
    buf[:n] = gamma0.points
    kid, kp = m.phi.kind_id, m.phi.kernel_params
    cap = m.thinning_cap
    s = m.s
    keep_events = spec.record == "events"
    events: list[Event] = []
    snaps = _Snapshots(spec.snapshot_times, m.dom)
    t = 0.0
    while True:
        death_bound = alpha * cap * n
        birth_bound = alpha * m.z * cap * V
        lam = death_bound + birth_bound
        t += rng.exponential(1.0 / lam)
        if t > spec.horizon:
            break
        if rng.random() * lam < death_bound:
            i = int(rng.integers(n))
            e = kernels.rel_energy_excl(buf[:n], i, buf[i], L, kid, kp)
            factor = 1.0 if (s == 0.0) else (
                0.0 if math.isinf(e) else
                (math.exp(s * e) if s * e < 700.0 else math.inf))
            if factor > cap * (1.0 + 1e-9):
                raise RateBoundError(
                    f"death energy factor {factor:.3e} exceeded the cap at t={t:.4g}")
            if rng.random() < factor / cap:
                snaps.advance(t, buf[:n])
                if keep_events:
                    events.append(Event(t, "death", tuple(buf[i])))
                buf[i] = buf[n - 1]
                n -= 1
        else:
            x = rng.random(d) * L
            e = kernels.rel_energy(buf[:n], x, L, kid, kp)
            factor = 0.0 if math.isinf(e) else (
                math.exp(-(1.0 - s) * e) if -(1.0 - s) * e < 700.0 else math.inf)
            if factor > cap * (1.0 + 1e-9):
                raise RateBoundError(
                    f"birth energy factor {factor:.3e} exceeded the cap at t={t:.4g}")
            if rng.random() < factor / cap:
                snaps.advance(t, buf[:n])
                if keep_events:
                    events.append(Event(t, "birth", tuple(x)))
                if n == buf.shape[0]:
                    grown = np.zeros((2 * n, d))
                    grown[:n] = buf
                    buf = grown
                buf[n] = x
                n += 1
    snaps.finish(buf[:n])
    return Trajectory(gamma0.copy(), spec.horizon,
                      events if keep_events else None, snaps.taken)


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------

@dataclass
class DetailedBalanceReport:
    n_cases: int
    max_residual_kawasaki: float
    max_residual_glauber: float
    tolerance: float = 1e-10

    @property
    def passed(self) -> bool:
        return (self.max_residual_kawasaki <= self.tolerance
                and self.max_residual_glauber <= self.tolerance)


def _rel_residual(lhs: float, rhs: float) -> float:
    big = max(abs(lhs), abs(rhs))
    if big == 0.0:
        return 0.0
    return abs(lhs - rhs) / big


def detailed_balance_audit(model: ModelSpec, n_cases: int, seed) -> DetailedBalanceReport:
    """Check the exact rate symmetries that make the Gibbs measure invariant.

    For random (gamma, x, y): e^{-U(gamma)} c(x->y) must equal
    e^{-U(gamma')} c(y->x) with gamma' = gamma\\x + y, and
    z^{|gamma|} e^{-U(gamma)} death(x) must equal
    z^{|gamma|-1} e^{-U(gamma\\x)} birth(x).  Both computed from independent
    energy evaluations, so floating arithmetic is genuinely exercised.
    """
    rng = np.random.default_rng(seed)
    dom = model.dom
    kid, kp, L = model.phi.kind_id, model.phi.kernel_params, dom.L
    alpha = 1.0  # cancels in the residual; any positive value works
    worst_k = 0.0
    worst_g = 0.0
    for _ in range(n_cases):
        n = 1 + rng.poisson(max(model.z * dom.volume, 2.0))
        pts = rng.random((n, dom.d)) * L
        i = int(rng.integers(n))
        if rng.random() < 0.7:  # mostly in kernel range so rates are nonzero
            y = wrap(pts[i] + model.a.sample(rng, 1)[0] / model.eps, dom)
        else:
            y = rng.random(dom.d) * L

        # hop symmetry
        eta = np.delete(pts, i, axis=0)
        e_x = kernels.rel_energy(eta, pts[i], L, kid, kp)
        e_y = kernels.rel_energy(eta, y, L, kid, kp)
        u_gamma = kernels.total_energy(pts, L, kid, kp)
        pts_after = pts.copy()
        pts_after[i] = y
        u_after = kernels.total_energy(pts_after, L, kid, kp)
        f_xy = _energy_factor(e_x, e_y, model.s)
        f_yx = _energy_factor(e_y, e_x, model.s)
        if math.isfinite(f_xy) and math.isfinite(f_yx):
            lhs = math.exp(-u_gamma) * f_xy if math.isfinite(u_gamma) else 0.0
            rhs = math.exp(-u_after) * f_yx if math.isfinite(u_after) else 0.0
            worst_k = max(worst_k, _rel_residual(lhs, rhs))

        # birth-death symmetry at the same x; every hard-core overlap makes
        # both sides vanish under the explicit exp(-inf)=0 conventions
        u_minus = kernels.total_energy(eta, L, kid, kp)
        if math.isinf(e_x) or math.isinf(u_gamma) or math.isinf(u_minus):
            worst_g = max(worst_g, _rel_residual(0.0, 0.0))
        else:
            death_side = model.z**n * math.exp(-u_gamma) * alpha * math.exp(model.s * e_x)
            birth_side = (model.z**(n - 1) * math.exp(-u_minus)
                          * alpha * model.z * math.exp(-(1.0 - model.s) * e_x))
            worst_g = max(worst_g, _rel_residual(death_side, birth_side))
    return DetailedBalanceReport(n_cases, worst_k, worst_g)


@dataclass
class StationarityEntry:
    name: str
    dynamics: Estimate
    gibbs: Estimate
    z_score: float


@dataclass
class StationarityReport:
    engine: str
    entries: list[StationarityEntry]

    @property
    def passed(self) -> bool:
        return all(abs(e.z_score) < 3.0 for e in self.entries)


def _time_averages(traj: Trajectory, model: ModelSpec, edges: np.ndarray):
    """Time-weighted density, energy density and pair histogram of one path."""
    dom = model.dom
    kid, kp = model.phi.kind_id, model.phi.kernel_params
    dens = 0.0
    en = 0.0
    hist = np.zeros(len(edges) - 1)
    total = 0.0
    for t0, t1, pts in traj.segments():
        dt = t1 - t0
        if dt <= 0:
            continue
        total += dt
        dens += dt * len(pts) / dom.volume
        en += dt * kernels.total_energy(pts, dom.L, kid, kp) / dom.volume
        hist += dt * kernels.pair_dist_hist(pts, dom.L, edges)
    return dens / total, en / total, hist / total


def stationarity_audit(model: ModelSpec, engine: str, T: float, seed,
                       alpha: Optional[float] = None, n_replicas: int = 48,
                       n_gibbs: int = 2000, burn_in: int = 3000,
                       k2_bins: int = 6) -> StationarityReport:
    """Start replicas from Gibbs samples, run each for time T, and compare
    time-averaged observables with direct Gibbs estimates at 3 sigma.

    Density is audited for the birth-death engine only (the hop dynamics
    conserves particle number, so its density match is vacuous); energy and
    pair statistics are audited for both.
    """
    from .gibbs import estimate_k1, sample_gibbs  # cycle guard

    root = np.random.SeedSequence(seed)
    s_gibbs, s_init, s_dyn = root.spawn(3)
    samples = sample_gibbs(model, n_gibbs, burn_in=burn_in, seed=s_gibbs)
    edges = np.linspace(0.0, 0.5 * model.dom.L, k2_bins + 1)

    starts = sample_gibbs(model, n_replicas, burn_in=burn_in, seed=s_init)
    dyn_seeds = s_dyn.spawn(n_replicas)
    dens_list, en_list, hist_list = [], [], []
    for gamma0, ds in zip(starts, dyn_seeds):
        spec = DynamicsSpec(model, engine, T, alpha=alpha)
        traj = (run_kawasaki(gamma0, spec, ds) if engine == "kawasaki"
                else run_glauber(gamma0, spec, ds))
        dens, en, hist = _time_averages(traj, model, edges)
        dens_list.append(dens)
        en_list.append(en)
        hist_list.append(hist)

    entries: list[StationarityEntry] = []

    def compare(name, dyn_values, gibbs_est):
        dyn_est = batch_means(dyn_values, n_batches=min(20, max(2, n_replicas // 2)))
        se = math.hypot(dyn_est.std_error, gibbs_est.std_error)
        zsc = (dyn_est.value - gibbs_est.value) / se if se > 0 else 0.0
        entries.append(StationarityEntry(name, dyn_est, gibbs_est, zsc))

    if engine == "glauber":
        compare("density", dens_list, estimate_k1(samples))

    u_series = [total_energy(s, model) / model.dom.volume for s in samples]
    compare("energy_density", en_list, batch_means(u_series))

    from .gibbs import _pair_counts, _shell_volumes  # reuse internals
    counts = _pair_counts(samples, edges)
    shellv = _shell_volumes(edges, model.dom.d)
    hist_arr = np.asarray(hist_list)
    for b in range(k2_bins):
        if counts[:, b].sum() == 0 and hist_arr[:, b].sum() == 0:
            continue
        gibbs_est = batch_means(2.0 * counts[:, b] / (model.dom.volume * shellv[b]))
        compare(f"k2_bin{b}",
                2.0 * hist_arr[:, b] / (model.dom.volume * shellv[b]), gibbs_est)
    return StationarityReport(engine, entries)
