"""The limit theorems as numerical experiments.

Evaluates the hop generator H_eps and the birth-death generator H_0 on
exponential observables F = e^{<phi_test, .>}, measures their L2(mu) distance
across an eps sweep (split into the +/- parts), checks the energy-shift
limits behind the convergence proof, compares finite-dimensional
distributions of the two processes, and fits a spectral-gap diagnostic.

All generator quadrature is breakpoint-aligned (d=1), tensor-grid (d=2) or
importance-sampled (d=3); a Richardson-doubling gate guards the d=1 rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy import stats as sps

from . import kernels
from .dynamics import DynamicsSpec, run_glauber, run_kawasaki
from .geometry import min_image_dist, wrap
from .model import (Configuration, ModelSpec, a_eps_eval, alpha_from_k1,
                    relative_energy)
from .quadrature import QuadratureError, torus_rule
from .stats import Estimate, batch_means, batch_transform
from .testfunctions import TestFunction

__all__ = [
    "apply_H_kawasaki_exp", "apply_H_glauber_exp", "l2_generator_distance",
    "scaling_sweep", "SweepResult", "energy_shift_limit_check",
    "EnergyShiftReport", "fdd_compare", "FDDReport", "spectral_gap_probe",
    "GapReport", "energy_distance",
]

_RICHARDSON_RTOL = 1e-4


# ---------------------------------------------------------------------------
# Generator actions on exponential observables (d=1 fast path)
# ---------------------------------------------------------------------------

def _rule_spacing(m: ModelSpec, eps_min: float) -> float:
    R = m.phi.range
    reach = m.a.r_cut / eps_min
    base = min(R, reach) if R > 0 else reach
    return base / 40.0


def _sample_rule(m: ModelSpec, phi_test: TestFunction, eps_list, pts,
                 spacing: float):
    """Torus-wide node set aligned to every discontinuity this sample has:
    test-function edges, potential shells around each particle, and the
    scaled-kernel support edges for every eps in the sweep."""
    L = m.dom.L
    bps = [phi_test.breakpoints_1d()]
    if len(pts):
        centers = pts[:, 0]
        for rb in m.phi.radial_breakpoints():
            bps.append(centers - rb)
            bps.append(centers + rb)
        for eps in eps_list:
            reach = m.a.r_cut / eps
            if 2.0 * reach < L:
                bps.append(centers - reach)
                bps.append(centers + reach)
            else:
                # wrapped kernel edges: all images fold into the window
                k_max = int(math.ceil(reach / L)) + 1
                for k in range(-k_max, k_max + 1):
                    bps.append(centers - reach + k * L)
                    bps.append(centers + reach + k * L)
    nodes, weights = torus_rule(L, np.concatenate(bps), spacing)
    order = np.argsort(nodes, kind="stable")
    return nodes[order], weights[order]


class _SampleActions:
    """Per-configuration generator pieces from one shared quadrature rule."""

    def __init__(self, m: ModelSpec, phi_test: TestFunction, eps_list,
                 gamma: Configuration, spacing: float):
        self.m = m
        self.eps_list = list(eps_list)
        dom = m.dom
        pts = gamma.points
        self.n = len(pts)
        nodes, weights = _sample_rule(m, phi_test, eps_list, pts, spacing)
        self.nodes, self.weights = nodes, weights
        kid, kp = m.phi.kind_id, m.phi.kernel_params
        grid = nodes[:, None]
        e_all = kernels.rel_energy_grid(pts, grid, dom.L, kid, kp)
        ft_nodes = phi_test(grid, dom)
        self.exp_ft_m1 = np.exp(ft_nodes) - 1.0
        with np.errstate(over="ignore"):
            self.boltz_all = np.exp(-e_all)      # e^{-E(y, gamma)}
        self.e_all = e_all
        self.ft_points = phi_test(pts, dom) if self.n else np.zeros(0)
        self.big_phi = float(np.sum(self.ft_points))
        self.pts = pts
        self._boltz_cache: dict[int, np.ndarray] = {}

    def _boltz_minus(self, i: int) -> np.ndarray:
        """e^{-E(y, gamma \\ x_i)} on the nodes, via energy subtraction."""
        cached = self._boltz_cache.get(i)
        if cached is not None:
            return cached
        m = self.m
        phi_x = np.asarray(m.phi.at_distance(np.abs(
            _min_image_1d(self.nodes - self.pts[i, 0], m.dom.L))))
        both_inf = np.isinf(self.e_all) & np.isinf(phi_x)
        with np.errstate(invalid="ignore", over="ignore"):
            e_minus = self.e_all - phi_x
        if both_inf.any():
            rest = np.delete(self.pts, i, axis=0)
            fix = kernels.rel_energy_grid(
                rest, self.nodes[both_inf][:, None], m.dom.L,
                m.phi.kind_id, m.phi.kernel_params)
            e_minus[both_inf] = fix
        with np.errstate(over="ignore"):
            out = np.exp(-e_minus)
        self._boltz_cache[i] = out
        return out

    def _window(self, x0: float, reach: float):
        """Index slices of the sorted nodes within [x0-reach, x0+reach] mod L."""
        L = self.m.dom.L
        if 2.0 * reach >= L:
            return [slice(0, len(self.nodes))]
        lo = (x0 - reach) % L
        hi = (x0 + reach) % L
        i_lo = np.searchsorted(self.nodes, lo, side="left")
        i_hi = np.searchsorted(self.nodes, hi, side="right")
        if lo <= hi:
            return [slice(i_lo, i_hi)]
        return [slice(0, i_hi), slice(i_lo, len(self.nodes))]

    def _kernel_on_window(self, eps: float, disp: np.ndarray) -> np.ndarray:
        """Periodized scaled kernel on window displacements.

        Inside a window of radius r_cut/eps < L/2 only the minimal image
        contributes, so the image sum collapses to a direct formula.
        """
        m = self.m
        reach = m.a.r_cut / eps
        if 2.0 * reach >= m.dom.L:
            return a_eps_eval(m.a, eps, disp[:, None], m.dom)
        dd = _min_image_1d(disp, m.dom.L)
        ker = m.a
        if ker.kind == "uniform_ball":
            height = eps * ker.amplitude / (2.0 * ker.params[0])
            return np.where(dd <= reach, height, 0.0)
        sigma = ker.params[0]
        c = eps * ker.amplitude / ker._gauss_norm()
        return np.where(dd <= reach,
                        c * np.exp(-0.5 * (eps * dd / sigma) ** 2), 0.0)

    def hop_parts(self, eps: float) -> tuple[float, float]:
        """(H_eps^- F, H_eps^+ F) at this configuration."""
        m = self.m
        if self.n == 0:
            return 0.0, 0.0
        reach = m.a.r_cut / eps
        minus = 0.0
        plus = 0.0
        for i in range(self.n):
            boltz = self._boltz_minus(i)
            kappa = 0.0
            jplus = 0.0
            for sl in self._window(self.pts[i, 0], reach):
                disp = self.nodes[sl] - self.pts[i, 0]
                a_vals = self._kernel_on_window(eps, disp)
                core = self.weights[sl] * a_vals * boltz[sl]
                kappa += float(np.sum(core))
                jplus += float(np.dot(core, self.exp_ft_m1[sl]))
            ftx = self.ft_points[i]
            minus += (math.exp(-ftx) - 1.0) * kappa
            plus += math.exp(-ftx) * jplus
        scale = -math.exp(self.big_phi)
        return scale * minus, scale * plus

    def bd_parts_over_alpha(self) -> tuple[float, float]:
        """(H_0^- F, H_0^+ F) divided by alpha (both are linear in it)."""
        m = self.m
        expphi = math.exp(self.big_phi)
        minus = -expphi * float(np.sum(np.exp(-self.ft_points) - 1.0)) \
            if self.n else 0.0
        plus = -expphi * m.z * float(np.dot(
            self.weights, self.boltz_all * self.exp_ft_m1))
        return minus, plus


def _min_image_1d(delta: np.ndarray, L: float) -> np.ndarray:
    dd = np.abs(delta)
    dd = dd - L * np.floor(dd / L)
    return np.where(dd > 0.5 * L, L - dd, dd)


def _actions_for(gamma: Configuration, m: ModelSpec, phi_test: TestFunction,
                 eps_list, check: bool):
    phi_test.check_support(m.dom)
    spacing = _rule_spacing(m, min(eps_list))
    act = _SampleActions(m, phi_test, eps_list, gamma, spacing)
    if check:
        act2 = _SampleActions(m, phi_test, eps_list, gamma, 0.5 * spacing)
        for eps in eps_list:
            for v1, v2 in zip(act.hop_parts(eps), act2.hop_parts(eps)):
                _gate(v1, v2)
        for v1, v2 in zip(act.bd_parts_over_alpha(), act2.bd_parts_over_alpha()):
            _gate(v1, v2)
    return act


def _gate(v1: float, v2: float) -> None:
    denom = max(abs(v1), abs(v2))
    if denom > 1e-14 and abs(v1 - v2) > _RICHARDSON_RTOL * denom:
        raise QuadratureError(
            f"Richardson doubling moved a generator value by "
            f"{abs(v1 - v2) / denom:.2e} relative (> {_RICHARDSON_RTOL:g})")


def apply_H_kawasaki_exp(phi_test: TestFunction, gamma: Configuration,
                         m: ModelSpec, check: bool = True,
                         rng=None) -> float:
    """Action of the hop generator on F = e^{<phi_test, .>} at gamma.

    Defined at s=0 (the convergence setting); the dy integral is evaluated by
    breakpoint-aligned quadrature in d=1, a tensor grid in d=2, and
    importance sampling from the scaled kernel in d=3.
    """
    if m.s != 0.0:
        raise ValueError("generator evaluation is defined at s=0 only")
    if m.dom.d == 1:
        act = _actions_for(gamma, m, phi_test, [m.eps], check)
        return float(sum(act.hop_parts(m.eps)))
    return _hop_action_general(phi_test, gamma, m, rng)


def apply_H_glauber_exp(phi_test: TestFunction, gamma: Configuration,
                        m: ModelSpec, alpha: float, check: bool = True,
                        rng=None) -> float:
    """Action of the birth-death generator on F = e^{<phi_test, .>}."""
    if m.dom.d == 1:
        act = _actions_for(gamma, m, phi_test, [m.eps], check)
        minus, plus = act.bd_parts_over_alpha()
        return float(alpha * (minus + plus))
    return _bd_action_general(phi_test, gamma, m, alpha, rng)


def _hop_action_general(phi_test, gamma, m, rng):
    """d>=2 fallback: per-particle integral by tensor grid or kernel draws."""
    from .quadrature import integrate_2d_tensor
    phi_test.check_support(m.dom)
    dom = m.dom
    pts = gamma.points
    if len(pts) == 0:
        return 0.0
    big_phi = float(np.sum(phi_test(pts, dom)))
    kid, kp = m.phi.kind_id, m.phi.kernel_params
    total = 0.0
    reach = m.a.r_cut / m.eps
    for i in range(len(pts)):
        rest = np.delete(pts, i, axis=0)
        ftx = float(phi_test(pts[i], dom))

        def integrand(y, _rest=rest, _ftx=ftx):
            e = kernels.rel_energy_grid(_rest, y, dom.L, kid, kp)
            a_vals = a_eps_eval(m.a, m.eps, y - pts[i][None, :], dom)
            with np.errstate(over="ignore"):
                boltz = np.exp(-e)
            fty = phi_test(y, dom)
            return a_vals * boltz * (np.exp(-_ftx + fty) - 1.0)

        if dom.d == 2:
            lo = pts[i] - min(reach, 0.5 * dom.L)
            hi = pts[i] + min(reach, 0.5 * dom.L)
            total += integrate_2d_tensor(integrand, lo, hi,
                                         max_spacing=_rule_spacing(m, m.eps))
        else:
            n_draws = 10_000
            rng = np.random.default_rng(0 if rng is None else rng)
            draws = wrap(pts[i] + m.a.sample(rng, n_draws) / m.eps, dom)
            e = kernels.rel_energy_grid(rest, draws, dom.L, kid, kp)
            with np.errstate(over="ignore"):
                vals = np.exp(-e) * (np.exp(-ftx + phi_test(draws, dom)) - 1.0)
            total += m.a.mass * float(np.mean(vals))
    return -math.exp(big_phi) * total


def _bd_action_general(phi_test, gamma, m, alpha, rng):
    from .quadrature import integrate_2d_tensor
    phi_test.check_support(m.dom)
    dom = m.dom
    pts = gamma.points
    kid, kp = m.phi.kind_id, m.phi.kernel_params
    big_phi = float(np.sum(phi_test(pts, dom))) if len(pts) else 0.0
    death = float(np.sum(np.exp(-phi_test(pts, dom)) - 1.0)) if len(pts) else 0.0

    def integrand(y):
        e = kernels.rel_energy_grid(pts, y, dom.L, kid, kp)
        with np.errstate(over="ignore"):
            return np.exp(-e) * (np.exp(phi_test(y, dom)) - 1.0)

    centers = np.mean([t.support_center() for t in phi_test.terms], axis=0)
    radius = max(t.support_radius() + float(np.linalg.norm(
        np.asarray(t.support_center()) - centers)) for t in phi_test.terms)
    if dom.d == 2:
        birth = integrate_2d_tensor(integrand, centers - radius, centers + radius,
                                    max_spacing=radius / 40.0)
    else:
        n_draws = 10_000
        rng = np.random.default_rng(0 if rng is None else rng)
        box_lo = centers - radius
        draws = wrap(box_lo + (2.0 * radius) * rng.random((n_draws, dom.d)), dom)
        birth = (2.0 * radius) ** dom.d * float(np.mean(integrand(draws)))
    return -alpha * math.exp(big_phi) * (death + m.z * birth)


# ---------------------------------------------------------------------------
# L2 distance and the eps sweep
# ---------------------------------------------------------------------------

@dataclass
class GeneratorDistance:
    total: Estimate
    minus_part: Estimate
    plus_part: Estimate
    alpha: float


@dataclass
class SweepResult:
    eps_list: list[float]
    distances: list[GeneratorDistance]
    alpha: float
    alpha_se: float
    model_hash: str
    n_samples: int
    seeds: dict
    richardson_max: float

    @property
    def totals(self) -> list[float]:
        return [d.total.value for d in self.distances]

    def strictly_decreasing(self) -> bool:
        t = self.totals
        return all(b < a for a, b in zip(t, t[1:]))


def _batched_actions(model: ModelSpec, phi_test: TestFunction,
                     eps_list: Sequence[float],
                     samples: Sequence[Configuration],
                     check_every: int = 64):
    """Per-sample generator pieces for every eps, plus the Richardson gate on
    a deterministic subsample."""
    phi_test.check_support(model.dom)
    spacing = _rule_spacing(model, min(eps_list))
    n = len(samples)
    ne = len(eps_list)
    hop_minus = np.empty((n, ne))
    hop_plus = np.empty((n, ne))
    bd_minus = np.empty(n)
    bd_plus = np.empty(n)
    worst = 0.0
    for i, gamma in enumerate(samples):
        act = _SampleActions(model, phi_test, eps_list, gamma, spacing)
        for j, eps in enumerate(eps_list):
            hop_minus[i, j], hop_plus[i, j] = act.hop_parts(eps)
        bd_minus[i], bd_plus[i] = act.bd_parts_over_alpha()
        if i % check_every == 0:
            act2 = _SampleActions(model, phi_test, eps_list, gamma,
                                  0.5 * spacing)
            for j, eps in enumerate(eps_list):
                v2 = act2.hop_parts(eps)
                for a, b in zip((hop_minus[i, j], hop_plus[i, j]), v2):
                    _gate(a, b)
                    if max(abs(a), abs(b)) > 1e-14:
                        worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
            w2 = act2.bd_parts_over_alpha()
            for a, b in zip((bd_minus[i], bd_plus[i]), w2):
                _gate(a, b)
                if max(abs(a), abs(b)) > 1e-14:
                    worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
    return hop_minus, hop_plus, bd_minus, bd_plus, worst


def l2_generator_distance(phi_test: TestFunction, model: ModelSpec,
                          samples: Sequence[Configuration],
                          alpha: Optional[float] = None,
                          n_batches: int = 20) -> GeneratorDistance:
    """Monte Carlo estimate of |H_eps F - H_0 F|^2 in L2(mu), with the +/-
    parts estimated separately.

    alpha defaults to the estimate k1_hat * mass(a) / z from the same sample
    set, mirroring how the limit's death rate is tied to the measure.
    """
    hop_m, hop_p, bd_m, bd_p, _ = _batched_actions(
        model, phi_test, [model.eps], samples)
    if alpha is None:
        alpha = _alpha_hat(model, samples)[0]
    d_minus = (hop_m[:, 0] - alpha * bd_m) ** 2
    d_plus = (hop_p[:, 0] - alpha * bd_p) ** 2
    d_tot = ((hop_m[:, 0] + hop_p[:, 0]) - alpha * (bd_m + bd_p)) ** 2
    return GeneratorDistance(batch_means(d_tot, n_batches),
                             batch_means(d_minus, n_batches),
                             batch_means(d_plus, n_batches), alpha)


def _alpha_hat(model: ModelSpec, samples) -> tuple[float, float]:
    from .gibbs import estimate_k1
    k1 = estimate_k1(samples)
    return (alpha_from_k1(k1.value, model.z, model.a),
            k1.std_error * model.a.mass / model.z)


def scaling_sweep(model: ModelSpec, eps_list: Sequence[float],
                  phi_test: TestFunction, samples: Sequence[Configuration],
                  alpha: Optional[float] = None, seeds: Optional[dict] = None,
                  n_batches: int = 20) -> SweepResult:
    """Evaluate the generator distance on a strictly decreasing eps grid,
    reusing one sample set (and one alpha estimate) across the whole sweep."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps grid must be strictly decreasing")
    hop_m, hop_p, bd_m, bd_p, worst = _batched_actions(
        model, phi_test, eps_list, samples)
    if alpha is None:
        alpha, alpha_se = _alpha_hat(model, samples)
    else:
        alpha_se = 0.0
    out = []
    for j in range(len(eps_list)):
        d_minus = (hop_m[:, j] - alpha * bd_m) ** 2
        d_plus = (hop_p[:, j] - alpha * bd_p) ** 2
        d_tot = ((hop_m[:, j] + hop_p[:, j]) - alpha * (bd_m + bd_p)) ** 2
        out.append(GeneratorDistance(batch_means(d_tot, n_batches),
                                     batch_means(d_minus, n_batches),
                                     batch_means(d_plus, n_batches), alpha))
    return SweepResult(eps_list, out, alpha, alpha_se, model.model_hash,
                       len(samples), seeds or {}, worst)


# ---------------------------------------------------------------------------
# Energy-shift limits
# ---------------------------------------------------------------------------

@dataclass
class EnergyShiftCase:
    eps: float
    admissible: bool
    separation: float
    pair: Optional[Estimate] = None      # E exp(-E(p1) - E(p2) + <psi>)
    single: Optional[Estimate] = None    # E exp(-E(p1) + <psi>)
    z_pair: Optional[float] = None       # against (k1/z)^2 E e^{<psi>}
    z_single: Optional[float] = None     # against (k1/z)   E e^{<psi>}


@dataclass
class EnergyShiftReport:
    cases: list[EnergyShiftCase]
    k1_over_z: Estimate
    exp_psi: Estimate

    def smallest_admissible(self) -> EnergyShiftCase:
        ok = [c for c in self.cases if c.admissible]
        if not ok:
            raise ValueError("no admissible eps in the report")
        return min(ok, key=lambda c: c.eps)


def energy_shift_limit_check(psi: Optional[TestFunction], x, x_p, y, y_p,
                             eps_list: Sequence[float],
                             samples: Sequence[Configuration],
                             model: ModelSpec,
                             n_batches: int = 20) -> EnergyShiftReport:
    """Check that far-separated energy shifts decouple into k1/z factors.

    For each eps the probe points are p1 = x/eps + x', p2 = y/eps + y'
    (wrapped); cases whose torus separation falls below L/4 are skipped with
    a finite-volume flag.  z-scores pair the estimates against the limit
    built from the same samples.
    """
    if np.allclose(x, y):
        raise ValueError("the two shift directions must differ")
    dom = model.dom
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    x_p = np.atleast_1d(np.asarray(x_p, float))
    y_p = np.atleast_1d(np.asarray(y_p, float))
    psi_series = np.array([psi.pairing(s.points, dom) if psi is not None else 0.0
                           for s in samples])
    exp_psi_series = np.exp(psi_series)
    k1_series = np.array([len(s) / dom.volume for s in samples])

    exp_psi = batch_means(exp_psi_series, n_batches)
    k1z = batch_transform({"k1": k1_series}, lambda k1: k1 / model.z, n_batches)

    cases = []
    for eps in sorted(set(float(e) for e in eps_list), reverse=True):
        p1 = wrap(x / eps + x_p, dom)
        p2 = wrap(y / eps + y_p, dom)
        sep = min_image_dist(p1, p2, dom)
        if sep < 0.25 * dom.L:
            cases.append(EnergyShiftCase(eps, False, sep))
            continue
        e1 = np.array([relative_energy(p1, s, model) for s in samples])
        e2 = np.array([relative_energy(p2, s, model) for s in samples])
        with np.errstate(over="ignore"):
            pair_series = np.exp(-e1 - e2 + psi_series)
            single_series = np.exp(-e1 + psi_series)
        pair = batch_means(pair_series, n_batches)
        single = batch_means(single_series, n_batches)
        zp = batch_transform(
            {"v": pair_series, "k1": k1_series, "ep": exp_psi_series},
            lambda v, k1, ep: v - (k1 / model.z) ** 2 * ep, n_batches)
        zs = batch_transform(
            {"v": single_series, "k1": k1_series, "ep": exp_psi_series},
            lambda v, k1, ep: v - (k1 / model.z) * ep, n_batches)
        cases.append(EnergyShiftCase(eps, True, sep, pair, single,
                                     zp.z_against(0.0), zs.z_against(0.0)))
    return EnergyShiftReport(cases, k1z, exp_psi)


# ---------------------------------------------------------------------------
# Finite-dimensional distributions
# ---------------------------------------------------------------------------

def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Szekely energy distance between two samples of vectors."""
    from scipy.spatial.distance import cdist
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    dab = cdist(a, b).mean()
    daa = cdist(a, a).mean()
    dbb = cdist(b, b).mean()
    return 2.0 * dab - daa - dbb


def _energy_distance_perm_pvalue(a, b, n_perm: int, rng) -> float:
    from scipy.spatial.distance import cdist
    pooled = np.vstack([np.atleast_2d(a), np.atleast_2d(b)])
    na = len(a)
    ntot = len(pooled)
    dmat = cdist(pooled, pooled).astype(np.float32)
    total = float(dmat.sum())

    def stat(idx_a):
        mask = np.zeros(ntot, dtype=bool)
        mask[idx_a] = True
        saa = float(dmat[np.ix_(mask, mask)].sum())
        sbb = float(dmat[np.ix_(~mask, ~mask)].sum())
        sab = 0.5 * (total - saa - sbb)
        nb = ntot - na
        return (2.0 * sab / (na * nb) - saa / (na * na) - sbb / (nb * nb))

    observed = stat(np.arange(na))
    count = 0
    for _ in range(n_perm):
        idx = rng.permutation(ntot)[:na]
        if stat(idx) >= observed:
            count += 1
    return (count + 1) / (n_perm + 1)


@dataclass
class FDDCase:
    eps: float
    ks_stats: list[float]           # per-time KS on increments from t=0
    ks_pvalues: list[float]
    static_ks_pvalues: list[float]  # raw single-time marginals (law = mu always)
    energy_dist: float
    energy_pvalue: Optional[float]
    t0_ks_pvalue: float


@dataclass
class FDDReport:
    times: list[float]
    eps_list: list[float]
    n_replicas: int
    cases: list[FDDCase]

    def case(self, eps: float) -> FDDCase:
        return next(c for c in self.cases if c.eps == eps)


def fdd_compare(model: ModelSpec, alpha: float, times: Sequence[float],
                phi_tests: Sequence[TestFunction], eps_list: Sequence[float],
                n_replicas: int, seed, burn_in: int = 3000,
                n_perm: int = 1000) -> FDDReport:
    """Compare the joint law of (<phi_i, X(t_i)>) between the hop process at
    each eps and the birth-death process, all started from the same Gibbs
    initial law.

    Divergences: the energy distance of the joint vectors (with a permutation
    p-value) and per-time two-sample KS on the increments
    <phi_i, X(t_i)> - <phi_i, X(0)>.  In equilibrium the raw single-time
    marginals carry no information about eps (stationarity makes every one of
    them an exact sample of the same law), so the increments are the
    one-dimensional projections that actually converge; the raw-marginal and
    t=0 KS p-values are reported as shared-law sanity checks.
    """
    times = [float(t) for t in times]
    if not 1 <= len(times) <= 3:
        raise ValueError("between one and three observation times")
    if sorted(times) != times or times[0] < 0:
        raise ValueError("times must be sorted and nonnegative")
    if len(phi_tests) != len(times):
        raise ValueError("one test function per observation time")
    if n_replicas < 500:
        raise ValueError("fewer than 500 replicas gives no usable divergence "
                         "estimates; refuse")
    for tf in phi_tests:
        tf.check_support(model.dom)
    from .gibbs import sample_gibbs

    root = np.random.SeedSequence(seed)
    s_init, s_dyn, s_perm = root.spawn(3)
    horizon = max(times) if max(times) > 0 else 1.0
    snap_times = tuple(sorted({0.0, *times}))
    # every ensemble gets its own initial draws so the t=0 shared-law check
    # compares genuinely independent samples of mu
    all_starts = sample_gibbs(model, n_replicas * (len(eps_list) + 1),
                              burn_in=burn_in, seed=s_init)

    def ensemble(eps: Optional[float], starts, seeds):
        vecs = np.empty((n_replicas, len(times)))
        incs = np.empty((n_replicas, len(times)))
        t0 = np.empty(n_replicas)
        for r, (gamma0, sd) in enumerate(zip(starts, seeds)):
            if eps is None:
                spec = DynamicsSpec(model, "glauber", horizon, alpha=alpha,
                                    record="snapshots", snapshot_times=snap_times)
                traj = run_glauber(gamma0, spec, sd)
            else:
                spec = DynamicsSpec(model.with_eps(eps), "kawasaki", horizon,
                                    record="snapshots", snapshot_times=snap_times)
                traj = run_kawasaki(gamma0, spec, sd)
            states = traj.states_at(snap_times)
            by_time = dict(zip(snap_times, states))
            t0[r] = phi_tests[0].pairing(by_time[0.0].points, model.dom)
            for k, t in enumerate(times):
                vecs[r, k] = phi_tests[k].pairing(by_time[t].points, model.dom)
                incs[r, k] = vecs[r, k] - phi_tests[k].pairing(
                    by_time[0.0].points, model.dom)
        return vecs, incs, t0

    all_seeds = s_dyn.spawn(len(eps_list) + 1)
    g_vecs, g_incs, g_t0 = ensemble(None, all_starts[-n_replicas:],
                                    all_seeds[-1].spawn(n_replicas))

    rng_perm = np.random.default_rng(s_perm)
    cases = []
    for j, eps in enumerate(eps_list):
        vecs, incs, t0 = ensemble(float(eps),
                                  all_starts[j * n_replicas:(j + 1) * n_replicas],
                                  all_seeds[j].spawn(n_replicas))
        ks_stats, ks_pvals, static_p = [], [], []
        for k in range(len(times)):
            res = sps.ks_2samp(incs[:, k], g_incs[:, k])
            ks_stats.append(float(res.statistic))
            ks_pvals.append(float(res.pvalue))
            static_p.append(float(sps.ks_2samp(vecs[:, k], g_vecs[:, k]).pvalue))
        ed = energy_distance(incs, g_incs)
        ep = _energy_distance_perm_pvalue(incs, g_incs, n_perm, rng_perm) \
            if n_perm > 0 else None
        t0_p = float(sps.ks_2samp(t0, g_t0).pvalue)
        cases.append(FDDCase(float(eps), ks_stats, ks_pvals, static_p,
                             ed, ep, t0_p))
    return FDDReport(times, [float(e) for e in eps_list], n_replicas, cases)


# ---------------------------------------------------------------------------
# Spectral-gap diagnostic
# ---------------------------------------------------------------------------

@dataclass
class GapReport:
    gap_hat: Estimate
    paper_bound: float
    alpha: float
    fit_window: tuple[float, float]
    lags: np.ndarray
    autocov: np.ndarray

    @property
    def passed(self) -> bool:
        return self.gap_hat.value >= self.paper_bound - 3.0 * self.gap_hat.std_error


def _relaxation_bound(model: ModelSpec, alpha: float) -> float:
    """alpha * (1 - z * int (1 - e^{-phi})), the lower bound on the gap."""
    phi = model.phi
    if phi.kind == "zero":
        return alpha

    def integrand(r):
        v = float(phi.at_distance(r))
        core = 1.0 if math.isinf(v) else 1.0 - math.exp(-v)
        if model.dom.d == 1:
            return 2.0 * core
        if model.dom.d == 2:
            return 2.0 * math.pi * r * core
        return 4.0 * math.pi * r * r * core

    pts = [b for b in phi.radial_breakpoints() if 0 < b < phi.range]
    val, _ = integrate.quad(integrand, 0.0, phi.range, points=pts, limit=200)
    return alpha * (1.0 - model.z * val)


def spectral_gap_probe(model: ModelSpec, alpha: float, T: float,
                       n_replicas: int, seed,
                       phi_test: Optional[TestFunction] = None,
                       dt: Optional[float] = None, burn_in: int = 3000,
                       n_boot: int = 200) -> GapReport:
    """Fit the relaxation rate of <phi_test, gamma(t)> under the birth-death
    engine and compare with the analytic lower bound.

    The fit runs on log autocovariance over the window where it sits between
    10% and 80% of its lag-0 value; the error bar is a replica bootstrap.
    """
    if not model.phi.positive:
        raise ValueError("the gap bound needs a positive potential")
    from .gibbs import sample_gibbs

    dom = model.dom
    if phi_test is None:
        # wide support keeps the observable from being mostly zero, which
        # dominates the autocovariance noise at low density
        phi_test = TestFunction.bump(np.full(dom.d, 0.5 * dom.L),
                                     min(3.0, 0.24 * dom.L), 1.0)
    phi_test.check_support(dom)
    if dt is None:
        dt = 0.05 / alpha
    n_lag = int(round(T / dt))
    grid = tuple(np.arange(n_lag + 1) * dt)

    root = np.random.SeedSequence(seed)
    s_init, s_dyn, s_boot = root.spawn(3)
    starts = sample_gibbs(model, n_replicas, burn_in=burn_in, seed=s_init)
    dyn_seeds = s_dyn.spawn(n_replicas)
    Y = np.empty((n_replicas, n_lag + 1))
    for r, (gamma0, sd) in enumerate(zip(starts, dyn_seeds)):
        spec = DynamicsSpec(model, "glauber", grid[-1] + 1e-9, alpha=alpha,
                            record="snapshots", snapshot_times=grid)
        traj = run_glauber(gamma0, spec, sd)
        for k, (_, cfg) in enumerate(traj.snapshots):
            Y[r, k] = phi_test.pairing(cfg.points, dom)

    max_lag = n_lag // 2

    def autocov(rows: np.ndarray) -> np.ndarray:
        yc = rows - rows.mean()
        return np.array([np.mean(yc[:, :yc.shape[1] - k] * yc[:, k:])
                         for k in range(max_lag + 1)])

    def fit_gap(rows: np.ndarray) -> float:
        c = autocov(rows)
        c0 = c[0]
        mask = (c > 0.1 * c0) & (c < 0.8 * c0) & (c > 0)
        if mask.sum() < 2:
            mask = (c > 0.05 * c0) & (c > 0)
            mask[0] = False
        lags = np.arange(max_lag + 1)[mask] * dt
        # weight by c^2: the log-autocovariance noise scales like 1/c
        slope = np.polyfit(lags, np.log(c[mask]), 1, w=c[mask])[0]
        return -slope

    gap = fit_gap(Y)
    rng = np.random.default_rng(s_boot)
    boots = np.array([fit_gap(Y[rng.integers(n_replicas, size=n_replicas)])
                      for _ in range(n_boot)])
    se = float(np.std(boots, ddof=1))
    c_full = autocov(Y)
    c0 = c_full[0]
    window = (0.1 * c0, 0.8 * c0)
    return GapReport(Estimate(float(gap), se, n_replicas, float(n_replicas)),
                     _relaxation_bound(model, alpha), alpha, window,
                     np.arange(max_lag + 1) * dt, c_full)
