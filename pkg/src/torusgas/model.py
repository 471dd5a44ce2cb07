"""Physical model: pair potential, activity, jump kernel and its scaling,
relative/total energies, transition rates, and the bounds that make exact
continuous-time simulation possible.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate, special

from . import kernels
from .geometry import CellList, TorusDomain, min_image_disp, neighbors, wrap

__all__ = [
    "PairPotential", "JumpKernel", "ModelSpec", "Configuration",
    "phi_eval", "relative_energy", "total_energy", "a_eps_eval",
    "kawasaki_rate", "glauber_rates", "alpha_from_k1", "lahht_check",
    "RateBoundError",
]


class RateBoundError(RuntimeError):
    """A realized energy factor exceeded the configured thinning cap."""


_KIND_IDS = {"zero": 0, "square_well": 1, "triangle": 2,
             "hardcore_square_well": 3, "lennard_jones_truncated": 4}


@dataclass(frozen=True)
class PairPotential:
    """Radial pair potential from the built-in menu.

    Built-ins keep ranges, stability constants and radial breakpoints
    analytic, which the thinning bounds and quadratures rely on.
    """

    kind: str
    range: float          # phi(x) = 0 for |x| > range
    B: float              # stability constant, 0 for the positive built-ins
    positive: bool
    params: tuple[float, ...] = ()

    @staticmethod
    def zero() -> "PairPotential":
        return PairPotential("zero", 0.0, 0.0, True)

    @staticmethod
    def square_well(J: float, R: float) -> "PairPotential":
        if J < 0 or R <= 0:
            raise ValueError("square_well needs J >= 0 and R > 0")
        return PairPotential("square_well", R, 0.0, True, (J, R))

    @staticmethod
    def triangle(J: float, R: float) -> "PairPotential":
        if J < 0 or R <= 0:
            raise ValueError("triangle needs J >= 0 and R > 0")
        return PairPotential("triangle", R, 0.0, True, (J, R))

    @staticmethod
    def hardcore_square_well(r_hc: float, J: float, R: float) -> "PairPotential":
        if not (0 < r_hc < R) or J < 0:
            raise ValueError("hardcore_square_well needs 0 < r_hc < R and J >= 0")
        return PairPotential("hardcore_square_well", R, 0.0, True, (J, R, r_hc))

    @staticmethod
    def lennard_jones_truncated(sigma: float, eps: float, R: float,
                                B: float) -> "PairPotential":
        """Truncated (unshifted) LJ; the caller supplies the stability
        constant B since no closed form exists for it."""
        if sigma <= 0 or eps <= 0 or R <= sigma or B < 0:
            raise ValueError("lennard_jones_truncated needs sigma, eps > 0, "
                             "R > sigma and B >= 0")
        return PairPotential("lennard_jones_truncated", R, B, False, (eps, R, sigma))

    @property
    def kind_id(self) -> int:
        return _KIND_IDS[self.kind]

    @property
    def kernel_params(self) -> np.ndarray:
        p = np.zeros(4)
        p[:len(self.params)] = self.params
        return p

    @property
    def hard_core(self) -> float:
        """Hard-core radius (0 when there is none)."""
        return self.params[2] if self.kind == "hardcore_square_well" else 0.0

    def at_distance(self, r):
        """phi as a function of distance (vectorized; may return +inf)."""
        return kernels.phi_of_dist(r, self.kind_id, self.kernel_params)

    def __call__(self, disp) -> float:
        disp = np.atleast_1d(np.asarray(disp, dtype=float))
        return float(self.at_distance(math.sqrt(float(np.sum(disp * disp)))))

    def radial_breakpoints(self) -> tuple[float, ...]:
        """Distances where phi (or its derivative) jumps; quadrature splits here."""
        if self.kind == "zero":
            return ()
        if self.kind == "hardcore_square_well":
            return (self.params[2], self.range)
        return (self.range,)


def phi_eval(phi: PairPotential, disp) -> float:
    """Potential at a displacement vector; +inf flags hard-core overlap."""
    return phi(disp)


@dataclass(frozen=True)
class JumpKernel:
    """Symmetric jump-length density a(x) with analytic mass.

    Built-ins are normalized so that the integral of a equals `amplitude`
    (default 1), keeping the total mass exact at every scaling.
    """

    kind: str
    params: tuple[float, ...]
    d: int
    amplitude: float = 1.0

    @staticmethod
    def uniform_ball(r: float, d: int, amplitude: float = 1.0) -> "JumpKernel":
        if r <= 0:
            raise ValueError("uniform_ball needs r > 0")
        return JumpKernel("uniform_ball", (r,), d, amplitude)

    @staticmethod
    def gaussian_truncated(sigma: float, r_cut: float, d: int,
                           amplitude: float = 1.0) -> "JumpKernel":
        if sigma <= 0 or r_cut <= 0:
            raise ValueError("gaussian_truncated needs sigma, r_cut > 0")
        return JumpKernel("gaussian_truncated", (sigma, r_cut), d, amplitude)

    @property
    def mass(self) -> float:
        """The L1 mass of a (analytic)."""
        return self.amplitude

    @property
    def r_cut(self) -> float:
        return self.params[0] if self.kind == "uniform_ball" else self.params[1]

    def _ball_volume(self, r: float) -> float:
        return {1: 2.0 * r, 2: math.pi * r * r, 3: 4.0 * math.pi * r ** 3 / 3.0}[self.d]

    def _gauss_norm(self) -> float:
        """Integral of exp(-|x|^2 / 2 sigma^2) over the ball |x| <= r_cut."""
        sigma, r = self.params
        t = r / (sigma * math.sqrt(2.0))
        if self.d == 1:
            return sigma * math.sqrt(2.0 * math.pi) * math.erf(t)
        if self.d == 2:
            return 2.0 * math.pi * sigma * sigma * (1.0 - math.exp(-t * t))
        return (4.0 * math.pi * (-sigma * sigma * r * math.exp(-t * t)
                + sigma ** 3 * math.sqrt(math.pi / 2.0) * math.erf(t)))

    def density(self, x) -> np.ndarray:
        """a(x) for displacement vectors x, shape (..., d)."""
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(np.atleast_2d(x) ** 2, axis=-1))
        if self.kind == "uniform_ball":
            val = np.where(r <= self.params[0],
                           self.amplitude / self._ball_volume(self.params[0]), 0.0)
        else:
            sigma, rc = self.params
            val = np.where(r <= rc,
                           self.amplitude / self._gauss_norm()
                           * np.exp(-0.5 * (r / sigma) ** 2), 0.0)
        return val if np.ndim(x) > 1 else float(val[0])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw displacements with density a / mass, shape (size, d).

        Uses inverse-CDF transforms so the draw count per sample is fixed
        (keeps seeded streams aligned across call sites).
        """
        d = self.d
        if self.kind == "uniform_ball":
            r_max = self.params[0]
            if d == 1:
                return (r_max * (2.0 * rng.random(size) - 1.0))[:, None]
            dirs = self._directions(rng, size)
            radii = r_max * rng.random(size) ** (1.0 / d)
            return dirs * radii[:, None]
        sigma, rc = self.params
        if d == 1:
            cap = math.erf(rc / (sigma * math.sqrt(2.0)))
            u = rng.random(size)
            x = sigma * math.sqrt(2.0) * special.erfinv(cap * (2.0 * u - 1.0))
            return x[:, None]
        dirs = self._directions(rng, size)
        u = rng.random(size)
        if d == 2:
            cap = 1.0 - math.exp(-0.5 * (rc / sigma) ** 2)
            radii = sigma * np.sqrt(-2.0 * np.log1p(-cap * u))
        else:
            radii = np.interp(u, *self._radial_cdf_table())
        return dirs * radii[:, None]

    def _directions(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.d == 2:
            theta = 2.0 * math.pi * rng.random(size)
            return np.column_stack([np.cos(theta), np.sin(theta)])
        zz = 2.0 * rng.random(size) - 1.0
        theta = 2.0 * math.pi * rng.random(size)
        s = np.sqrt(1.0 - zz * zz)
        return np.column_stack([s * np.cos(theta), s * np.sin(theta), zz])

    def _radial_cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        # d=3 truncated-gaussian radius: numeric inverse CDF of s^2 e^{-s^2/2sigma^2}
        sigma, rc = self.params
        s = np.linspace(0.0, rc, 2049)
        w = s * s * np.exp(-0.5 * (s / sigma) ** 2)
        cdf = np.concatenate([[0.0], np.cumsum((w[1:] + w[:-1]) * 0.5 * np.diff(s))])
        return cdf / cdf[-1], s

    def canonical(self) -> dict:
        return {"kind": self.kind, "params": list(self.params),
                "d": self.d, "amplitude": self.amplitude}


def a_eps_eval(a: JumpKernel, eps: float, disp, dom: TorusDomain) -> np.ndarray:
    """The scaled kernel eps^d a(eps x), periodized on the torus.

    Summing over enough periodic images keeps the torus integral equal to the
    kernel mass at every eps; once the scaled support spans the box this sum
    is exactly the wrapped kernel.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    disp = np.asarray(disp, dtype=float)
    squeeze = disp.ndim <= 1 and a.d == 1 or disp.ndim == 1 and a.d > 1
    pts = np.atleast_2d(disp.reshape(-1, a.d) if disp.ndim != 2 else disp)
    L = dom.L
    K = int(math.ceil((a.r_cut / eps) / L)) + 1
    shifts = np.arange(-K, K + 1) * L
    total = np.zeros(len(pts))
    scale = eps ** a.d
    if a.d == 1:
        for s in shifts:
            total += scale * np.asarray(a.density(eps * (pts + s)))
    else:
        for offs in itertools.product(shifts, repeat=a.d):
            total += scale * np.asarray(a.density(eps * (pts + np.array(offs))))
    if squeeze and total.size == 1:
        return float(total[0])
    return total


def a_eps_breakpoints_1d(a: JumpKernel, eps: float, center: float, L: float) -> np.ndarray:
    """Support-edge positions of the periodized scaled kernel around `center`."""
    reach = a.r_cut / eps
    K = int(math.ceil(reach / L)) + 1
    shifts = np.arange(-K, K + 1) * L
    return np.concatenate([center - reach + shifts, center + reach + shifts])


@dataclass(frozen=True)
class ModelSpec:
    """Full model: domain, potential, activity, jump kernel, scaling, family.

    `rate_cap` bounds the energy factor of every thinning acceptance; it is
    1 automatically for a positive potential at s=0 and must be supplied
    otherwise (exact simulation needs an a-priori bound).
    """

    dom: TorusDomain
    phi: PairPotential
    z: float
    a: JumpKernel
    eps: float = 1.0
    s: float = 0.0
    rate_cap: Optional[float] = None

    def __post_init__(self):
        if self.z <= 0:
            raise ValueError("activity z must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 <= self.s <= 1.0:
            raise ValueError("family parameter s must lie in [0, 1]")
        if self.a.d != self.dom.d:
            raise ValueError("jump kernel dimension differs from the domain's")
        if self.phi.range >= 0.5 * self.dom.L and self.phi.kind != "zero":
            raise ValueError(
                f"interaction range {self.phi.range} must be < L/2 = "
                f"{0.5 * self.dom.L} for unambiguous minimal images")
        if (self.s > 0 or not self.phi.positive) and self.rate_cap is None:
            raise ValueError("rate_cap is required when s > 0 or the "
                             "potential is not positive (thinning needs a bound)")
        if self.rate_cap is not None and self.rate_cap < 1.0:
            raise ValueError("rate_cap must be >= 1")

    @property
    def thinning_cap(self) -> float:
        """Energy-factor bound used by the exact simulators."""
        if self.rate_cap is not None:
            return float(self.rate_cap)
        return 1.0  # positive potential at s=0: exp(-E) <= 1

    def with_eps(self, eps: float) -> "ModelSpec":
        return replace(self, eps=eps)

    def canonical(self) -> dict:
        return {
            "d": self.dom.d, "L": self.dom.L,
            "phi": {"kind": self.phi.kind, "params": list(self.phi.params),
                    "B": self.phi.B},
            "z": self.z, "a": self.a.canonical(),
            "eps": self.eps, "s": self.s, "rate_cap": self.rate_cap,
        }

    @property
    def model_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


class Configuration:
    """A finite point set on the torus; the state of both dynamics.

    Keeps an optional cell list (rebuilt lazily after mutations) and an
    optional cached total energy maintained through increments.
    """

    def __init__(self, points, dom: TorusDomain):
        pts = np.asarray(points, dtype=float).reshape(-1, dom.d)
        self.dom = dom
        self.points = wrap(pts, dom) if pts.size else pts.reshape(0, dom.d)
        self._cl: Optional[CellList] = None
        self._cl_stale = True
        self.cached_energy: Optional[float] = None

    @staticmethod
    def empty(dom: TorusDomain) -> "Configuration":
        return Configuration(np.empty((0, dom.d)), dom)

    def __len__(self) -> int:
        return len(self.points)

    def copy(self) -> "Configuration":
        c = Configuration(self.points.copy(), self.dom)
        c.cached_energy = self.cached_energy
        return c

    def cell_list(self, interaction_range: float) -> CellList:
        if (self._cl is None or self._cl_stale
                or self._cl.range != interaction_range):
            self._cl = CellList(self.dom, interaction_range)
            self._cl.rebuild(self.points)
            self._cl_stale = False
        return self._cl

    def _invalidate(self):
        self._cl_stale = True

    def add(self, x, energy_increment: Optional[float] = None) -> None:
        xw = wrap(np.asarray(x, dtype=float), self.dom)
        self.points = np.vstack([self.points, xw[None, :]])
        self._invalidate()
        if self.cached_energy is not None and energy_increment is not None:
            self.cached_energy += energy_increment
        else:
            self.cached_energy = None

    def remove(self, i: int, energy_decrement: Optional[float] = None) -> None:
        self.points = np.delete(self.points, i, axis=0)
        self._invalidate()
        if self.cached_energy is not None and energy_decrement is not None:
            self.cached_energy -= energy_decrement
        else:
            self.cached_energy = None

    def move(self, i: int, x_new) -> None:
        self.points = self.points.copy()
        self.points[i] = wrap(np.asarray(x_new, dtype=float), self.dom)
        self._invalidate()
        self.cached_energy = None


def relative_energy(x, gamma: Configuration, m: ModelSpec) -> float:
    """E(x, gamma): interaction energy of a particle at x with gamma.

    Callers pass gamma with x already removed where the formulas require it.
    Routes through the cell list for O(neighbors) work when the potential has
    finite range; +inf flags a hard-core overlap.
    """
    phi = m.phi
    if phi.kind == "zero" or len(gamma) == 0:
        return 0.0
    R = phi.range
    if R < 0.5 * m.dom.L and len(gamma) > 8:
        cl = gamma.cell_list(R)
        ids = neighbors(cl, x, R, expected_count=len(gamma))
        if not ids:
            return 0.0
        pts = gamma.points[ids]
    else:
        pts = gamma.points
    return float(kernels.rel_energy(pts, np.asarray(x, dtype=float), m.dom.L,
                                    phi.kind_id, phi.kernel_params))


def total_energy(gamma: Configuration, m: ModelSpec) -> float:
    """U(gamma) summed over unordered pairs; satisfies
    U(gamma) = U(gamma \\ x) + E(x, gamma \\ x) exactly."""
    u = float(kernels.total_energy(gamma.points, m.dom.L,
                                   m.phi.kind_id, m.phi.kernel_params))
    if gamma.cached_energy is not None and math.isfinite(u):
        rel = abs(gamma.cached_energy - u) / max(abs(u), 1.0)
        assert rel <= 1e-9, f"cached energy drifted by {rel:.2e} relative"
    gamma.cached_energy = u if math.isfinite(u) else None
    return u


def _energy_factor(e_x: float, e_y: float, s: float) -> float:
    """exp(s E(x,.) - (1-s) E(y,.)) with explicit hard-core conventions."""
    if math.isinf(e_y):          # jump/birth into a hard core is forbidden
        return 0.0
    if math.isinf(e_x):          # leaving an overlap: rate treated as 0 too
        return 0.0
    arg = s * e_x - (1.0 - s) * e_y
    if arg > 700.0:
        return math.inf
    return math.exp(arg)


def kawasaki_rate(x, y, gamma_minus_x: Configuration, m: ModelSpec) -> float:
    """Hop rate x -> y given the rest of the configuration.

    a_eps(x - y) * exp[s E(x, gamma\\x) - (1-s) E(y, gamma\\x)]; at s=0 this
    is the plain exp(-E(y, gamma\\x)) energy weight.
    """
    e_x = relative_energy(x, gamma_minus_x, m)
    e_y = relative_energy(y, gamma_minus_x, m)
    factor = _energy_factor(e_x, e_y, m.s)
    cap = m.thinning_cap
    if factor > cap * (1.0 + 1e-9):
        raise RateBoundError(
            f"energy factor {factor:.3e} exceeds rate_cap {cap:.3e}; "
            "the configuration lies outside the supported regime")
    disp = min_image_disp(np.asarray(x, float), np.asarray(y, float), m.dom)
    return float(a_eps_eval(m.a, m.eps, disp[None, :], m.dom)[0]) * factor


def glauber_rates(x, gamma: Configuration, m: ModelSpec, alpha: float) -> tuple[float, float]:
    """(death rate, birth density) at x.

    If x is a point of gamma, the energy is taken against gamma with x
    removed (the death-rate setting); otherwise against gamma as given (the
    birth setting).  Both returned values use that one energy, which is the
    pairing detailed balance requires:

        death  = alpha * exp(+s E),   birth = alpha * z * exp(-(1-s) E).
    """
    xa = np.asarray(x, dtype=float).reshape(-1)
    matches = np.nonzero(np.all(gamma.points == xa, axis=1))[0] if len(gamma) else []
    if len(matches):
        rest = Configuration(np.delete(gamma.points, matches[0], axis=0), gamma.dom)
        e = relative_energy(xa, rest, m)
    else:
        e = relative_energy(xa, gamma, m)
    s = m.s
    cap = m.thinning_cap
    if math.isinf(e):
        death = alpha * (1.0 if s == 0.0 else math.inf)  # unreachable state
        return (death, 0.0)
    death_factor = math.exp(s * e) if s * e < 700.0 else math.inf
    birth_factor = math.exp(-(1.0 - s) * e) if -(1.0 - s) * e < 700.0 else math.inf
    for f in (death_factor, birth_factor):
        if f > cap * (1.0 + 1e-9):
            raise RateBoundError(
                f"energy factor {f:.3e} exceeds rate_cap {cap:.3e}")
    return alpha * death_factor, alpha * m.z * birth_factor


def alpha_from_k1(k1: float, z: float, a: JumpKernel) -> float:
    """Death rate of the limiting birth-death process: k1 * mass(a) / z."""
    if k1 <= 0:
        raise ValueError("k1 must be positive")
    return k1 * a.mass / z


def _radial_measure(d: int):
    if d == 1:
        return lambda r: 2.0
    if d == 2:
        return lambda r: 2.0 * math.pi * r
    return lambda r: 4.0 * math.pi * r * r


def lahht_check(m: ModelSpec) -> tuple[float, float, bool]:
    """Low-activity / high-temperature test.

    lhs = z * integral of |e^{-phi} - 1|; rhs = (2 e^{1+2B})^{-1}.  The lhs
    integral runs over the potential's support by adaptive quadrature.
    """
    phi = m.phi
    rhs = 1.0 / (2.0 * math.exp(1.0 + 2.0 * phi.B))
    if phi.kind == "zero":
        return 0.0, rhs, True
    meas = _radial_measure(m.dom.d)

    def integrand(r):
        v = float(phi.at_distance(r))
        core = 1.0 if math.isinf(v) else abs(math.exp(-v) - 1.0)
        return core * meas(r)

    pts = [b for b in phi.radial_breakpoints() if 0 < b < phi.range]
    val, err = integrate.quad(integrand, 0.0, phi.range, points=pts, limit=200)
    if not math.isfinite(val) or err > 1e-8 * max(abs(val), 1.0) + 1e-12:
        raise ArithmeticError(f"quadrature did not converge (err={err:.2e})")
    lhs = m.z * val
    return lhs, rhs, lhs < rhs
