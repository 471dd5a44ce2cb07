"""Compactly supported observables used by the generator and FDD experiments.

A test function is a sum of at most five bumps/steps; evaluation is
vectorized over point arrays, and the 1-d breakpoint list feeds the
breakpoint-aligned quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import TorusDomain, min_image_disp


@dataclass(frozen=True)
class Bump:
    """Smooth radial bump: height * cos^2(pi r / (2 radius)) inside radius."""

    center: tuple[float, ...]
    radius: float
    height: float

    def values(self, pts: np.ndarray, dom: TorusDomain) -> np.ndarray:
        if pts.shape[-1] == 1:
            dd = np.mod(np.abs(pts[..., 0] - self.center[0]), dom.L)
            r = np.minimum(dd, dom.L - dd)
        else:
            disp = min_image_disp(pts, np.asarray(self.center, float), dom)
            r = np.sqrt(np.sum(np.atleast_2d(disp) ** 2, axis=-1))
        inside = r < self.radius
        out = np.zeros_like(r)
        out[inside] = self.height * np.cos(
            0.5 * np.pi * r[inside] / self.radius) ** 2
        return out

    def breakpoints_1d(self) -> list[float]:
        c = self.center[0]
        return [c - self.radius, c, c + self.radius]

    def support_radius(self) -> float:
        return self.radius

    def support_center(self) -> np.ndarray:
        return np.asarray(self.center, float)


@dataclass(frozen=True)
class Step:
    """Axis-aligned box indicator times a height."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    height: float

    def values(self, pts: np.ndarray, dom: TorusDomain) -> np.ndarray:
        if pts.shape[-1] == 1:
            c = 0.5 * (self.lo[0] + self.hi[0])
            half = 0.5 * (self.hi[0] - self.lo[0])
            dd = np.mod(np.abs(pts[..., 0] - c), dom.L)
            dd = np.minimum(dd, dom.L - dd)
            return np.where(dd <= half, self.height, 0.0)
        pts = np.atleast_2d(pts)
        center = 0.5 * (np.asarray(self.lo, float) + np.asarray(self.hi, float))
        half = 0.5 * (np.asarray(self.hi, float) - np.asarray(self.lo, float))
        disp = min_image_disp(pts, center, dom)
        inside = np.all(np.abs(np.atleast_2d(disp)) <= half, axis=-1)
        return np.where(inside, self.height, 0.0)

    def breakpoints_1d(self) -> list[float]:
        return [self.lo[0], self.hi[0]]

    def support_radius(self) -> float:
        lo = np.asarray(self.lo, float)
        hi = np.asarray(self.hi, float)
        return float(np.sqrt(np.sum((0.5 * (hi - lo)) ** 2)))

    def support_center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo, float) + np.asarray(self.hi, float))


Term = Union[Bump, Step]


@dataclass(frozen=True)
class TestFunction:
    """Bounded observable with compact support (sum of <= 5 bumps/steps)."""

    __test__ = False  # keep pytest from collecting this as a test class

    terms: tuple[Term, ...]

    def __post_init__(self):
        if not 1 <= len(self.terms) <= 5:
            raise ValueError("a test function holds between 1 and 5 terms")

    @staticmethod
    def bump(center, radius: float, height: float) -> "TestFunction":
        center = tuple(np.atleast_1d(np.asarray(center, float)))
        if radius <= 0:
            raise ValueError("bump radius must be positive")
        return TestFunction((Bump(center, radius, height),))

    @staticmethod
    def step(lo, hi, height: float) -> "TestFunction":
        lo = tuple(np.atleast_1d(np.asarray(lo, float)))
        hi = tuple(np.atleast_1d(np.asarray(hi, float)))
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("step needs lo < hi per axis")
        return TestFunction((Step(lo, hi, height),))

    @staticmethod
    def sum_of(*parts: "TestFunction") -> "TestFunction":
        terms = tuple(t for p in parts for t in p.terms)
        return TestFunction(terms)

    def __call__(self, pts, dom: TorusDomain) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim <= 1
        arr = np.atleast_2d(pts if pts.ndim == 2 else pts.reshape(1, -1))
        total = np.zeros(arr.shape[0])
        for t in self.terms:
            total = total + t.values(arr, dom)
        return float(total[0]) if single else total

    def pairing(self, points: np.ndarray, dom: TorusDomain) -> float:
        """Sum of the observable over a configuration's points."""
        if len(points) == 0:
            return 0.0
        return float(np.sum(self(points, dom)))

    def breakpoints_1d(self) -> np.ndarray:
        return np.asarray(sorted(b for t in self.terms
                                 for b in t.breakpoints_1d()), dtype=float)

    def support_window_1d(self) -> tuple[float, float]:
        bps = self.breakpoints_1d()
        return float(bps[0]), float(bps[-1])

    def max_abs(self) -> float:
        return float(sum(abs(t.height) for t in self.terms))

    def check_support(self, dom: TorusDomain) -> None:
        """The whole support must fit in a ball of radius < L/4."""
        centers = np.atleast_2d([t.support_center() for t in self.terms])
        mid = centers.mean(axis=0)
        radius = max(float(np.linalg.norm(c - mid)) + t.support_radius()
                     for c, t in zip(centers, self.terms))
        if radius >= 0.25 * dom.L:
            raise ValueError(
                f"test-function support radius {radius:.3g} "
                f"must be < L/4 = {0.25 * dom.L:.3g}")
