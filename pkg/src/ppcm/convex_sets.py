"""Closed convex sets with closed-form Euclidean projections."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeMismatch


def _vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


class ConvexSet:
    """Base class. Subclasses implement ``project`` and ``violation``."""

    variant = ""
    dim: int

    def _check(self, v):
        v = _vec(v)
        if v.shape != (self.dim,):
            raise ShapeMismatch(f"{self.variant} has dimension {self.dim}, got vector of shape {v.shape}")
        return v

    def project(self, v) -> np.ndarray:
        raise NotImplementedError

    def violation(self, v) -> float:
        """Largest amount by which ``v`` breaks a defining inequality (0 inside)."""
        raise NotImplementedError

    def contains(self, v, tol: float = 0.0) -> bool:
        return self.violation(self._check(v)) <= tol

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    dim: int
    variant = "whole_space"

    def project(self, v):
        return self._check(v).copy()

    def violation(self, v):
        return 0.0

    def to_json(self):
        return {"variant": self.variant, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class NonnegOrthant(ConvexSet):
    dim: int
    variant = "nonneg_orthant"

    def project(self, v):
        return np.maximum(self._check(v), 0.0)

    def violation(self, v):
        return float(max(0.0, -np.min(v)))

    def to_json(self):
        return {"variant": self.variant, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray
    variant = "box"

    def __post_init__(self):
        lo, hi = _vec(self.lower), _vec(self.upper)
        if lo.shape != hi.shape:
            raise ShapeMismatch("box bounds differ in shape")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, v):
        return kernels.project_box(self._check(v), self.lower, self.upper)

    def violation(self, v):
        return float(max(0.0, np.max(self.lower - v), np.max(v - self.upper)))

    def to_json(self):
        return {"variant": self.variant, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    variant = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def project(self, v):
        # v == center falls in the interior branch and is returned as is
        return kernels.project_ball(self._check(v), self.center, self.radius)

    def violation(self, v):
        return float(max(0.0, np.linalg.norm(v - self.center) - self.radius))

    def to_json(self):
        return {"variant": self.variant, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{x : normal . x <= offset}``."""

    normal: np.ndarray
    offset: float
    variant = "halfspace"

    def __post_init__(self):
        a = _vec(self.normal)
        if not np.linalg.norm(a) > 0:
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.shape[0]

    def project(self, v):
        v = self._check(v)
        excess = float(self.normal @ v) - self.offset
        if excess <= 0:
            return v.copy()
        return v - (excess / float(self.normal @ self.normal)) * self.normal

    def violation(self, v):
        return float(max(0.0, self.normal @ v - self.offset))

    def to_json(self):
        return {"variant": self.variant, "normal": self.normal.tolist(), "offset": self.offset}


def project(s: ConvexSet, v) -> np.ndarray:
    return s.project(v)


def contains(s: ConvexSet, v, tol: float = 0.0) -> bool:
    return s.contains(v, tol)


def set_from_json(data: dict) -> ConvexSet:
    kind = data.get("variant")
    if kind == "whole_space":
        return WholeSpace(int(data["dim"]))
    if kind == "nonneg_orthant":
        return NonnegOrthant(int(data["dim"]))
    if kind == "box":
        return Box(data["lower"], data["upper"])
    if kind == "ball":
        return Ball(data["center"], data["radius"])
    if kind == "halfspace":
        return Halfspace(data["normal"], data["offset"])
    raise ValueError(f"unknown convex set variant {kind!r}")
