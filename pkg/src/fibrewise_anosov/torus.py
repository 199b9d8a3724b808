"""Points, lifts and grids on flat tori.

The fundamental domain is [0, 1)^n and all distances use the flat metric
inherited from the Euclidean metric on the universal cover.  Most of the
library works with stacked numpy arrays of shape ``(n_points, dim)``; the
small value types below are the public, validated face of the same data.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


def wrap(x) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1).

    ``np.mod`` can return exactly 1.0 for tiny negative inputs, which is
    folded back to 0.0.
    """
    r = np.mod(np.asarray(x, dtype=float), 1.0)
    return np.where(r >= 1.0, 0.0, r)


def wrap_centered(x) -> np.ndarray:
    """Representative of ``x`` mod 1 in [-1/2, 1/2)."""
    return wrap(np.asarray(x, dtype=float) + 0.5) - 0.5


def torus_dist(x, y) -> np.ndarray:
    """Flat torus distance between stacked points (last axis = coordinates)."""
    diff = wrap_centered(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return np.linalg.norm(diff, axis=-1)


def _as_vector(values, name: str) -> tuple[float, ...]:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must have positive dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite coordinates")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class TorusPoint:
    """A point of the flat torus, coordinates in [0, 1)."""

    coords: tuple[float, ...]

    def __post_init__(self):
        coords = _as_vector(self.coords, "TorusPoint")
        if any(c < 0.0 or c >= 1.0 for c in coords):
            raise ValueError(f"TorusPoint coordinates must lie in [0, 1): {coords}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def of(cls, values) -> "TorusPoint":
        """Build a torus point from arbitrary reals, reducing mod 1."""
        return cls(tuple(wrap(np.asarray(values, dtype=float).reshape(-1))))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or float)


@dataclass(frozen=True)
class LiftPoint:
    """A point of the universal cover R^n."""

    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_vector(self.coords, "LiftPoint"))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or float)

    def __add__(self, other: "DeckVector") -> "LiftPoint":
        if not isinstance(other, DeckVector):
            return NotImplemented
        _check_dims(self.dim, other.dim)
        return LiftPoint(tuple(np.asarray(self) + np.asarray(other)))


@dataclass(frozen=True)
class DeckVector:
    """Integer translation of the universal cover."""

    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("DeckVector must have positive dimension")
        for e in entries:
            if isinstance(e, (bool, np.bool_)) or int(e) != e:
                raise ValueError(f"DeckVector entries must be integers: {entries}")
        object.__setattr__(self, "entries", tuple(int(e) for e in entries))

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype or float)


@dataclass(frozen=True)
class BundlePoint:
    """A point (b, x) of the trivial bundle B x T^d."""

    base: TorusPoint
    fibre: TorusPoint

    @classmethod
    def of(cls, base, fibre) -> "BundlePoint":
        return cls(TorusPoint.of(base), TorusPoint.of(fibre))


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise ValueError(f"dimension mismatch: {a} != {b}")


def project(p: LiftPoint) -> TorusPoint:
    """Covering projection R^n -> T^n."""
    return TorusPoint(tuple(wrap(np.asarray(p))))


def lift(x: TorusPoint) -> LiftPoint:
    """The canonical lift of ``x`` (its representative in [0, 1)^n)."""
    return LiftPoint(x.coords)


def torus_distance(x: TorusPoint, y: TorusPoint) -> float:
    _check_dims(x.dim, y.dim)
    return float(torus_dist(np.asarray(x), np.asarray(y)))


def translate(x: TorusPoint, t: TorusPoint) -> TorusPoint:
    """The torus acting on itself by addition."""
    _check_dims(x.dim, t.dim)
    return TorusPoint(tuple(wrap(np.asarray(x) + np.asarray(t))))


def negate(t: TorusPoint) -> TorusPoint:
    return TorusPoint(tuple(wrap(-np.asarray(t))))


class Grid:
    """Uniform lattice {i / n_axis} on a torus, enumerated lazily.

    Every point of the torus lies within ``1 / (2 n_i)`` of a lattice point
    along each axis, which is what the Lipschitz margins below rely on.
    """

    def __init__(self, resolution: Sequence[int]):
        res = tuple(int(n) for n in resolution)
        if not res or any(n < 1 for n in res):
            raise ValueError(f"grid resolution must be positive integers: {resolution}")
        self.resolution = res

    @property
    def dim(self) -> int:
        return len(self.resolution)

    def __len__(self) -> int:
        return int(np.prod(self.resolution))

    def __iter__(self) -> Iterator[TorusPoint]:
        for idx in itertools.product(*(range(n) for n in self.resolution)):
            yield TorusPoint(tuple(i / n for i, n in zip(idx, self.resolution)))

    def __repr__(self) -> str:
        return f"Grid({list(self.resolution)})"

    def array(self) -> np.ndarray:
        """All lattice points as an ``(len(self), dim)`` array (C order)."""
        axes = [np.arange(n) / n for n in self.resolution]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def half_spacing(self) -> np.ndarray:
        """Per-axis covering radius 1/(2 n_i)."""
        return 0.5 / np.asarray(self.resolution, dtype=float)

    def lipschitz_margin(self, lipschitz_axes) -> float:
        """Upper bound on |g(z) - g(nearest lattice point)| for per-axis Lipschitz g."""
        return float(np.dot(np.asarray(lipschitz_axes, dtype=float), self.half_spacing()))

    @classmethod
    def for_lipschitz(cls, lipschitz_axes, target: float, budget: int = 2_000_000) -> "Grid":
        """Smallest lattice whose Lipschitz margin is below ``target``.

        Axes on which the function is constant get a single point.  If the
        point budget is exceeded, all active axes are coarsened uniformly and
        the target is missed (callers read the achieved margin back).
        """
        L = np.asarray(lipschitz_axes, dtype=float)
        active = L > 0
        n_active = max(int(active.sum()), 1)
        res = np.ones(L.size, dtype=int)
        res[active] = np.ceil(L[active] * n_active / (2.0 * target)).astype(int)
        res = np.maximum(res, 1)
        total = float(np.prod(res.astype(float)))
        if total > budget:
            shrink = (budget / total) ** (1.0 / n_active)
            res[active] = np.maximum(1, np.floor(res[active] * shrink)).astype(int)
        return cls(res)
