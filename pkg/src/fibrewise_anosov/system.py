"""Fibrewise systems F(b, x) = (f(b), A x + v(b) + p(b, x)) on B x T^d.

Fibre maps are always given through their lifts to R^d.  Because ``p`` is
a trigonometric polynomial the lift is exactly equivariant,
``F_b(x + m) = F_b(x) + A m``, and the straight-line homotopy to the affine
model ``x -> A x + v(b)`` makes the displacement ``F - G`` a globally
defined periodic function on the lift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .base import BaseSystem
from .linear import AffineModel, IntegerMatrix
from .torus import BundlePoint, Grid, LiftPoint, TorusPoint, wrap
from .trig import TrigPolynomial


class InversionError(RuntimeError):
    """Newton inversion of a fibre map did not converge."""


class NotEquivariantError(ValueError):
    """A supplied fibre map is not the lift of a torus map."""


class HomologyMismatch(ValueError):
    pass


_EPS = np.finfo(float).eps


class FibrewiseSystem:
    def __init__(
        self,
        base: BaseSystem,
        matrix,
        translation: TrigPolynomial | None = None,
        perturbation: TrigPolynomial | None = None,
        name: str = "",
    ):
        self.base = base
        self.matrix = IntegerMatrix.of(matrix)
        if not self.matrix.unimodular:
            raise ValueError(f"fibre matrix must lie in GL(d,Z); det = {self.matrix.det}")
        k, d = base.dim, self.matrix.d
        self.translation = translation if translation is not None else TrigPolynomial.zero(k, d)
        self.perturbation = perturbation if perturbation is not None else TrigPolynomial.zero(k + d, d)
        if (self.translation.dim_in, self.translation.dim_out) != (k, d):
            raise ValueError(f"translation must map R^{k} -> R^{d}")
        if (self.perturbation.dim_in, self.perturbation.dim_out) != (k + d, d):
            raise ValueError(f"perturbation must map R^{k + d} -> R^{d}")
        self.name = name
        self._a = self.matrix.array
        self._a_inv = self.matrix.inverse().array
        self._x_inputs = list(range(k, k + d))

    def __repr__(self) -> str:
        return f"FibrewiseSystem({self.name or 'unnamed'}, k={self.k}, d={self.d})"

    @property
    def k(self) -> int:
        return self.base.dim

    @property
    def d(self) -> int:
        return self.matrix.d

    # -- constants used for certified margins ---------------------------------

    @property
    def perturbation_sup(self) -> float:
        """M_p: bound on sup |p|."""
        return self.perturbation.sup_bound()

    @property
    def perturbation_lipschitz(self) -> float:
        """L_p: Lipschitz bound of p in the fibre variable."""
        return self.perturbation.lipschitz(self._x_inputs)

    @property
    def jacobian_sup(self) -> float:
        """Bound on |A + d_x p| over the whole bundle."""
        return float(np.linalg.norm(self._a, 2)) + self.perturbation.jacobian_sup(self._x_inputs)

    def jacobian_lipschitz_axes(self) -> np.ndarray:
        """Per-axis Lipschitz bounds of (b, x) -> d_x p(b, x)."""
        return self.perturbation.jacobian_lipschitz_axes(self._x_inputs)

    @property
    def lipschitz_total(self) -> float:
        """Crude Lipschitz bound of F on lifts of the total space."""
        return (
            self.base.lipschitz
            + float(np.linalg.norm(self._a, 2))
            + self.translation.lipschitz()
            + self.perturbation.lipschitz()
        )

    # -- evaluation -----------------------------------------------------------

    def _z(self, b, x) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(b.shape[:-1], x.shape[:-1])
        return np.concatenate(
            [np.broadcast_to(b, shape + (self.k,)), np.broadcast_to(x, shape + (self.d,))], axis=-1
        )

    def lift_map(self, b, x) -> np.ndarray:
        """F_b on the lift: A x + v(b) + p(b, x)."""
        x = np.asarray(x, dtype=float)
        return x @ self._a.T + self.translation(b) + self.perturbation(self._z(b, x))

    def increment(self, b, x, delta) -> np.ndarray:
        """F_b(x + delta) - F_b(x), computed without cancellation in A x."""
        x = np.asarray(x, dtype=float)
        delta = np.asarray(delta, dtype=float)
        p = self.perturbation
        if not p.terms:
            return delta @ self._a.T
        return delta @ self._a.T + p(self._z(b, x + delta)) - p(self._z(b, x))

    def fibre_jacobian(self, b, x) -> np.ndarray:
        jac = self.perturbation.jacobian(self._z(b, x))[..., :, self.k :]
        return self._a + jac

    def forward(self, b, x) -> tuple[np.ndarray, np.ndarray]:
        return self.base.forward(b), wrap(self.lift_map(b, x))

    def backward(self, b, x, tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
        """F^-1 on the torus: base inverse, then fibre inversion."""
        b_prev = self.base.inverse(b)
        return b_prev, wrap(self.invert_fibre(b_prev, x, tol))

    def invert_fibre(self, b, y, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
        """Solve F_b(x) = y on the lift by damped Newton iteration.

        Starts from A^-1 (y - v(b)); the step is halved while the residual
        fails to decrease.  Points whose residual stalls at rounding level
        are accepted even if ``tol`` is below what doubles can deliver.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        b = np.asarray(b, dtype=float)
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        y2 = np.atleast_2d(y).copy()
        b2 = np.broadcast_to(np.atleast_2d(b), (y2.shape[0], self.k)).copy()
        x = (y2 - self.translation(b2)) @ self._a_inv.T
        if not self.perturbation.terms:
            return x[0] if single else x

        floor = 64 * _EPS * (1.0 + np.abs(y2).max(axis=1))

        def residual(xx, bb, yy):
            return self.lift_map(bb, xx) - yy

        g = residual(x, b2, y2)
        res = np.linalg.norm(g, axis=1)
        active = res > tol
        polish = np.zeros(res.size, dtype=int)
        for _ in range(max_iter):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            bb, yy, xx = b2[idx], y2[idx], x[idx]
            step = np.linalg.solve(self.fibre_jacobian(bb, xx), g[idx][..., None])[..., 0]
            t = np.ones(idx.size)
            best_x, best_g = xx.copy(), g[idx].copy()
            best_r = res[idx].copy()
            pending = np.ones(idx.size, dtype=bool)
            for _ in range(40):
                cand = xx - t[:, None] * step
                cg = residual(cand, bb, yy)
                cr = np.linalg.norm(cg, axis=1)
                ok = pending & (cr < best_r)
                best_x[ok], best_g[ok], best_r[ok] = cand[ok], cg[ok], cr[ok]
                pending &= ~ok
                if not pending.any():
                    break
                t[pending] *= 0.5
            x[idx], g[idx], res[idx] = best_x, best_g, best_r
            # below the rounding floor: take two more polishing steps at most
            at_floor = best_r <= floor[idx]
            polish[idx[at_floor]] += 1
            done = (best_r <= tol) | (pending & at_floor) | (polish[idx] > 2)
            active[idx[done]] = False
        if active.any():
            worst = float(res[active].max())
            raise InversionError(
                f"Newton inversion failed at {int(active.sum())} points (residual {worst:.3g}); "
                "the perturbation is too large relative to A"
            )
        return x[0] if single else x

    def affine_model(self) -> AffineModel:
        return AffineModel(self.matrix, self.translation, self.base)

    def with_perturbation(self, perturbation: TrigPolynomial, name: str | None = None) -> "FibrewiseSystem":
        return FibrewiseSystem(self.base, self.matrix, self.translation, perturbation, name or self.name)

    # -- invariants ------------------------------------------------------------

    def equivariance_defect(self, b, x, deck) -> float:
        m = np.asarray(deck, dtype=float)
        lhs = self.lift_map(b, np.asarray(x) + m)
        rhs = self.lift_map(b, x) + m @ self._a.T
        return float(np.max(np.abs(lhs - rhs)))

    def min_jacobian_det(self, grid: Grid) -> float:
        """Smallest sign(det A) * det(A + d_x p) over the grid points of B x T^d.

        Fibre maps homotopic to A keep the sign of det A; a non-positive
        value means some fibre map folds.
        """
        z = grid.array()
        dets = np.linalg.det(self.fibre_jacobian(z[:, : self.k], z[:, self.k :]))
        return float((np.sign(self.matrix.det) * dets).min())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "d": self.d,
            "matrix": self.matrix.tolist(),
            "base": self.base.to_dict(),
            "translation": self.translation.to_dict(),
            "perturbation": self.perturbation.to_dict(),
        }


def evaluate(F: FibrewiseSystem, e: BundlePoint) -> BundlePoint:
    if e.base.dim != F.k or e.fibre.dim != F.d:
        raise ValueError("bundle point dimensions do not match the system")
    b, x = F.forward(np.asarray(e.base), np.asarray(e.fibre))
    return BundlePoint(TorusPoint(tuple(b)), TorusPoint(tuple(x)))


def invert_fibre(F: FibrewiseSystem, b: TorusPoint, y: LiftPoint, tol: float = 1e-13) -> LiftPoint:
    return LiftPoint(tuple(F.invert_fibre(np.asarray(b), np.asarray(y), tol)))


def fibre_jacobian(F: FibrewiseSystem, e: BundlePoint) -> np.ndarray:
    return F.fibre_jacobian(np.asarray(e.base), np.asarray(e.fibre))


def induced_homology_matrix(
    F: FibrewiseSystem | Callable,
    k: int | None = None,
    d: int | None = None,
    samples: int = 10,
    seed: int = 0,
) -> IntegerMatrix:
    """Integer matrix induced on H_1 of the fibre by an equivariant lift.

    Column j is ``F_b(x0 + e_j) - F_b(x0)``.  ``F`` may be a system or any
    callable ``lift(b, x)`` (then ``k`` and ``d`` are required).
    """
    if isinstance(F, FibrewiseSystem):
        lift_fn, k, d = F.lift_map, F.k, F.d
    else:
        if k is None or d is None:
            raise ValueError("k and d are required for a bare lift")
        lift_fn = F
    rng = np.random.default_rng(seed)
    found = None
    for _ in range(samples):
        b = rng.random(k)
        x0 = rng.random(d)
        f0 = np.asarray(lift_fn(b, x0), dtype=float)
        cols = np.stack([np.asarray(lift_fn(b, x0 + e), dtype=float) - f0 for e in np.eye(d)], axis=1)
        rounded = np.rint(cols)
        off = float(np.max(np.abs(cols - rounded)))
        if off > 0.25:
            raise NotEquivariantError(f"loop displacements are {off:.3g} away from integers")
        if found is None:
            found = rounded
        elif not np.array_equal(found, rounded):
            raise NotEquivariantError("induced matrix depends on the sample point")
    return IntegerMatrix.of(found.astype(int))


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """r(b, x) = F_b(x) - G_b(x) on the lift, with a certified sup bound.

    ``sup_bound`` = grid maximum of |r| plus the per-axis Lipschitz margin,
    so it bounds |r| everywhere, not just on the grid.
    """

    system: FibrewiseSystem
    model: AffineModel
    field: TrigPolynomial
    grid: Grid
    grid_max: float
    margin: float

    @property
    def sup_bound(self) -> float:
        return self.grid_max + self.margin

    @property
    def is_zero(self) -> bool:
        return self.field.is_zero

    def __call__(self, b, x) -> np.ndarray:
        return self.field(self.system._z(b, x))

    def to_dict(self) -> dict:
        return {
            "sup_bound": self.sup_bound,
            "grid_max": self.grid_max,
            "lipschitz_margin": self.margin,
            "grid": list(self.grid.resolution),
        }


def displacement(
    F: FibrewiseSystem,
    model: AffineModel | None = None,
    grid: Grid | None = None,
    relative_margin: float = 1e-3,
    budget: int = 2_000_000,
) -> DisplacementField:
    """Displacement of F from an affine model (default: F's own affine part).

    With the same matrix, ``r = v_F(b) - v_G(b) + p(b, x)``; equal
    translations cancel term by term so ``p = 0`` gives exactly ``r = 0``.
    """
    model = model if model is not None else F.affine_model()
    if model.matrix != F.matrix:
        raise HomologyMismatch(
            f"model matrix {model.matrix.tolist()} differs from the system's {F.matrix.tolist()}"
        )
    k, d = F.k, F.d
    shift = (F.translation - model.translation).embed(k + d, list(range(k)))
    field = (shift + F.perturbation).simplified()
    L = field.lipschitz_axes()
    if grid is None:
        target = max(relative_margin * field.sup_bound(), 1e-12)
        grid = Grid.for_lipschitz(L, target, budget)
    if field.is_zero:
        return DisplacementField(F, model, field, grid, 0.0, 0.0)
    z = grid.array()
    gmax = 0.0
    for start in range(0, z.shape[0], 200_000):
        chunk = field(z[start : start + 200_000])
        gmax = max(gmax, float(np.linalg.norm(chunk, axis=1).max()))
    return DisplacementField(F, model, field, grid, gmax, grid.lipschitz_margin(L))
