"""Integer matrices, hyperbolicity and the stable/unstable splitting.

The splitting is computed from a real Schur form sorted so that the
eigenvalues inside the unit circle come first.  Solving one Sylvester
equation block-diagonalises the Schur form, which gives the spectral
projectors and, more importantly, numerically stable factorizations of
``A^n P_s`` and ``A^-n P_u``.  Forming those from integer powers of A
loses everything to cancellation once ``|A|^n`` is large.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from .torus import BundlePoint, TorusPoint, wrap

SAFETY_MARGIN = 1e-12


class NotHyperbolicError(ValueError):
    pass


class NumericalBreakdown(RuntimeError):
    """The eigenvalue solver failed; says nothing about hyperbolicity."""


def bareiss_det(rows: Sequence[Sequence[int]]) -> int:
    """Exact integer determinant by fraction-free elimination."""
    m = [list(map(int, r)) for r in rows]
    n = len(m)
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1] if n else 1


def _exact_inverse(rows: Sequence[Sequence[int]]) -> list[list[Fraction]]:
    n = len(rows)
    aug = [[Fraction(v) for v in r] + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    for col in range(n):
        piv = next(i for i in range(col, n) if aug[i][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for i in range(n):
            if i != col and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[col])]
    return [r[n:] for r in aug]


@dataclass(frozen=True)
class IntegerMatrix:
    """Square integer matrix, stored row-major."""

    entries: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.entries)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError(f"matrix must be square and non-empty, got {self.entries}")
        for r in rows:
            for v in r:
                if isinstance(v, (bool, np.bool_)) or int(v) != v:
                    raise ValueError(f"matrix entries must be integers, got {v!r}")
        object.__setattr__(self, "entries", tuple(tuple(int(v) for v in r) for r in rows))

    @classmethod
    def of(cls, rows) -> "IntegerMatrix":
        if isinstance(rows, IntegerMatrix):
            return rows
        return cls(tuple(tuple(r) for r in np.asarray(rows).tolist()))

    @classmethod
    def identity(cls, d: int) -> "IntegerMatrix":
        return cls(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)))

    @property
    def d(self) -> int:
        return len(self.entries)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array(self.entries, dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def det(self) -> int:
        return bareiss_det(self.entries)

    @property
    def unimodular(self) -> bool:
        return abs(self.det) == 1

    def inverse(self) -> "IntegerMatrix":
        """Exact inverse; only defined over Z when |det| = 1."""
        if not self.unimodular:
            raise ValueError(f"matrix is not in GL(d,Z): det = {self.det}")
        inv = _exact_inverse(self.entries)
        return IntegerMatrix(tuple(tuple(int(v) for v in r) for r in inv))

    def transpose(self) -> "IntegerMatrix":
        return IntegerMatrix(tuple(zip(*self.entries)))

    def __matmul__(self, other: "IntegerMatrix") -> "IntegerMatrix":
        return IntegerMatrix.of(np.array(self.entries, dtype=object) @ np.array(other.entries, dtype=object))

    def tolist(self) -> list[list[int]]:
        return [list(r) for r in self.entries]


@dataclass(frozen=True)
class HyperbolicityTest:
    hyperbolic: bool
    gap: float
    eigenvalues: tuple[complex, ...]

    def __bool__(self) -> bool:
        return self.hyperbolic


def is_hyperbolic(A, tol: float = 1e-9) -> HyperbolicityTest:
    """Eigenvalue-modulus test; ``gap`` is min over eigenvalues of ||mu| - 1|."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = IntegerMatrix.of(A).array if not isinstance(A, np.ndarray) else np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    try:
        mu = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown(str(exc)) from exc
    if not np.all(np.isfinite(mu)):
        raise NumericalBreakdown("non-finite eigenvalues")
    gap = float(np.min(np.abs(np.abs(mu) - 1.0)))
    return HyperbolicityTest(gap > tol, gap, tuple(complex(m) for m in mu))


def _eig_condition(block: np.ndarray) -> float:
    if block.shape[0] == 1:
        return 1.0
    _, vecs = np.linalg.eig(block)
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    return float(np.linalg.cond(vecs))


@dataclass(frozen=True, eq=False)
class HyperbolicSplitting:
    """Spectral splitting R^d = E^s + E^u of a hyperbolic integer matrix.

    With the Schur form ``A = Z T Z^T`` sorted stable-first and ``Y`` the
    Sylvester solution block-diagonalising ``T``::

        A^n P_s   = Z[:, :l] T11^n [I, -Y] Z^T
        A^-m P_u  = Z [Y; I] T22^-m Z[:, l:]^T

    ``growth_constant`` C bounds both ``|A^n P_s|`` and ``|A^-n P_u|`` by
    ``C lambda^n`` and also ``|A^n P_s| + |A^-(n+1) P_u| <= C lambda^n``,
    which is what the series tail estimate needs.
    """

    matrix: IntegerMatrix
    stable_projector: np.ndarray
    unstable_projector: np.ndarray
    lam: float
    growth_constant: float
    stable_dim: int
    frame: np.ndarray
    _t11: np.ndarray = field(repr=False)
    _t22_inv: np.ndarray = field(repr=False)
    _left_s: np.ndarray = field(repr=False)
    _right_s: np.ndarray = field(repr=False)
    _left_u: np.ndarray = field(repr=False)
    _right_u: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.matrix.d

    @property
    def unstable_dim(self) -> int:
        return self.d - self.stable_dim

    @property
    def stable_basis(self) -> np.ndarray:
        """Orthonormal basis of E^s, shape (d, l)."""
        return self.frame[:, : self.stable_dim]

    @cached_property
    def unstable_basis(self) -> np.ndarray:
        """Orthonormal basis of E^u, shape (d, d - l)."""
        q, _ = np.linalg.qr(self._left_u)
        return q

    def stable_factors(self, n_max: int) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
        """``(L, [T11^0..T11^n_max], R)`` with ``A^n P_s = L T11^n R``."""
        powers = [np.eye(self.stable_dim)]
        for _ in range(n_max):
            powers.append(self._t11 @ powers[-1])
        return self._left_s, powers, self._right_s

    def unstable_factors(self, n_max: int) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
        """``(L, [T22^0..T22^-n_max], R)`` with ``A^-m P_u = L T22^-m R``."""
        powers = [np.eye(self.unstable_dim)]
        for _ in range(n_max):
            powers.append(self._t22_inv @ powers[-1])
        return self._left_u, powers, self._right_u

    def stable_power(self, n: int) -> np.ndarray:
        L, p, R = self.stable_factors(n)
        return L @ p[n] @ R

    def unstable_inverse_power(self, m: int) -> np.ndarray:
        L, p, R = self.unstable_factors(m)
        return L @ p[m] @ R

    def check(self, tol: float = 1e-10, n_max: int = 30) -> dict[str, float]:
        """Residuals of the defining identities (all should be <= tol)."""
        a = self.matrix.array
        ps, pu = self.stable_projector, self.unstable_projector
        eye = np.eye(self.d)
        out = {
            "completeness": float(np.max(np.abs(ps + pu - eye))),
            "idempotent_s": float(np.max(np.abs(ps @ ps - ps))),
            "idempotent_u": float(np.max(np.abs(pu @ pu - pu))),
            "orthogonality": float(np.max(np.abs(ps @ pu))),
            "commute_s": float(np.max(np.abs(ps @ a - a @ ps))),
            "commute_u": float(np.max(np.abs(pu @ a - a @ pu))),
        }
        worst = 0.0
        for n in range(1, n_max + 1):
            worst = max(
                worst,
                np.linalg.norm(self.stable_power(n), 2) / (self.growth_constant * self.lam**n),
                np.linalg.norm(self.unstable_inverse_power(n), 2) / (self.growth_constant * self.lam**n),
            )
        out["growth_ratio"] = float(worst)
        return out

    def to_dict(self) -> dict:
        return {
            "stable_dim": self.stable_dim,
            "lambda": self.lam,
            "growth_constant": self.growth_constant,
            "stable_projector": self.stable_projector.tolist(),
        }


def compute_splitting(A) -> HyperbolicSplitting:
    A = IntegerMatrix.of(A)
    test = is_hyperbolic(A)
    if not test:
        raise NotHyperbolicError(f"matrix {A.tolist()} is not hyperbolic (gap {test.gap:.3g})")
    a = A.array
    T, Z, sdim = scipy.linalg.schur(a, output="real", sort="iuc")
    l, d = int(sdim), A.d
    if not 0 < l < d:
        raise NumericalBreakdown(f"degenerate stable dimension {l} for d={d}")
    t11, t12, t22 = T[:l, :l], T[:l, l:], T[l:, l:]
    # T11 Y - Y T22 = -T12 block-diagonalises T
    Y = scipy.linalg.solve_sylvester(t11, -t22, -t12)
    eye_l, eye_u = np.eye(l), np.eye(d - l)
    left_s = Z[:, :l]
    right_s = np.hstack([eye_l, -Y]) @ Z.T
    left_u = Z @ np.vstack([Y, eye_u])
    right_u = Z[:, l:].T
    ps = left_s @ right_s
    pu = left_u @ right_u

    mu = np.abs(np.array(test.eigenvalues))
    rho_s = mu[mu < 1.0].max()
    rho_u_inv = (1.0 / mu[mu > 1.0]).max()
    lam = float(max(rho_s, rho_u_inv) + SAFETY_MARGIN)

    skew = float(np.sqrt(1.0 + np.linalg.norm(Y, 2) ** 2))
    c_s = skew * _eig_condition(t11)
    c_u = skew * _eig_condition(t22)
    C = max(c_s + lam * c_u, c_u)
    return HyperbolicSplitting(
        matrix=A,
        stable_projector=ps,
        unstable_projector=pu,
        lam=lam,
        growth_constant=float(C),
        stable_dim=l,
        frame=Z.copy(),
        _t11=t11.copy(),
        _t22_inv=np.linalg.inv(t22),
        _left_s=left_s.copy(),
        _right_s=right_s,
        _left_u=left_u,
        _right_u=right_u.copy(),
    )


class AffineModel:
    """The fibrewise affine map G(b, t) = (f(b), A t + v(b))."""

    def __init__(self, matrix, translation, base_map):
        self.matrix = IntegerMatrix.of(matrix)
        if not self.matrix.unimodular:
            raise ValueError(f"model matrix must have |det| = 1, got det = {self.matrix.det}")
        test = is_hyperbolic(self.matrix)
        if not test:
            raise NotHyperbolicError(f"model matrix {self.matrix.tolist()} is not hyperbolic")
        if translation.dim_in != base_map.dim or translation.dim_out != self.matrix.d:
            raise ValueError("translation must map the base torus into R^d")
        self.translation = translation
        self.base_map = base_map

    @property
    def d(self) -> int:
        return self.matrix.d

    @property
    def k(self) -> int:
        return self.base_map.dim

    def lift_map(self, b, x) -> np.ndarray:
        """Lift of the fibre map: x -> A x + v(b)."""
        return np.asarray(x, dtype=float) @ self.matrix.array.T + self.translation(b)

    def apply(self, b, x) -> tuple[np.ndarray, np.ndarray]:
        return self.base_map.forward(b), wrap(self.lift_map(b, x))


def apply_affine(G: AffineModel, e: BundlePoint) -> BundlePoint:
    if e.base.dim != G.k or e.fibre.dim != G.d:
        raise ValueError("bundle point dimensions do not match the model")
    b, x = G.apply(np.asarray(e.base), np.asarray(e.fibre))
    return BundlePoint(TorusPoint(tuple(b)), TorusPoint(tuple(x)))
