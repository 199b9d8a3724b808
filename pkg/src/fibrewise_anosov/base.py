"""Invertible base dynamics on T^k: translations, automorphisms, composites."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .linear import IntegerMatrix
from .torus import wrap

KINDS = ("translation", "automorphism", "composite")


class BaseSystem:
    """``b -> B b + alpha (mod 1)`` with exact integer inverse of B.

    ``kind`` records which of B and alpha are in use; a translation has
    B = I and an automorphism has alpha = 0.
    """

    def __init__(self, kind: str, dim: int, alpha: Sequence[float] | None = None, matrix=None):
        if kind not in KINDS:
            raise ValueError(f"unknown base kind {kind!r}; expected one of {KINDS}")
        self.kind = kind
        self.dim = int(dim)
        if kind == "translation":
            if alpha is None:
                raise ValueError("translation base needs alpha")
            matrix = IntegerMatrix.identity(self.dim)
        elif kind == "automorphism":
            if matrix is None:
                raise ValueError("automorphism base needs a matrix")
            alpha = [0.0] * self.dim
        elif alpha is None or matrix is None:
            raise ValueError("composite base needs both alpha and matrix")
        self.matrix = IntegerMatrix.of(matrix)
        self.alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if self.matrix.d != self.dim or self.alpha.size != self.dim:
            raise ValueError(f"base data does not match dimension k={self.dim}")
        if not self.matrix.unimodular:
            raise ValueError(f"base matrix must have |det| = 1, got det = {self.matrix.det}")
        self._inv = self.matrix.inverse().array

    @classmethod
    def rotation(cls, alpha) -> "BaseSystem":
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        return cls("translation", alpha.size, alpha=alpha)

    @classmethod
    def automorphism(cls, matrix) -> "BaseSystem":
        m = IntegerMatrix.of(matrix)
        return cls("automorphism", m.d, matrix=m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BaseSystem):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.matrix == other.matrix
            and np.array_equal(wrap(self.alpha), wrap(other.alpha))
        )

    def __hash__(self):
        return hash((self.dim, self.matrix, tuple(wrap(self.alpha))))

    def __repr__(self) -> str:
        return f"BaseSystem({self.kind!r}, k={self.dim})"

    def forward(self, b) -> np.ndarray:
        return wrap(np.asarray(b, dtype=float) @ self.matrix.array.T + self.alpha)

    def inverse(self, b) -> np.ndarray:
        return wrap((np.asarray(b, dtype=float) - self.alpha) @ self._inv.T)

    def iterate(self, b, n: int) -> np.ndarray:
        step = self.forward if n >= 0 else self.inverse
        for _ in range(abs(n)):
            b = step(b)
        return np.asarray(b, dtype=float)

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.matrix.array, 2))

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind != "automorphism":
            out["alpha"] = self.alpha.tolist()
        if self.kind != "translation":
            out["matrix"] = self.matrix.tolist()
        return out
