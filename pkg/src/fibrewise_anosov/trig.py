"""Real trigonometric polynomials on tori.

A term is ``c cos(2 pi k.z) + s sin(2 pi k.z)`` with integer frequency
vector ``k`` and vector coefficients ``c, s`` in R^out.  Integer
frequencies make every polynomial exactly 1-periodic in each input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TrigTerm:
    freq: tuple[int, ...]
    cos: tuple[float, ...]
    sin: tuple[float, ...]


class TrigPolynomial:
    """Vector-valued trigonometric polynomial R^dim_in -> R^dim_out."""

    def __init__(self, dim_in: int, dim_out: int, terms: Iterable = ()):
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)
        if self.dim_in < 1 or self.dim_out < 1:
            raise ValueError("TrigPolynomial dimensions must be positive")
        parsed = []
        for t in terms:
            if not isinstance(t, TrigTerm):
                t = TrigTerm(*t)
            freq = tuple(t.freq)
            if len(freq) != self.dim_in:
                raise ValueError(f"frequency {freq} has length {len(freq)}, expected {self.dim_in}")
            if any(int(f) != f for f in freq):
                raise ValueError(f"frequencies must be integers: {freq}")
            cos = tuple(float(c) for c in t.cos)
            sin = tuple(float(s) for s in t.sin)
            if len(cos) != self.dim_out or len(sin) != self.dim_out:
                raise ValueError(f"coefficients must have length {self.dim_out}")
            parsed.append(TrigTerm(tuple(int(f) for f in freq), cos, sin))
        self.terms: tuple[TrigTerm, ...] = tuple(parsed)
        n = len(parsed)
        self._k = np.array([t.freq for t in parsed], dtype=float).reshape(n, self.dim_in)
        self._c = np.array([t.cos for t in parsed], dtype=float).reshape(n, self.dim_out)
        self._s = np.array([t.sin for t in parsed], dtype=float).reshape(n, self.dim_out)

    @classmethod
    def zero(cls, dim_in: int, dim_out: int) -> "TrigPolynomial":
        return cls(dim_in, dim_out, ())

    @classmethod
    def constant(cls, dim_in: int, value: Sequence[float]) -> "TrigPolynomial":
        value = tuple(float(v) for v in value)
        return cls(dim_in, len(value), [((0,) * dim_in, value, (0.0,) * len(value))])

    def __repr__(self) -> str:
        return f"TrigPolynomial({self.dim_in}->{self.dim_out}, {len(self.terms)} terms)"

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigPolynomial):
            return NotImplemented
        a, b = self.simplified(), other.simplified()
        return (a.dim_in, a.dim_out) == (b.dim_in, b.dim_out) and set(a.terms) == set(b.terms)

    def __hash__(self):
        s = self.simplified()
        return hash((s.dim_in, s.dim_out, frozenset(s.terms)))

    @property
    def is_zero(self) -> bool:
        return len(self.simplified().terms) == 0

    def scaled(self, factor: float) -> "TrigPolynomial":
        return TrigPolynomial(
            self.dim_in,
            self.dim_out,
            [(t.freq, tuple(factor * c for c in t.cos), tuple(factor * s for s in t.sin)) for t in self.terms],
        )

    def __neg__(self) -> "TrigPolynomial":
        return self.scaled(-1.0)

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        if (self.dim_in, self.dim_out) != (other.dim_in, other.dim_out):
            raise ValueError("cannot add trig polynomials of different shapes")
        return TrigPolynomial(self.dim_in, self.dim_out, self.terms + other.terms).simplified()

    def __sub__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        return self + (-other)

    def simplified(self) -> "TrigPolynomial":
        """Merge equal frequencies and drop vanishing terms.

        A frequency and its negative are merged too (cos is even, sin odd),
        so that subtracting a polynomial from itself gives exactly zero.
        """
        merged: dict[tuple[int, ...], list[np.ndarray]] = {}
        order = []
        for t in self.terms:
            k = t.freq
            sign = 1.0
            nz = [f for f in k if f != 0]
            if nz and nz[0] < 0:
                k = tuple(-f for f in k)
                sign = -1.0
            c = np.array(t.cos)
            s = sign * np.array(t.sin)
            if not any(k):
                s = np.zeros_like(s)
            if k in merged:
                merged[k][0] = merged[k][0] + c
                merged[k][1] = merged[k][1] + s
            else:
                merged[k] = [c, s]
                order.append(k)
        terms = []
        for k in order:
            c, s = merged[k]
            if np.any(c != 0.0) or np.any(s != 0.0):
                terms.append((k, tuple(c), tuple(s)))
        return TrigPolynomial(self.dim_in, self.dim_out, terms)

    def embed(self, dim_in: int, positions: Sequence[int]) -> "TrigPolynomial":
        """Same function viewed on a larger input space.

        ``positions[i]`` is the new index of the i-th current input; the
        remaining inputs are ignored.
        """
        if len(positions) != self.dim_in:
            raise ValueError("positions must list every current input")
        terms = []
        for t in self.terms:
            k = [0] * dim_in
            for i, p in enumerate(positions):
                k[p] = t.freq[i]
            terms.append((tuple(k), t.cos, t.sin))
        return TrigPolynomial(dim_in, self.dim_out, terms)

    def __call__(self, z) -> np.ndarray:
        """Evaluate at points ``z`` of shape (..., dim_in)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim_in:
            raise ValueError(f"expected inputs of dimension {self.dim_in}, got {z.shape[-1]}")
        if not self.terms:
            return np.zeros(z.shape[:-1] + (self.dim_out,))
        phase = TWO_PI * (z @ self._k.T)
        return np.cos(phase) @ self._c + np.sin(phase) @ self._s

    def jacobian(self, z) -> np.ndarray:
        """Analytic Jacobian, shape (..., dim_out, dim_in)."""
        z = np.asarray(z, dtype=float)
        if not self.terms:
            return np.zeros(z.shape[:-1] + (self.dim_out, self.dim_in))
        phase = TWO_PI * (z @ self._k.T)
        # d/dz [c cos + s sin] = 2 pi (-c sin + s cos) k^T
        amp = -np.sin(phase)[..., :, None] * self._c + np.cos(phase)[..., :, None] * self._s
        return TWO_PI * np.einsum("...to,ti->...oi", amp, self._k)

    def _weights(self) -> np.ndarray:
        return np.linalg.norm(self._c, axis=1) + np.linalg.norm(self._s, axis=1)

    def sup_bound(self) -> float:
        """Crude bound on sup |f| (triangle inequality over terms)."""
        return float(self._weights().sum()) if self.terms else 0.0

    def lipschitz_axes(self) -> np.ndarray:
        """Per-input bounds L_i on |df/dz_i|: sum of 2 pi |k_i| (|c| + |s|)."""
        if not self.terms:
            return np.zeros(self.dim_in)
        return TWO_PI * (np.abs(self._k) * self._weights()[:, None]).sum(axis=0)

    def lipschitz(self, inputs: Sequence[int] | None = None) -> float:
        """Lipschitz bound in the given inputs: sum of 2 pi |k_I| (|c| + |s|)."""
        if not self.terms:
            return 0.0
        k = self._k if inputs is None else self._k[:, list(inputs)]
        return float(TWO_PI * (np.linalg.norm(k, axis=1) * self._weights()).sum())

    def jacobian_sup(self, inputs: Sequence[int]) -> float:
        """Bound on the operator norm of the Jacobian block d f / d z_inputs."""
        return self.lipschitz(inputs)

    def jacobian_lipschitz_axes(self, inputs: Sequence[int]) -> np.ndarray:
        """Per-input Lipschitz bounds of the Jacobian block d f / d z_inputs.

        Each term contributes (2 pi)^2 |k_i| |k_inputs| (|c| + |s|).
        """
        if not self.terms:
            return np.zeros(self.dim_in)
        kin = np.linalg.norm(self._k[:, list(inputs)], axis=1)
        return TWO_PI**2 * (np.abs(self._k) * (kin * self._weights())[:, None]).sum(axis=0)

    def to_dict(self) -> list[dict]:
        return [{"freq": list(t.freq), "cos": list(t.cos), "sin": list(t.sin)} for t in self.terms]
