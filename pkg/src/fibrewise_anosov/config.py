"""Run configuration: TOML text describing a system, its model and per-command settings.

Validation collects every problem it finds and reports them together, each
prefixed by the path of the offending field.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import tomli

from .base import BaseSystem
from .linear import AffineModel, IntegerMatrix, bareiss_det, is_hyperbolic
from .system import FibrewiseSystem
from .torus import Grid
from .trig import TrigPolynomial

COMMANDS = ("certify", "homology", "conjugate", "leaves", "sweep", "demo")
NEEDS_HYPERBOLIC = ("certify", "conjugate", "leaves", "sweep", "demo")

SECTION_DEFAULTS: dict[str, dict[str, Any]] = {
    "certify": {"gamma": 0.5, "steps": 1, "grid": None, "bundle_grid": None, "bundle_tol": 1e-10},
    "conjugate": {"tol": 1e-6, "grid": None, "samples": 1000, "fibres": 5, "pairs": 200, "delta0": 0.1},
    "leaves": {
        "radius": 2.0,
        "depth": 30,
        "density": 400,
        "fibres": 20,
        "pairs": 20,
        "scan_depth": 12,
        "scan_density": 100,
    },
    "sweep": {"epsilons": [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1]},
    "demo": {"fibres": 5, "pairs": 5},
}
_SYSTEM_KEYS = {"name", "d", "k", "matrix", "epsilon", "base", "translation", "perturbation"}
_BASE_KEYS = {"kind", "alpha", "matrix"}
_TERM_KEYS = {"freq", "cos", "sin"}
_MODEL_KEYS = {"matrix", "translation"}


class ConfigError(ValueError):
    """Raised with the full list of validation errors."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _matrix(value, n: int | None, path: str, errors: list[str]) -> IntegerMatrix | None:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        errors.append(f"{path}: expected a list of integer rows")
        return None
    ok = True
    if n is not None and len(value) != n:
        errors.append(f"{path}: has {len(value)} rows, expected {n}")
        ok = False
    width = n if n is not None else len(value)
    for i, row in enumerate(value):
        if len(row) != width:
            errors.append(f"{path}[{i}]: has {len(row)} entries, expected {width}")
            ok = False
        for j, v in enumerate(row):
            if not _is_int(v):
                errors.append(f"{path}[{i}][{j}]: entry {v!r} is not an integer")
                ok = False
    if not ok or len(value) != width:
        return None
    det = bareiss_det(value)
    if abs(det) != 1:
        errors.append(f"{path}: determinant is {det}, must be +1 or -1")
        return None
    return IntegerMatrix.of(value)


def _reals(value, n: int, path: str, errors: list[str]) -> list[float] | None:
    if not isinstance(value, list) or not all(_is_real(v) for v in value):
        errors.append(f"{path}: expected a list of numbers")
        return None
    if len(value) != n:
        errors.append(f"{path}: has length {len(value)}, expected {n}")
        return None
    return [float(v) for v in value]


def _terms(value, dim_in: int, dim_out: int, path: str, errors: list[str]) -> TrigPolynomial | None:
    if not isinstance(value, list) or not all(isinstance(t, dict) for t in value):
        errors.append(f"{path}: expected an array of tables")
        return None
    terms, ok = [], True
    for i, t in enumerate(value):
        p = f"{path}[{i}]"
        for key in sorted(set(t) - _TERM_KEYS):
            errors.append(f"{p}.{key}: unknown key")
            ok = False
        freq = t.get("freq")
        if not isinstance(freq, list) or not all(_is_int(f) for f in freq):
            errors.append(f"{p}.freq: expected a list of integers")
            ok = False
        elif len(freq) != dim_in:
            errors.append(f"{p}.freq: has length {len(freq)}, expected {dim_in}")
            ok = False
        cos = _reals(t.get("cos", [0.0] * dim_out), dim_out, f"{p}.cos", errors)
        sin = _reals(t.get("sin", [0.0] * dim_out), dim_out, f"{p}.sin", errors)
        if ok and cos is not None and sin is not None:
            terms.append((tuple(freq), tuple(cos), tuple(sin)))
        else:
            ok = False
    return TrigPolynomial(dim_in, dim_out, terms) if ok else None


def _unknown(table: dict, allowed: set, path: str, errors: list[str]) -> None:
    for key in sorted(set(table) - allowed):
        errors.append(f"{path}.{key}: unknown key" if path else f"{key}: unknown key")


@dataclass(frozen=True, eq=False)
class SystemConfig:
    name: str
    d: int
    k: int
    matrix: IntegerMatrix
    base: BaseSystem
    translation: TrigPolynomial
    perturbation: TrigPolynomial
    epsilon: float
    model_matrix: IntegerMatrix
    model_translation: TrigPolynomial
    sections: dict = field(default_factory=dict)
    digest: str = ""

    def system(self, epsilon: float | None = None) -> FibrewiseSystem:
        """The fibrewise system with perturbation coefficients scaled by epsilon."""
        eps = self.epsilon if epsilon is None else float(epsilon)
        return FibrewiseSystem(
            self.base, self.matrix, self.translation, self.perturbation.scaled(eps), self.name
        )

    def model(self) -> AffineModel:
        return AffineModel(self.model_matrix, self.model_translation, self.base)

    def section(self, name: str) -> dict:
        return self.sections[name]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "k": self.k,
            "epsilon": self.epsilon,
            "matrix": self.matrix.tolist(),
            "model_matrix": self.model_matrix.tolist(),
            "digest": self.digest,
        }


def _section(raw: dict, name: str, errors: list[str]) -> dict:
    defaults = SECTION_DEFAULTS[name]
    given = raw.get(name, {})
    if not isinstance(given, dict):
        errors.append(f"{name}: expected a table")
        return dict(defaults)
    _unknown(given, set(defaults), name, errors)
    out = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            continue
        ref = defaults[key]
        path = f"{name}.{key}"
        if key in ("grid", "bundle_grid"):
            if not isinstance(value, list) or not all(_is_int(v) and v > 0 for v in value):
                errors.append(f"{path}: expected a list of positive integers")
                continue
        elif key == "epsilons":
            if not isinstance(value, list) or not value or not all(_is_real(v) and v >= 0 for v in value):
                errors.append(f"{path}: expected a non-empty list of non-negative numbers")
                continue
            value = [float(v) for v in value]
        elif isinstance(ref, int):
            if not _is_int(value) or value < 1:
                errors.append(f"{path}: expected a positive integer")
                continue
        elif isinstance(ref, float):
            if not _is_real(value) or value <= 0:
                errors.append(f"{path}: expected a positive number")
                continue
            value = float(value)
        out[key] = value
    return out


def _check_sections(sections: dict, k: int, d: int, errors: list[str]) -> None:
    for name in ("certify", "conjugate"):
        for key in ("grid", "bundle_grid"):
            g = sections[name].get(key)
            if g is not None and len(g) != k + d:
                errors.append(f"{name}.{key}: has {len(g)} axes, expected k + d = {k + d}")
    gamma = sections["certify"]["gamma"]
    if not 0 < gamma < 1:
        errors.append(f"certify.gamma: must lie in (0, 1), got {gamma}")
    if not 0 < sections["leaves"]["radius"] <= 10:
        errors.append("leaves.radius: must lie in (0, 10]")


def _check_system(F: FibrewiseSystem, errors: list[str]) -> None:
    """Load-time invariants: equivariance spot check and fibrewise invertibility."""
    rng = np.random.default_rng(0)
    b, x = rng.random((20, F.k)), rng.random((20, F.d))
    for m in np.eye(F.d, dtype=int):
        if F.equivariance_defect(b, x, m) > 1e-12:
            errors.append("system.perturbation: lift is not equivariant")
            return
    grid = Grid([4] * F.k + [max(4, int(4096 ** (1.0 / F.d)))] * F.d)
    det = F.min_jacobian_det(grid)
    if det < 1e-6:
        errors.append(f"system.perturbation: fibre Jacobian is singular or changes sign, min signed det = {det:.3g}")


def parse_config(text: str, command: str | None = None) -> SystemConfig:
    """Parse and validate a configuration; raises ConfigError with every problem found."""
    if command is not None and command not in COMMANDS:
        raise ConfigError([f"command: unknown command {command!r}"])
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    errors: list[str] = []
    _unknown(raw, {"system", "model"} | set(SECTION_DEFAULTS), "", errors)
    sysraw = raw.get("system")
    if not isinstance(sysraw, dict):
        errors.append("system: missing table")
        raise ConfigError(errors)
    _unknown(sysraw, _SYSTEM_KEYS, "system", errors)

    name = sysraw.get("name", "system")
    if not isinstance(name, str):
        errors.append("system.name: expected a string")
        name = "system"
    d, k = sysraw.get("d"), sysraw.get("k")
    if not _is_int(d) or d < 1:
        errors.append("system.d: expected a positive integer")
        d = None
    if not _is_int(k) or k < 1:
        errors.append("system.k: expected a positive integer")
        k = None
    eps = sysraw.get("epsilon", 1.0)
    if not _is_real(eps) or eps < 0:
        errors.append("system.epsilon: expected a non-negative number")
        eps = 1.0

    A = _matrix(sysraw.get("matrix"), d, "system.matrix", errors) if "matrix" in sysraw else None
    if "matrix" not in sysraw:
        errors.append("system.matrix: missing")
    if A is not None and command in NEEDS_HYPERBOLIC and not is_hyperbolic(A):
        errors.append(f"system.matrix: {A.tolist()} is not hyperbolic, required by '{command}'")

    base = None
    braw = sysraw.get("base")
    if not isinstance(braw, dict):
        errors.append("system.base: missing table")
    elif k is not None:
        _unknown(braw, _BASE_KEYS, "system.base", errors)
        kind = braw.get("kind")
        alpha = bm = None
        if kind not in ("translation", "automorphism", "composite"):
            errors.append(f"system.base.kind: expected translation, automorphism or composite, got {kind!r}")
        else:
            if kind in ("translation", "composite"):
                alpha = _reals(braw.get("alpha"), k, "system.base.alpha", errors)
            elif "alpha" in braw:
                errors.append("system.base.alpha: not used by an automorphism base")
            if kind in ("automorphism", "composite"):
                bm = _matrix(braw.get("matrix"), k, "system.base.matrix", errors)
            elif "matrix" in braw:
                errors.append("system.base.matrix: not used by a translation base")
            if (alpha is not None or kind == "automorphism") and (bm is not None or kind == "translation"):
                base = BaseSystem(kind, k, alpha=alpha, matrix=bm)

    v = p = None
    if k is not None and d is not None:
        v = _terms(sysraw.get("translation", []), k, d, "system.translation", errors)
        p = _terms(sysraw.get("perturbation", []), k + d, d, "system.perturbation", errors)

    model_raw = raw.get("model", {})
    GA, Gv = A, v
    if not isinstance(model_raw, dict):
        errors.append("model: expected a table")
    else:
        _unknown(model_raw, _MODEL_KEYS, "model", errors)
        if "matrix" in model_raw:
            GA = _matrix(model_raw["matrix"], d, "model.matrix", errors)
            if GA is not None and command in NEEDS_HYPERBOLIC and not is_hyperbolic(GA):
                errors.append(f"model.matrix: {GA.tolist()} is not hyperbolic, required by '{command}'")
        if "translation" in model_raw and k is not None and d is not None:
            Gv = _terms(model_raw["translation"], k, d, "model.translation", errors)

    sections = {s: _section(raw, s, errors) for s in SECTION_DEFAULTS}
    if k is not None and d is not None:
        _check_sections(sections, k, d, errors)

    if not errors and None not in (A, base, v, p, GA, Gv):
        cfg = SystemConfig(
            name=name,
            d=d,
            k=k,
            matrix=A,
            base=base,
            translation=v,
            perturbation=p,
            epsilon=float(eps),
            model_matrix=GA,
            model_translation=Gv,
            sections=sections,
            digest=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        )
        _check_system(cfg.system(), errors)
        if not errors:
            return cfg
    raise ConfigError(errors or ["config: incomplete"])


def load_config(path, command: str | None = None) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), command)
