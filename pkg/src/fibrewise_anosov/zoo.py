"""Bundled example systems and the packaged fixture config."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .base import BaseSystem
from .system import FibrewiseSystem
from .trig import TrigPolynomial

CAT = [[2, 1], [1, 1]]
SHEAR3 = [[1, 1, 1], [0, 1, 1], [0, 1, 2]]
GOLDEN_ROTATION = float(np.sqrt(2.0) - 1.0)
FIXTURE = "cat_over_rotation.cfg"


def fixture_text() -> str:
    return resources.files("fibrewise_anosov").joinpath("data", FIXTURE).read_text(encoding="utf-8")


def fixture_path():
    return resources.files("fibrewise_anosov").joinpath("data", FIXTURE)


def rotation_base() -> BaseSystem:
    return BaseSystem.rotation([GOLDEN_ROTATION])


def fixture_translation() -> TrigPolynomial:
    return TrigPolynomial(1, 2, [((1,), (0.0, 0.05), (0.1, 0.0))])


def sin_perturbation(eps: float, k: int = 1) -> TrigPolynomial:
    """eps * (sin 2 pi x1, 0) on B x T^2."""
    return TrigPolynomial(k + 2, 2, [((0,) * k + (1, 0), (0.0, 0.0), (eps, 0.0))])


def perturbed_cat(eps: float = 0.05, translation: bool = True) -> FibrewiseSystem:
    """The acceptance fixture: cat map over the rotation by sqrt(2) - 1."""
    v = fixture_translation() if translation else None
    return FibrewiseSystem(rotation_base(), CAT, v, sin_perturbation(eps), f"cat_sin_{eps:g}")


def cat_zoo() -> list[FibrewiseSystem]:
    """Cat-map systems with sup |p| <= 0.2 over several base maps."""
    rot = rotation_base()
    cat_base = BaseSystem.automorphism(CAT)
    composite = BaseSystem("composite", 2, alpha=[0.1, GOLDEN_ROTATION], matrix=CAT)
    out = [
        perturbed_cat(0.05),
        FibrewiseSystem(rot, CAT, None, TrigPolynomial(3, 2, [((0, 0, 1), (0.0, 0.1), (0.0, 0.0))]), "cos_x2"),
        FibrewiseSystem(
            rot,
            CAT,
            fixture_translation(),
            TrigPolynomial(3, 2, [((1, 1, -1), (0.0, 0.0), (0.1, 0.1))]),
            "base_coupled",
        ),
        FibrewiseSystem(
            rot,
            CAT,
            None,
            TrigPolynomial(3, 2, [((0, 2, 0), (0.0, 0.0), (0.05, 0.0)), ((0, 1, 1), (0.05, 0.05), (0.0, 0.0))]),
            "harmonics",
        ),
        FibrewiseSystem(rot, CAT, None, TrigPolynomial(3, 2, [((0, 0, 1), (0.0, 0.0), (0.2, 0.0))]), "strong_x2"),
        FibrewiseSystem(
            cat_base,
            CAT,
            TrigPolynomial(2, 2, [((1, 0), (0.3, 0.0), (0.0, 0.0))]),
            TrigPolynomial(4, 2, [((1, 0, 1, 0), (0.0, 0.0), (0.08, 0.06))]),
            "over_cat_base",
        ),
        FibrewiseSystem(
            composite,
            CAT,
            None,
            TrigPolynomial(4, 2, [((0, 1, 0, 1), (0.1, 0.0), (0.0, 0.1))]),
            "over_composite_base",
        ),
    ]
    return out


def shear3_affine() -> FibrewiseSystem:
    """Affine example with the 3x3 matrix having eigenvalue 1 (not hyperbolic)."""
    v = TrigPolynomial(1, 3, [((1,), (0.1, 0.0, 0.0), (0.0, 0.2, 0.0))])
    return FibrewiseSystem(rotation_base(), SHEAR3, v, None, "shear3_affine")


def double_cat(eps: float = 0.0) -> FibrewiseSystem:
    """Cat map on each half of T^4, optionally coupled by eps sin 2 pi x1 in the third component."""
    A = np.zeros((4, 4), dtype=int)
    A[:2, :2] = CAT
    A[2:, 2:] = CAT
    p = None
    if eps:
        p = TrigPolynomial(5, 4, [((0, 1, 0, 0, 0), (0.0,) * 4, (0.0, 0.0, eps, 0.0))])
    return FibrewiseSystem(rotation_base(), A, None, p, "double_cat")
