import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibrewise_anosov.base import BaseSystem
from fibrewise_anosov.linear import (
    AffineModel,
    IntegerMatrix,
    NotHyperbolicError,
    apply_affine,
    bareiss_det,
    compute_splitting,
    is_hyperbolic,
)
from fibrewise_anosov.torus import BundlePoint, TorusPoint, torus_distance
from fibrewise_anosov.trig import TrigPolynomial

CAT = [[2, 1], [1, 1]]
GOLD = (3 - np.sqrt(5)) / 2


def random_gl(rng, d, steps=12):
    """Product of random elementary integer matrices (det +-1)."""
    M = np.eye(d, dtype=int)
    for _ in range(steps):
        i, j = rng.choice(d, 2, replace=False)
        E = np.eye(d, dtype=int)
        E[i, j] = rng.choice([-1, 1])
        M = M @ E
    if rng.random() < 0.5:
        M[0] *= -1
    return M


def test_hyperbolicity_examples():
    t = is_hyperbolic(CAT)
    assert t
    assert sorted(abs(m) for m in t.eigenvalues) == pytest.approx([GOLD, (3 + np.sqrt(5)) / 2])
    assert not is_hyperbolic([[1, 1], [0, 1]])
    shear = is_hyperbolic([[1, 1, 1], [0, 1, 1], [0, 1, 2]])
    assert not shear and shear.gap < 1e-9
    with pytest.raises(ValueError):
        is_hyperbolic(CAT, tol=0)


def test_bareiss_matches_float_det(rng):
    for _ in range(50):
        M = rng.integers(-4, 5, size=(4, 4))
        assert bareiss_det(M.tolist()) == round(np.linalg.det(M))
    assert bareiss_det([[0, 1], [1, 0]]) == -1


def test_integer_matrix_validation():
    with pytest.raises(ValueError):
        IntegerMatrix.of([[1, 0.5], [0, 1]])
    with pytest.raises(ValueError):
        IntegerMatrix.of([[1, 0, 0], [0, 1, 0]])
    with pytest.raises(ValueError, match="det = 2"):
        IntegerMatrix.of([[2, 0], [0, 1]]).inverse()
    A = IntegerMatrix.of(CAT)
    assert (A @ A.inverse()) == IntegerMatrix.identity(2)


def test_cat_splitting(cat_split):
    s = cat_split
    assert s.stable_dim == 1
    assert s.lam == pytest.approx(GOLD + 1e-12, abs=1e-15)
    assert s.lam > GOLD
    checks = s.check()
    for key in ("completeness", "idempotent_s", "idempotent_u", "orthogonality", "commute_s", "commute_u"):
        assert checks[key] <= 1e-10, key
    assert checks["growth_ratio"] <= 1.0
    assert np.linalg.matrix_rank(s.stable_projector, tol=1e-8) == 1
    # oracle: explicit eigenvectors (1, (-1 +- sqrt 5)/2)
    vs = np.array([1.0, (-1 - np.sqrt(5)) / 2])
    vu = np.array([1.0, (-1 + np.sqrt(5)) / 2])
    assert np.allclose(s.stable_projector @ vs, vs, atol=1e-12)
    assert np.allclose(s.stable_projector @ vu, 0, atol=1e-12)


def test_splitting_brute_force_bounds(cat_split, rng):
    s = cat_split
    A = s.matrix.array
    w = rng.normal(size=(200, 2))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    ws, wu = w @ s.stable_projector.T, w @ s.unstable_projector.T
    vs, vu = ws.copy(), wu.copy()
    Ainv = np.linalg.inv(A)
    for n in range(1, 31):
        # one power at a time keeps the vectors inside their subspaces
        vs = vs @ A.T
        vu = vu @ Ainv.T
        vs = vs @ s.stable_projector.T
        vu = vu @ s.unstable_projector.T
        lim = s.growth_constant * s.lam**n
        assert np.all(np.linalg.norm(vs, axis=1) <= lim * np.linalg.norm(ws, axis=1) * (1 + 1e-9))
        assert np.all(np.linalg.norm(vu, axis=1) <= lim * np.linalg.norm(wu, axis=1) * (1 + 1e-9))


def test_stable_power_matches_exact_power(cat_split):
    A = np.array(CAT, dtype=object)
    P = np.eye(2, dtype=object)
    for n in range(1, 12):
        P = P @ A
        exact = P.astype(float) @ cat_split.stable_projector
        assert np.allclose(cat_split.stable_power(n), exact, atol=1e-9 * 3**n)


def test_block_splitting():
    A = np.zeros((4, 4), dtype=int)
    A[:2, :2] = CAT
    A[2:, 2:] = CAT
    s = compute_splitting(A)
    assert s.stable_dim == 2
    assert s.lam == pytest.approx(GOLD + 1e-12, abs=1e-15)
    single = compute_splitting(CAT).stable_projector
    block = np.zeros((4, 4))
    block[:2, :2] = single
    block[2:, 2:] = single
    assert np.allclose(s.stable_projector, block, atol=1e-12)


def test_non_hyperbolic_rejected():
    with pytest.raises(NotHyperbolicError):
        compute_splitting([[1, 1], [0, 1]])
    with pytest.raises(NotHyperbolicError):
        AffineModel([[1, 0], [0, 1]], TrigPolynomial.zero(1, 2), BaseSystem.rotation(0.3))
    with pytest.raises(ValueError, match="det = 2"):
        AffineModel([[2, 0], [0, 1]], TrigPolynomial.zero(1, 2), BaseSystem.rotation(0.3))


def _model(v=None):
    v = v if v is not None else TrigPolynomial.zero(1, 2)
    return AffineModel(CAT, v, BaseSystem.rotation(0.25))


def test_apply_affine_examples():
    G = _model()
    out = apply_affine(G, BundlePoint.of([0.0], [0.0, 0.0]))
    assert out.base.coords == (0.25,) and out.fibre.coords == (0.0, 0.0)
    out = apply_affine(G, BundlePoint.of([0.0], [0.5, 0.5]))
    assert out.fibre.coords == pytest.approx((0.5, 0.0))
    G = _model(TrigPolynomial.constant(1, (0.1, 0.0)))
    assert apply_affine(G, BundlePoint.of([0.3], [0, 0])).fibre.coords == pytest.approx((0.1, 0.0))
    with pytest.raises(ValueError):
        apply_affine(G, BundlePoint.of([0.3], [0, 0, 0]))


def test_apply_affine_is_an_a_map(rng):
    G = _model(TrigPolynomial(1, 2, [((1,), (0.1, 0.2), (0.0, 0.3))]))
    A = np.array(CAT, dtype=float)
    for _ in range(50):
        b, t, s = rng.random(1), rng.random(2), rng.random(2)
        lhs = apply_affine(G, BundlePoint.of(b, t + s)).fibre
        rhs = TorusPoint.of(np.asarray(apply_affine(G, BundlePoint.of(b, t)).fibre) + A @ s)
        assert torus_distance(lhs, rhs) < 1e-13


def test_hyperbolicity_invariant_under_transpose_and_inverse():
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = int(rng.integers(2, 5))
        M = IntegerMatrix.of(random_gl(rng, d))
        h = bool(is_hyperbolic(M))
        assert bool(is_hyperbolic(M.transpose())) == h
        assert bool(is_hyperbolic(M.inverse())) == h


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_random_hyperbolic_splittings_satisfy_invariants(a, b, c):
    # [[a b],[c (1 + b c)/a]] only when integral; use products of cat-like shears instead
    M = np.array([[1, a], [0, 1]]) @ np.array([[1, 0], [b, 1]]) @ np.array([[1, c], [0, 1]])
    if not is_hyperbolic(M):
        return
    s = compute_splitting(M)
    checks = s.check(n_max=20)
    assert max(v for k, v in checks.items() if k != "growth_ratio") <= 1e-9
    assert checks["growth_ratio"] <= 1.0 + 1e-9
