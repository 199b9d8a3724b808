import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibrewise_anosov.base import BaseSystem
from fibrewise_anosov.torus import torus_dist
from fibrewise_anosov.trig import TrigPolynomial

SHEAR3 = [[1, 1, 1], [0, 1, 1], [0, 1, 2]]


def poly(rng, dim_in=3, dim_out=2, n=4):
    terms = [
        (tuple(rng.integers(-2, 3, dim_in)), tuple(rng.normal(size=dim_out)), tuple(rng.normal(size=dim_out)))
        for _ in range(n)
    ]
    return TrigPolynomial(dim_in, dim_out, terms)


def test_periodic_in_every_input(rng):
    p = poly(rng)
    z = rng.random((100, 3))
    for m in np.eye(3):
        assert np.allclose(p(z + m), p(z), atol=1e-12)


def test_jacobian_matches_central_differences(rng):
    p = poly(rng)
    z = rng.random((50, 3))
    h = 1e-6
    fd = np.stack([(p(z + h * e) - p(z - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    assert np.allclose(p.jacobian(z), fd, atol=1e-6)


def test_bounds_dominate_samples(rng):
    p = poly(rng)
    z = rng.random((20000, 3))
    assert np.linalg.norm(p(z), axis=1).max() <= p.sup_bound()
    J = p.jacobian(z)
    assert np.linalg.norm(J, ord=2, axis=(1, 2)).max() <= p.lipschitz()
    for i, L in enumerate(p.lipschitz_axes()):
        assert np.abs(J[..., i]).max() <= L + 1e-12


def test_self_subtraction_is_exactly_zero(rng):
    p = poly(rng)
    assert (p - p).is_zero
    q = TrigPolynomial(2, 1, [((1, -1), (0.5,), (0.25,))])
    flipped = TrigPolynomial(2, 1, [((-1, 1), (0.5,), (-0.25,))])
    assert q == flipped
    assert (q - flipped).is_zero


def test_shape_errors():
    with pytest.raises(ValueError):
        TrigPolynomial(2, 1, [((1,), (0.0,), (1.0,))])
    with pytest.raises(ValueError):
        TrigPolynomial(1, 2, [((1,), (0.0,), (1.0,))])
    with pytest.raises(ValueError):
        TrigPolynomial(1, 1)(np.zeros((3, 2)))


def test_embed_ignores_new_inputs(rng):
    p = poly(rng, dim_in=1)
    q = p.embed(3, [1])
    z = rng.random((10, 3))
    assert np.allclose(q(z), p(z[:, 1:2]))


@pytest.mark.parametrize(
    "base",
    [
        BaseSystem.rotation([np.sqrt(2) - 1]),
        BaseSystem.automorphism([[2, 1], [1, 1]]),
        BaseSystem.automorphism(SHEAR3),
        BaseSystem("composite", 2, alpha=[0.1, 0.7], matrix=[[1, 1], [0, 1]]),
    ],
)
def test_base_inverse_round_trip(base, rng):
    b = rng.random((1000, base.dim))
    assert torus_dist(base.inverse(base.forward(b)), b).max() <= 1e-12
    assert torus_dist(base.iterate(base.iterate(b, 5), -5), b).max() <= 1e-11


def test_base_validation():
    with pytest.raises(ValueError):
        BaseSystem("shift", 1, alpha=[0.1])
    with pytest.raises(ValueError, match="det = 2"):
        BaseSystem.automorphism([[2, 0], [0, 1]])
    with pytest.raises(ValueError):
        BaseSystem("translation", 2, alpha=[0.1])
    assert BaseSystem.rotation(0.25) == BaseSystem.rotation(1.25)
    assert BaseSystem.rotation(0.25) != BaseSystem.rotation(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(-3, 3))
def test_trig_scaling_is_linear(a, c, k):
    p = TrigPolynomial(1, 1, [((k,), (c,), (1.0,))])
    z = np.linspace(0, 1, 7)[:, None]
    assert np.allclose(p.scaled(a)(z), a * p(z), atol=1e-12)
