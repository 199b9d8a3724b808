import numpy as np
import pytest

from fibrewise_anosov.conjugacy import (
    CohomologySolver,
    SeriesParameters,
    build_conjugacy,
    check_compatible,
    injectivity_scan,
    solve_cohomological,
    tail_bound,
    verify_conjugacy,
)
from fibrewise_anosov.linear import AffineModel, NotHyperbolicError
from fibrewise_anosov.system import FibrewiseSystem, HomologyMismatch, displacement
from fibrewise_anosov.torus import torus_dist
from fibrewise_anosov.trig import TrigPolynomial
from fibrewise_anosov.zoo import CAT, perturbed_cat, rotation_base


@pytest.fixture(scope="module")
def fixture_result(fixture_system):
    return build_conjugacy(fixture_system, tol=1e-6)


def constant_shift(c=(0.1, 0.0)):
    F = FibrewiseSystem(rotation_base(), CAT, None, TrigPolynomial.constant(3, c), "shift")
    G = AffineModel(CAT, TrigPolynomial.zero(1, 2), rotation_base())
    return F, G


def test_series_parameters(cat_split):
    p = SeriesParameters.choose(cat_split, 0.05, 1e-6)
    assert p.tail_bound < 1e-6 / 4
    assert tail_bound(cat_split, 0.05, p.truncation - 1) >= 1e-6 / 4
    with pytest.raises(ValueError):
        SeriesParameters(3, 1e-6, 1e-6)
    with pytest.raises(ValueError):
        SeriesParameters(-1, 1e-6, 0.0)


def test_zero_displacement_gives_identity(affine_system, rng):
    res = build_conjugacy(affine_system, tol=1e-6)
    b, x = rng.random((200, 1)), rng.random((200, 2))
    assert np.array_equal(res.w(b, x), np.zeros((200, 2)))
    _, hx = res.h(b, x)
    assert np.array_equal(hx, x)
    assert res.cohomology_residual["max"] == 0.0 and res.conjugacy_residual["max"] <= 1e-15
    assert res.injectivity_margin == pytest.approx(1.0, abs=1e-12)
    ver = verify_conjugacy(res)
    assert ver["max_residual"] <= 1e-15 and ver["pass"]
    inj = injectivity_scan(res)
    assert inj["min_ratio"] == pytest.approx(1.0, abs=1e-12)


def test_constant_displacement_closed_form(rng):
    F, G = constant_shift()
    res = build_conjugacy(F, G, tol=1e-10)
    oracle = np.linalg.solve(np.array(CAT, float) - np.eye(2), [0.1, 0.0])
    assert np.allclose(oracle, [0.0, 0.1], atol=1e-15)
    b, x = rng.random((100, 1)), rng.random((100, 2))
    assert np.abs(res.w(b, x) - oracle).max() <= 1e-9
    assert res.conjugacy_residual["max"] < 1e-10
    inj = injectivity_scan(res, pairs=100)
    assert inj["min_ratio"] == pytest.approx(1.0, abs=1e-9)


def test_solve_cohomological_function(fixture_system, cat_split, fixture_result, rng):
    b, x = rng.random((20, 1)), rng.random((20, 2))
    w = solve_cohomological(fixture_system, cat_split, fixture_result.parameters, b, x)
    assert np.allclose(w, fixture_result.w(b, x), atol=0, rtol=0)


def test_cohomological_identity(fixture_result, rng):
    tb = fixture_result.parameters.tail_bound
    b, x = rng.random((1000, 1)), rng.random((1000, 2))
    assert fixture_result.solver.cohomology_residual(b, x).max() <= 2 * tb
    assert fixture_result.cohomology_residual["max"] <= 2 * tb


def test_conjugacy_equation(fixture_result):
    ver = verify_conjugacy(fixture_result, samples=1000, seed=7)
    assert ver["pass"]
    assert ver["max_residual"] <= 4 * fixture_result.parameters.tail_bound + 1e-12


def test_summand_decay(fixture_result, cat_split, rng):
    solver = fixture_result.solver
    M, C, lam = solver.field.sup_bound, cat_split.growth_constant, cat_split.lam
    st, un = solver.summands(rng.random((100, 1)), rng.random((100, 2)))
    bounds = C * lam ** np.arange(len(st)) * M
    assert (np.linalg.norm(st, axis=2).max(axis=1) <= bounds).all()
    assert (np.linalg.norm(un, axis=2).max(axis=1) <= bounds * lam).all()


def test_summands_add_up_to_w(fixture_result, rng):
    b, x = rng.random((50, 1)), rng.random((50, 2))
    st, un = fixture_result.solver.summands(b, x)
    assert np.abs(st.sum(0) + un.sum(0) - fixture_result.w(b, x)).max() <= 1e-15


@pytest.mark.parametrize("N", [10, 20, 30])
def test_truncation_law(fixture_result, rng, N):
    base = fixture_result.solver
    s_n, s_n10 = base.with_truncation(N), base.with_truncation(N + 10)
    b, x = rng.random((100, 1)), rng.random((100, 2))
    diff = np.linalg.norm(s_n.w(b, x) - s_n10.w(b, x), axis=1).max()
    assert diff <= s_n.params.tail_bound


def test_periodicity_and_degree(fixture_result, rng):
    assert fixture_result.degree_check
    assert fixture_result.degree_defect <= 1e-10 and fixture_result.periodicity_defect <= 1e-10
    b, x = rng.random((300, 1)), rng.random((300, 2))
    w0 = fixture_result.w(b, x)
    h0 = fixture_result.solver.h_lift(b, x)
    for m in ([1, 0], [0, 1], [-2, 3]):
        assert np.abs(fixture_result.w(b, x + m) - w0).max() <= 1e-10
        assert np.abs(fixture_result.solver.h_lift(b, x + m) - h0 - m).max() <= 1e-10


def test_h_covers_identity(fixture_result, rng):
    b, x = rng.random((10, 1)), rng.random((10, 2))
    hb, hx = fixture_result.h(b, x)
    assert np.array_equal(hb, b)
    assert ((0 <= hx) & (hx < 1)).all()


def test_g_side_linearity(rng):
    F, G = constant_shift((0.07, -0.03))
    res = build_conjugacy(F, G, tol=1e-8)
    solver = res.solver
    b, x = rng.random((200, 1)), rng.random((200, 2))
    s = rng.random(2)
    r0 = solver.conjugacy_residual(b, x)
    r1 = solver.conjugacy_residual(b, x + s)
    assert np.abs(r0 - r1).max() <= 1e-12


def test_refuses_wrong_homology(fixture_system):
    with pytest.raises(NotHyperbolicError):
        AffineModel([[1, 1], [0, 1]], fixture_system.translation, fixture_system.base)
    G = AffineModel([[1, 1], [1, 2]], fixture_system.translation, fixture_system.base)
    with pytest.raises(HomologyMismatch):
        check_compatible(fixture_system, G)
    with pytest.raises(HomologyMismatch):
        build_conjugacy(fixture_system, G)


def test_refuses_other_base(fixture_system):
    from fibrewise_anosov.base import BaseSystem

    G = AffineModel(CAT, fixture_system.translation, BaseSystem.rotation([0.1]))
    with pytest.raises(HomologyMismatch):
        build_conjugacy(fixture_system, G)


def test_pinned_parameters_must_dominate(cat_split):
    weak = SeriesParameters.choose(cat_split, displacement(perturbed_cat(0.01)).sup_bound, 1e-6)
    with pytest.raises(ValueError):
        build_conjugacy(perturbed_cat(0.1), tol=1e-6, parameters=weak)


def test_injectivity_positive_and_monotone():
    margins = []
    for eps in (0.01, 0.05, 0.1):
        res = build_conjugacy(perturbed_cat(eps), tol=1e-6)
        inj = injectivity_scan(res, fibres=3, pairs=100, seed=1)
        assert res.injectivity_margin > 0 and inj["min_ratio"] > 0 and inj["positive"]
        margins.append(res.injectivity_margin)
    assert margins[0] >= margins[1] >= margins[2]


def test_report_serialization(fixture_result):
    d = fixture_result.to_dict()
    assert d["parameters"]["truncation"] == fixture_result.parameters.truncation
    table = fixture_result.grid_table()
    assert table.shape == (len(fixture_result.grid.array()), 1 + 2 + 2)


def test_solver_newton_tolerance(fixture_result):
    s = fixture_result.solver
    N = s.params.truncation
    assert isinstance(s, CohomologySolver)
    assert s.newton_tol == pytest.approx(s.params.tol / (10 * N * np.linalg.norm(np.array(CAT, float), 2) ** N))
