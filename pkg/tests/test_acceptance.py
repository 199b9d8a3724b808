"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from fibrewise_anosov.cli import main
from fibrewise_anosov.cones import (
    ConeField,
    approximate_invariant_bundles,
    check_cone_invariance,
    stable_contraction_defect,
)
from fibrewise_anosov.conjugacy import build_conjugacy, injectivity_scan, verify_conjugacy
from fibrewise_anosov.leaves import compute_leaf, find_intersections, product_structure_scan
from fibrewise_anosov.linear import AffineModel, IntegerMatrix, compute_splitting
from fibrewise_anosov.system import FibrewiseSystem, induced_homology_matrix
from fibrewise_anosov.torus import Grid, torus_dist
from fibrewise_anosov.trig import TrigPolynomial
from fibrewise_anosov.zoo import CAT, SHEAR3, cat_zoo, fixture_translation, perturbed_cat, rotation_base, shear3_affine

pytestmark = pytest.mark.slow
A = np.array(CAT, dtype=float)


def report(capsys, number: int, passed: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
    assert passed, detail


@pytest.fixture(scope="module")
def fixture_conjugacy():
    return build_conjugacy(perturbed_cat(0.05), tol=1e-6)


def test_criterion_01_cohomological_identity(capsys, fixture_conjugacy):
    tb = fixture_conjugacy.parameters.tail_bound
    rng = np.random.default_rng(101)
    b, x = rng.random((1000, 1)), rng.random((1000, 2))
    worst = float(fixture_conjugacy.solver.cohomology_residual(b, x).max())
    ok = tb < 2.5e-7 and worst <= 2 * tb
    report(capsys, 1, ok, f"max |Aw - w(F) - r| = {worst:.3e} <= 2*tail = {2 * tb:.3e}, tail {tb:.3e} < 2.5e-7")


def test_criterion_02_conjugacy_equation(capsys, fixture_conjugacy):
    tb = fixture_conjugacy.parameters.tail_bound
    ver = verify_conjugacy(fixture_conjugacy, samples=1000, seed=202)
    worst = ver["max_residual"]
    report(capsys, 2, worst <= 4 * tb, f"max d(h(F e), G(h e)) = {worst:.3e} <= 4*tail = {4 * tb:.3e}")


def test_criterion_03_constant_closed_form(capsys):
    c = np.array([0.1, 0.0])
    F = FibrewiseSystem(rotation_base(), CAT, None, TrigPolynomial.constant(3, c))
    G = AffineModel(CAT, TrigPolynomial.zero(1, 2), rotation_base())
    res = build_conjugacy(F, G, tol=1e-10)
    oracle = np.linalg.solve(A - np.eye(2), c)
    rng = np.random.default_rng(303)
    err = float(np.abs(res.w(rng.random((200, 1)), rng.random((200, 2))) - oracle).max())
    ok = err <= 1e-9 and np.allclose(oracle, [0.0, 0.1], atol=1e-15)
    report(capsys, 3, ok, f"|w - (A-I)^-1 c| = {err:.3e} <= 1e-9, oracle {oracle.round(15).tolist()}")


def test_criterion_04_trivial_case(capsys):
    F = FibrewiseSystem(rotation_base(), CAT, fixture_translation(), None)
    res = build_conjugacy(F, tol=1e-6)
    rng = np.random.default_rng(404)
    b, x = rng.random((1000, 1)), rng.random((1000, 2))
    hb, hx = res.h(b, x)
    ident = bool(np.array_equal(hb, b) and np.array_equal(hx, x))
    coh = float(res.solver.cohomology_residual(b, x).max())
    conj = float(res.solver.conjugacy_residual(b, x).max())
    eps = np.finfo(float).eps
    ok = ident and coh == 0.0 and conj <= 8 * eps
    report(capsys, 4, ok, f"h == id exactly: {ident}; cohomology residual {coh:.1e}, conjugacy residual {conj:.1e}")


def test_criterion_05_truncation_law(capsys, fixture_conjugacy):
    rng = np.random.default_rng(505)
    b, x = rng.random((100, 1)), rng.random((100, 2))
    parts, ok = [], True
    for N in (10, 20, 30):
        s_n = fixture_conjugacy.solver.with_truncation(N)
        s_n10 = fixture_conjugacy.solver.with_truncation(N + 10)
        diff = float(np.linalg.norm(s_n.w(b, x) - s_n10.w(b, x), axis=1).max())
        ok &= diff <= s_n.params.tail_bound
        parts.append(f"N={N}: {diff:.2e} <= {s_n.params.tail_bound:.2e}")
    report(capsys, 5, ok, "; ".join(parts))


def test_criterion_06_cone_certification(capsys):
    split = compute_splitting(CAT)
    cones = ConeField.from_splitting(split, 0.5)
    grid = Grid([64, 64, 64])
    cat = check_cone_invariance(FibrewiseSystem(rotation_base(), CAT), cones, 1, grid)
    ident = check_cone_invariance(FibrewiseSystem(rotation_base(), [[1, 0], [0, 1]]), ConeField(np.eye(2), 0.5, 1), 1)
    pert = check_cone_invariance(perturbed_cat(0.05), cones, 1, grid)
    ok = cat.passed and cat.lambda_prime <= 0.574 and not ident.passed and pert.passed
    report(
        capsys,
        6,
        ok,
        f"cat lambda' = {cat.lambda_prime:.4f} <= 0.574 (margin {cat.margin:.3f}); "
        f"identity {ident.status} (margin {ident.margin:.1e}); "
        f"eps=0.05 on 64^3 {pert.status} (margin {pert.margin:.3f})",
    )


def test_criterion_07_invariant_bundles(capsys):
    split = compute_splitting(CAT)
    cones = ConeField.from_splitting(split, 0.5)
    affine = FibrewiseSystem(rotation_base(), CAT, fixture_translation())
    cert = check_cone_invariance(affine, cones, 1, Grid([4, 8, 8]))
    approx = approximate_invariant_bundles(affine, cert, 40, 1e-12)
    w, v = np.linalg.eigh(A)
    vs, vu = v[:, [0]], v[:, [1]]
    angle = max(
        max(subspace_angles(S, vs).max() for S in approx.stable),
        max(subspace_angles(U, vu).max() for U in approx.unstable),
    )
    F = perturbed_cat(0.05)
    pcert = check_cone_invariance(F, cones, 1, Grid([16, 32, 32]))
    papprox = approximate_invariant_bundles(F, pcert, 60, 1e-10, Grid([4, 8, 8]))
    ratio = stable_contraction_defect(F, papprox, pcert.lambda_prime, pcert.steps, 5)
    spectral = stable_contraction_defect(F, papprox, split.lam, pcert.steps, 5)
    ok = angle <= 1e-8 and papprox.converged and ratio <= 1.0
    report(
        capsys,
        7,
        ok,
        f"affine principal angle {angle:.1e} <= 1e-8; perturbed max_k<=5 |dF^k v|/(lambda'^k |v|) = {ratio:.3f} <= 1 "
        f"with lambda' = {pcert.lambda_prime:.4f} (ratio against spectral lambda: {spectral:.2f})",
    )


def test_criterion_08_homology(capsys):
    zoo = cat_zoo()
    sup = max(F.perturbation.sup_bound() for F in zoo)
    got = [induced_homology_matrix(F) for F in zoo]
    shear = induced_homology_matrix(shear3_affine())
    ok = all(m == IntegerMatrix.of(CAT) for m in got) and shear == IntegerMatrix.of(SHEAR3) and sup <= 0.2
    report(capsys, 8, ok, f"{len(zoo)} zoo systems (sup|p| <= {sup:.2f}) give {CAT}; d=3 affine gives {shear.tolist()}")


def test_criterion_09_global_product_structure(capsys):
    F = perturbed_cat(0.05)
    split = compute_splitting(CAT)
    cert = check_cone_invariance(F, ConeField.from_splitting(split, 0.5), 1, Grid([16, 32, 32]))
    scan = product_structure_scan(F, cert, fibres=20, pairs=20, seed=909)
    affine = FibrewiseSystem(rotation_base(), CAT)
    acert = check_cone_invariance(affine, ConeField.from_splitting(split, 0.5), 1, Grid([4, 8, 8]))
    rng = np.random.default_rng(9)
    err = 0.0
    S, U = split.stable_basis[:, 0], split.unstable_basis[:, 0]
    for _ in range(10):
        b, p, q = rng.random(1), rng.random(2), rng.random(2)
        Ws = compute_leaf(affine, acert, b, p, "stable", 2.0, 20, 100)
        Wu = compute_leaf(affine, acert, b, q, "unstable", 2.0, 20, 100)
        rep = find_intersections(Ws, Wu)
        t = np.linalg.solve(np.column_stack([S, -U]), q - p)
        err = max(err, float(np.abs(np.array(rep.points[0]) - (p + t[0] * S)).max()) if rep.multiplicity == 1 else np.inf)
    ok = scan["resolved_fraction"] >= 0.95 and scan["multiple"] == 0 and err <= 1e-8
    report(
        capsys,
        9,
        ok,
        f"{scan['unique']}/{scan['total']} pairs unique, {scan['multiple']} multiple, "
        f"resolved {scan['resolved_fraction']:.0%} >= 95%, min angle {scan['min_crossing_angle']:.3f}; "
        f"affine oracle error {err:.1e} <= 1e-8",
    )


def test_criterion_10_degree_and_injectivity(capsys):
    rng = np.random.default_rng(1010)
    parts, ok = [], True
    for eps in (0.01, 0.05, 0.1):
        res = build_conjugacy(perturbed_cat(eps), tol=1e-6)
        b, x = rng.random((500, 1)), rng.random((500, 2))
        h0, w0 = res.solver.h_lift(b, x), res.w(b, x)
        deg = per = 0.0
        for m in np.eye(2):
            deg = max(deg, float(np.abs(res.solver.h_lift(b, x + m) - h0 - m).max()))
            per = max(per, float(np.abs(res.w(b, x + m) - w0).max()))
        deg, per = max(deg, res.degree_defect), max(per, res.periodicity_defect)
        inj = injectivity_scan(res, fibres=5, pairs=200, seed=10)
        ok &= deg <= 1e-10 and per <= 1e-10 and res.injectivity_margin > 0 and inj["min_ratio"] > 0
        parts.append(f"eps={eps}: degree {deg:.0e}, periodicity {per:.0e}, margin {res.injectivity_margin:.3f}")
    report(capsys, 10, ok, "; ".join(parts))


def test_criterion_11_determinism(capsys, tmp_path):
    codes = [main(["demo", "--seed", "7", "--out", str(tmp_path / run)]) for run in ("a", "b")]
    same = (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    report(capsys, 11, same and codes == [0, 0], f"demo exit codes {codes}, report.json byte-identical: {same}")
