"""Series solution of A w - w o F = r and the semiconjugacy h = id + w.

With ``r = r_s + r_u`` split along the stable/unstable subspaces of A::

    w_s(e) = - sum_{n>=0} A^n       r_s(F^-(n+1) e)
    w_u(e) =   sum_{n>=0} A^-(n+1)  r_u(F^n e)

Both series are truncated at N.  Dropping the tails changes the identity
``A w(e) - w(F e) = r(e)`` by exactly the two boundary terms
``A^(N+1) r_s(F^-(N+1) e)`` and ``A^-(N+1) r_u(F^(N+1) e)``.

``w`` is always re-summed at the query point; nothing is interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linear import AffineModel, HyperbolicSplitting, compute_splitting
from .system import DisplacementField, FibrewiseSystem, HomologyMismatch, displacement, induced_homology_matrix
from .torus import Grid, torus_dist, wrap

EVALUATION_ALLOWANCE = 1e-12


def tail_bound(split: HyperbolicSplitting, sup_r: float, truncation: int) -> float:
    """C lambda^(N+1) M / (1 - lambda)."""
    lam = split.lam
    return split.growth_constant * lam ** (truncation + 1) * sup_r / (1.0 - lam)


@dataclass(frozen=True)
class SeriesParameters:
    truncation: int
    tol: float
    tail_bound: float

    def __post_init__(self):
        if self.truncation < 0:
            raise ValueError("truncation must be non-negative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not self.tail_bound < self.tol / 4:
            raise ValueError(f"tail bound {self.tail_bound:.3g} is not below tol/4 = {self.tol / 4:.3g}")

    @classmethod
    def choose(cls, split: HyperbolicSplitting, sup_r: float, tol: float) -> "SeriesParameters":
        """Smallest N with tail_bound(N) < tol / 4."""
        n = 0
        while tail_bound(split, sup_r, n) >= tol / 4:
            n += 1
            if n > 10_000:
                raise ValueError("tolerance is unreachable")
        return cls(n, tol, tail_bound(split, sup_r, n))

    @classmethod
    def fixed(cls, split: HyperbolicSplitting, sup_r: float, truncation: int) -> "SeriesParameters":
        """Explicit N; the tolerance is set to the loosest one it satisfies."""
        tb = tail_bound(split, sup_r, truncation)
        return cls(truncation, max(8.0 * tb, np.finfo(float).tiny), tb)

    def to_dict(self) -> dict:
        return {"truncation": self.truncation, "tol": self.tol, "tail_bound": self.tail_bound}


class CohomologySolver:
    """Evaluates the truncated series for one (F, G) pair."""

    def __init__(
        self,
        F: FibrewiseSystem,
        model: AffineModel,
        split: HyperbolicSplitting,
        field: DisplacementField,
        params: SeriesParameters,
    ):
        self.F, self.model, self.split, self.field, self.params = F, model, split, field, params
        N = params.truncation
        a_norm = float(np.linalg.norm(F.matrix.array, 2))
        # keeps accumulated inversion error below tol/10 (floored at rounding level inside Newton)
        self.newton_tol = params.tol / (10.0 * max(N, 1) * a_norm**N)

    def with_truncation(self, truncation: int) -> "CohomologySolver":
        params = SeriesParameters.fixed(self.split, self.field.sup_bound, truncation)
        return CohomologySolver(self.F, self.model, self.split, self.field, params)

    def _orbits(self, b, x, N: int):
        """r along the forward orbit e_0..e_N and the backward orbit e_-1..e_-(N+1)."""
        F, r = self.F, self.field
        fwd = []
        bf, xf = b, x
        for _ in range(N + 1):
            fwd.append(r(bf, xf))
            bf, xf = F.forward(bf, xf)
        bwd = []
        bb, xb = b, wrap(x)
        for _ in range(N + 1):
            bb, xb = F.backward(bb, xb, self.newton_tol)
            bwd.append(r(bb, xb))
        return fwd, bwd

    def summands(self, b, x) -> tuple[np.ndarray, np.ndarray]:
        """Individual terms: stable (N+1, n, d) and unstable (N+1, n, d)."""
        b, x = np.atleast_2d(b), np.atleast_2d(x)
        N = self.params.truncation
        if self.field.is_zero:
            z = np.zeros((N + 1,) + x.shape)
            return z, z.copy()
        fwd, bwd = self._orbits(b, x, N)
        Ls, Ps, Rs = self.split.stable_factors(N)
        Lu, Pu, Ru = self.split.unstable_factors(N + 1)
        st = np.stack([-(bwd[n] @ Rs.T) @ Ps[n].T @ Ls.T for n in range(N + 1)])
        un = np.stack([(fwd[n] @ Ru.T) @ Pu[n + 1].T @ Lu.T for n in range(N + 1)])
        return st, un

    def w(self, b, x) -> np.ndarray:
        """Truncated lift w(b, x) of shape (n, d)."""
        b, x = np.atleast_2d(b), np.atleast_2d(x)
        N = self.params.truncation
        if self.field.is_zero:
            return np.zeros_like(x, dtype=float)
        fwd, bwd = self._orbits(b, x, N)
        Ls, Ps, Rs = self.split.stable_factors(N)
        Lu, Pu, Ru = self.split.unstable_factors(N + 1)
        cs = np.zeros((x.shape[0], self.split.stable_dim))
        cu = np.zeros((x.shape[0], self.split.unstable_dim))
        for n in range(N, -1, -1):
            cs += (bwd[n] @ Rs.T) @ Ps[n].T
            cu += (fwd[n] @ Ru.T) @ Pu[n + 1].T
        return -cs @ Ls.T + cu @ Lu.T

    def h_lift(self, b, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x + self.w(b, x)

    def h(self, b, x) -> tuple[np.ndarray, np.ndarray]:
        """h(b, x) = (b, x + w(b, x)): fibres over the identity of B."""
        b = np.atleast_2d(np.asarray(b, dtype=float))
        return b, wrap(self.h_lift(b, x))

    def cohomology_residual(self, b, x) -> np.ndarray:
        """|A w(e) - w(F e) - r(e)| at each point."""
        b, x = np.atleast_2d(b), np.atleast_2d(x)
        A = self.F.matrix.array
        bf, xf = self.F.forward(b, x)
        res = self.w(b, x) @ A.T - self.w(bf, xf) - self.field(b, x)
        return np.linalg.norm(res, axis=1)

    def conjugacy_residual(self, b, x) -> np.ndarray:
        """torus distance between h(F(e)) and G(h(e)) (base parts agree exactly)."""
        b, x = np.atleast_2d(b), np.atleast_2d(x)
        bf, xf = self.F.forward(b, x)
        _, lhs = self.h(bf, xf)
        hb, hx = self.h(b, x)
        _, rhs = self.model.apply(hb, hx)
        return torus_dist(lhs, rhs)


def solve_cohomological(
    F: FibrewiseSystem,
    split: HyperbolicSplitting,
    params: SeriesParameters,
    b,
    x,
    model: AffineModel | None = None,
    field: DisplacementField | None = None,
) -> np.ndarray:
    """Truncated solution w of A w - w o F = r at the given points."""
    model = model if model is not None else F.affine_model()
    field = field if field is not None else displacement(F, model)
    return CohomologySolver(F, model, split, field, params).w(b, x)


def _stats(values: np.ndarray) -> dict:
    return {"max": float(np.max(values)), "mean": float(np.mean(values))}


def check_compatible(F: FibrewiseSystem, G: AffineModel) -> None:
    induced = induced_homology_matrix(F)
    if induced != G.matrix:
        raise HomologyMismatch(
            f"F induces {induced.tolist()} on fibre homology but the model matrix is {G.matrix.tolist()}"
        )
    if F.base != G.base_map:
        raise HomologyMismatch("F and G cover different base maps")


@dataclass(frozen=True, eq=False)
class ConjugacyResult:
    solver: CohomologySolver = field(repr=False)
    parameters: SeriesParameters
    grid: Grid
    cohomology_residual: dict
    conjugacy_residual: dict
    degree_check: bool
    degree_defect: float
    periodicity_defect: float
    injectivity_margin: float

    def w(self, b, x) -> np.ndarray:
        return self.solver.w(b, x)

    def h(self, b, x):
        return self.solver.h(b, x)

    def to_dict(self) -> dict:
        return {
            "parameters": self.parameters.to_dict(),
            "sup_displacement": self.solver.field.sup_bound,
            "lambda": self.solver.split.lam,
            "growth_constant": self.solver.split.growth_constant,
            "grid": list(self.grid.resolution),
            "cohomology_residual": self.cohomology_residual,
            "conjugacy_residual": self.conjugacy_residual,
            "degree_check": self.degree_check,
            "degree_defect": self.degree_defect,
            "periodicity_defect": self.periodicity_defect,
            "injectivity_margin": self.injectivity_margin,
        }

    def grid_table(self) -> np.ndarray:
        """Rows of (base coords, fibre coords, w coords) on the grid."""
        F = self.solver.F
        z = self.grid.array()
        return np.hstack([z, self.solver.w(z[:, : F.k], z[:, F.k :])])


def _pair_ratios(hx: np.ndarray, x: np.ndarray) -> float:
    i, j = np.triu_indices(len(x), k=1)
    return float(np.min(torus_dist(hx[i], hx[j]) / torus_dist(x[i], x[j])))


def build_conjugacy(
    F: FibrewiseSystem,
    G: AffineModel | None = None,
    tol: float = 1e-6,
    grid: Grid | None = None,
    injectivity_fibres: int = 4,
    parameters: SeriesParameters | None = None,
) -> ConjugacyResult:
    """Solve for h with h o F = G o h and collect residual statistics on a grid.

    ``parameters`` pins the truncation (as in a sweep); its tail bound must
    still dominate the one implied by this system's displacement.
    """
    G = G if G is not None else F.affine_model()
    check_compatible(F, G)
    split = compute_splitting(G.matrix)
    field = displacement(F, G)
    if parameters is None:
        params = SeriesParameters.choose(split, field.sup_bound, tol)
    else:
        needed = tail_bound(split, field.sup_bound, parameters.truncation)
        if needed > parameters.tail_bound * (1 + 1e-12):
            raise ValueError(f"pinned tail bound {parameters.tail_bound:.3g} is below the required {needed:.3g}")
        params = parameters
    solver = CohomologySolver(F, G, split, field, params)
    grid = grid if grid is not None else Grid([4] * F.k + [16] * F.d)
    if grid.dim != F.k + F.d:
        raise ValueError("grid must cover B x T^d")
    z = grid.array()
    b, x = z[:, : F.k], z[:, F.k :]
    coh = solver.cohomology_residual(b, x)
    conj = solver.conjugacy_residual(b, x)

    hx = solver.h_lift(b, x)
    degree_defect = periodicity = 0.0
    for m in np.eye(F.d):
        shifted = solver.h_lift(b, x + m)
        degree_defect = max(degree_defect, float(np.max(np.abs(shifted - hx - m))))
        periodicity = max(periodicity, float(np.max(np.abs((shifted - x - m) - (hx - x)))))

    fibre_res = grid.resolution[F.k :]
    fibre_grid = Grid(fibre_res).array()
    base_values = np.unique(b, axis=0)[:injectivity_fibres]
    margin = np.inf
    for bv in base_values:
        bb = np.broadcast_to(bv, (len(fibre_grid), F.k))
        _, hfib = solver.h(bb, fibre_grid)
        margin = min(margin, _pair_ratios(hfib, fibre_grid))

    return ConjugacyResult(
        solver=solver,
        parameters=params,
        grid=grid,
        cohomology_residual=_stats(coh),
        conjugacy_residual=_stats(conj),
        degree_check=degree_defect <= 1e-10,
        degree_defect=degree_defect,
        periodicity_defect=periodicity,
        injectivity_margin=float(margin),
    )


def verify_conjugacy(
    result: ConjugacyResult,
    F: FibrewiseSystem | None = None,
    G: AffineModel | None = None,
    samples: int = 1000,
    seed: int = 0,
) -> dict:
    """Check h o F = G o h at fresh random points, re-summing w at each."""
    solver = result.solver
    if F is not None and F is not solver.F:
        raise ValueError("result was built for a different system")
    if G is not None and G is not solver.model:
        raise ValueError("result was built for a different model")
    rng = np.random.default_rng(seed)
    b = rng.random((samples, solver.F.k))
    x = rng.random((samples, solver.F.d))
    res = solver.conjugacy_residual(b, x)
    threshold = 4.0 * result.parameters.tail_bound + EVALUATION_ALLOWANCE
    worst = float(res.max())
    return {
        "samples": samples,
        "max_residual": worst,
        "mean_residual": float(res.mean()),
        "threshold": threshold,
        "pass": worst <= threshold,
    }


def injectivity_scan(
    result: ConjugacyResult,
    F: FibrewiseSystem | None = None,
    fibres: int = 5,
    pairs: int = 200,
    seed: int = 0,
    delta0: float = 0.1,
) -> dict:
    """Sampled lower bounds on how much h_b can bring points together.

    A positive margin is numerical evidence that h_b is injective, not a
    proof.
    """
    solver = result.solver
    k, d = solver.F.k, solver.F.d
    rng = np.random.default_rng(seed)
    ratio = np.inf
    separation = np.inf
    for _ in range(fibres):
        bv = rng.random(k)
        bb = np.broadcast_to(bv, (pairs, k))
        x = rng.random((pairs, d))
        y = rng.random((pairs, d))
        dist = torus_dist(x, y)
        keep = dist > 1e-9
        _, hx = solver.h(bb, x)
        _, hy = solver.h(bb, y)
        ratio = min(ratio, float(np.min(torus_dist(hx, hy)[keep] / dist[keep])))
        u = rng.normal(size=(pairs, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        y0 = wrap(x + delta0 * u)
        _, hy0 = solver.h(bb, y0)
        separation = min(separation, float(np.min(torus_dist(hx, hy0))))
    return {
        "fibres": fibres,
        "pairs": pairs,
        "min_ratio": ratio,
        "delta0": delta0,
        "min_separation_at_delta0": separation,
        "positive": bool(ratio > 0 and separation > 0),
        "note": "sampled evidence of fibrewise injectivity, not a proof",
    }
