"""Cone-field certification of fibrewise hyperbolicity.

Cones live in an orthonormal frame ``Q`` whose first ``l`` columns span the
approximate stable directions.  In frame coordinates ``v = (a, b)``::

    unstable cone  |a| <= gamma |b|   <=>  v^T diag(-I, gamma^2 I) v >= 0
    stable cone    |b| <= gamma |a|   <=>  v^T diag(gamma^2 I, -I) v >= 0

Strict invariance of a quadratic cone ``{v^T Q v >= 0}`` under a linear
map ``J`` follows from ``J^T Q J - tau Q > 0`` for some ``tau >= 0``
(S-lemma), so the per-point margin is ``max_tau lambda_min(J^T Q J - tau Q)``.
Expansion and contraction rates are bounded the same way through the
Lagrangian dual, which always errs on the safe side.

Grid values are turned into statements about whole cells by subtracting a
Lipschitz margin: if ``|J' - J| <= delta`` then ``|J'^T M J' - J^T M J| <=
|M| (2 |J| delta + delta^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linear import HyperbolicSplitting
from .system import FibrewiseSystem
from .torus import Grid

MAX_WITNESSES = 100
_CHUNK = 65_536


@dataclass(frozen=True, eq=False)
class ConeField:
    """Constant orthonormal frame plus aperture ``gamma``."""

    frame: np.ndarray
    gamma: float
    stable_dim: int

    def __post_init__(self):
        q = np.asarray(self.frame, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("frame must be a square matrix")
        if np.max(np.abs(q.T @ q - np.eye(q.shape[0]))) > 1e-10:
            raise ValueError("frame must be orthonormal")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.stable_dim < q.shape[0]:
            raise ValueError("stable_dim must be strictly between 0 and d")
        object.__setattr__(self, "frame", q)

    @classmethod
    def from_splitting(cls, split: HyperbolicSplitting, gamma: float) -> "ConeField":
        return cls(split.frame, gamma, split.stable_dim)

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    def _diag(self, s_val: float, u_val: float) -> np.ndarray:
        l = self.stable_dim
        return np.diag([s_val] * l + [u_val] * (self.d - l))

    @property
    def unstable_form(self) -> np.ndarray:
        return self._diag(-1.0, self.gamma**2)

    @property
    def stable_form(self) -> np.ndarray:
        return self._diag(self.gamma**2, -1.0)

    @property
    def stable_complement_form(self) -> np.ndarray:
        """Closure of the complement of the stable cone."""
        return self._diag(-self.gamma**2, 1.0)

    def contains(self, vectors, kind: str) -> np.ndarray:
        c = np.asarray(vectors) @ self.frame
        a = np.linalg.norm(c[..., : self.stable_dim], axis=-1)
        b = np.linalg.norm(c[..., self.stable_dim :], axis=-1)
        if kind == "unstable":
            return a <= self.gamma * b
        return b <= self.gamma * a


def _golden_max(fun, lo, hi, iters: int = 64):
    """Vectorized golden-section search for maxima of concave functions."""
    r = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.array(lo, dtype=float), np.array(hi, dtype=float)
    c = b - r * (b - a)
    dd = a + r * (b - a)
    fc, fd = fun(c), fun(dd)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, dd, b)
        a = np.where(left, a, c)
        new_c = b - r * (b - a)
        new_d = a + r * (b - a)
        c_next = np.where(left, new_c, dd)
        d_next = np.where(left, c, new_d)
        f_c_next = np.where(left, np.nan, fd)
        f_d_next = np.where(left, fc, np.nan)
        need_c, need_d = left, ~left
        if need_c.any():
            f_c_next[need_c] = fun(c_next, need_c)
        if need_d.any():
            f_d_next[need_d] = fun(d_next, need_d)
        c, dd, fc, fd = c_next, d_next, f_c_next, f_d_next
    best = np.where(fc >= fd, c, dd)
    value = np.maximum(fc, fd)
    # the endpoint lo = 0 is often optimal for rate bounds
    at_lo = fun(np.array(lo, dtype=float))
    return np.where(at_lo > value, lo, best), np.maximum(value, at_lo)


def _sym2_extremes(m):
    mean = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
    rad = np.hypot(0.5 * (m[..., 0, 0] - m[..., 1, 1]), 0.5 * (m[..., 0, 1] + m[..., 1, 0]))
    return mean - rad, mean + rad


def _lam_min(mats):
    if mats.shape[-1] == 2:
        return _sym2_extremes(mats)[0]
    return np.linalg.eigvalsh(mats)[..., 0]


def _lam_max(mats):
    if mats.shape[-1] == 2:
        return _sym2_extremes(mats)[1]
    return np.linalg.eigvalsh(mats)[..., -1]


def _invariance_margin(J: np.ndarray, Q: np.ndarray):
    """max_tau>=0 lambda_min(J^T Q J - tau Q) and the optimal tau."""
    P = np.einsum("nji,jk,nkl->nil", J, Q, J)
    jn2 = np.linalg.norm(J, ord=2, axis=(1, 2)) ** 2
    hi = jn2 / min(abs(Q[Q != 0])) + 1.0

    def f(t, mask=None):
        if mask is None:
            return _lam_min(P - t[:, None, None] * Q)
        return _lam_min(P[mask] - t[mask][:, None, None] * Q)

    return _golden_max(f, np.zeros(len(J)), hi)


def _expansion_lower(J: np.ndarray, Q: np.ndarray):
    """Lower bound on min |J v|^2 / |v|^2 over the cone {v^T Q v >= 0}."""
    P = np.einsum("nji,njk->nik", J, J)
    hi = np.linalg.norm(J, ord=2, axis=(1, 2)) ** 2 / min(abs(Q[Q != 0])) + 1.0

    def f(t, mask=None):
        if mask is None:
            return _lam_min(P - t[:, None, None] * Q)
        return _lam_min(P[mask] - t[mask][:, None, None] * Q)

    return _golden_max(f, np.zeros(len(J)), hi)


def _image_growth_upper(J: np.ndarray, Q: np.ndarray):
    """Upper bound on max |J v|^2 / |v|^2 over {v : (J v)^T Q (J v) >= 0}.

    Returns the bound and the weight ``|I + mu Q|`` at the optimal multiplier
    (needed for the Lipschitz inflation).
    """
    P = np.einsum("nji,njk->nik", J, J)
    JQJ = np.einsum("nji,jk,nkl->nil", J, Q, J)
    hi = np.full(len(J), 1.0 / min(abs(Q[Q != 0])) + 1.0)

    def f(t, mask=None):
        if mask is None:
            return -_lam_max(P + t[:, None, None] * JQJ)
        return -_lam_max(P[mask] + t[mask][:, None, None] * JQJ[mask])

    mu, neg = _golden_max(f, np.zeros(len(J)), hi)
    qd = np.diag(Q)
    weight = np.max(np.abs(1.0 + mu[:, None] * qd[None, :]), axis=1)
    return -neg, weight


def orbit_jacobian(F: FibrewiseSystem, b, x, steps: int) -> np.ndarray:
    """Product of fibre Jacobians along the forward orbit, shape (n, d, d)."""
    J = np.broadcast_to(np.eye(F.d), (len(x), F.d, F.d)).copy()
    for _ in range(steps):
        J = F.fibre_jacobian(b, x) @ J
        b, x = F.forward(b, x)
    return J


def jacobian_perturbation(F: FibrewiseSystem, grid: Grid, steps: int) -> float:
    """Bound on |J_N(e') - J_N(e)| for e' in the grid cell of e."""
    L_axes = F.jacobian_lipschitz_axes()
    if not np.any(L_axes):
        return 0.0
    h = grid.half_spacing()
    jmax = F.jacobian_sup
    lip = F.lipschitz_total
    radius = float(np.linalg.norm(h))
    L_tot = float(np.linalg.norm(L_axes))
    per_step = [float(np.dot(L_axes, h))] + [L_tot * lip**m * radius for m in range(1, steps)]
    return jmax ** (steps - 1) * sum(per_step)


@dataclass(frozen=True, eq=False)
class ConeCertificate:
    gamma: float
    steps: int
    lambda_prime: float
    grid: Grid
    margin: float
    unstable_margin: float
    stable_margin: float
    expansion_min: float
    contraction_max: float
    jacobian_delta: float
    cones: ConeField = field(repr=False)
    witnesses: tuple = field(default=(), repr=False)

    @property
    def passed(self) -> bool:
        return self.margin > 0.0 and self.lambda_prime < 1.0

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "gamma": self.gamma,
            "steps": self.steps,
            "lambda_prime": self.lambda_prime,
            "grid": list(self.grid.resolution),
            "margin": self.margin,
            "unstable_margin": self.unstable_margin,
            "stable_margin": self.stable_margin,
            "expansion_min": self.expansion_min,
            "contraction_max": self.contraction_max,
            "jacobian_delta": self.jacobian_delta,
            "witnesses": list(self.witnesses),
        }


def default_grid(F: FibrewiseSystem, budget: int = 262_144) -> Grid:
    n = int(np.floor(budget ** (1.0 / (F.k + F.d)) + 1e-9))
    return Grid([max(n, 2)] * (F.k + F.d))


def check_cone_invariance(
    F: FibrewiseSystem, cones: ConeField, steps: int = 1, grid: Grid | None = None
) -> ConeCertificate:
    """Certify strict cone invariance and rates over all of B x T^d.

    Grid points are checked exactly; every cell is then covered by the
    Lipschitz inflation of the N-step Jacobian.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if cones.d != F.d:
        raise ValueError(f"cone frame has dimension {cones.d}, system has d={F.d}")
    grid = grid if grid is not None else default_grid(F)
    if grid.dim != F.k + F.d:
        raise ValueError(f"grid must cover B x T^d (dimension {F.k + F.d})")
    delta = jacobian_perturbation(F, grid, steps)
    Qf = cones.frame
    forms = {
        "unstable": cones.unstable_form,
        "stable": cones.stable_complement_form,
    }
    worst = {"unstable": np.inf, "stable": np.inf}
    exp_min, con_max = np.inf, 0.0
    witnesses: list[dict] = []
    z_all = grid.array()
    for start in range(0, len(z_all), _CHUNK):
        z = z_all[start : start + _CHUNK]
        b, x = z[:, : F.k], z[:, F.k :]
        J = orbit_jacobian(F, b, x, steps)
        Jf = np.einsum("ji,njk,kl->nil", Qf, J, Qf)
        jn = np.linalg.norm(Jf, ord=2, axis=(1, 2))
        infl = 2.0 * jn * delta + delta**2
        margins = {}
        for kind, Q in forms.items():
            _, raw = _invariance_margin(Jf, Q)
            margins[kind] = (raw - infl) / jn**2
            worst[kind] = min(worst[kind], float(margins[kind].min()))
        _, expand = _expansion_lower(Jf, cones.unstable_form)
        expand = np.maximum(expand - infl, 0.0)
        grow, weight = _image_growth_upper(Jf, cones.stable_form)
        grow = grow + weight * infl
        exp_min = min(exp_min, float(np.sqrt(expand.min())))
        con_max = max(con_max, float(np.sqrt(grow.max())))
        bad = np.nonzero((margins["unstable"] <= 0) | (margins["stable"] <= 0))[0]
        for i in bad[: MAX_WITNESSES - len(witnesses)]:
            witnesses.append(
                {
                    "point": z[i].tolist(),
                    "unstable_margin": float(margins["unstable"][i]),
                    "stable_margin": float(margins["stable"][i]),
                }
            )
    rate = max(1.0 / exp_min if exp_min > 0 else np.inf, con_max)
    lam_prime = float(rate ** (1.0 / steps))
    return ConeCertificate(
        gamma=cones.gamma,
        steps=steps,
        lambda_prime=lam_prime,
        grid=grid,
        margin=min(worst.values()),
        unstable_margin=worst["unstable"],
        stable_margin=worst["stable"],
        expansion_min=exp_min,
        contraction_max=con_max,
        jacobian_delta=delta,
        cones=cones,
        witnesses=tuple(witnesses),
    )


def principal_gap(U1: np.ndarray, U2: np.ndarray) -> np.ndarray:
    """Sine of the largest principal angle between spans of orthonormal bases."""
    resid = U2 - U1 @ np.einsum("nji,njk->nik", U1, U2)
    return np.linalg.norm(resid, ord=2, axis=(1, 2))


def _orth(M: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(M)
    return q


@dataclass(frozen=True, eq=False)
class BundleApproximation:
    points: np.ndarray
    stable: np.ndarray
    unstable: np.ndarray
    iterations: int
    stable_gap: float
    unstable_gap: float
    tol: float

    @property
    def converged(self) -> bool:
        return max(self.stable_gap, self.unstable_gap) < self.tol

    def transversality(self) -> float:
        """Smallest angle between the stable and unstable subspaces."""
        s = np.linalg.svd(np.einsum("nji,njk->nik", self.stable, self.unstable), compute_uv=False)
        return float(np.arccos(np.clip(s.max(), -1.0, 1.0)))

    def to_dict(self) -> dict:
        return {
            "points": len(self.points),
            "iterations": self.iterations,
            "stable_gap": self.stable_gap,
            "unstable_gap": self.unstable_gap,
            "converged": self.converged,
            "transversality": self.transversality(),
        }


def invariant_bundles(
    F: FibrewiseSystem,
    b,
    x,
    cones: ConeField,
    steps: int = 1,
    iterations: int = 40,
    tol: float = 1e-12,
) -> BundleApproximation:
    """Invariant stable/unstable subspaces at the given bundle points.

    The unstable subspace at e is the pushforward of the reference unstable
    frame from e_{-iN} along the orbit; the stable one is the pullback of
    the reference stable frame from e_{iN}.  Depth i grows until successive
    subspaces agree to ``tol`` in principal angle.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d, l = len(x), F.d, cones.stable_dim
    ref_s = np.broadcast_to(cones.frame[:, :l], (n, d, l))
    ref_u = np.broadcast_to(cones.frame[:, l:], (n, d, d - l))
    fwd_jac, bwd_jac = [], []
    bf, xf, bb, xb = b, x, b, x
    S = U = None
    gap_s = gap_u = np.inf
    it = 0
    for it in range(1, iterations + 1):
        for _ in range(steps):
            fwd_jac.append(F.fibre_jacobian(bf, xf))
            bf, xf = F.forward(bf, xf)
            bb, xb = F.backward(bb, xb)
            bwd_jac.append(F.fibre_jacobian(bb, xb))
        S_new = ref_s
        for Jm in reversed(fwd_jac):
            S_new = _orth(np.linalg.solve(Jm, S_new))
        U_new = ref_u
        for Jm in reversed(bwd_jac):
            U_new = _orth(Jm @ U_new)
        if S is not None:
            gap_s = float(principal_gap(S, S_new).max())
            gap_u = float(principal_gap(U, U_new).max())
        S, U = S_new, U_new
        if max(gap_s, gap_u) < tol:
            break
    return BundleApproximation(np.hstack([b, x]), S, U, it, gap_s, gap_u, tol)


def approximate_invariant_bundles(
    F: FibrewiseSystem,
    cert: ConeCertificate,
    iterations: int = 40,
    tol: float = 1e-12,
    grid: Grid | None = None,
) -> BundleApproximation:
    """Invariant bundles on a grid (default: the certificate's grid)."""
    if not cert.passed:
        raise ValueError("cone certificate did not pass; bundles are not defined")
    grid = grid if grid is not None else cert.grid
    z = grid.array()
    return invariant_bundles(F, z[:, : F.k], z[:, F.k :], cert.cones, cert.steps, iterations, tol)


def stable_contraction_defect(
    F: FibrewiseSystem, approx: BundleApproximation, lambda_prime: float, steps: int = 1, k_max: int = 5
) -> float:
    """max over points, k <= k_max of |dF^{kN} v| / (lambda'^{kN} |v|) for v in the stable bundle.

    Values <= 1 confirm the contraction estimate.
    """
    z = approx.points
    b, x = z[:, : F.k], z[:, F.k :]
    v = approx.stable[:, :, 0]
    worst = 0.0
    n = 0
    for _k in range(1, k_max + 1):
        for _ in range(steps):
            v = np.einsum("nij,nj->ni", F.fibre_jacobian(b, x), v)
            b, x = F.forward(b, x)
            n += 1
        ratio = np.linalg.norm(v, axis=1) / lambda_prime**n
        worst = max(worst, float(ratio.max()))
    return worst


def unstable_expansion_defect(
    F: FibrewiseSystem, approx: BundleApproximation, lambda_prime: float, steps: int = 1, k_max: int = 5
) -> float:
    """max of |dF^{-kN} v| / (lambda'^{kN} |v|) for unit v in the unstable bundle."""
    z = approx.points
    b, x = z[:, : F.k], z[:, F.k :]
    v = approx.unstable[:, :, 0]
    worst = 0.0
    n = 0
    for _k in range(1, k_max + 1):
        for _ in range(steps):
            b, x = F.backward(b, x)
            v = np.linalg.solve(F.fibre_jacobian(b, x), v[..., None])[..., 0]
            n += 1
        worst = max(worst, float((np.linalg.norm(v, axis=1) / lambda_prime**n).max()))
    return worst
