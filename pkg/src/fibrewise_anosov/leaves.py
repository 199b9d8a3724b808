"""Lifted stable and unstable leaves of the fibre dynamics, by windowed graph transform.

Leaves are graphs in the orthonormal cone frame ``Q = [S | U]``: an
unstable leaf through the anchor is ``anchor + S phi(c) + U c`` over the
box ``|c|_inf <= R``, a stable leaf is ``anchor + S a + U psi(a)``.  With
these coordinates the cone condition is simply ``Lip(phi) <= gamma``.

Orbits are kept on projected points and the map is applied to offsets
through ``FibrewiseSystem.increment``, so depth does not cost precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import RegularGridInterpolator

from .cones import ConeCertificate
from .system import FibrewiseSystem
from .torus import wrap, wrap_centered

KINDS = ("stable", "unstable")
MAX_MESH_POINTS = 250_000
_SOLVE_TOL = 1e-13


class LeafError(RuntimeError):
    """The graph transform failed: the leaf left the cone or did not converge."""


def _mesh_axes(radius: float, count: int, dim: int) -> tuple[np.ndarray, ...]:
    return tuple(np.linspace(-radius, radius, count) for _ in range(dim))


def _mesh_points(axes) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


class _Linear1D:
    """Piecewise-linear interpolation on a uniform 1-D mesh, extrapolating linearly."""

    def __init__(self, axis: np.ndarray, values: np.ndarray):
        self.x0, self.h, self.n = axis[0], axis[1] - axis[0], len(axis)
        self.values = values

    def __call__(self, t) -> np.ndarray:
        s = (np.asarray(t, dtype=float)[:, 0] - self.x0) / self.h
        i = np.clip(np.floor(s).astype(int), 0, self.n - 2)
        w = (s - i)[:, None]
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


def _interp(axes, values: np.ndarray):
    if len(axes) == 1:
        return _Linear1D(axes[0], values)
    shape = tuple(len(a) for a in axes) + (values.shape[-1],)
    return RegularGridInterpolator(axes, values.reshape(shape), bounds_error=False, fill_value=None)


def _max_slope(axes, values: np.ndarray) -> float:
    """Lipschitz estimate of the piecewise-linear graph from mesh chords."""
    shape = tuple(len(a) for a in axes) + (values.shape[-1],)
    v = values.reshape(shape)
    h = axes[0][1] - axes[0][0]
    sq = 0.0
    for ax in range(len(axes)):
        diff = np.linalg.norm(np.diff(v, axis=ax), axis=-1) / h
        sq = sq + float(diff.max()) ** 2 if diff.size else sq
    return float(np.sqrt(sq))


class _Orbit:
    """Orbit segment with the relative maps delta -> F(q_j + delta) - q_(j+1)."""

    def __init__(self, F: FibrewiseSystem, bases: list, points: list):
        self.F, self.bases, self.points = F, bases, points
        self.defects = [
            wrap_centered(F.lift_map(bases[j], points[j]) - points[j + 1]) for j in range(len(points) - 1)
        ]

    def step(self, j: int, delta: np.ndarray) -> np.ndarray:
        return self.F.increment(self.bases[j], self.points[j], delta) + self.defects[j]

    @classmethod
    def forward(cls, F, b, anchor, n):
        bases, points = [b], [anchor]
        for _ in range(n):
            nb, nx = F.forward(bases[-1], points[-1])
            bases.append(nb)
            points.append(nx)
        return cls(F, bases, points)

    @classmethod
    def backward(cls, F, b, anchor, n, tol=1e-14):
        bases, points = [b], [anchor]
        for _ in range(n):
            pb, px = F.backward(bases[0], points[0], tol)
            bases.insert(0, pb)
            points.insert(0, px)
        return cls(F, bases, points)


@dataclass(frozen=True, eq=False)
class LeafSegment:
    kind: str
    base: np.ndarray
    anchor: np.ndarray
    frame: np.ndarray
    stable_dim: int
    radius: float
    axes: tuple = field(repr=False)
    values: np.ndarray = field(repr=False)
    depth: int = 0
    invariance_residual: float = 0.0
    max_slope: float = 0.0
    gamma: float = 1.0

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @property
    def leaf_dim(self) -> int:
        return self.d - self.stable_dim if self.kind == "unstable" else self.stable_dim

    @property
    def spacing(self) -> float:
        return float(self.axes[0][1] - self.axes[0][0])

    def graph(self, params) -> np.ndarray:
        """Graph value at parameters (n, leaf_dim); linear extrapolation outside the box."""
        params = np.atleast_2d(np.asarray(params, dtype=float))
        return _interp(self.axes, self.values)(params)

    def coords(self, params, values) -> np.ndarray:
        """Frame coordinates (stable part first) of graph points."""
        if self.kind == "unstable":
            return np.hstack([values, params])
        return np.hstack([params, values])

    def lift_points(self, params=None) -> np.ndarray:
        if params is None:
            params, vals = _mesh_points(self.axes), self.values
        else:
            params = np.atleast_2d(np.asarray(params, dtype=float))
            vals = self.graph(params)
        return self.anchor + self.coords(params, vals) @ self.frame.T

    def split_coords(self, points) -> tuple[np.ndarray, np.ndarray]:
        """(parameter, transverse value) of lift points relative to the anchor."""
        y = (np.atleast_2d(np.asarray(points, dtype=float)) - self.anchor) @ self.frame
        l = self.stable_dim
        if self.kind == "unstable":
            return y[:, l:], y[:, :l]
        return y[:, :l], y[:, l:]

    def distance_to(self, points) -> np.ndarray:
        """Transverse distance |value - graph(parameter)| of lift points."""
        p, v = self.split_coords(points)
        return np.linalg.norm(v - self.graph(p), axis=1)

    def phi_at_anchor(self) -> float:
        return float(np.linalg.norm(self.graph(np.zeros((1, self.leaf_dim)))))

    def polyline(self) -> np.ndarray:
        """Rows (parameter..., lift coords...) on the mesh."""
        return np.hstack([_mesh_points(self.axes), self.lift_points()])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "base": self.base.tolist(),
            "anchor": self.anchor.tolist(),
            "radius": self.radius,
            "mesh": [len(a) for a in self.axes],
            "depth": self.depth,
            "invariance_residual": self.invariance_residual,
            "max_slope": self.max_slope,
            "gamma": self.gamma,
        }


def _unstable_transform(orbit: _Orbit, Q, l, axes, Kinv, max_iter=100):
    mesh = _mesh_points(axes)
    npts = mesh.shape[0]
    vals = np.zeros((npts, l))
    prev = vals
    n = len(orbit.points) - 1
    for j in range(n):
        interp = _interp(axes, vals)
        c = mesh @ Kinv.T
        for _ in range(max_iter):
            img = orbit.step(j, np.hstack([interp(c), c]) @ Q.T) @ Q
            err = mesh - img[:, l:]
            if np.max(np.abs(err)) <= _SOLVE_TOL * (1.0 + np.max(np.abs(mesh))):
                break
            c = c + err @ Kinv.T
        else:
            raise LeafError(f"unstable graph transform did not converge at step {j}")
        prev, vals = vals, img[:, :l]
    return prev, vals


def _stable_transform(orbit: _Orbit, Q, l, axes, Kinv, max_iter=100):
    mesh = _mesh_points(axes)
    npts = mesh.shape[0]
    du = Q.shape[0] - l
    vals = np.zeros((npts, du))
    nxt = vals
    n = len(orbit.points) - 1
    for j in range(n - 1, -1, -1):
        interp = _interp(axes, vals)
        c = np.zeros((npts, du))
        for _ in range(max_iter):
            img = orbit.step(j, np.hstack([mesh, c]) @ Q.T) @ Q
            g = img[:, l:] - interp(img[:, :l])
            if np.max(np.abs(g)) <= _SOLVE_TOL * (1.0 + np.max(np.abs(mesh))):
                break
            c = c - g @ Kinv.T
        else:
            raise LeafError(f"stable graph transform did not converge at step {j}")
        nxt, vals = vals, c
    return nxt, vals


def compute_leaf(
    F: FibrewiseSystem,
    cert: ConeCertificate,
    b,
    anchor,
    kind: str,
    R: float = 2.0,
    depth: int = 30,
    density: int = 400,
    max_refine: int = 2,
) -> LeafSegment:
    """Local leaf through ``anchor`` in the fibre over ``b``.

    ``density`` is mesh points per unit length along each leaf axis; the mesh
    is doubled (up to ``max_refine`` times) while chords look steeper than
    ``gamma``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if not cert.passed:
        raise ValueError("cone certificate did not pass; leaves are undefined")
    if not 0 < R <= 10:
        raise ValueError("R must lie in (0, 10]")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    Q = cert.cones.frame
    l, d = cert.cones.stable_dim, cert.cones.d
    if d != F.d:
        raise ValueError("certificate and system have different fibre dimension")
    b = wrap(np.asarray(b, dtype=float).reshape(F.k))
    anchor = np.asarray(anchor, dtype=float).reshape(F.d)
    T = Q.T @ F.matrix.array @ Q
    Kinv = np.linalg.inv(T[l:, l:])
    leaf_dim = d - l if kind == "unstable" else l
    if leaf_dim > 2:
        raise ValueError("leaves of dimension above 2 are not supported")

    if kind == "unstable":
        orbit = _Orbit.backward(F, b, anchor, depth)
    else:
        orbit = _Orbit.forward(F, b, anchor, depth)

    count_cap = int(MAX_MESH_POINTS ** (1.0 / leaf_dim))
    count = min(int(np.ceil(2 * R * density)) + 1, count_cap)
    for _ in range(max_refine + 1):
        axes = _mesh_axes(R, count, leaf_dim)
        if kind == "unstable":
            prev, vals = _unstable_transform(orbit, Q, l, axes, Kinv)
        else:
            nxt, vals = _stable_transform(orbit, Q, l, axes, Kinv)
        slope = _max_slope(axes, vals)
        if slope <= cert.gamma or 2 * count - 1 > count_cap:
            break
        count = 2 * count - 1
    if slope > cert.gamma:
        raise LeafError(
            f"{kind} leaf has chord slope {slope:.3g} > gamma = {cert.gamma}; "
            "gamma too large or depth too small"
        )

    mesh = _mesh_points(axes)
    if kind == "unstable":
        # image of the leaf one step back, compared on the half window
        j = depth - 1
        img = orbit.step(j, np.hstack([prev, mesh]) @ Q.T) @ Q
        keep = np.all(np.abs(img[:, l:]) <= R / 2, axis=1)
        err = img[keep, :l] - _interp(axes, vals)(img[keep, l:])
    else:
        img = orbit.step(0, np.hstack([mesh, vals]) @ Q.T) @ Q
        keep = np.all(np.abs(img[:, :l]) <= R / 2, axis=1)
        err = img[keep, l:] - _interp(axes, nxt)(img[keep, :l])
    residual = float(np.max(np.linalg.norm(err, axis=1))) if err.size else 0.0

    return LeafSegment(
        kind=kind,
        base=b,
        anchor=anchor,
        frame=Q,
        stable_dim=l,
        radius=float(R),
        axes=axes,
        values=vals,
        depth=depth,
        invariance_residual=residual,
        max_slope=slope,
        gamma=cert.gamma,
    )


@dataclass(frozen=True)
class IntersectionReport:
    multiplicity: int
    resolved: bool
    points: tuple
    angles: tuple
    on_leaf_residual: float
    separation: float | None
    status: str

    def to_dict(self) -> dict:
        return {
            "multiplicity": self.multiplicity,
            "resolved": self.resolved,
            "points": [list(p) for p in self.points],
            "crossing_angles": list(self.angles),
            "on_leaf_residual": self.on_leaf_residual,
            "separation": self.separation,
            "status": self.status,
        }


def _tangent(leaf: LeafSegment, param: np.ndarray) -> np.ndarray:
    """Columns spanning the tangent of the interpolated graph at ``param``."""
    h = leaf.spacing / 2
    m = leaf.leaf_dim
    cols = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        dv = (leaf.graph(param + e) - leaf.graph(param - e))[0] / (2 * h)
        cols.append(leaf.coords(e[None, :] / h, dv[None, :])[0])
    return leaf.frame @ np.array(cols).T


def find_intersections(
    Ws: LeafSegment,
    Wu: LeafSegment,
    starts: int = 9,
    tol: float = 1e-8,
    damping: float = 0.7,
    max_iter: int = 2000,
) -> IntersectionReport:
    """Intersections of a stable and an unstable leaf in one fibre cover.

    Solves ``a = Da + phi_u(psi_s(a) - Dc)`` by damped fixed-point iteration
    from a mesh of starting points and clusters the limits at ``tol``.
    """
    if Ws.kind != "stable" or Wu.kind != "unstable":
        raise ValueError("need one stable and one unstable leaf")
    if float(np.max(np.abs(wrap_centered(Ws.base - Wu.base)))) > 1e-12:
        raise ValueError("leaves lie over different base points")
    if not np.array_equal(Ws.frame, Wu.frame):
        raise ValueError("leaves use different frames")
    l = Ws.stable_dim
    delta = (Wu.anchor - Ws.anchor) @ Ws.frame
    da, dc = delta[:l], delta[l:]

    axes = _mesh_axes(Ws.radius, starts, l)
    a = _mesh_points(axes)
    for _ in range(max_iter):
        target = da + Wu.graph(Ws.graph(a) - dc)
        step = target - a
        a = a + damping * step
        if np.max(np.abs(step)) < 1e-14 * (1.0 + np.max(np.abs(a))):
            break
    fixed = np.linalg.norm(a - da - Wu.graph(Ws.graph(a) - dc), axis=1)
    converged = fixed <= 10 * tol
    inside = np.all(np.abs(a) <= Ws.radius, axis=1) & np.all(np.abs(Ws.graph(a) - dc) <= Wu.radius, axis=1)
    roots = a[converged & inside]

    clusters: list[np.ndarray] = []
    for r in roots:
        if not any(np.linalg.norm(r - c) <= tol for c in clusters):
            clusters.append(r)

    if not clusters:
        return IntersectionReport(0, False, (), (), float("nan"), None, "inconclusive")

    pts, angles, resid = [], [], 0.0
    for r in clusters:
        r2 = r[None, :]
        p = Ws.lift_points(r2)
        pts.append(tuple(float(v) for v in p[0]))
        resid = max(resid, float(Ws.distance_to(p)[0]), float(Wu.distance_to(p)[0]))
        ts = _tangent(Ws, r2)
        tu = _tangent(Wu, Wu.split_coords(p)[0])
        angles.append(float(np.min(scipy.linalg.subspace_angles(ts, tu))))
    sep = None
    if len(clusters) > 1:
        arr = np.array(pts)
        sep = float(min(np.linalg.norm(arr[i] - arr[j]) for i in range(len(arr)) for j in range(i)))
    return IntersectionReport(
        multiplicity=len(clusters),
        resolved=True,
        points=tuple(pts),
        angles=tuple(angles),
        on_leaf_residual=resid,
        separation=sep,
        status="unique" if len(clusters) == 1 else "multiple",
    )


def _clip_segment(p, q, lo, hi) -> tuple[float, float] | None:
    """Parameter interval of the segment p + t (q - p) inside the box (Liang-Barsky)."""
    t0, t1 = 0.0, 1.0
    d = q - p
    for i in range(len(p)):
        if d[i] == 0.0:
            if p[i] < lo[i] or p[i] > hi[i]:
                return None
            continue
        ta, tb = (lo[i] - p[i]) / d[i], (hi[i] - p[i]) / d[i]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def _curve_length_in_box(points: np.ndarray, lo, hi) -> float:
    """Arc length between the first and last points of a polyline inside the box."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    first = last = None
    for i in range(len(points) - 1):
        iv = _clip_segment(points[i], points[i + 1], lo, hi)
        if iv is None:
            continue
        if first is None:
            first = (i, iv[0])
        last = (i, iv[1])
    if first is None:
        return 0.0
    (i0, t0), (i1, t1) = first, last
    if i0 == i1:
        return float(seg[i0] * (t1 - t0))
    return float(seg[i0] * (1 - t0) + seg[i0 + 1 : i1].sum() + seg[i1] * t1)


def leaf_distance_bound(leaves, box) -> float:
    """Largest leafwise distance between two leaf points inside ``box``.

    ``box`` is ``(lo, hi)`` in lift coordinates.  One-dimensional leaves
    use exact polyline clipping; for surfaces the bound is the graph
    estimate ``sqrt(1 + slope^2)`` times the parameter diameter.
    """
    lo, hi = (np.asarray(v, dtype=float) for v in box)
    best = 0.0
    for leaf in leaves:
        pts = leaf.lift_points()
        if leaf.leaf_dim == 1:
            best = max(best, _curve_length_in_box(pts, lo, hi))
            continue
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        if inside.sum() < 2:
            continue
        par = _mesh_points(leaf.axes)[inside]
        span = np.linalg.norm(par.max(axis=0) - par.min(axis=0))
        best = max(best, float(np.sqrt(1.0 + leaf.max_slope**2) * span))
    return best


def product_structure_scan(
    F: FibrewiseSystem,
    cert: ConeCertificate,
    fibres: int = 20,
    pairs: int = 20,
    seed: int = 0,
    R: float = 2.0,
    depth: int = 12,
    density: int = 100,
    offset: float = 0.5,
    base_shift: float = 0.0,
) -> dict:
    """Intersect stable and unstable leaves through random nearby anchors.

    ``base_shift`` moves every sampled fibre by that amount in each base
    coordinate, which probes persistence of uniqueness over nearby fibres.
    """
    rng = np.random.default_rng(seed)
    counts = {"unique": 0, "multiple": 0, "inconclusive": 0}
    angles, residual = [], 0.0
    for _ in range(fibres):
        b = wrap(rng.random(F.k) + base_shift)
        for _ in range(pairs):
            x = rng.random(F.d)
            y = x + rng.uniform(-offset, offset, F.d)
            Ws = compute_leaf(F, cert, b, x, "stable", R, depth, density)
            Wu = compute_leaf(F, cert, b, y, "unstable", R, depth, density)
            rep = find_intersections(Ws, Wu)
            counts[rep.status] += 1
            if rep.resolved:
                angles.extend(rep.angles)
                residual = max(residual, rep.on_leaf_residual)
    total = fibres * pairs
    resolved = counts["unique"] + counts["multiple"]
    return {
        "fibres": fibres,
        "pairs_per_fibre": pairs,
        "total": total,
        "resolved": resolved,
        "resolved_fraction": resolved / total,
        "unique": counts["unique"],
        "multiple": counts["multiple"],
        "inconclusive": counts["inconclusive"],
        "all_resolved_unique": counts["multiple"] == 0 and resolved > 0,
        "min_crossing_angle": float(min(angles)) if angles else None,
        "max_on_leaf_residual": residual,
    }
