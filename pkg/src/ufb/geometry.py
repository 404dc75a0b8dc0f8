"""Free-boundary extraction, Hausdorff distances and rank-2 flatness."""
from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .grid import GridField
from .operators import InvalidInputError, sym_eigvals


@dataclass
class PointSet:
    points: np.ndarray
    provenance: str = "synthetic"
    spacing: float | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[None] if p.size else p.reshape(0, 2)
        self.points = p

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def within(self, x0, r) -> "PointSet":
        d = np.linalg.norm(self.points - np.asarray(x0, float), axis=1)
        return PointSet(self.points[d <= r], self.provenance, self.spacing, dict(self.flags))

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "spacing": self.spacing,
                "points": self.points.tolist(), **({"flags": self.flags} if self.flags else {})}


def _dedup(points: np.ndarray, radius: float) -> np.ndarray:
    if len(points) == 0:
        return points
    order = np.lexsort(points.T[::-1])
    points = points[order]
    tree = cKDTree(points)
    keep = np.ones(len(points), dtype=bool)
    for i, j in sorted(tree.query_pairs(radius)):
        if keep[i] and keep[j]:
            keep[j] = False
    return points[keep]


def extract_free_boundary(field: GridField) -> PointSet:
    """Linear-interpolation crossings of grid edges that leave {u > 0}.

    Only edges between two interior (non-Dirichlet) nodes count: where the
    positivity set meets the prescribed boundary there is no free boundary.
    """
    u = field.values
    free = field.grid.interior_mask()
    axes = field.grid.axes()
    h = min(field.grid.spacing)
    out = []
    for a in range(field.grid.dim):
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        ua, ub = u[tuple(lo)], u[tuple(hi)]
        cross = ((ua > 0) != (ub > 0)) & free[tuple(lo)] & free[tuple(hi)]
        if not cross.any():
            continue
        idx = np.nonzero(cross)
        va, vb = ua[idx], ub[idx]
        s = va / (va - vb)
        pts = np.stack([axes[k][idx[k]] for k in range(u.ndim)], axis=1)
        pts[:, a] += s * field.grid.spacing[a]
        out.append(pts)
    pts = np.concatenate(out) if out else np.zeros((0, field.grid.dim))
    return PointSet(_dedup(pts, h / 4), "free-boundary", h)


def _interpolator(field: GridField, values=None):
    return RegularGridInterpolator(field.grid.axes(), field.values if values is None else values,
                                   method="linear", bounds_error=True)


def gradient(field: GridField, point) -> np.ndarray:
    """Central-difference gradient, multilinearly interpolated to ``point``.

    Accepts one point or an (m, n) array of points.
    """
    P = np.asarray(point, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    lo, hi = np.asarray(field.grid.lo), np.asarray(field.grid.hi)
    if np.any(P < lo - 1e-12) or np.any(P > hi + 1e-12):
        raise ValueError("point outside the grid domain")
    P = np.clip(P, lo, hi)
    comps = np.gradient(field.values, *field.grid.spacing, edge_order=2)
    if field.grid.dim == 1:
        comps = [comps]
    G = np.stack([_interpolator(field, c)(P) for c in comps], axis=1)
    return G[0] if single else G


def interpolate(field: GridField, points) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, float))
    return _interpolator(field)(P)


def _positive_side_gradient(field: GridField, P: np.ndarray) -> np.ndarray:
    """|grad u| at the nearest node with u > 0 (within one spacing) of each point.

    Where u is clipped to zero outside its positivity set, crossings land on
    zero nodes and the interpolated gradient is spuriously small; the positive
    endpoint of the crossing edge still sees the true slope.
    """
    g = field.grid
    norm = np.linalg.norm(np.stack(np.gradient(field.values, *g.spacing, edge_order=2), -1), axis=-1)
    step = np.asarray(g.spacing)
    base = np.rint((P - np.asarray(g.lo)) / step).astype(int)
    best_d = np.full(len(P), np.inf)
    out = np.zeros(len(P))
    for off in itertools.product((-1, 0, 1), repeat=g.dim):
        idx = np.clip(base + np.asarray(off), 0, np.asarray(g.counts) - 1)
        node = tuple(idx.T)
        d = np.linalg.norm(np.asarray(g.lo) + idx * step - P, axis=1)
        take = (field.values[node] > 0) & (d <= step.max() * (1 + 1e-9)) & (d < best_d)
        best_d = np.where(take, d, best_d)
        out = np.where(take, norm[node], out)
    return out


def singular_points(field: GridField, tol_u: float | None = None, tol_g: float | None = None) -> PointSet:
    """Free-boundary points with |u| <= tol_u and |grad u| <= tol_g, merged within 3h."""
    h = max(field.grid.spacing)
    tol_u = 5 * h * h if tol_u is None else tol_u
    tol_g = 5 * h if tol_g is None else tol_g
    if tol_u <= 0 or tol_g <= 0:
        raise InvalidInputError("tolerances must be positive")
    fb = extract_free_boundary(field)
    if len(fb) == 0:
        return PointSet(np.zeros((0, field.grid.dim)), "free-boundary", h)
    uval = np.abs(interpolate(field, fb.points))
    gnorm = np.maximum(np.linalg.norm(gradient(field, fb.points), axis=1),
                       _positive_side_gradient(field, fb.points))
    sel = (uval <= tol_u) & (gnorm <= tol_g)
    cand, cg = fb.points[sel], gnorm[sel]
    if len(cand) == 0:
        return PointSet(cand, "free-boundary", h)
    pairs = np.array(sorted(cKDTree(cand).query_pairs(3 * h)), dtype=int).reshape(-1, 2)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(cand),) * 2)
    ncomp, labels = connected_components(graph, directed=False)
    reps = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        reps.append(members[np.argmin(cg[members])])
    pts = cand[reps]
    pts = pts[np.lexsort(pts.T[::-1])]
    return PointSet(pts, "free-boundary", h, {"tol_u": tol_u, "tol_g": tol_g})


def hausdorff(A, B) -> float:
    """Exact Hausdorff distance between two finite point sets."""
    A = A.points if isinstance(A, PointSet) else np.atleast_2d(np.asarray(A, float))
    B = B.points if isinstance(B, PointSet) else np.atleast_2d(np.asarray(B, float))
    if A.size == 0 or B.size == 0:
        raise InvalidInputError("Hausdorff distance of an empty set")
    dab = cKDTree(B).query(A)[0].max()
    dba = cKDTree(A).query(B)[0].max()
    return float(max(dab, dba))


# quadratic forms and their cones ------------------------------------------------------

def _sign_canonical(A: np.ndarray) -> np.ndarray:
    """A or -A, chosen so that p and -p (same zero set) give bit-identical results."""
    flat = np.concatenate([[np.trace(A)], A.ravel()])
    lead = flat[np.flatnonzero(flat)[:1]]
    return -A if lead.size and lead[0] < 0 else A


@dataclass
class QuadraticForm:
    """p(x) = (x - x0)^T A (x - x0), normalized so that max |eig A| = 1."""

    A: np.ndarray
    center: np.ndarray = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        A = 0.5 * (A + A.T)
        scale = np.abs(sym_eigvals(_sign_canonical(A))).max()
        if scale == 0:
            raise InvalidInputError("the zero form cannot be normalized")
        self.A = A / scale
        self.center = np.zeros(A.shape[0]) if self.center is None else np.asarray(self.center, float)

    @classmethod
    def from_angles(cls, theta1: float, theta2: float, center=None) -> "QuadraticForm":
        """Planar form vanishing exactly on the lines through the center at the two angles."""
        n1 = np.array([-math.sin(theta1), math.cos(theta1)])
        n2 = np.array([-math.sin(theta2), math.cos(theta2)])
        return cls(0.5 * (np.outer(n1, n2) + np.outer(n2, n1)), center)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __call__(self, X) -> np.ndarray:
        Y = np.atleast_2d(X) - self.center
        return np.einsum("ki,ij,kj->k", Y, self.A, Y)

    def eigenvalues(self) -> np.ndarray:
        return sym_eigvals(self.A)

    def line_angles(self) -> list:
        """Angles in [0, pi) of the zero lines (n = 2); empty for definite forms."""
        if self.dim != 2:
            raise InvalidInputError("line angles are defined for planar forms only")
        w, Q = np.linalg.eigh(_sign_canonical(self.A))
        tol = 1e-12
        if w[0] * w[1] > tol:
            return []
        if abs(w[0]) <= tol or abs(w[1]) <= tol:
            v = Q[:, 0] if abs(w[0]) <= tol else Q[:, 1]
            return [math.atan2(v[1], v[0]) % math.pi]
        s = math.sqrt(-w[0] / w[1])
        angles = []
        for sign in (1, -1):
            d = Q[:, 0] + sign * s * Q[:, 1]
            angles.append(math.atan2(d[1], d[0]) % math.pi)
        return sorted(angles)

    def negated(self) -> "QuadraticForm":
        out = copy.copy(self)
        out.A = -self.A  # already normalized; exact negation
        return out

    def to_dict(self) -> dict:
        d = {"A": self.A.tolist(), "center": self.center.tolist(),
             "eigenvalues": self.eigenvalues().tolist()}
        if self.dim == 2:
            d["angles"] = self.line_angles()
        return d


def _fibonacci_sphere(count: int) -> np.ndarray:
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    phi = math.pi * (1 + 5 ** 0.5) * k
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _cone_directions_3d(A: np.ndarray, count: int) -> np.ndarray:
    D = _fibonacci_sphere(count)
    q = np.einsum("ki,ij,kj->k", D, A, D)
    _, nbrs = cKDTree(D).query(D, k=7)
    I = np.repeat(np.arange(count), 6)
    J = nbrs[:, 1:].ravel()
    keep = (J > I) & (q[I] * q[J] <= 0) & (q[I] != q[J])
    a, b = D[I[keep]], D[J[keep]]
    qa = q[I[keep]]
    # bisection on the great-circle arc between each sign-changing pair
    for _ in range(50):
        m = a + b
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        qm = np.einsum("ki,ij,kj->k", m, A, m)
        left = qa * qm <= 0
        b = np.where(left[:, None], m, b)
        a = np.where(left[:, None], a, m)
        qa = np.where(left, qa, qm)
    mid = a + b
    found = mid / np.linalg.norm(mid, axis=1, keepdims=True)
    zeros = D[q == 0]
    return np.concatenate([found, zeros]).reshape(-1, 3)


def sample_cone(p: QuadraticForm, x0=None, r: float = 1.0, count: int = 256) -> PointSet:
    """Points of {p_x0 = 0} inside the closed ball B_r(x0).

    Planar cones are unions of at most two lines, sampled with ``count``
    points each.  In 3D, zero directions are located by bisection on sign
    changes between neighbouring Fibonacci-sphere directions, and each ray is
    sampled radially.
    """
    x0 = p.center if x0 is None else np.asarray(x0, float)
    n = p.dim
    if n == 2:
        angles = p.line_angles()
        if not angles:
            return PointSet(x0[None], "cone-sample", flags={"degenerate": True, "pitch": 0.0})
        s = np.linspace(-r, r, count)
        pts = [x0 + s[:, None] * np.array([math.cos(t), math.sin(t)]) for t in angles]
        return PointSet(np.concatenate(pts), "cone-sample",
                        flags={"degenerate": False, "pitch": 2 * r / (count - 1), "lines": len(angles)})
    dirs = _cone_directions_3d(p.A, max(count, 512))
    if len(dirs) == 0:
        return PointSet(x0[None], "cone-sample", flags={"degenerate": True, "pitch": 0.0})
    m = max(8, count // 16)
    t = np.linspace(0, r, m)
    pts = (x0 + t[None, :, None] * dirs[:, None, :]).reshape(-1, 3)
    # repeated rays from neighbouring bracket pairs do not change Hausdorff distances
    return PointSet(pts, "cone-sample",
                    flags={"degenerate": False, "pitch": r / (m - 1), "rays": len(dirs)})


def _cone_count(r: float, h: float) -> int:
    return int(max(256, math.ceil(8 * r / h)))


def _fb_points(fb, x0, r):
    if isinstance(fb, GridField):
        fb = extract_free_boundary(fb)
    h = fb.spacing
    sub = fb.within(x0, r)
    return sub.points, h


def h_min(fb, r: float, x0, p: QuadraticForm) -> float:
    """Hausdorff distance between FB and the cone of p, both inside B_r(x0).

    ``fb`` is a GridField or a precomputed free-boundary PointSet.  Returns
    inf when the free boundary misses the ball.
    """
    pts, h = _fb_points(fb, x0, r)
    if len(pts) == 0:
        return math.inf
    h = h or r / 64
    cone = sample_cone(QuadraticForm(p.A, np.asarray(x0, float)), x0, r, _cone_count(r, h))
    return hausdorff(pts, cone.points)


@dataclass
class FlatnessResult:
    h: float
    form: QuadraticForm | None
    r: float
    x0: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def is_flat(self, delta: float) -> bool:
        return self.h < delta * self.r

    def to_dict(self) -> dict:
        return {"h": self.h, "r": self.r, "x0": np.asarray(self.x0).tolist(),
                "form": None if self.form is None else self.form.to_dict(), **self.diagnostics}


class _PlanarObjective:
    """h_min as a function of the two zero-line angles, with the point-to-line
    half computed exactly and the line-to-FB half from dense line samples."""

    def __init__(self, pts, x0, r, count):
        self.x0, self.r, self.count = np.asarray(x0, float), r, count
        rel = pts - self.x0
        self.rho = np.linalg.norm(rel, axis=1)
        self.phi = np.arctan2(rel[:, 1], rel[:, 0])
        self.tree = cKDTree(pts)
        self.s = np.linspace(-r, r, count)

    def point_to_line(self, thetas):
        return self.rho[:, None] * np.abs(np.sin(self.phi[:, None] - np.asarray(thetas)[None, :]))

    def line_to_points(self, thetas):
        thetas = np.atleast_1d(thetas)
        d = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
        P = self.x0 + self.s[None, :, None] * d[:, None, :]
        dist, _ = self.tree.query(P.reshape(-1, 2))
        return dist.reshape(len(thetas), -1).max(axis=1)

    def __call__(self, t1, t2):
        D = self.point_to_line([t1, t2])
        E = self.line_to_points([t1, t2])
        return float(max(D.min(axis=1).max(), E.max()))


def _flatness_2d(pts, x0, r, h, pitch_deg=0.25, refine_steps=40):
    count = _cone_count(r, h)
    obj = _PlanarObjective(pts, x0, r, count)
    K = int(round(180 / pitch_deg))
    thetas = np.arange(K) * math.pi / K
    D = obj.point_to_line(thetas)          # (N_points, K)
    E = obj.line_to_points(thetas)          # (K,)
    # pairs (i, j) with j >= i; j == i is the rank-one (double line) stratum
    H = np.full((K, K), np.inf)
    S = np.full((K, K), np.inf)
    for i in range(K):
        m = np.minimum(D[:, i:i + 1], D[:, i:])
        H[i, i:] = np.maximum(m.max(axis=0), np.maximum(E[i], E[i:]))
        S[i, i:] = np.sqrt((m ** 2).mean(axis=0))
    bi, bj = np.unravel_index(np.argmin(H), H.shape)
    grid_h = float(H[bi, bj])
    res = minimize(lambda t: obj(t[0], t[1]), np.array([thetas[bi], thetas[bj]]), method="Nelder-Mead",
                   options={"maxiter": refine_steps, "xatol": 1e-7, "fatol": 1e-12,
                            "initial_simplex": _simplex(thetas[bi], thetas[bj], math.pi / K)})
    h_val = min(grid_h, float(res.fun))

    # the discrete minimizer is a plateau of width ~ point spacing; among the
    # near-minimizers pick the best least-squares fit of the points
    tie = 0.5 * h
    ci, cj = np.unravel_index(np.argmin(np.where(H <= h_val + tie, S, np.inf)), S.shape)

    def fit(t):
        hm = obj(t[0], t[1])
        rms = np.sqrt((obj.point_to_line(t).min(axis=1) ** 2).mean())
        return rms + 10.0 * max(0.0, hm - h_val - tie)

    res2 = minimize(fit, np.array([thetas[ci], thetas[cj]]), method="Nelder-Mead",
                    options={"maxiter": refine_steps, "xatol": 1e-9, "fatol": 1e-15,
                             "initial_simplex": _simplex(thetas[ci], thetas[cj], math.pi / K)})
    angles = (float(res2.x[0]), float(res2.x[1]))
    form_h = obj(*angles)
    if form_h > h_val + tie:
        angles, form_h = (thetas[ci], thetas[cj]), float(H[ci, cj])
    point_h = float(obj.rho.max()) if len(obj.rho) else 0.0
    degenerate = point_h < h_val
    if degenerate:
        form, h_val, form_h = QuadraticForm(np.eye(2), x0), point_h, point_h
    else:
        form = QuadraticForm.from_angles(angles[0], angles[1], x0)
    return h_val, form, {
        "grid_h": grid_h, "grid_pitch_rad": math.pi / K, "refined": bool(res.fun < grid_h),
        "form_h_min": form_h, "tie_tolerance": tie,
        "angles": sorted(a % math.pi for a in angles), "degenerate_minimizer": degenerate,
        "rank_one": bool(abs(angles[0] - angles[1]) % math.pi < 1e-9),
        "cone_points_per_line": count, "sampling_pitch": 2 * r / (count - 1), "fb_points": int(len(pts)),
    }


def _simplex(t1, t2, step):
    return np.array([[t1, t2], [t1 + step, t2], [t1, t2 + step]])


def _flatness_3d(pts, x0, r, h, refine_steps=200):
    count = _cone_count(r, h)
    rel = pts - x0
    rho = np.linalg.norm(rel, axis=1)
    y = rel[rho > 1e-12] / rho[rho > 1e-12, None]
    iu = np.triu_indices(3)
    w = np.where(iu[0] == iu[1], 1.0, 2.0)
    V = y[:, iu[0]] * y[:, iu[1]] * w
    _, _, vt = np.linalg.svd(V, full_matrices=False)

    def to_form(c):
        A = np.zeros((3, 3))
        A[iu] = c
        A = A + A.T - np.diag(np.diag(A))
        return QuadraticForm(A, x0)

    def obj(c):
        try:
            return h_min(PointSet(pts, spacing=h), r, x0, to_form(c))
        except InvalidInputError:
            return math.inf

    starts = [vt[-1]] + [vt[k] for k in range(min(3, len(vt) - 1))]
    best_val, best_c = math.inf, None
    for c0 in starts:
        res = minimize(obj, c0, method="Nelder-Mead",
                       options={"maxiter": refine_steps, "xatol": 1e-4, "fatol": h / 20})
        if res.fun < best_val:
            best_val, best_c = float(res.fun), res.x
    point_h = float(rho.max())
    degenerate = point_h < best_val
    form = QuadraticForm(np.eye(3), x0) if degenerate else to_form(best_c)
    return min(best_val, point_h), form, {"degenerate_minimizer": degenerate, "cone_count": count,
                                          "fb_points": int(len(pts))}


def flatness(fb, r: float, x0) -> FlatnessResult:
    """h(r, x0) = inf over normalized quadratics of h_min(r, x0, p).

    In the plane the infimum runs over all pairs of zero lines (grid of pitch
    pi/720 followed by a 40-step simplex refinement), the double lines and the
    definite forms.  In 3D it is a multistart simplex search seeded by a
    least-squares cone fit, so the result is an upper bound only.
    """
    x0 = np.asarray(x0, float)
    pts, h = _fb_points(fb, x0, r)
    if len(pts) == 0:
        return FlatnessResult(math.inf, None, r, x0, {"empty": True})
    h = h or r / 64
    if len(x0) == 2:
        val, form, diag = _flatness_2d(pts, x0, r, h)
    else:
        val, form, diag = _flatness_3d(pts, x0, r, h)
    return FlatnessResult(val, form, r, x0, diag)


def cone_slope(form: QuadraticForm, field: GridField | None = None, probe: float | None = None) -> dict:
    """Slope M of the line pair x2 = +-M x1, in the frame whose e2 axis bisects
    the sector where ``field`` is positive (or where p < 0 without a field)."""
    angles = form.line_angles()
    if len(angles) != 2:
        return {"slope": None, "axis_angle": None}
    t1, t2 = angles
    x0 = form.center
    candidates = [(t1 + t2) / 2, (t1 + t2) / 2 + math.pi / 2]
    rho = probe if probe is not None else (0.25 if field is None else 8 * max(field.grid.spacing))

    def sign_at(beta):
        pts = x0 + rho * np.array([[math.cos(beta), math.sin(beta)], [-math.cos(beta), -math.sin(beta)]])
        if field is None:
            return -form(pts).sum()
        return interpolate(field, pts).sum()

    axis = max(candidates, key=sign_at)
    half = abs(((t1 - axis + math.pi / 2) % math.pi) - math.pi / 2)
    slope = 1.0 / math.tan(half) if half > 0 else math.inf
    return {"slope": slope, "axis_angle": axis % math.pi, "half_aperture": half}
