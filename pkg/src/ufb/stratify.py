"""Dyadic growth profiles, the flatness/quadratic-growth dichotomy, the
directional monotonicity probe and quadruple-junction arcs."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
import math
from dataclasses import dataclass, field

import numpy as np

from .barriers import nondegeneracy_constant, nondegeneracy_gamma
from .geometry import (PointSet, QuadraticForm, cone_slope, extract_free_boundary, flatness, gradient,
                       interpolate, singular_points)
from .grid import GridField
from .operators import InvalidInputError
from .solver import discretize_hessian

CLASSES = ("regular", "quadratic-growth", "rank-2-flat", "degenerate", "inconclusive")


class StructureError(RuntimeError):
    def __init__(self, message, counts=None):
        super().__init__(message)
        self.counts = counts or {}


class DomainError(ValueError):
    pass


# growth profiles ---------------------------------------------------------------------------

def _check_inside(field: GridField, x0, r):
    lo, hi = np.asarray(field.grid.lo), np.asarray(field.grid.hi)
    if np.any(x0 - r < lo - 1e-12) or np.any(x0 + r > hi + 1e-12):
        raise DomainError(f"ball B_{r}({x0.tolist()}) leaves the grid domain")


def ball_sup(field: GridField, x0, r: float) -> float:
    """sup over B_r(x0) of |u|: node maximum refined by the local quadratic model."""
    grid, u = field.grid, field.values
    x0 = np.asarray(x0, float)
    X = grid.coords()
    inball = ((X - x0) ** 2).sum(-1) <= r * r * (1 + 1e-12)
    if not inball.any():
        return 0.0
    au = np.where(inball, np.abs(u), -np.inf)
    node = np.unravel_index(np.argmax(au), u.shape)
    best = float(au[node])
    if best == 0.0 or any(i < 1 or i > c - 2 for i, c in zip(node, grid.counts)):
        return best
    h = np.asarray(grid.spacing)
    H = discretize_hessian(field, node)
    g = np.array([(u[tuple(np.add(node, e))] - u[tuple(np.subtract(node, e))]) / (2 * h[k])
                  for k, e in enumerate(np.eye(grid.dim, dtype=int))])
    xn = X[node]
    s = np.linspace(-1, 1, 21)
    D = np.stack(np.meshgrid(*([s] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim) * h
    P = xn + D
    keep = ((P - x0) ** 2).sum(-1) <= r * r * (1 + 1e-12)
    D = D[keep]
    model = u[node] + D @ g + 0.5 * np.einsum("ki,ij,kj->k", D, H, D)
    return max(best, float(np.abs(model).max()))


@dataclass
class GrowthProfile:
    x0: np.ndarray
    ks: np.ndarray
    radii: np.ndarray
    M: np.ndarray
    h: np.ndarray
    flatness: list = field(default_factory=list, repr=False)

    def rows(self) -> list:
        return [(int(k), float(r), float(m), float(hh)) for k, r, m, hh in zip(self.ks, self.radii, self.M, self.h)]

    def to_dict(self) -> dict:
        return {"x0": self.x0.tolist(), "k": self.ks.tolist(), "r": self.radii.tolist(),
                "M": self.M.tolist(), "h": [None if not np.isfinite(v) else float(v) for v in self.h]}


def growth_profile(field: GridField, x0, k_min: int = 1, k_max: int = 5, with_flatness: bool = True,
                   fb: PointSet | None = None) -> GrowthProfile:
    """M(r_k, x0) = sup_{B_{r_k}(x0)} |u| for r_k = 2^-k, with h(r_k, x0) attached."""
    x0 = np.asarray(x0, float)
    if k_max < k_min:
        raise InvalidInputError("k_max < k_min")
    _check_inside(field, x0, 2.0 ** -k_min)
    ks = np.arange(k_min, k_max + 1)
    radii = 2.0 ** -ks
    M = np.array([ball_sup(field, x0, r) for r in radii])
    # nested balls: enforce monotonicity against refinement noise
    M = np.minimum.accumulate(M)
    hs = np.full(len(ks), np.nan)
    flats = []
    if with_flatness:
        fb = extract_free_boundary(field) if fb is None else fb
        for i, r in enumerate(radii):
            res = flatness(fb, r, x0)
            flats.append(res)
            hs[i] = res.h if np.isfinite(res.h) else np.nan
    return GrowthProfile(x0, ks, radii, M, hs, flats)


@dataclass
class DichotomyResult:
    levels: list
    checked: list
    passed: list
    fitted_C: float
    required_C: list

    @property
    def all_passed(self) -> bool:
        return all(p for p, c in zip(self.passed, self.checked) if c)

    def to_dict(self) -> dict:
        return {"levels": self.levels, "checked": self.checked, "passed": self.passed,
                "fitted_C": self.fitted_C, "required_C": self.required_C}


def dichotomy_check(profile: GrowthProfile, delta: float, C: float) -> DichotomyResult:
    """Check M(r_{k+1}) <= max(C r_k^2, M(r_k)/4, ..., M(r_first)/4^(k-first+1))
    at every level whose flatness exceeds delta * r_k."""
    if delta <= 0 or C <= 0:
        raise InvalidInputError("delta and C must be positive")
    M, r = profile.M, profile.radii
    levels, checked, passed, need = [], [], [], []
    for i in range(len(M) - 1):
        k = int(profile.ks[i])
        hk = profile.h[i]
        is_checked = bool(np.isfinite(hk) and hk > delta * r[i])
        history = max(M[i - m] / 4.0 ** (m + 1) for m in range(i + 1))
        target = M[i + 1]
        slack = 1e-12 * max(target, 1e-300)
        req = 0.0 if target <= history + slack else target / r[i] ** 2
        levels.append(k)
        checked.append(is_checked)
        need.append(req)
        passed.append(bool(target <= max(C * r[i] ** 2, history) + slack) if is_checked else True)
    fitted = max([q for q, c in zip(need, checked) if c], default=0.0)
    return DichotomyResult(levels, checked, passed, fitted, need)


# classification ------------------------------------------------------------------------------

@dataclass
class PointClassification:
    x0: np.ndarray
    cls: str
    profile: GrowthProfile | None = None
    dichotomy: DichotomyResult | None = None
    witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"coords": self.x0.tolist(), "class": self.cls, **self.witness}
        if self.profile is not None:
            d["profile"] = self.profile.to_dict()
            d["flatness_curve"] = [None if not np.isfinite(v) else float(v) for v in self.profile.h]
        if self.dichotomy is not None:
            d["fitted_C"] = self.dichotomy.fitted_C
            d["dichotomy"] = self.dichotomy.to_dict()
        return d


DEFAULT_PARAMS = {
    "k_min": 2, "k_max": None, "tol_u": None, "tol_g": None, "C_max": 1e3,
    "degeneracy_ratio": 0.01, "lambda": 1.0, "Lambda": 1.0, "junctions": True,
}


def default_k_max(field: GridField, k_min: int, cap: int = 5) -> int:
    """Finest dyadic level still resolved by the grid: r_k >= 16 h.

    The discrete flatness has a floor near h/2, so delta * r_k must stay above
    it for flat points to register as flat.
    """
    h = max(field.grid.spacing)
    return max(k_min, min(cap, int(math.floor(math.log2(1.0 / (16 * h)) + 1e-9))))


def classify_point(field: GridField, x0, delta: float = 0.05, params: dict | None = None,
                   fb: PointSet | None = None) -> PointClassification:
    p = {**DEFAULT_PARAMS, **(params or {})}
    h = max(field.grid.spacing)
    tol_g = 5 * h if p["tol_g"] is None else p["tol_g"]
    x0 = np.asarray(x0, float)
    gnorm = float(np.linalg.norm(gradient(field, x0)))
    if gnorm > tol_g:
        return PointClassification(x0, "regular", witness={"grad_norm": gnorm})
    k_max = p["k_max"] if p["k_max"] is not None else default_k_max(field, p["k_min"])
    prof = growth_profile(field, x0, p["k_min"], k_max, fb=fb)
    n = field.grid.dim
    gamma = nondegeneracy_gamma(n, p["lambda"], p["Lambda"])
    c = nondegeneracy_constant(gamma)
    witness = {"grad_norm": gnorm, "ell0": math.sqrt(p["Lambda"] / p["lambda"]), "c_nondeg": c}

    # non-degeneracy proxy: the barrier threshold c r^2 against the ball sup
    witness["nondegenerate_proxy"] = bool(np.all(prof.M >= c * prof.radii ** 2))
    u0 = float(interpolate(field, x0)[0])
    inf_ok = []
    for r in prof.radii:
        lo = _ball_inf(field, x0, r)
        inf_ok.append(not (lo > -c * r * r and u0 <= 0))
    witness["nondegeneracy_consistent"] = bool(all(inf_ok))
    witness["nondegeneracy_decision_is_proxy"] = True

    scaled = prof.M / prof.radii ** 2
    top = scaled[-3:]
    if scaled.max() == 0 or np.all(top < p["degeneracy_ratio"] * scaled.max()):
        return PointClassification(x0, "degenerate", prof, None, witness)
    flat = np.isfinite(prof.h) & (prof.h < delta * prof.radii)
    if flat.all():
        pc = PointClassification(x0, "rank-2-flat", prof, None, witness)
        if n == 2 and p["junctions"]:
            try:
                pc.witness["junction"] = junction_arcs(field, x0, list(prof.radii[-3:]), fb=fb).to_dict()
            except (StructureError, DomainError) as exc:
                pc.witness["junction_error"] = {"message": str(exc), "counts": getattr(exc, "counts", {})}
        return pc
    dich = dichotomy_check(prof, delta, max(p["C_max"], 1e-300))
    if dich.all_passed and dich.fitted_C <= p["C_max"]:
        return PointClassification(x0, "quadratic-growth", prof, dich, witness)
    return PointClassification(x0, "inconclusive", prof, dich, witness)


def _ball_inf(field, x0, r):
    X = field.grid.coords()
    inball = ((X - x0) ** 2).sum(-1) <= r * r
    return float(field.values[inball].min()) if inball.any() else 0.0


def classify_singular_points(field: GridField, delta: float = 0.05, params: dict | None = None,
                             points=None, workers: int = 1) -> list:
    """Classify the singular free-boundary candidates (or the given points).

    Points are independent; ``workers`` > 1 classifies them on a thread pool.
    Output is sorted by coordinates either way.
    """
    if not 0 < delta < 1:
        raise InvalidInputError("delta must lie in (0, 1)")
    p = {**DEFAULT_PARAMS, **(params or {})}
    if points is None:
        points = singular_points(field, p["tol_u"], p["tol_g"]).points
    points = np.atleast_2d(np.asarray(points, float)).reshape(-1, field.grid.dim)
    fb = extract_free_boundary(field)
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda x: classify_point(field, x, delta, p, fb), points))
    else:
        out = [classify_point(field, x, delta, p, fb) for x in points]
    return sorted(out, key=lambda c: tuple(c.x0))


# monotonicity probe ---------------------------------------------------------------------------

@dataclass
class ProbeReport:
    passed: bool
    min_value: float
    samples: int
    violations: list

    def to_dict(self) -> dict:
        return {"passed": self.passed, "min_value": self.min_value, "samples": self.samples,
                "violations": self.violations}


def monotonicity_probe(field: GridField, x0, delta0: float, r0: float, slopeM: float,
                       axis_angle: float = math.pi / 2, tol_g: float | None = None,
                       n_radial: int = 12, n_angular: int = 12, n_t: int = 12) -> ProbeReport:
    """min of the directional derivative along e2 at x + t r0 e2, over x in the
    truncated cone {x2 >= M|x1|} (B_r0 minus B_{delta0 r0}) and t in [delta0, 2].

    ``axis_angle`` orients e2 (default: the coordinate x2 axis).
    """
    if not 0 < delta0 < 1:
        raise InvalidInputError("delta0 must lie in (0, 1)")
    x0 = np.asarray(x0, float)
    tol_g = 5 * max(field.grid.spacing) if tol_g is None else tol_g
    e2 = np.array([math.cos(axis_angle), math.sin(axis_angle)])
    e1 = np.array([e2[1], -e2[0]])
    half = math.atan(1.0 / slopeM)
    rho = np.linspace(delta0 * r0, r0, n_radial)
    psi = np.linspace(-half, half, n_angular)
    ts = np.linspace(delta0, 2.0, n_t)
    R, P, T = np.meshgrid(rho, psi, ts, indexing="ij")
    pts = (x0 + (R * np.sin(P))[..., None] * e1 + (R * np.cos(P))[..., None] * e2
           + (T * r0)[..., None] * e2).reshape(-1, 2)
    lo, hi = np.asarray(field.grid.lo), np.asarray(field.grid.hi)
    if np.any(pts < lo) or np.any(pts > hi):
        raise DomainError("probe region leaves the grid domain")
    d2 = gradient(field, pts) @ e2
    bad = np.flatnonzero(d2 < -tol_g)
    worst = bad[np.argsort(d2[bad])][:10]
    return ProbeReport(bool(d2.min() >= -tol_g), float(d2.min()), int(len(pts)),
                       [{"point": pts[i].tolist(), "value": float(d2[i])} for i in worst])


# quadruple junctions ---------------------------------------------------------------------------

@dataclass
class JunctionResult:
    x0: np.ndarray
    slope: float
    radii: list
    arcs: np.ndarray            # (len(radii), 4) crossing angles, ccw
    rays: np.ndarray            # tangent ray angles matched to arcs
    deviations: np.ndarray      # |arc angle - ray angle|, (len(radii), 4)
    pitch: float
    form: QuadraticForm | None = None

    def max_deviation(self) -> np.ndarray:
        return self.deviations.max(axis=1)

    def to_dict(self) -> dict:
        return {"x0": self.x0.tolist(), "slope": self.slope, "radii": list(map(float, self.radii)),
                "arcs": self.arcs.tolist(), "rays": self.rays.tolist(),
                "deviations": self.deviations.tolist(), "max_deviation": self.max_deviation().tolist(),
                "angular_pitch": self.pitch}


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def circle_crossings(field: GridField, x0, r: float, samples: int = 1440) -> np.ndarray:
    """Angles where the circle of radius r leaves {u > 0}, by sign changes of
    the interpolated field."""
    psi = np.arange(samples) * 2 * math.pi / samples
    pts = np.asarray(x0, float) + r * np.stack([np.cos(psi), np.sin(psi)], axis=1)
    u = interpolate(field, pts)
    pos = u > 0
    nxt = np.roll(np.arange(samples), -1)
    idx = np.flatnonzero(pos != pos[nxt])
    ua, ub = u[idx], u[nxt[idx]]
    s = ua / (ua - ub)
    return np.sort((psi[idx] + s * 2 * math.pi / samples) % (2 * math.pi))


def cluster_angles(angles: np.ndarray, gap: float) -> np.ndarray:
    """Circular gap clustering; returns cluster mean angles sorted ccw."""
    if len(angles) == 0:
        return angles
    a = np.sort(angles)
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * math.pi]]))
    if not np.any(gaps > gap):
        return np.array([math.atan2(np.sin(a).mean(), np.cos(a).mean()) % (2 * math.pi)])
    start = (int(np.argmax(gaps > gap)) + 1) % len(a)
    a = np.roll(a, -start)
    a = np.where(np.arange(len(a)) > 0, np.unwrap(a), a)
    a = np.unwrap(a)
    groups = np.split(a, np.flatnonzero(np.diff(a) > gap) + 1)
    means = np.array([g.mean() % (2 * math.pi) for g in groups])
    return np.sort(means)


def junction_arcs(field: GridField, x0, r_list, fb: PointSet | None = None, gap_deg: float = 20.0,
                  samples: int = 1440, form: QuadraticForm | None = None) -> JunctionResult:
    """Four free-boundary arcs through x0, traced across the circles r in r_list."""
    if field.grid.dim != 2:
        raise InvalidInputError("junction analysis is planar only")
    x0 = np.asarray(x0, float)
    radii = sorted((float(r) for r in r_list), reverse=True)
    for r in radii:
        _check_inside(field, x0, r)
    gap = math.radians(gap_deg)
    per = [cluster_angles(circle_crossings(field, x0, r, samples), gap) for r in radii]
    counts = {r: len(a) for r, a in zip(radii, per)}
    if any(c != 4 for c in counts.values()):
        raise StructureError(f"expected 4 free-boundary crossings per circle, got {counts}", counts)
    arcs = [per[0]]
    for a in per[1:]:
        prev = arcs[-1]
        shift = min(range(4), key=lambda s: np.abs(_wrap(np.roll(a, -s) - prev)).sum())
        arcs.append(np.roll(a, -shift))
    arcs = np.array(arcs)
    if form is None:
        fb = extract_free_boundary(field) if fb is None else fb
        form = flatness(fb, radii[-1], x0).form
    lines = form.line_angles() if form is not None and form.dim == 2 else []
    if len(lines) != 2:
        raise StructureError("tangent cone at the smallest level is not a crossing line pair")
    rays = np.array([lines[0], lines[0] + math.pi, lines[1], lines[1] + math.pi]) % (2 * math.pi)
    # match arcs to rays at the smallest radius
    best = min(itertools.permutations(range(4)),
               key=lambda perm: np.abs(_wrap(arcs[-1] - rays[list(perm)])).sum())
    rays = rays[list(best)]
    dev = np.abs(_wrap(arcs - rays[None, :]))
    slope = cone_slope(form, field, probe=radii[-1] / 2)["slope"]
    return JunctionResult(x0, slope, radii, arcs, rays, dev, 2 * math.pi / samples, form)
