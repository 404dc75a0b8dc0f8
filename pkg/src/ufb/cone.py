"""Planar sector solutions of F(D^2 v) = 0, the doubling inequality and the
blow-up sequence towards a homogeneous profile r^kappa phi(theta).

The solver works on a log-polar tensor grid (s = log r uniform, theta uniform)
where r^2 tr(A D^2 v) reads

    a_rr (v_ss - v_s) + a_tt (v_tt + v_s) + 2 a_rt (v_st - v_t)

with (a_rr, a_rt, a_tt) the control conjugated into the local polar frame.
The vertex is excised at r_min and closed by homogeneous extrapolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .barriers import doubling_alpha, doubling_epsilon
from .operators import ConfigurationError, InvalidInputError, OperatorSpec
from .solver import AnisotropyError, IterationLimitError, _linear_solve


class TrustedRegionError(ValueError):
    pass


@dataclass(frozen=True)
class SectorSpec:
    """Open planar sector {r e^{i psi}: 0 < r < 1, orientation < psi < orientation + aperture}."""

    aperture: float
    orientation: float = 0.0

    def __post_init__(self):
        if not 0 < self.aperture < 2 * math.pi:
            raise ConfigurationError("aperture must lie in (0, 2 pi)")

    @property
    def analytic_kappa(self) -> float:
        """Homogeneity of the positive harmonic function vanishing on both rays."""
        return math.pi / self.aperture

    def to_dict(self) -> dict:
        return {"aperture": self.aperture, "orientation": self.orientation}


def lemma_v0(x) -> np.ndarray:
    """Boundary data on the closed sector boundary: 16 (|x| - 3/4)_+^2, which is 1 on the cap."""
    x = np.asarray(x, float)
    r = np.linalg.norm(x, axis=-1) if x.ndim and x.shape[-1] in (2, 3) else np.abs(x)
    return 16.0 * np.maximum(r - 0.75, 0.0) ** 2


@dataclass
class PolarField:
    """Values on the log-polar grid; row 0 is the excised vertex layer."""

    sector: SectorSpec
    s: np.ndarray
    theta: np.ndarray
    values: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.shape != (len(self.s), len(self.theta)):
            raise ValueError("values do not match the polar grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("polar field has non-finite values")
        self.values = v

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.s)

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def dtheta(self) -> float:
        return float(self.theta[1] - self.theta[0])

    def points(self) -> np.ndarray:
        psi = self.sector.orientation + self.theta
        R = self.r[:, None]
        return np.stack([R * np.cos(psi)[None, :], R * np.sin(psi)[None, :]], axis=-1)

    def sup_K(self, R: float) -> float:
        """sup of v over K_R (nodes with r <= R)."""
        m = self.r <= R * (1 + 1e-12)
        if not m.any():
            raise InvalidInputError(f"no grid radius below {R}")
        return float(self.values[m].max())

    def shift_index(self, R: float):
        """Integer grid shift for the dilation x -> R x, or None if R is off-grid."""
        q = math.log(R) / self.ds
        k = round(q)
        return int(k) if abs(q - k) < 1e-9 else None

    def radial_interp(self, s_query: np.ndarray) -> np.ndarray:
        """Values at (s_query[i], theta_j): exact at grid radii, otherwise log-linear
        between positive neighbours (linear where a neighbour vanishes)."""
        s_query = np.asarray(s_query, float)
        if np.any(s_query < self.s[0] - 1e-12) or np.any(s_query > self.s[-1] + 1e-12):
            raise InvalidInputError("radius outside the polar grid")
        q = (s_query - self.s[0]) / self.ds
        i0 = np.clip(np.floor(q + 1e-9).astype(int), 0, len(self.s) - 1)
        t = np.clip(q - i0, 0.0, 1.0)
        t = np.where(t < 1e-9, 0.0, t)
        i1 = np.minimum(i0 + 1, len(self.s) - 1)
        a, b = self.values[i0], self.values[i1]
        tt = t[:, None]
        lin = (1 - tt) * a + tt * b
        pos = (a > 0) & (b > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logi = np.exp((1 - tt) * np.log(np.where(pos, a, 1.0)) + tt * np.log(np.where(pos, b, 1.0)))
        out = np.where(pos, logi, lin)
        return np.where(tt == 0, a, out)

    def to_dict(self) -> dict:
        return {"sector": self.sector.to_dict(), "r_min": float(self.r[0]), "ds": self.ds,
                "n_r": len(self.s), "n_theta": len(self.theta), "metadata": self.metadata}


def polar_grid(sector: SectorSpec, per_octave: int = 14, octaves: int = 10, dtheta: float | None = None):
    """s nodes from log(2^-octaves) to 0 with ds = ln2/per_octave; theta with spacing near ds."""
    if per_octave < 2 or octaves < 2:
        raise ConfigurationError("polar grid too coarse")
    ds = math.log(2.0) / per_octave
    s = -octaves * math.log(2.0) + ds * np.arange(per_octave * octaves + 1)
    s[-1] = 0.0
    m = max(4, int(math.ceil(sector.aperture / (dtheta or ds) - 1e-9)))
    theta = np.linspace(0.0, sector.aperture, m + 1)
    return s, theta


def _polar_coefficients(A: np.ndarray, psi: np.ndarray):
    """(a_rr, a_rt, a_tt) of a constant 2x2 matrix in the frame (e_r, e_theta) at angles psi."""
    c, s = np.cos(psi), np.sin(psi)
    arr = A[0, 0] * c * c + 2 * A[0, 1] * c * s + A[1, 1] * s * s
    att = A[0, 0] * s * s - 2 * A[0, 1] * c * s + A[1, 1] * c * c
    art = (A[1, 1] - A[0, 0]) * c * s + A[0, 1] * (c * c - s * s)
    return arr, art, att


class _SectorSystem:
    """Interior unknowns (i = 1..N-1, j = 1..m-1) of the log-polar grid."""

    def __init__(self, sector, s, theta, data):
        self.sector, self.s, self.theta = sector, s, theta
        self.ds, self.dt = float(s[1] - s[0]), float(theta[1] - theta[0])
        self.N, self.m = len(s) - 1, len(theta) - 1
        self.ni, self.nj = self.N - 1, self.m - 1
        psi = sector.orientation + theta
        r = np.exp(s)[:, None]
        X = np.stack([r * np.cos(psi)[None, :], r * np.sin(psi)[None, :]], axis=-1)
        self.g = np.asarray(data(X), float)
        if self.g.shape != X.shape[:-1] or not np.all(np.isfinite(self.g)):
            raise ConfigurationError("sector boundary data must be finite")
        self.psi = psi
        self.rho = 1.0
        I, J = np.meshgrid(np.arange(1, self.N), np.arange(1, self.m), indexing="ij")
        self.I, self.J = I.ravel(), J.ravel()
        self.size = self.ni * self.nj

    def index(self, i, j):
        return (i - 1) * self.nj + (j - 1)

    def weights(self, arr, art, att, check=True):
        """Eight neighbour weights of the monotone stencil, shape (K,) each."""
        ds, dt = self.ds, self.dt
        c = np.abs(art) / (ds * dt)
        wE = arr / ds ** 2 - c
        wW = wE.copy()
        wN = att / dt ** 2 - c
        wS = wN.copy()
        if check and (np.any(wE < -1e-12) or np.any(wN < -1e-12)):
            raise AnisotropyError("control is not diagonally dominant in the polar frame; scheme not monotone")
        pos = art >= 0
        wNE = np.where(pos, c, 0.0)
        wSW = wNE.copy()
        wNW = np.where(pos, 0.0, c)
        wSE = wNW.copy()
        # first-order terms: (a_tt - a_rr) v_s and -2 a_rt v_t
        for b, (wp, wm), h in (((att - arr), (wE, wW), ds), ((-2 * art), (wN, wS), dt)):
            cen_ok = (wp + b / (2 * h) >= 0) & (wm - b / (2 * h) >= 0)
            wp += np.where(cen_ok, b / (2 * h), np.maximum(b, 0) / h)
            wm += np.where(cen_ok, -b / (2 * h), np.maximum(-b, 0) / h)
        return {(1, 0): wE, (-1, 0): wW, (0, 1): wN, (0, -1): wS,
                (1, 1): wNE, (-1, -1): wSW, (-1, 1): wNW, (1, -1): wSE}

    def assemble(self, arr, art, att, check=True):
        W = self.weights(arr, art, att, check)
        rows, cols, vals = [], [], []
        b = np.zeros(self.size)
        diag = np.zeros(self.size)
        k = np.arange(self.size)
        for (di, dj), w in W.items():
            i2, j2 = self.I + di, self.J + dj
            diag -= w
            lateral = (j2 == 0) | (j2 == self.m)
            outer = i2 == self.N
            vertex = (i2 == 0) & ~lateral
            inner = ~(lateral | outer | vertex)
            known = (lateral | outer)
            b[known] += w[known] * self.g[i2[known], j2[known]]
            rows.append(k[inner]); cols.append(self.index(i2[inner], j2[inner])); vals.append(w[inner])
            rows.append(k[vertex]); cols.append(self.index(np.ones(vertex.sum(), int), j2[vertex]))
            vals.append(w[vertex] * self.rho)
        rows.append(k); cols.append(k); vals.append(diag)
        L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.size, self.size))
        return L, b

    def apply(self, arr, art, att, V):
        """sum_k w_k (V_nb - V) at the interior nodes, from a full value array."""
        W = self.weights(arr, art, att, check=False)
        c = V[self.I, self.J]
        out = np.zeros(self.size)
        for (di, dj), w in W.items():
            out += w * (V[self.I + di, self.J + dj] - c)
        return out

    def full(self, v_int):
        V = self.g.copy()
        V[1:self.N, 1:self.m] = v_int.reshape(self.ni, self.nj)
        V[0, 1:self.m] = self.rho * V[1, 1:self.m]
        return V


def pucci_plus_controls(lam: float, Lam: float, directions: int = 72) -> np.ndarray:
    """Finite control family whose sup approximates M+ in the plane from below:
    lam I, Lam I and lam I + (Lam - lam) n n^T for n on a uniform half circle.
    The relative defect is at most sin^2(pi / (2 directions))."""
    t = np.pi * np.arange(directions) / directions
    n = np.stack([np.cos(t), np.sin(t)], axis=1)
    rank_one = lam * np.eye(2) + (Lam - lam) * np.einsum("ki,kj->kij", n, n)
    return np.concatenate([[lam * np.eye(2), Lam * np.eye(2)], rank_one])


def _coefficient_stack(spec: OperatorSpec, system: _SectorSystem, directions: int = 72):
    psi = system.psi[system.J]
    controls = (pucci_plus_controls(spec.lam, spec.Lam, directions) if spec.mode == "pucci-plus"
                else np.asarray(spec.controls, float))
    return [_polar_coefficients(A, psi) for A in controls]


def _evaluate(spec, system, coeffs, V):
    """F_h at the interior nodes and the maximizing control per node."""
    vals = np.stack([system.apply(*a, V) for a in coeffs], axis=1)
    best = vals.max(axis=1)
    tie = 1e-10 * (1.0 + np.abs(best))
    return best, np.argmax(vals >= (best - tie)[:, None], axis=1)


def _policy_coefficients(spec, coeffs, pol):
    out = []
    for comp in range(3):
        stack = np.stack([c[comp] for c in coeffs], axis=1)
        out.append(stack[np.arange(len(pol)), pol])
    return tuple(out)


def solve_cone_dirichlet(spec: OperatorSpec, sector: SectorSpec, data=lemma_v0, tol: float = 1e-10,
                         per_octave: int = 14, octaves: int = 10, max_policy: int = 60,
                         max_closure: int = 40, pucci_directions: int = 72) -> PolarField:
    """Solve F(D^2 v) = 0 in the sector with v = data on the boundary.

    Only sup-form (convex) operators are supported; pucci-plus runs through a
    finite rank-one control family.
    """
    if spec.n != 2:
        raise ConfigurationError("the sector solver is planar")
    if spec.mode == "pucci-minus":
        raise ConfigurationError("the sector solver treats sup-form (convex) operators only")
    s, theta = polar_grid(sector, per_octave, octaves)
    system = _SectorSystem(sector, s, theta, data)
    coeffs = _coefficient_stack(spec, system, pucci_directions)
    for a in coeffs:
        system.weights(*a, check=True)
    v = np.zeros(system.size)
    history = []
    total_policy = 0

    def closure_map(kappa):
        # solve with the closure exponent kappa; return the exponent seen by the first two rows
        nonlocal v, total_policy
        system.rho = math.exp(-kappa * system.ds)
        pol = None
        for it in range(1, max_policy + 1):
            V = system.full(v)
            _, new_pol = _evaluate(spec, system, coeffs, V)
            if pol is not None and np.array_equal(pol, new_pol):
                break
            pol = new_pol
            L, b = system.assemble(*_policy_coefficients(spec, coeffs, pol), check=False)
            v_new, _ = _linear_solve(L, -b, tol)
            step = float(np.max(np.abs(v_new - v)))
            v = v_new
            total_policy += 1
            if step <= tol * (1 + np.max(np.abs(v))):
                break
        else:
            raise IterationLimitError(f"sector policy iteration did not settle in {max_policy} steps")
        V = system.full(v)
        a1, a2 = V[1, 1:-1].max(), V[2, 1:-1].max()
        if a1 <= 0 or a2 <= 0:
            return kappa
        return math.log(a2 / a1) / system.ds

    # secant iteration on the closure fixed point kappa = G(kappa)
    k0 = sector.analytic_kappa
    f0 = closure_map(k0) - k0
    history.append(k0 + f0)
    k1 = k0 + f0
    kappa = k1
    for _ in range(max_closure):
        f1 = closure_map(k1) - k1
        history.append(k1 + f1)
        if abs(f1) <= 1e-10 or f1 == f0:
            kappa = k1
            break
        k0, f0, k1 = k1, f1, k1 - f1 * (k1 - k0) / (f1 - f0)
        kappa = k1
    else:
        raise IterationLimitError("vertex closure exponent did not converge", diagnostics={"history": history})
    if abs(closure_map(kappa) - kappa) > 1e-8:
        raise IterationLimitError("vertex closure exponent did not converge", diagnostics={"history": history})
    system.rho = math.exp(-kappa * system.ds)
    V = system.full(v)
    F, _ = _evaluate(spec, system, coeffs, V)
    L, _ = system.assemble(1.0 + 0 * system.I, 0.0 * system.I, 1.0 + 0 * system.I)
    residual = float(np.max(np.abs(F) / np.abs(L.diagonal())))
    if residual > 100 * tol:
        raise IterationLimitError(f"sector residual {residual:.2e} above tolerance", residual=residual)
    return PolarField(sector, s, theta, V, {
        "mode": spec.mode, "residual": residual, "vertex_kappa": kappa,
        "closure_iterations": len(history), "policy_iterations": total_policy,
        "r_min": float(math.exp(s[0])), "ds": system.ds, "dtheta": system.dt,
    })


# doubling -----------------------------------------------------------------------------------

@dataclass
class DoublingReport:
    eps: float
    passed: bool
    worst_margin: float
    per_R: dict

    def to_dict(self) -> dict:
        return {"eps": self.eps, "passed": self.passed, "worst_margin": self.worst_margin, "per_R": self.per_R}


def check_doubling(v: PolarField, eps: float, R_samples=(0.5, 0.625, 0.75, 0.875), tol: float = 1e-10,
                   interp_tol: float | None = None) -> DoublingReport:
    """v(Rx) <= (1 - eps (1 - R)) v(x) at every node with v(x) > 10 tol whose dilate
    stays on the grid; margins are relative to v(x)."""
    per_R = {}
    worst = math.inf
    for R in R_samples:
        if not 0.5 - 1e-12 <= R <= 1 + 1e-12:
            raise InvalidInputError("R must lie in [1/2, 1]")
        sq = v.s + math.log(R)
        ok_r = sq >= v.s[1] - 1e-12          # dilate beyond the vertex layer
        ok_r[0] = False
        vx = v.values[ok_r]
        vR = v.radial_interp(sq[ok_r])
        trusted = vx > 10 * tol
        margin = ((1 - eps * (1 - R)) * vx - vR)[trusted] / vx[trusted]
        itol = 0.0 if interp_tol is None else float(interp_tol)
        m = float(margin.min()) if margin.size else math.inf
        per_R[str(R)] = {"worst_margin": m, "nodes": int(trusted.sum()), "interp_tol": itol}
        worst = min(worst, m + itol)
    return DoublingReport(eps, bool(worst >= -1e-6), worst, per_R)


# blow-up ------------------------------------------------------------------------------------

@dataclass
class BlowupResult:
    kappa: float
    theta: np.ndarray
    phi: np.ndarray
    profile_residual: float
    fit_range: tuple
    convergence: list = field(default_factory=list)
    eps: float | None = None
    C_R: list = field(default_factory=list)
    doubling_quotients: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "theta": self.theta.tolist(), "phi": self.phi.tolist(),
                "profile_residual": self.profile_residual, "fit_range": list(self.fit_range),
                "residuals": self.convergence, "eps": self.eps, "C_R": self.C_R,
                "doubling_quotients": self.doubling_quotients, "diagnostics": self.diagnostics}


def rescale(v: PolarField, R: float) -> PolarField:
    """w(x) = v(R x) / sup_{K_R} v on the radii where R x stays on the grid."""
    k = v.shift_index(R)
    sup = v.sup_K(R)
    if sup <= 0:
        raise InvalidInputError("sup of the field vanishes: degenerate blow-up")
    if k is not None:
        vals = v.values[: len(v.s) + k] if k < 0 else v.values
        s = v.s[-k:] if k < 0 else v.s
        return PolarField(v.sector, s, v.theta, vals / sup, {"R": R, "sup": sup})
    s = v.s[v.s - math.log(R) <= 1e-12]
    s = s[s + math.log(R) >= v.s[0] - 1e-12]
    vals = v.radial_interp(s + math.log(R))
    return PolarField(v.sector, s, v.theta, vals / sup, {"R": R, "sup": sup})


def _quotient(w: PolarField, factor: float, r_lo: float, r_hi: float, tol: float):
    """min and max of w(factor x)/w(x) over interior nodes with r_lo <= r <= r_hi."""
    sq = w.s + math.log(factor)
    sel = (w.r >= r_lo * (1 - 1e-12)) & (w.r <= r_hi * (1 + 1e-12)) & (sq >= w.s[0] - 1e-12)
    if not sel.any():
        return None
    num = w.radial_interp(sq[sel])[:, 1:-1]
    den = w.values[sel][:, 1:-1]
    ok = den > tol
    if not ok.any():
        return None
    q = num[ok] / den[ok]
    return float(q.min()), float(q.max())


def blowup_sequence(v: PolarField, R_list, tol: float = 1e-12):
    """Rescalings w_k(x) = v(R_k x)/sup_{K_{R_k}} v; pairwise differences on K_{1/2}
    and the doubling quotients w(x/2)/w(x)."""
    R_list = [float(R) for R in R_list]
    if any(not 0 < R < 1 for R in R_list) or any(b >= a for a, b in zip(R_list, R_list[1:])):
        raise InvalidInputError("R_list must be decreasing in (0, 1)")
    ws = [rescale(v, R) for R in R_list]
    diffs = []
    for a, b in zip(ws, ws[1:]):
        lo = max(a.s[0], b.s[0])
        sel_a = (a.s >= lo - 1e-12) & (a.s <= math.log(0.5) + 1e-12)
        sel_b = (b.s >= lo - 1e-12) & (b.s <= math.log(0.5) + 1e-12)
        if sel_a.sum() != sel_b.sum():
            vb = b.radial_interp(a.s[sel_a])
        else:
            vb = b.values[sel_b]
        diffs.append(float(np.max(np.abs(a.values[sel_a] - vb))))
    quotients = []
    for R, w in zip(R_list, ws):
        q = _quotient(w, 0.5, max(2 * w.r[0], 2 * v.r[1] / R), 1.0, tol)
        if q is not None:
            quotients.append({"R": R, "min": q[0], "max": q[1], "k": min(q[0], 1.0 / q[1])})
    return ws[-1], {"R": R_list, "differences": diffs, "doubling_quotients": quotients}


def homogeneity_exponent(w: PolarField, fit_range=(2.0 ** -6, 2.0 ** -2), C_R_samples=None,
                         tol: float = 1e-12) -> BlowupResult:
    """kappa from the slope of log sup_{K_R} w against log R over fit_range, the
    normalized angular profile at the geometric mean radius, and C_R = min w(Rx)/w(x)."""
    lo, hi = fit_range
    if not 0 < lo < hi <= 1:
        raise InvalidInputError("fit range must satisfy 0 < lo < hi <= 1")
    if lo < w.r[0] * (1 - 1e-12):
        raise InvalidInputError("fit range reaches below the polar grid")
    sel = (w.r >= lo * (1 - 1e-12)) & (w.r <= hi * (1 + 1e-12))
    Rs = w.r[sel]
    sups = np.array([w.sup_K(R) for R in Rs])
    if np.any(sups <= 0):
        raise InvalidInputError("nonpositive suprema in the fit range")
    kappa, _ = np.polyfit(np.log(Rs), np.log(sups), 1)
    mid = math.sqrt(lo * hi)
    i_mid = int(np.argmin(np.abs(w.s - math.log(mid))))
    phi = w.values[i_mid] / w.values[i_mid].max()
    rows = w.values[sel]
    prof = rows / rows.max(axis=1, keepdims=True)
    residual = float(np.max(np.abs(prof - phi[None, :])))
    C_R = []
    for R in (C_R_samples if C_R_samples is not None else [0.5, 0.25, 0.125]):
        q = _quotient(w, R, lo / R, hi, tol)
        if q is None:
            continue
        C_R.append({"R": R, "C_R": q[0], "R_kappa": R ** kappa, "rel_err": abs(q[0] / R ** kappa - 1)})
    return BlowupResult(float(kappa), w.theta.copy(), phi, residual, (lo, hi), C_R=C_R,
                        diagnostics={"fit_radii": int(sel.sum())})


def check_two_sided_bound(u: PolarField, b: PolarField, excision: float = 2.0 ** -6, tol: float = 1e-12) -> dict:
    """inf and sup of u/b over K_{1/2} minus B_excision (interior angles)."""
    if u.values.shape != b.values.shape:
        raise InvalidInputError("fields live on different grids")
    rsel = (u.r >= excision * (1 - 1e-12)) & (u.r <= 0.5 * (1 + 1e-12))
    for name, f in (("u", u), ("b", b)):
        lateral = f.values[rsel][:, [0, -1]]
        scale = max(np.abs(f.values[rsel]).max(), tol)
        if np.any(np.abs(lateral) > 1e-9 * scale):
            raise TrustedRegionError(f"{name} does not vanish on the lateral rays inside K_1/2")
    uu, bb = u.values[rsel][:, 1:-1], b.values[rsel][:, 1:-1]
    if np.any(bb <= tol) or np.any(uu <= tol):
        raise TrustedRegionError("field is not positive inside the trusted region")
    q = uu / bb
    return {"inf": float(q.min()), "sup": float(q.max()), "C": float(max(q.max(), 1.0 / q.min())),
            "excision": excision}


def lateral_slopes(v: PolarField, r_lo: float = 2.0 ** -6, r_hi: float = 0.5) -> dict:
    """One-sided normal difference quotients v(r, dtheta)/(r dtheta) on both rays, scaled by r^(1-kappa)."""
    kappa = v.metadata.get("vertex_kappa", v.sector.analytic_kappa)
    sel = (v.r >= r_lo) & (v.r <= r_hi)
    r = v.r[sel]
    dt = v.dtheta
    q0 = (v.values[sel, 1] - v.values[sel, 0]) / (r * dt)
    q1 = (v.values[sel, -2] - v.values[sel, -1]) / (r * dt)
    scaled = np.minimum(q0, q1) * r ** (1 - kappa)
    return {"min_quotient": float(min(q0.min(), q1.min())), "min_scaled": float(scaled.min())}


def blowup(spec: OperatorSpec, sector: SectorSpec, R_list=None, fit_range=(2.0 ** -6, 2.0 ** -2),
           doubling_R=(0.5, 0.625, 0.75, 0.875), **solver_kw) -> tuple:
    """Full pipeline: sector solve with lemma_v0 data, doubling check, rescaling, exponent."""
    v = solve_cone_dirichlet(spec, sector, lemma_v0, **solver_kw)
    eps = doubling_epsilon(doubling_alpha(spec.lam, spec.Lam))
    dbl = check_doubling(v, eps, doubling_R)
    R_list = [2.0 ** -k for k in (1, 2, 3)] if R_list is None else R_list
    w, seq = blowup_sequence(v, R_list)
    res = homogeneity_exponent(w, fit_range)
    res.convergence = seq["differences"]
    res.doubling_quotients = seq["doubling_quotients"]
    res.eps = eps
    res.diagnostics.update({"doubling": dbl.to_dict(), "solver": v.metadata, "R_list": list(R_list),
                            "lateral": lateral_slopes(v)})
    return v, res
