"""Monotone finite differences and policy iteration for F(D^2 u) = -beta_eps(u).

Each linear control A is discretized by the sign-adapted 9-point (2D) /
19-point (3D) stencil: the mixed derivative uses the diagonal pair of
neighbours aligned with sign(a_ij), so the scheme is monotone exactly when

    a_ii / h_i^2 >= sum_{j != i} |a_ij| / (h_i h_j)      for every axis i.

On disc-masked grids, axis neighbours that fall outside the disc are replaced
by a ghost value linearly extrapolated from the boundary crossing, which keeps
the scheme monotone and second order in the max norm.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import DirichletData, Grid, GridField
from .operators import ConfigurationError, InvalidInputError, OperatorSpec

log = logging.getLogger(__name__)

# crossing fractions below this are clamped; the induced error is O(1e-3 h^2)
_T_MIN = 1e-3


class IterationLimitError(RuntimeError):
    def __init__(self, message, residual=None, diagnostics=None):
        super().__init__(message)
        self.residual = residual
        self.diagnostics = diagnostics or {}


class AnisotropyError(ConfigurationError):
    pass


# penalty ----------------------------------------------------------------------

def beta_eps(t, eps: float):
    """1 for t >= 0 and exp(-(-t)^3 / eps^3) for t < 0."""
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    t = np.asarray(t, dtype=float)
    neg = np.minimum(t, 0.0)
    out = np.where(t >= 0, 1.0, np.exp(-((-neg) / eps) ** 3))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PenaltySchedule:
    eps0: float = 0.2
    factor: float = 0.5
    min_eps: float = 0.2 / 64
    tol: float = 1e-8
    max_outer: int = 200

    def __post_init__(self):
        if not self.eps0 > 0 or not 0 < self.factor < 1 or not 0 < self.min_eps <= self.eps0:
            raise ConfigurationError("schedule needs eps0 > 0, factor in (0,1), 0 < min_eps <= eps0")
        if not self.tol > 0 or self.max_outer < 1:
            raise ConfigurationError("schedule needs tol > 0 and max_outer >= 1")

    def epsilons(self) -> list:
        out, e = [], self.eps0
        while e >= self.min_eps * (1 - 1e-12):
            out.append(e)
            e *= self.factor
        return out

    def to_dict(self) -> dict:
        return {"eps0": self.eps0, "factor": self.factor, "min_eps": self.min_eps,
                "tol": self.tol, "max_outer": self.max_outer}


# discrete Hessian -------------------------------------------------------------

def discretize_hessian(field: GridField, node) -> np.ndarray:
    """Central-difference Hessian at a strictly interior node."""
    grid, u = field.grid, field.values
    node = tuple(int(i) for i in node)
    n = grid.dim
    if len(node) != n or any(i < 1 or i > c - 2 for i, c in zip(node, grid.counts)):
        raise IndexError(f"node {node} is not strictly interior")
    h = grid.spacing
    H = np.empty((n, n))

    def at(offset):
        return u[tuple(i + o for i, o in zip(node, offset))]

    for a in range(n):
        e = [0] * n
        e[a] = 1
        H[a, a] = (at(e) - 2 * u[node] + at([-x for x in e])) / h[a] ** 2
        for b in range(a + 1, n):
            pp = [0] * n; pp[a] = 1; pp[b] = 1
            pm = [0] * n; pm[a] = 1; pm[b] = -1
            H[a, b] = H[b, a] = (at(pp) - at(pm) - at([-x for x in pm]) + at([-x for x in pp])) / (
                4 * h[a] * h[b])
    return H


def hessian_field(field: GridField) -> np.ndarray:
    """Central-difference Hessians at all nodes (NaN on the outer layer)."""
    u, h, n = field.values, field.grid.spacing, field.grid.dim
    H = np.full(u.shape + (n, n), np.nan)
    core = (slice(1, -1),) * n

    def shifted(offset):
        return u[tuple(slice(1 + o, u.shape[k] - 1 + o) for k, o in enumerate(offset))]

    for a in range(n):
        e = [0] * n; e[a] = 1
        H[core + (a, a)] = (shifted(e) - 2 * u[core] + shifted([-x for x in e])) / h[a] ** 2
        for b in range(a + 1, n):
            pp = [0] * n; pp[a] = 1; pp[b] = 1
            pm = [0] * n; pm[a] = 1; pm[b] = -1
            val = (shifted(pp) - shifted(pm) - shifted([-x for x in pm]) + shifted([-x for x in pp])) / (
                4 * h[a] * h[b])
            H[core + (a, b)] = val
            H[core + (b, a)] = val
    return H


# assembly -----------------------------------------------------------------------

class Discretization:
    """Stencil geometry for one (grid, boundary data) pair.

    Assembles L_A u + b_A at the unknown nodes for per-node coefficient
    matrices A; fixed-control operators are cached.
    """

    def __init__(self, grid: Grid, g: DirichletData):
        self.grid = grid
        self.g = g
        self.G = g.on_grid(grid)
        mask = grid.interior_mask()
        self.mask = mask
        self.flat = np.flatnonzero(mask.ravel())
        self.N = self.flat.size
        if self.N == 0:
            raise ConfigurationError("grid has no interior nodes")
        self.lookup = -np.ones(mask.size, dtype=np.int64)
        self.lookup[self.flat] = np.arange(self.N)
        self.multi = np.array(np.unravel_index(self.flat, grid.shape)).T
        self.h = np.asarray(grid.spacing)
        self.Gflat = self.G.ravel()
        self._ghost = {}
        if grid.disc is not None:
            self._prepare_ghosts()
        self._cache = {}

    def neighbor(self, offset) -> np.ndarray:
        idx = self.multi + np.asarray(offset)
        return np.ravel_multi_index(idx.T, self.grid.shape)

    def _prepare_ghosts(self):
        X = self.grid.coords().reshape(-1, self.grid.dim)
        for a in range(self.grid.dim):
            for s in (1, -1):
                off = np.zeros(self.grid.dim, int); off[a] = s
                nb = self.neighbor(off)
                out = self.lookup[nb] < 0
                rows = np.flatnonzero(out)
                t = np.ones(rows.size)
                gb = self.Gflat[nb[rows]].copy()
                for k, r in enumerate(rows):
                    x = X[self.flat[r]]
                    dist = self.grid.disc.axis_crossing(x, a, s)
                    tk = dist / self.h[a]
                    if tk < 1 - 1e-12:
                        tk = max(tk, _T_MIN)
                        y = x.copy(); y[a] += s * tk * self.h[a]
                        t[k] = tk
                        gb[k] = float(self.g(y[None])[0])
                self._ghost[(a, s)] = (rows, t, gb)

    def assemble(self, A: np.ndarray, check: bool = True):
        """Sparse L (N x N) and offset b with (L u_int + b) approximating trace(A D^2 u)."""
        n, h, N = self.grid.dim, self.h, self.N
        A = np.broadcast_to(A, (N, n, n))
        center = np.zeros(N)
        b = np.zeros(N)
        rows, cols, vals = [], [], []
        axis_w = [A[:, a, a] / h[a] ** 2 for a in range(n)]
        for a in range(n):
            for c in range(a + 1, n):
                m = np.abs(A[:, a, c]) / (h[a] * h[c])
                axis_w[a] = axis_w[a] - m
                axis_w[c] = axis_w[c] - m
                center += 2 * m
                sgn = np.where(A[:, a, c] >= 0, 1, -1)
                for s in (1, -1):
                    off = np.zeros((N, n), int)
                    off[:, a] = s
                    off[:, c] = s * sgn
                    nb = np.ravel_multi_index((self.multi + off).T, self.grid.shape)
                    self._scatter(nb, m, rows, cols, vals, b)
        for a in range(n):
            w = axis_w[a]
            if check:
                scale = np.abs(A).max() / h.min() ** 2
                if np.any(w < -1e-12 * scale):
                    k = int(np.argmin(w))
                    raise AnisotropyError(
                        f"control not diagonally dominant on the stencil at node {self.multi[k].tolist()} "
                        f"(axis {a} weight {w[k]:.3e}); the scheme would not be monotone")
            center -= 2 * A[:, a, a] / h[a] ** 2
            for s in (1, -1):
                off = np.zeros(n, int); off[a] = s
                nb = self.neighbor(off)
                if (a, s) in self._ghost:
                    grow, t, gb = self._ghost[(a, s)]
                    ww = w.copy()
                    center[grow] += ww[grow] * (t - 1) / t
                    b[grow] += ww[grow] * gb / t
                    ww[grow] = 0.0
                    self._scatter(nb, ww, rows, cols, vals, b, skip_dirichlet=True)
                else:
                    self._scatter(nb, w, rows, cols, vals, b)
        rows.append(np.arange(N)); cols.append(np.arange(N)); vals.append(center)
        L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
        return L, b

    def _scatter(self, nb, w, rows, cols, vals, b, skip_dirichlet=False):
        j = self.lookup[nb]
        inside = j >= 0
        r = np.flatnonzero(inside)
        rows.append(r); cols.append(j[inside]); vals.append(w[inside])
        if not skip_dirichlet:
            out = ~inside
            b[out] += w[out] * self.Gflat[nb[out]]

    def control_operator(self, t: int, spec: OperatorSpec):
        key = (id(spec), t)
        if key not in self._cache:
            self._cache[key] = self.assemble(spec.controls[t])
        return self._cache[key]

    def full(self, u_int: np.ndarray) -> np.ndarray:
        out = self.G.copy().ravel()
        out[self.flat] = u_int
        return out.reshape(self.grid.shape)


# operator application and policies ------------------------------------------------

def _sense(spec: OperatorSpec) -> int:
    return -1 if spec.mode == "pucci-minus" else 1


def _pucci_policy(spec: OperatorSpec, disc: Discretization, u_int) -> np.ndarray:
    """Per-node extremal matrix for the Pucci modes from the central Hessian."""
    H = hessian_field(GridField(disc.grid, disc.full(u_int)))
    H = H.reshape(-1, disc.grid.dim, disc.grid.dim)[disc.flat]
    w, Q = np.linalg.eigh(H)
    if spec.mode == "pucci-plus":
        coef = np.where(w > 0, spec.Lam, spec.lam)
    else:
        coef = np.where(w > 0, spec.lam, spec.Lam)
    return np.einsum("kij,kj,klj->kil", Q, coef, Q)


def apply_operator(spec: OperatorSpec, disc: Discretization, u_int: np.ndarray):
    """F_h(u) at the unknown nodes and the optimal policy."""
    if spec.mode in ("pucci-plus", "pucci-minus"):
        A = _pucci_policy(spec, disc, u_int)
        L, b = disc.assemble(A)
        return L @ u_int + b, A
    vals = np.stack([disc.control_operator(t, spec)[0] @ u_int + disc.control_operator(t, spec)[1]
                     for t in range(len(spec.controls))], axis=1)
    best = vals.max(axis=1)
    # lowest control index wins ties; roundoff-level differences count as ties
    tie = 1e-10 * (1.0 + np.abs(best))
    pol = np.argmax(vals >= (best - tie)[:, None], axis=1)
    return best, pol


def _policy_system(spec, disc, policy):
    if spec.mode in ("pucci-plus", "pucci-minus"):
        return disc.assemble(policy)
    k = len(spec.controls)
    if k == 1:
        return disc.control_operator(0, spec)
    L = None
    b = np.zeros(disc.N)
    for t in range(k):
        sel = (policy == t).astype(float)
        if not sel.any():
            continue
        Lt, bt = disc.control_operator(t, spec)
        part = sp.diags(sel) @ Lt
        L = part if L is None else L + part
        b += sel * bt
    return L.tocsr(), b


def _linear_solve(L, rhs, tol, factor_cache=None, key=None):
    if factor_cache is not None and key in factor_cache:
        lu = factor_cache[key]
    else:
        lu = spla.splu(L.tocsc())
        if factor_cache is not None:
            factor_cache[key] = lu
    x = lu.solve(rhs)
    diag = np.abs(L.diagonal())
    for _ in range(3):
        r = rhs - L @ x
        res = float(np.max(np.abs(r) / diag))
        if res <= tol:
            return x, res
        x = x + lu.solve(r)
    r = rhs - L @ x
    res = float(np.max(np.abs(r) / diag))
    if res > tol:
        raise IterationLimitError(f"linear solve residual {res:.3e} above {tol:.1e}", residual=res)
    return x, res


def _as_interior(disc: Discretization, rhs) -> np.ndarray:
    if isinstance(rhs, GridField):
        rhs = rhs.values
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 0:
        return np.full(disc.N, float(rhs))
    if rhs.shape == disc.grid.shape:
        return rhs.ravel()[disc.flat]
    if rhs.shape == (disc.N,):
        return rhs
    raise InvalidInputError(f"rhs shape {rhs.shape} does not match the grid")


def solve_linear_policy(spec: OperatorSpec, grid: Grid, g: DirichletData, policy, rhs,
                        tol: float = 1e-10, disc: Discretization | None = None) -> GridField:
    """Solve trace(A_policy D^2 u) = rhs at unknown nodes, u = g at Dirichlet nodes.

    ``policy`` is a per-node control index (array over the grid or the unknowns)
    for fixed-control modes, or per-node matrices for the Pucci modes.
    """
    disc = disc or Discretization(grid, g)
    pol = np.asarray(policy)
    if spec.mode not in ("pucci-plus", "pucci-minus"):
        if pol.ndim == 0:
            pol = np.full(disc.N, int(pol))
        elif pol.shape == grid.shape:
            pol = pol.ravel()[disc.flat]
        if pol.min() < 0 or pol.max() >= len(spec.controls):
            raise InvalidInputError("policy refers to a nonexistent control")
    L, b = _policy_system(spec, disc, pol)
    x, res = _linear_solve(L, _as_interior(disc, rhs) - b, tol)
    return GridField(grid, disc.full(x), {"spec": spec.digest(), "linear_residual": res})


def _policy_iteration(spec, disc, rhs_int, u0, tol_lin, max_iter=50, cache=None):
    u = u0
    pol = None
    for it in range(1, max_iter + 1):
        _, new_pol = apply_operator(spec, disc, u)
        if pol is not None and spec.mode not in ("pucci-plus", "pucci-minus") and np.array_equal(pol, new_pol):
            return u, it - 1
        pol = new_pol
        L, b = _policy_system(spec, disc, pol)
        key = pol.tobytes() if cache is not None and spec.mode not in ("pucci-plus", "pucci-minus") else None
        u_new, _ = _linear_solve(L, rhs_int - b, tol_lin, cache if key is not None else None, key)
        step = np.max(np.abs(u_new - u))
        u = u_new
        if step <= tol_lin * (1.0 + np.max(np.abs(u))):
            return u, it
    raise IterationLimitError(f"policy iteration did not settle in {max_iter} iterations")


def discrete_residual(spec, disc, u_int, rhs_int) -> float:
    F, _ = apply_operator(spec, disc, u_int)
    return float(np.max(np.abs(F - rhs_int)))


def _initial_guess(disc):
    # harmonic-ish start: boundary mean
    return np.full(disc.N, float(np.mean(disc.Gflat[disc.lookup < 0])))


def solve_supersolution(spec: OperatorSpec, grid: Grid, g: DirichletData, tol_lin: float = 1e-10,
                        disc: Discretization | None = None) -> GridField:
    """Solution of F(D^2 u) = -1, a supersolution of every penalized problem."""
    disc = disc or Discretization(grid, g)
    rhs = -np.ones(disc.N)
    u, its = _policy_iteration(spec, disc, rhs, _initial_guess(disc), tol_lin, cache={})
    return GridField(grid, disc.full(u), {"spec": spec.digest(), "policy_iterations": its,
                                          "residual": discrete_residual(spec, disc, u, rhs)})


def solve_penalized(spec: OperatorSpec, grid: Grid, g: DirichletData, eps: float, tol: float = 1e-8,
                    initial: GridField | None = None, max_outer: int = 200, tol_lin: float = 1e-10,
                    disc: Discretization | None = None) -> GridField:
    """Solve F(D^2 u) = -beta_eps(u) by lagging beta_eps and policy iteration.

    Started from a supersolution (the default: the solution of F = -1), the
    iterates decrease monotonically toward the largest discrete solution.
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    disc = disc or Discretization(grid, g)
    if initial is None:
        initial = solve_supersolution(spec, grid, g, tol_lin, disc)
    u = initial.values.ravel()[disc.flat].copy()
    cache = {}
    steps = []
    inner_total = 0
    for m in range(1, max_outer + 1):
        rhs = -beta_eps(u, eps)
        u_new, its = _policy_iteration(spec, disc, rhs, u, tol_lin, cache=cache)
        inner_total += its
        step = float(np.max(np.abs(u_new - u)))
        # F_h(u_new) = -beta(u), so the equation residual is the change in beta
        drift = float(np.max(np.abs(beta_eps(u_new, eps) + rhs)))
        steps.append(step)
        u = u_new
        if step <= tol and drift <= 10 * tol:
            break
    else:
        raise IterationLimitError(
            f"penalized solve (eps={eps}) did not reach tol {tol} in {max_outer} outer iterations",
            residual=steps[-1], diagnostics={"steps": steps[-10:]})
    res = discrete_residual(spec, disc, u, -beta_eps(u, eps))
    return GridField(grid, disc.full(u), {
        "spec": spec.digest(), "eps": eps, "outer_iterations": m, "policy_iterations": inner_total,
        "last_step": steps[-1], "residual": res})


@dataclass
class MaximalSolution:
    field: GridField
    epsilons: list
    violations: list
    residuals: list
    stage_fields: list = field(default_factory=list, repr=False)

    def report(self) -> dict:
        return {"epsilons": self.epsilons, "violations": self.violations, "residuals": self.residuals,
                **{k: v for k, v in self.field.metadata.items() if k != "stages"}}


def solve_maximal(spec: OperatorSpec, grid: Grid, g: DirichletData,
                  schedule: PenaltySchedule = PenaltySchedule(), keep_stages: bool = False) -> MaximalSolution:
    """Approximate the maximal solution by monotone descent along the eps schedule."""
    disc = Discretization(grid, g)
    current = solve_supersolution(spec, grid, g, disc=disc)
    violations, residuals, stages, eps_list = [], [], [], []
    prev = None
    for eps in schedule.epsilons():
        current = solve_penalized(spec, grid, g, eps, schedule.tol, initial=current,
                                  max_outer=schedule.max_outer, disc=disc)
        if prev is not None:
            violations.append(float(np.max(np.maximum(current.values - prev, 0.0))))
        prev = current.values
        eps_list.append(eps)
        residuals.append(current.metadata["residual"])
        if keep_stages:
            stages.append(current)
        log.debug("eps=%g outer=%d residual=%.2e", eps, current.metadata["outer_iterations"],
                  current.metadata["residual"])
    meta = dict(current.metadata, kind="maximal-approximation", schedule=schedule.to_dict())
    final = GridField(grid, current.values, meta)
    return MaximalSolution(final, eps_list, violations, residuals, stages)


# oracle -----------------------------------------------------------------------------

def exact_radial_solution(lam: float, n: int, R: float, grid: Grid, center=None) -> GridField:
    """(R^2 - |x|^2) / (2 n lam) inside B_R, zero outside.

    Exact for Bellman families of isotropic controls a*I, a in [lam, Lambda],
    because F(-cI) = -lam*c*n for c > 0.
    """
    if grid.dim != n:
        raise InvalidInputError("grid dimension does not match n")
    X = grid.coords()
    c = np.zeros(n) if center is None else np.asarray(center, float)
    r2 = ((X - c) ** 2).sum(-1)
    u = np.where(r2 < R * R, (R * R - r2) / (2 * n * lam), 0.0)
    return GridField(grid, u, {"kind": "exact-radial", "lambda": lam, "R": R})
