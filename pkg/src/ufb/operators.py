"""Uniformly elliptic, positively 1-homogeneous operators on symmetric matrices.

Operators are evaluated on stacks of matrices: any array of shape
``(..., n, n)`` with ``n in (2, 3)``.  Eigenvalues are computed in closed
form (quadratic formula for n=2, trigonometric form for n=3).
"""
from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field

import numpy as np

MODES = ("bellman-sup", "pucci-plus", "pucci-minus", "laplacian")


class InvalidInputError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


def _as_sym(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2] or M.shape[-1] not in (2, 3):
        raise InvalidInputError(f"expected (..., n, n) with n in (2, 3), got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("matrix has non-finite entries")
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def sym_eigvals(M) -> np.ndarray:
    """Ascending eigenvalues of symmetric 2x2 or 3x3 matrices, closed form."""
    M = _as_sym(M)
    n = M.shape[-1]
    if n == 2:
        a, b, c = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
        mean = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return np.stack([mean - rad, mean + rad], axis=-1)

    # eigenvalues are 1-homogeneous: normalize to avoid under/overflow
    scale = np.abs(M).max(axis=(-2, -1))
    scale = np.where(scale > 0, scale, 1.0)
    M = M / scale[..., None, None]
    # trigonometric solution of the characteristic cubic; it is accurate for the
    # eigenvalue farthest from the other two, which is then deflated out
    q = np.trace(M, axis1=-2, axis2=-1) / 3.0
    off = M[..., 0, 1] ** 2 + M[..., 0, 2] ** 2 + M[..., 1, 2] ** 2
    p2 = (M[..., 0, 0] - q) ** 2 + (M[..., 1, 1] - q) ** 2 + (M[..., 2, 2] - q) ** 2 + 2 * off
    p = np.sqrt(p2 / 6.0)
    safe = p > 1e-14
    ps = np.where(safe, p, 1.0)
    B = (M - q[..., None, None] * np.eye(3)) / ps[..., None, None]
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    top = q + 2 * p * np.cos(phi)
    bottom = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    iso = np.where(r >= 0, top, bottom)
    # eigenvector of the isolated eigenvalue: largest cross product of rows of M - iso*I
    R = M - iso[..., None, None] * np.eye(3)
    cands = np.stack([np.cross(R[..., 0, :], R[..., 1, :]), np.cross(R[..., 0, :], R[..., 2, :]),
                      np.cross(R[..., 1, :], R[..., 2, :])], axis=-2)
    norms = np.linalg.norm(cands, axis=-1)
    k = np.argmax(norms, axis=-1)
    v = np.take_along_axis(cands, k[..., None, None], axis=-2)[..., 0, :]
    nmax = norms.max(-1)
    v = np.where((nmax > 0)[..., None], v / np.where(nmax > 0, nmax, 1.0)[..., None], np.array([0, 0, 1.0]))
    # orthonormal complement of v
    helper = np.where((np.abs(v[..., 0]) < 0.9)[..., None], np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    u1 = np.cross(v, helper)
    u1 /= np.linalg.norm(u1, axis=-1, keepdims=True)
    u2 = np.cross(v, u1)
    Mu1, Mu2 = np.einsum("...ij,...j->...i", M, u1), np.einsum("...ij,...j->...i", M, u2)
    a, b, c = (u1 * Mu1).sum(-1), (u1 * Mu2).sum(-1), (u2 * Mu2).sum(-1)
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    out = np.stack([iso, mean - rad, mean + rad], axis=-1)
    out = np.where(safe[..., None], out, q[..., None])
    return np.sort(out, axis=-1) * scale[..., None]


def _check_constants(lam, Lam):
    if not (np.isfinite(lam) and np.isfinite(Lam)) or lam <= 0 or Lam < lam:
        raise InvalidInputError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")


def pucci_plus(M, lam: float, Lam: float):
    _check_constants(lam, Lam)
    e = sym_eigvals(M)
    out = Lam * np.where(e > 0, e, 0.0).sum(-1) + lam * np.where(e < 0, e, 0.0).sum(-1)
    return float(out) if out.ndim == 0 else out


def pucci_minus(M, lam: float, Lam: float):
    _check_constants(lam, Lam)
    e = sym_eigvals(M)
    out = lam * np.where(e > 0, e, 0.0).sum(-1) + Lam * np.where(e < 0, e, 0.0).sum(-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OperatorSpec:
    """F(M) = sup_t trace(A_t M), or one of the Pucci extremal operators."""

    lam: float
    Lam: float
    controls: np.ndarray = field(repr=False)
    mode: str = "bellman-sup"

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "Lam", float(self.Lam))
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        try:
            _check_constants(self.lam, self.Lam)
        except InvalidInputError as exc:
            raise ConfigurationError(str(exc)) from None
        A = np.asarray(self.controls, dtype=float)
        if A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[0] == 0:
            raise ConfigurationError("controls must be a nonempty list of n x n matrices")
        if A.shape[1] != A.shape[2] or A.shape[1] not in (2, 3):
            raise ConfigurationError(f"controls must be 2x2 or 3x3, got {A.shape[1:]}")
        if not np.allclose(A, np.swapaxes(A, 1, 2), atol=1e-14):
            raise ConfigurationError("controls must be symmetric")
        if self.mode == "laplacian":
            if self.lam != 1 or self.Lam != 1 or A.shape[0] != 1 or not np.allclose(A[0], np.eye(A.shape[1])):
                raise ConfigurationError("laplacian mode requires lambda = Lambda = 1 and controls = {I}")
        ev = sym_eigvals(A)
        tol = 1e-12 * max(1.0, self.Lam)
        if ev.min() < self.lam - tol or ev.max() > self.Lam + tol:
            bad = int(np.argmax((ev[:, 0] < self.lam - tol) | (ev[:, -1] > self.Lam + tol)))
            raise ConfigurationError(
                f"control {bad} has eigenvalues {ev[bad].tolist()} outside [{self.lam}, {self.Lam}]")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "controls", A)

    @property
    def n(self) -> int:
        return self.controls.shape[1]

    # constructors -----------------------------------------------------
    @classmethod
    def laplacian(cls, n: int = 2) -> "OperatorSpec":
        return cls(1.0, 1.0, np.eye(n)[None], "laplacian")

    @classmethod
    def pucci(cls, lam: float, Lam: float, n: int = 2, sign: str = "plus") -> "OperatorSpec":
        # controls carry the two extreme isotropic members for bookkeeping only
        return cls(lam, Lam, np.stack([lam * np.eye(n), Lam * np.eye(n)]), f"pucci-{sign}")

    @classmethod
    def isotropic(cls, lam: float, Lam: float, n: int = 2, count: int = 2) -> "OperatorSpec":
        """Bellman family {a I : a in linspace(lam, Lam, count)}."""
        a = np.linspace(lam, Lam, count)
        return cls(lam, Lam, a[:, None, None] * np.eye(n), "bellman-sup")

    # evaluation ---------------------------------------------------------
    def __call__(self, M):
        return bellman_eval(self, M)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "Lambda": self.Lam, "mode": self.mode,
                "controls": [a.tolist() for a in self.controls]}

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        try:
            return cls(float(d["lambda"]), float(d["Lambda"]),
                       np.asarray(d["controls"], dtype=float), d.get("mode", "bellman-sup"))
        except KeyError as exc:
            raise ConfigurationError(f"operator spec missing key {exc.args[0]!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OperatorSpec":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def bellman_eval(spec: OperatorSpec, M):
    """Evaluate F on a matrix or a stack of matrices."""
    M = _as_sym(M)
    if M.shape[-1] != spec.n:
        raise InvalidInputError(f"matrix dimension {M.shape[-1]} != operator dimension {spec.n}")
    if spec.mode == "pucci-plus":
        return pucci_plus(M, spec.lam, spec.Lam)
    if spec.mode == "pucci-minus":
        return pucci_minus(M, spec.lam, spec.Lam)
    if spec.mode == "laplacian":
        out = np.trace(M, axis1=-2, axis2=-1)
        return float(out) if out.ndim == 0 else out
    out = control_values(spec, M).max(axis=-1)
    return float(out) if out.ndim == 0 else out


def control_values(spec: OperatorSpec, M) -> np.ndarray:
    """trace(A_t M) for every control, shape (..., n_controls)."""
    M = np.asarray(M, dtype=float)
    return np.einsum("tij,...ij->...t", spec.controls, M)


@dataclass
class CheckReport:
    name: str
    passed: bool
    samples: int
    worst_margin: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "samples": self.samples,
                "worst_margin": float(self.worst_margin), **self.details}


def _random_sym(rng, count, n):
    X = rng.standard_normal((count, n, n))
    return 0.5 * (X + np.swapaxes(X, 1, 2))


def _random_psd(rng, count, n):
    X = rng.standard_normal((count, n, n))
    # mix in low-rank perturbations so rank-one directions are exercised
    rank = rng.integers(1, n + 1, size=count)
    mask = (np.arange(n)[None, :] < rank[:, None])[:, None, :]
    X = X * mask
    return X @ np.swapaxes(X, 1, 2)


def check_ellipticity(spec: OperatorSpec, samples: int = 1000, seed: int = 0) -> CheckReport:
    """lambda*tr(N) <= F(M+N) - F(M) <= Lambda*tr(N) for random M and N >= 0."""
    if samples < 1:
        raise InvalidInputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    M = _random_sym(rng, samples, spec.n)
    N = _random_psd(rng, samples, spec.n)
    diff = bellman_eval(spec, M + N) - bellman_eval(spec, M)
    normN = np.trace(N, axis1=1, axis2=2)
    scale = 1e-12 * (1.0 + np.abs(bellman_eval(spec, M)) + spec.Lam * normN)
    lower = diff - spec.lam * normN
    upper = spec.Lam * normN - diff
    margin = np.minimum(lower, upper)
    ok = margin >= -scale
    return CheckReport("ellipticity", bool(ok.all()), samples, float(margin.min()),
                       {"failures": int((~ok).sum()), "norm": "trace"})


def check_homogeneity(spec: OperatorSpec, samples: int = 1000, seed: int = 0,
                      factors=(-2.0, -1.0, 0.5, 3.0)) -> CheckReport:
    """Positive homogeneity F(tM) = tF(M), t > 0; for t < 0 compares F(tM)
    against |t| * F(-M) obtained by direct control enumeration."""
    rng = np.random.default_rng(seed)
    M = _random_sym(rng, samples, spec.n)
    FM = bellman_eval(spec, M)
    worst = 0.0
    for t in factors:
        lhs = bellman_eval(spec, t * M)
        if t >= 0:
            rhs = t * FM
        else:
            rhs = abs(t) * _enumerate(spec, -M)
        rel = np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))
        worst = max(worst, float(rel.max()))
    f0 = bellman_eval(spec, np.zeros((spec.n, spec.n)))
    odd_defect = float(np.abs(bellman_eval(spec, -M) + FM).max())
    passed = worst <= 1e-12 and f0 == 0.0
    return CheckReport("homogeneity", passed, samples, -worst,
                       {"F0": f0, "factors": list(factors), "odd_symmetry_defect": odd_defect})


def _enumerate(spec: OperatorSpec, M):
    """Independent evaluation: explicit loop over controls, or eigen-decomposition
    for the Pucci modes."""
    if spec.mode in ("pucci-plus", "pucci-minus"):
        w, Q = np.linalg.eigh(M)
        big = w > 0 if spec.mode == "pucci-plus" else w < 0
        coef = np.where(big, spec.Lam, spec.lam)
        return (coef * w).sum(-1)
    best = np.full(M.shape[:-2], -np.inf)
    for A in spec.controls:
        best = np.maximum(best, (A * M).sum(axis=(-1, -2)))
    return best
