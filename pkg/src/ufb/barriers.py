"""Explicit radial barriers: non-degeneracy of maximal solutions and the
doubling barrier for cone solutions, checked by direct evaluation of F on
their analytic Hessians."""
from __future__ import annotations

import math

import numpy as np

from .operators import CheckReport, InvalidInputError, OperatorSpec, bellman_eval, pucci_plus


def _directions(rng, count, n):
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def nondegeneracy_gamma(n: int, lam: float, Lam: float) -> float:
    return Lam * (n - 1) / lam - 1.0


def nondegeneracy_constant(gamma: float) -> float:
    """c = (1 - 2^-gamma) / (4 gamma), continuously extended by ln2/4 at gamma = 0."""
    if abs(gamma) < 1e-8:
        return math.log(2.0) / 4.0 * (1 - gamma * math.log(2.0) / 2)
    return -math.expm1(-gamma * math.log(2.0)) / (4.0 * gamma)


def nondegeneracy_barrier(X: np.ndarray, gamma: float):
    """b and D^2 b for b = (1 - |x|^2)/2 inside B_1, phi(|x|) - phi(1) outside.

    phi = -log r when gamma = 0 and r^-gamma / gamma otherwise; C = 1/2
    makes b continuously differentiable across |x| = 1.
    """
    X = np.atleast_2d(X)
    n = X.shape[1]
    r = np.linalg.norm(X, axis=1)
    C = 0.5
    xh = X / np.where(r > 0, r, 1.0)[:, None]
    outer = np.einsum("ki,kj->kij", xh, xh)
    I = np.eye(n)
    if gamma == 0:
        b_out = -np.log(np.maximum(r, 1e-300))
    else:
        b_out = (np.maximum(r, 1e-300) ** -gamma - 1.0) / gamma
    b = np.where(r <= 1, C * (1 - r ** 2), b_out)
    H_out = -(np.maximum(r, 1e-300) ** (-gamma - 2))[:, None, None] * (I - (gamma + 2) * outer)
    H_in = np.broadcast_to(-2 * C * I, H_out.shape)
    H = np.where((r <= 1)[:, None, None], H_in, H_out)
    return b, H


def verify_nondegeneracy_barrier(n: int, lam: float, Lam: float, samples: int = 10_000,
                                 seed: int = 0) -> CheckReport:
    """Subsolution check of the normalized barrier under the Pucci maximal operator."""
    if n not in (2, 3):
        raise InvalidInputError("n must be 2 or 3")
    if not (0 < lam <= Lam):
        raise InvalidInputError("need 0 < lambda <= Lambda")
    gamma = nondegeneracy_gamma(n, lam, Lam)
    rng = np.random.default_rng(seed)
    r = rng.uniform(1.0, 4.0, samples)
    r[r <= 1.0] = np.nextafter(1.0, 2.0)
    X = _directions(rng, samples, n) * r[:, None]
    _, H = nondegeneracy_barrier(X, gamma)
    F_identity = pucci_plus(np.eye(n), lam, Lam)
    # b_hat = b / (2 C F(I)) with C = 1/2
    F_bhat = pucci_plus(H, lam, Lam) / F_identity
    xh = X / r[:, None]
    bracket = np.eye(n) - (gamma + 2) * np.einsum("ki,kj->kij", xh, xh)
    bracket_val = pucci_plus(bracket, lam, Lam)
    inside = pucci_plus(-np.eye(n), lam, Lam) / F_identity
    passed = bool(F_bhat.min() >= -1e-10)
    alt = None
    if n > 2 and gamma != 0:
        alt = (1 - 2.0 ** -(n - 2)) / (4 * gamma)
    return CheckReport("barrier-nondeg", passed, samples, float(F_bhat.min() + 1e-10), {
        "n": n, "lambda": lam, "Lambda": Lam, "gamma": gamma,
        "c": nondegeneracy_constant(gamma),
        "c_alternative_exponent": alt,
        "min_F_bhat": float(F_bhat.min()),
        "max_abs_pucci_bracket": float(np.abs(bracket_val).max()),
        "F_bhat_inside": float(inside),
    })


def doubling_alpha(lam: float, Lam: float) -> float:
    return 2.0 * Lam / lam


def doubling_epsilon(alpha: float) -> float:
    return math.exp(-alpha) / alpha


def doubling_barrier(X: np.ndarray, alpha: float):
    """b = 1 + (e^-alpha - e^{-alpha|x|^2}) / alpha^2 and its Hessian."""
    X = np.atleast_2d(X)
    n = X.shape[1]
    r2 = (X ** 2).sum(1)
    e = np.exp(-alpha * r2)
    b = 1 + (math.exp(-alpha) - e) / alpha ** 2
    H = (2 / alpha) * e[:, None, None] * (np.eye(n) - 2 * alpha * np.einsum("ki,kj->kij", X, X))
    return b, H


def sufficient_doubling_alpha(n: int, lam: float, Lam: float) -> float:
    """Smallest alpha with M+(D^2 b) <= 0 on the whole ring 1/2 <= |x| <= 1."""
    return 2.0 * (Lam * (n - 1) + lam) / lam


def verify_doubling_barrier(spec: OperatorSpec, samples: int = 10_000, seed: int = 0,
                            alpha: float | None = None) -> CheckReport:
    """Supersolution check F(D^2 b) <= 0 on the ring 1/2 <= |x| <= 1.

    With the default alpha = 2 Lambda / lambda the check fails near |x| = 1/2
    whenever F(I) > Lambda (e.g. the Laplacian in the plane); the report
    carries the failing radii and the outcome at the sufficient alpha.
    """
    n = spec.n
    a = doubling_alpha(spec.lam, spec.Lam) if alpha is None else float(alpha)
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0.25, 1.0, samples))
    r[0], r[-1] = 0.5, 1.0
    X = _directions(rng, samples, n) * r[:, None]
    _, H = doubling_barrier(X, a)
    F = np.asarray(bellman_eval(spec, H))
    bad = F > 1e-10
    details = {
        "alpha": a, "eps": doubling_epsilon(a), "max_F": float(F.max()),
        "failures": int(bad.sum()),
        "failing_radius_range": [float(r[bad].min()), float(r[bad].max())] if bad.any() else None,
    }
    if alpha is None:
        a2 = sufficient_doubling_alpha(n, spec.lam, spec.Lam)
        _, H2 = doubling_barrier(X, a2)
        F2 = np.asarray(bellman_eval(spec, H2))
        details.update({"alpha_sufficient": a2, "eps_sufficient": doubling_epsilon(a2),
                        "max_F_sufficient": float(F2.max()),
                        "passed_sufficient": bool(F2.max() <= 1e-10)})
    return CheckReport("barrier-doubling", not bad.any(), samples, float(-F.max()), details)
