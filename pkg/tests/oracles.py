"""Independent reference computations used by the tests.

Nothing here imports the package under test; each oracle is a direct,
brute-force or closed-form evaluation.
"""
import math

import mpmath
import numpy as np


def pucci_plus_eigh(M, lam, Lam):
    w = np.linalg.eigvalsh(np.asarray(M, float))
    return float(Lam * w[w > 0].sum() + lam * w[w < 0].sum())


def pucci_minus_eigh(M, lam, Lam):
    w = np.linalg.eigvalsh(np.asarray(M, float))
    return float(lam * w[w > 0].sum() + Lam * w[w < 0].sum())


def bellman_loop(controls, M):
    return max(float(np.sum(np.asarray(A) * M)) for A in controls)


def beta_high_precision(t, eps):
    if t >= 0:
        return mpmath.mpf(1)
    return mpmath.exp(-(mpmath.mpf(-t) ** 3) / mpmath.mpf(eps) ** 3)


def radial_solution(x, lam, n, R):
    r2 = float(np.dot(x, x))
    return (R * R - r2) / (2 * n * lam) if r2 < R * R else 0.0


def nondeg_constant(n, lam, Lam):
    gamma = Lam * (n - 1) / lam - 1
    if gamma == 0:
        return math.log(2) / 4
    return (1 - 2.0 ** -gamma) / (4 * gamma)


def hausdorff_brute(A, B):
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    D = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))
    return float(max(D.min(1).max(), D.min(0).max()))


def flatness_lower_bound(fb_points, x0, r, pitch_deg=0.5):
    """Certified lower bound of inf over planar quadratic cones of the Hausdorff
    distance between the free boundary and the cone inside B_r(x0).

    Only the free-boundary-to-cone half is used: for each line pair, every FB
    point's distance to the pair (full lines through x0) is exact and bounds
    its distance to the clipped cone from below.  That distance is Lipschitz
    in each angle with constant r, so the minimum over an angle grid of the
    given pitch, minus r * pitch / 2, bounds every pair.  Single (double)
    lines are the diagonal pairs and definite forms contribute max |a - x0|.
    """
    x0 = np.asarray(x0, float)
    P = fb_points[np.linalg.norm(fb_points - x0, axis=1) <= r] - x0
    K = int(round(180 / pitch_deg))
    t = np.pi * np.arange(K) / K
    D = np.abs(np.outer(np.cos(t), P[:, 1]) - np.outer(np.sin(t), P[:, 0]))   # (K, points)
    best = float(np.linalg.norm(P, axis=1).max())
    for i in range(K):
        pair = np.minimum(D[i][None, :], D).max(axis=1)
        best = min(best, float(pair.min()))
    return best - r * math.radians(pitch_deg) / 2, best


def harmonic_sector(theta0, X):
    """r^kappa sin(kappa theta) with kappa = pi / theta0, theta measured from the x1 axis."""
    r = np.linalg.norm(X, axis=-1)
    th = np.mod(np.arctan2(X[..., 1], X[..., 0]), 2 * np.pi)
    k = np.pi / theta0
    return r ** k * np.sin(k * th)
