import math

import mpmath
import numpy as np
import pytest

from oracles import nondeg_constant
from ufb.barriers import (doubling_alpha, doubling_barrier, doubling_epsilon, nondegeneracy_barrier,
                          nondegeneracy_constant, nondegeneracy_gamma, sufficient_doubling_alpha,
                          verify_doubling_barrier, verify_nondegeneracy_barrier)
from ufb.operators import InvalidInputError, OperatorSpec, pucci_plus


@pytest.mark.parametrize("n,lam,Lam", [(2, 1, 1), (2, 1, 2), (3, 1, 2), (3, 1, 1), (3, 2, 5)])
def test_nondegeneracy_barrier_is_subsolution(n, lam, Lam):
    rep = verify_nondegeneracy_barrier(n, lam, Lam, 10_000)
    assert rep.passed
    assert rep.details["max_abs_pucci_bracket"] <= 1e-10
    assert rep.details["c"] == pytest.approx(nondeg_constant(n, lam, Lam), abs=1e-12)


def test_nondegeneracy_constants():
    assert nondegeneracy_gamma(3, 1, 1) == 1
    assert nondegeneracy_constant(1.0) == pytest.approx(0.125, abs=1e-15)
    assert nondegeneracy_constant(0.0) == pytest.approx(math.log(2) / 4, abs=1e-15)
    # continuous across gamma = 0
    assert nondegeneracy_constant(1e-9) == pytest.approx(math.log(2) / 4, abs=1e-9)
    for g in (1e-6, 1e-3, 0.5):
        with mpmath.workdps(40):
            exact = float((1 - mpmath.power(2, -mpmath.mpf(g))) / (4 * mpmath.mpf(g)))
        assert nondegeneracy_constant(g) == pytest.approx(exact, rel=1e-13)


def test_nondegeneracy_barrier_is_c1_at_unit_sphere():
    for gamma in (0.0, 1.0, 2.5):
        d = np.array([[0.6, 0.8]])
        t = 1e-7
        b_in, _ = nondegeneracy_barrier(d * (1 - t), gamma)
        b_out, _ = nondegeneracy_barrier(d * (1 + t), gamma)
        b1, _ = nondegeneracy_barrier(d, gamma)
        assert b1[0] == pytest.approx(0.0, abs=1e-15)
        assert (b_out[0] - b1[0]) / t == pytest.approx((b1[0] - b_in[0]) / t, abs=1e-5)


def test_nondegeneracy_barrier_hessian_matches_differences():
    x = np.array([1.7, -0.4])
    gamma = 1.5
    _, H = nondegeneracy_barrier(x, gamma)
    e = 1e-4
    Hn = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * e, np.eye(2)[j] * e
            f = lambda y: nondegeneracy_barrier(y, gamma)[0][0]
            Hn[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * e * e)
    np.testing.assert_allclose(H[0], Hn, atol=1e-5)


def test_nondegeneracy_invalid_constants():
    with pytest.raises(InvalidInputError):
        verify_nondegeneracy_barrier(4, 1, 1)
    with pytest.raises(InvalidInputError):
        verify_nondegeneracy_barrier(2, 2, 1)


def test_doubling_constants():
    assert doubling_alpha(1, 1) == 2
    assert doubling_epsilon(2.0) == pytest.approx(math.exp(-2) / 2, rel=1e-15)
    b, _ = doubling_barrier(np.array([[1.0, 0.0]]), 2.0)
    assert b[0] == pytest.approx(1.0, abs=1e-15)


def test_doubling_barrier_laplacian_default_alpha_fails_near_inner_ring():
    rep = verify_doubling_barrier(OperatorSpec.laplacian(2), 10_000)
    assert not rep.passed
    lo, hi = rep.details["failing_radius_range"]
    assert lo == pytest.approx(0.5, abs=1e-12) and hi < 0.71
    assert rep.details["passed_sufficient"]
    assert rep.details["alpha_sufficient"] == sufficient_doubling_alpha(2, 1, 1) == 4


def test_doubling_barrier_laplacian_radial_profile():
    # closed form check of the failure region: M+(D^2 b) at radius r
    alpha = 2.0
    for r in (0.5, 0.6, 0.75, 1.0):
        _, H = doubling_barrier(np.array([[r, 0.0]]), alpha)
        e = math.exp(-alpha * r * r)
        radial = (2 / alpha) * e * (1 - 2 * alpha * r * r)
        tangential = (2 / alpha) * e
        expected = tangential + radial  # lambda = Lambda = 1: M+ is the trace
        assert pucci_plus(H[0], 1, 1) == pytest.approx(expected, abs=1e-14)
        assert (expected > 0) == (r * r < (1 + 1) / (2 * alpha))
