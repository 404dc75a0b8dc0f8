import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import bellman_loop, pucci_minus_eigh, pucci_plus_eigh
from ufb.operators import (ConfigurationError, InvalidInputError, OperatorSpec, bellman_eval, check_ellipticity,
                           check_homogeneity, pucci_minus, pucci_plus, sym_eigvals)

entries = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def sym(n):
    return arrays(float, (n, n), elements=entries).map(lambda A: 0.5 * (A + A.T))


def test_pucci_plus_examples():
    assert pucci_plus(np.eye(2), 1, 2) == 4
    assert pucci_plus(np.diag([2.0, -1.0]), 1, 2) == 3
    assert pucci_plus(np.zeros((2, 2)), 1, 2) == 0


def test_pucci_minus_examples():
    assert pucci_minus(np.diag([2.0, -1.0]), 1, 2) == 0
    assert pucci_minus(np.eye(3), 1, 2) == 3


def test_pucci_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        pucci_plus(np.array([[np.nan, 0], [0, 1]]), 1, 2)


@settings(max_examples=200, deadline=None)
@given(st.one_of(sym(2), sym(3)))
def test_closed_form_eigenvalues_match_eigvalsh(M):
    np.testing.assert_allclose(sym_eigvals(M), np.linalg.eigvalsh(M), atol=1e-9 * (1 + np.abs(M).max()))


@settings(max_examples=200, deadline=None)
@given(st.one_of(sym(2), sym(3)))
def test_pucci_against_eigh_oracle(M):
    tol = 1e-9 * (1 + np.abs(M).max())
    assert abs(pucci_plus(M, 1, 3) - pucci_plus_eigh(M, 1, 3)) <= tol
    assert abs(pucci_minus(M, 1, 3) - pucci_minus_eigh(M, 1, 3)) <= tol
    assert pucci_minus(M, 1, 3) <= pucci_plus(M, 1, 3) + tol


def test_bellman_single_control_is_trace():
    spec = OperatorSpec(1, 1, np.eye(2)[None])
    M = np.array([[1.5, 0.3], [0.3, -4.0]])
    assert bellman_eval(spec, M) == pytest.approx(np.trace(M))


def test_bellman_enumeration_example():
    spec = OperatorSpec(1, 2, np.stack([np.eye(2), np.diag([2.0, 1.0])]))
    assert bellman_eval(spec, np.diag([-1.0, 1.0])) == 0.0


def test_empty_controls_rejected():
    with pytest.raises(ConfigurationError):
        OperatorSpec(1, 2, np.zeros((0, 2, 2)))


def test_control_outside_ellipticity_band_rejected():
    with pytest.raises(ConfigurationError):
        OperatorSpec(1, 2, np.diag([1.0, 2.5])[None])


def _random_controls(rng, count, n, lam, Lam):
    out = []
    for _ in range(count):
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        out.append(Q @ np.diag(rng.uniform(lam, Lam, n)) @ Q.T)
    return np.stack(out)


def test_bellman_inside_pucci_envelope():
    rng = np.random.default_rng(3)
    spec = OperatorSpec(1, 2, _random_controls(rng, 7, 3, 1, 2))
    M = rng.standard_normal((500, 3, 3))
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    F = bellman_eval(spec, M)
    assert np.all(F <= pucci_plus(M, 1, 2) + 1e-12)
    assert np.all(F >= pucci_minus(M, 1, 2) - 1e-12)
    for k in range(20):
        assert F[k] == pytest.approx(bellman_loop(spec.controls, M[k]), abs=1e-12)


def test_monotone_and_subadditive():
    rng = np.random.default_rng(4)
    spec = OperatorSpec(1, 2, _random_controls(rng, 5, 2, 1, 2))
    M = rng.standard_normal((300, 2, 2))
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    X = rng.standard_normal((300, 2, 2))
    N = X @ np.swapaxes(X, 1, 2)
    assert np.all(bellman_eval(spec, M) <= bellman_eval(spec, M + N) + 1e-12)
    assert np.all(bellman_eval(spec, M + N) <= bellman_eval(spec, M) + bellman_eval(spec, N) + 1e-12)


def test_pucci_plus_equals_dense_rank_one_family():
    t = np.pi * np.arange(4000) / 4000
    n = np.stack([np.cos(t), np.sin(t)], 1)
    controls = np.concatenate([[np.eye(2), 2 * np.eye(2)], np.eye(2) + np.einsum("ki,kj->kij", n, n)])
    spec = OperatorSpec(1, 2, controls)
    rng = np.random.default_rng(5)
    for _ in range(50):
        M = rng.standard_normal((2, 2))
        M = 0.5 * (M + M.T)
        assert bellman_eval(spec, M) == pytest.approx(pucci_plus(M, 1, 2), abs=1e-6)


def test_check_ellipticity_cases():
    rep = check_ellipticity(OperatorSpec.laplacian(2), 500)
    assert rep.passed and abs(rep.worst_margin) < 1e-12
    assert check_ellipticity(OperatorSpec.pucci(1, 2, 2, "plus"), 10_000).passed
    assert check_ellipticity(OperatorSpec.isotropic(1, 3, 3, 4), 2000).passed


def test_check_homogeneity_negative_factors():
    spec = OperatorSpec(1, 2, np.stack([np.eye(2), np.diag([2.0, 1.0]), np.diag([1.0, 2.0])]))
    rep = check_homogeneity(spec, 2000, seed=1)
    assert rep.passed
    assert rep.details["F0"] == 0.0
    # a convex non-linear F is not odd, so F(-M) != -F(M) in general
    assert rep.details["odd_symmetry_defect"] > 0


def test_spec_round_trip_and_digest():
    spec = OperatorSpec.isotropic(1, 2, 2, 3)
    again = OperatorSpec.from_json(spec.to_json())
    assert again.to_json() == spec.to_json()
    assert again.digest() == spec.digest()
