import math

import numpy as np
import pytest

from ufb.geometry import InvalidInputError
from ufb.grid import Disc, Grid, GridField
from ufb.solver import exact_radial_solution
from ufb.stratify import (DomainError, GrowthProfile, StructureError, ball_sup, classify_point,
                          classify_singular_points, cluster_angles, dichotomy_check, growth_profile,
                          junction_arcs, monotonicity_probe)

G64 = Grid.square(1.0, 1 / 64)


def _profile(M, h, k_min=1):
    ks = np.arange(k_min, k_min + len(M))
    return GrowthProfile(np.zeros(2), ks, 2.0 ** -ks, np.asarray(M, float), np.asarray(h, float))


def test_ball_sup_is_exact_for_quadratics():
    f = GridField.sample(G64, lambda X: X[..., 0] ** 2 - 0.5 * X[..., 1] ** 2)
    assert ball_sup(f, [0, 0], 0.25) == 0.0625
    assert ball_sup(f, [0.1, 0.0], 0.0) >= 0


def test_profile_of_homogeneous_quadratic_decays_by_four():
    f = GridField.sample(G64, lambda X: X[..., 0] ** 2 - 0.5 * X[..., 1] ** 2)
    prof = growth_profile(f, [0, 0], 1, 5, with_flatness=False)
    assert np.all(prof.M[1:] / prof.M[:-1] == 0.25)


def test_profile_of_cubic_decays_by_eight():
    f = GridField.sample(G64, lambda X: np.linalg.norm(X, axis=-1) ** 3)
    prof = growth_profile(f, [0, 0], 1, 4, with_flatness=False)
    np.testing.assert_allclose(prof.M[1:] / prof.M[:-1], 0.125, rtol=1e-3)


def test_profile_of_zero_patch():
    f = GridField(G64, np.zeros(G64.shape))
    prof = growth_profile(f, [0, 0], 1, 5)
    assert np.all(prof.M == 0)
    assert np.all(np.isnan(prof.h))
    assert classify_point(f, [0, 0], params={"k_min": 1, "k_max": 5}).cls == "degenerate"


def test_profile_rejects_ball_outside_domain():
    with pytest.raises(DomainError):
        growth_profile(GridField(G64, np.zeros(G64.shape)), [0.8, 0], 1, 3)


def test_dichotomy_pure_decay_needs_no_constant():
    M = [4 * 0.25 ** k for k in range(1, 6)]
    res = dichotomy_check(_profile(M, [1.0] * 5), 0.05, 1e-9)
    assert res.all_passed and res.fitted_C == 0.0 and all(res.checked)


def test_dichotomy_no_decay_fails_with_tiny_constant():
    M = [1.0, 1.0, 0.25, 0.0625]
    res = dichotomy_check(_profile(M, [1.0] * 4), 0.05, 1e-6)
    assert res.passed == [False, True, True]
    assert res.required_C[0] == 1.0 / 0.5 ** 2
    assert dichotomy_check(_profile(M, [1.0] * 4), 0.05, 4.0).all_passed


def test_dichotomy_skips_flat_levels():
    M = [1.0, 1.0, 1.0]
    res = dichotomy_check(_profile(M, [0.0, 0.0, 0.0]), 0.05, 1e-6)
    assert res.checked == [False, False] and res.all_passed and res.fitted_C == 0.0
    with pytest.raises(InvalidInputError):
        dichotomy_check(_profile(M, [0.0] * 3), 0.0, 1.0)


def test_dichotomy_disc_radial_constant_matches_oracle():
    # M(r) = (2 R r - r^2) / 4 at a free-boundary point of the radial solution
    R = 0.5
    f = exact_radial_solution(1, 2, R, G64)
    prof = growth_profile(f, [R, 0.0], 1, 5)
    M = lambda r: (2 * R * r - r * r) / 4
    np.testing.assert_allclose(prof.M, [M(r) for r in prof.radii], rtol=1e-12)
    res = dichotomy_check(prof, 0.05, 1e3)
    assert res.all_passed
    oracle = max(M(prof.radii[i + 1]) / prof.radii[i] ** 2
                 for i, c in enumerate(res.checked) if c and res.required_C[i] > 0)
    assert res.fitted_C == pytest.approx(oracle, rel=1e-12)
    assert res.fitted_C == pytest.approx(1.9375, rel=1e-12)


def test_classify_cross_is_rank2_flat(cross_field):
    out = classify_singular_points(cross_field)
    assert len(out) == 1
    pc = out[0]
    assert pc.cls == "rank-2-flat"
    assert np.linalg.norm(pc.x0) < 1e-12
    assert pc.witness["junction"]["slope"] == pytest.approx(2, abs=0.02)


def test_classify_disc_points_are_regular():
    g = Grid.square(1.25, 1 / 64, disc=Disc((0, 0), 1.0))
    f = exact_radial_solution(1, 2, 0.5, g)
    pts = [[0.5 * math.cos(t), 0.5 * math.sin(t)] for t in (0.3, 2.0, 4.0)]
    assert {c.cls for c in classify_singular_points(f, points=pts)} == {"regular"}


def test_classify_quadratic_growth_point():
    f = GridField.sample(G64, lambda X: (X ** 2).sum(-1) - 0.25 ** 2)
    pc = classify_point(f, [0.25, 0.0], params={"k_min": 2, "k_max": 4, "tol_g": 1.0})
    assert pc.cls == "quadratic-growth"
    # M(r) = 2 rho r + r^2, so level r needs C = M(r/2)/r^2 = 1/(4r) + 1/4; smallest checked r = 1/8
    assert pc.dichotomy.fitted_C == pytest.approx(1 / (4 * 0.125) + 0.25, rel=1e-9)


def test_classification_scaling_invariance(bent_cross_field):
    base = classify_point(bent_cross_field, [0, 0], params={"k_min": 2, "k_max": 4})
    # identical node data on a grid twice as large: u(x/2) scaled, levels shift by one
    big = GridField(Grid.square(1.0, 1 / 128), bent_cross_field.values / base.profile.M[0])
    scaled = classify_point(big, [0, 0], params={"k_min": 1, "k_max": 3})
    assert scaled.cls == base.cls == "rank-2-flat"
    np.testing.assert_allclose(scaled.profile.h, 2 * base.profile.h, rtol=1e-9)


def test_classify_parallel_matches_serial(cross_field):
    pts = [[0, 0], [0.1, 0.2], [-0.1, 0.2]]
    a = [c.to_dict() for c in classify_singular_points(cross_field, points=pts)]
    b = [c.to_dict() for c in classify_singular_points(cross_field, points=pts, workers=3)]
    assert a == b


def test_probe_examples():
    f = GridField.sample(G64, lambda X: X[..., 1] ** 2 - X[..., 0] ** 2)
    assert monotonicity_probe(f, [0, 0], 0.2, 0.25, 1.0).passed
    rep = monotonicity_probe(GridField.sample(G64, lambda X: -X[..., 1]), [0, 0], 0.2, 0.25, 1.0)
    assert not rep.passed and rep.min_value == pytest.approx(-1.0)
    assert len(rep.violations) == 10
    with pytest.raises(DomainError):
        monotonicity_probe(f, [0, 0], 0.2, 0.5, 1.0)


def test_junction_on_exact_cross(cross_field):
    res = junction_arcs(cross_field, [0, 0], [0.25, 0.125, 0.0625])
    assert res.arcs.shape == (3, 4)
    assert res.max_deviation().max() <= res.pitch
    assert res.slope == pytest.approx(2, abs=0.02)


def test_junction_bent_cross_tangency(bent_cross_field):
    res = junction_arcs(bent_cross_field, [0, 0], [0.25, 0.125, 0.0625])
    worst = res.deviations.max(1)
    assert np.all(worst[1:] <= 0.8 * worst[:-1] + res.pitch)


def test_junction_three_clusters_is_structure_error():
    # rays at 0, 12, 120 and 240 degrees: the two nearby rays fall in one cluster
    a = np.radians([0.0, 12.0, 120.0, 240.0])

    def u(X):
        th = np.arctan2(X[..., 1], X[..., 0])
        return (X ** 2).sum(-1) * np.prod([np.sin((th - t) / 2) for t in a], axis=0)

    f = GridField.sample(Grid.square(0.5, 1 / 128), u)
    with pytest.raises(StructureError) as exc:
        junction_arcs(f, [0, 0], [0.25, 0.125])
    assert set(exc.value.counts.values()) == {3}


def test_cluster_angles_wraps():
    c = cluster_angles(np.radians([359.0, 1.0, 90.0, 180.0, 270.0]), math.radians(20))
    assert len(c) == 4
    assert np.abs(np.angle(np.exp(1j * c))).min() < 1e-9
