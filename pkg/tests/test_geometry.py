import math

import numpy as np
import pytest

from ternary.collision import ImpactPair, collide, relative_cross_section
from ternary.geometry import (
    Configuration,
    CylinderSpec,
    DegenerateInputError,
    DomainError,
    axis_cylinder,
    ellipsoid_form,
    fd_jacobian_determinant,
    in_phase_space,
    is_good_configuration,
    loglog_slope,
    mc_ellipsoid_cap_fraction,
    mc_sphere_cylinder_fraction,
    measure_curve,
    min_backward_separation,
    ternary_distance,
    transition_jacobian,
    transition_map,
)

S = 1 / math.sqrt(2)
PAIR = ImpactPair([S, 0.0], [0.0, S])
V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def domain_points(d, n, seed, b_min=0.0):
    """Random (v, pair) with b > b_min * r."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        v = rng.standard_normal((3, d))
        pair = ImpactPair.random(d, rng=rng)
        b = relative_cross_section(pair, v)
        if b < 0:
            pair, b = -pair, -b
        r = math.sqrt(np.sum((v[0] - v[1]) ** 2) + np.sum((v[0] - v[2]) ** 2) + np.sum((v[1] - v[2]) ** 2))
        if b > b_min * r:
            out.append((v, pair))
    return out


def test_ternary_distance():
    x = np.array([0.3, -1.2])
    assert ternary_distance(x, x, x) == 0.0
    assert ternary_distance([0, 0], [1, 0], [0, 1]) == pytest.approx(math.sqrt(2))
    eps = 0.07
    assert ternary_distance([0, 0], [eps, 0], [0, eps]) ** 2 == pytest.approx(2 * eps**2)
    a, b, c = np.random.default_rng(0).standard_normal((3, 3))
    assert ternary_distance(a, b, c) == ternary_distance(a, c, b)
    assert ternary_distance(a, b, c) != pytest.approx(ternary_distance(b, a, c))


def test_ternary_distance_minimum_image():
    assert ternary_distance([0.05, 0.5], [0.95, 0.5], [0.05, 0.5], box=1.0) == pytest.approx(0.1)


def test_in_phase_space_examples():
    rng = np.random.default_rng(1)
    assert in_phase_space(Configuration(np.zeros((2, 2)), rng.standard_normal((2, 2))), 0.1)
    assert in_phase_space(Configuration(V, np.zeros((3, 2))), 0.1)
    assert not in_phase_space(Configuration([[0, 0], [0.05, 0], [0, 0.05]], np.zeros((3, 2))), 0.1)


def test_in_phase_space_is_ordered_only():
    # particle 2 sits between 0 and 1: only triplets centered at the middle
    # particle are close, and that is not an ordered triplet i < j < k
    x = [[-0.06, 0.0], [0.06, 0.0], [0.0, 0.0]]
    z = Configuration(x, np.zeros((3, 2)))
    assert in_phase_space(z, 0.065)
    assert not in_phase_space(z, 0.065, symmetric=True)


def test_min_backward_separation():
    assert min_backward_separation([3.0, 4.0], [0.0, 0.0]) == 5.0
    assert min_backward_separation([2.0, 0.0], [1.0, 0.0]) == pytest.approx(0.0)
    assert min_backward_separation([2.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0)
    assert min_backward_separation([2.0, 0.0], [1.0, 0.0], t0=3.0) == pytest.approx(1.0)


def test_good_configuration_examples():
    assert is_good_configuration(Configuration([[0.0, 0.0]], [[1.0, 0.0]]), 1.0, 0.0)
    # backward flow x - t v: velocities (1,0), (2,0) bring the pair together
    toward = Configuration([[0.0, 0.0], [2.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]])
    apart = Configuration([[0.0, 0.0], [2.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]])
    assert not is_good_configuration(toward, 1.0, 0.0)
    assert is_good_configuration(apart, 1.0, 0.0)


def test_good_configuration_monotone():
    rng = np.random.default_rng(2)
    for _ in range(200):
        z = Configuration(rng.uniform(-3, 3, (4, 2)), rng.standard_normal((4, 2)))
        if is_good_configuration(z, 0.5, 1.0):
            assert is_good_configuration(z, 0.3, 1.0)
            assert is_good_configuration(z, 0.5, 2.0)


def test_transition_map_worked_example():
    im = transition_map(V, PAIR)
    assert np.allclose(im.nu1, [0.5, 0.5], atol=1e-15)
    assert np.allclose(im.nu2, [0.5, 0.5], atol=1e-15)
    assert abs(ellipsoid_form(im.nu1, im.nu2) - 1.0) <= 1e-12


def test_transition_map_scale_invariant_and_domain():
    mean = V.mean(0)
    scaled = mean + 3.7 * (V - mean)
    a, b = transition_map(V, PAIR), transition_map(scaled, PAIR)
    assert np.allclose(a.nu1, b.nu1) and np.allclose(a.nu2, b.nu2)
    with pytest.raises(DomainError):
        transition_map(V, -PAIR)
    with pytest.raises(DegenerateInputError):
        transition_map(np.ones((3, 2)), PAIR)


@pytest.mark.parametrize("d", [2, 3])
def test_transition_map_lands_on_ellipsoid(d):
    rng = np.random.default_rng(d)
    v = rng.standard_normal((10**4, 3, d))
    pair = ImpactPair.random(d, 10**4, rng)
    flip = relative_cross_section(pair, v) < 0
    pair = ImpactPair(np.where(flip[:, None], -pair.omega1, pair.omega1), np.where(flip[:, None], -pair.omega2, pair.omega2))
    im = transition_map(v, pair)
    assert np.max(np.abs(ellipsoid_form(im.nu1, im.nu2) - 1.0)) <= 1e-12


def test_transition_map_differs_from_pre_collision():
    v, pair = domain_points(2, 1, 0, 0.1)[0]
    im = transition_map(v, pair)
    r = math.sqrt(np.sum((v[0] - v[1]) ** 2) + np.sum((v[0] - v[2]) ** 2) + np.sum((v[1] - v[2]) ** 2))
    assert not np.allclose(im.nu1, (v[0] - v[1]) / r)


def test_jacobian_worked_example():
    jac = transition_jacobian(V, PAIR)
    assert jac == pytest.approx(4.5, abs=1e-12)
    fd = fd_jacobian_determinant(V, PAIR.stacked)
    assert abs(fd - jac) / jac < 1e-5
    assert transition_jacobian(2 * V, PAIR) == pytest.approx(4.5, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_jacobian_matches_finite_differences(d):
    worst = 0.0
    for v, pair in domain_points(d, 200, 10 + d, b_min=0.1):
        jac = transition_jacobian(v, pair)
        assert jac > 0
        worst = max(worst, abs(fd_jacobian_determinant(v, pair.stacked) - jac) / jac)
    assert worst < 1e-5


def test_transition_map_injective_spot_check():
    pts = domain_points(2, 300, 4, b_min=0.05)
    v = pts[0][0]
    images, pairs = [], []
    rng = np.random.default_rng(5)
    while len(images) < 300:
        pair = ImpactPair.random(2, rng=rng)
        if relative_cross_section(pair, v) > 0.05:
            im = transition_map(v, pair)
            images.append(np.concatenate([im.nu1, im.nu2]))
            pairs.append(pair.stacked)
    images, pairs = np.array(images), np.array(pairs)
    for i in range(len(images)):
        far = np.linalg.norm(pairs - pairs[i], axis=1) > 1e-6
        assert np.all(np.linalg.norm(images[far] - images[i], axis=1) > 1e-9)


def test_sphere_cylinder_trivial_limits():
    assert mc_sphere_cylinder_fraction(2, axis_cylinder(2, 1.0), 10**4, 0).value == 1.0
    small = mc_sphere_cylinder_fraction(2, axis_cylinder(2, 1e-6), 10**4, 0).value
    assert small < 1e-3
    with pytest.raises(ValueError):
        mc_sphere_cylinder_fraction(2, axis_cylinder(2, 0.1), 100, 0)


def test_ellipsoid_cap_trivial_limits():
    for region in ("ball-first-block", "ball-second-block", "strip"):
        assert mc_ellipsoid_cap_fraction(2, region, 10**4, 0, rho=2.0).value == pytest.approx(1.0)
        assert mc_ellipsoid_cap_fraction(2, region, 10**4, 0, rho=1e-5).value < 1e-3
    with pytest.raises(ValueError):
        mc_ellipsoid_cap_fraction(2, "disc", 10**4, 0, rho=0.1)


def test_cylinder_spec_validation():
    with pytest.raises(ValueError):
        CylinderSpec([0, 0], [0, 0], 1.0)
    with pytest.raises(ValueError):
        CylinderSpec([0, 0], [1, 0], 0.0)


def test_loglog_slope_exact_power():
    rho = 2.0 ** -np.arange(3, 10)
    assert loglog_slope(rho, 3 * rho**1.5) == pytest.approx(1.5)


@pytest.mark.parametrize("d", [2, 3])
def test_measured_exponents(d):
    # the measured decay exponents, in place of the (d-1)/2 upper-bound rate
    rho = 2.0 ** -np.arange(3, 8)
    _, cyl = measure_curve("sphere-cylinder", d, rho, 2 * 10**5, 1)
    _, ball = measure_curve("ball-first-block", d, 2.0 ** -np.arange(2, 6), 4 * 10**5, 1)
    _, tangent = measure_curve("sphere-surface-tangent", d, rho, 2 * 10**5, 1)
    assert cyl == pytest.approx(d - 1, abs=0.1)
    assert ball == pytest.approx(d, abs=0.25)
    assert tangent == pytest.approx(d - 1.5, abs=0.1)
