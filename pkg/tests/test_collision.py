import math

import numpy as np
import pytest

from ternary.collision import (
    CollisionClass,
    ImpactPair,
    c_factor,
    check_collision_invariant,
    classify,
    classify_value,
    collide,
    cross_section,
    impact_pair_for_solution,
    is_conservation_solution,
    relative_cross_section,
    relative_speed2,
)

S = 1 / math.sqrt(2)
PAIR = ImpactPair([S, 0.0], [0.0, S])
V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def random_inputs(d, n, seed=0):
    rng = np.random.default_rng(seed)
    return ImpactPair.random(d, n, rng), rng.standard_normal((n, 3, d))


def test_cross_section_worked_values():
    assert cross_section(PAIR, [1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert cross_section(PAIR, [0.0, 0.0], [0.0, 0.0]) == 0.0
    post = collide(PAIR, V)
    assert relative_cross_section(PAIR, post) == pytest.approx(-math.sqrt(2), abs=1e-14)


def test_cross_section_dimension_mismatch():
    with pytest.raises(ValueError):
        cross_section(PAIR, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])


def test_c_factor_values():
    assert c_factor(PAIR, V) == pytest.approx(math.sqrt(2), abs=1e-15)
    half = ImpactPair([0.5, 0.5], [0.5, 0.5])
    assert c_factor(half, V) == pytest.approx(2 / 3, abs=1e-15)
    # pair orthogonal to the relative velocities (1, 0, 0, 1)
    orth = ImpactPair([S, 0.0], [0.0, -S])
    assert abs(c_factor(orth, V)) < 1e-15
    assert np.allclose(collide(orth, V), V, atol=1e-15)


def test_collide_worked_example():
    out = collide(PAIR, V)
    assert np.allclose(out, [[1, 1], [0, 0], [0, 0]], atol=1e-15)
    assert np.allclose(out.sum(0), V.sum(0))
    assert np.sum(out**2) == pytest.approx(2.0)


@pytest.mark.parametrize("d", [2, 3])
def test_conservation_laws(d):
    pair, v = random_inputs(d, 5000, d)
    vs = collide(pair, v)
    assert np.all(np.abs(vs.sum(1) - v.sum(1)) <= 1e-12 * (1 + np.abs(v.sum(1))))
    e0 = np.sum(v**2, axis=(1, 2))
    assert np.all(np.abs(np.sum(vs**2, axis=(1, 2)) - e0) <= 1e-12 * (1 + e0))
    r0 = relative_speed2(v)
    assert np.all(np.abs(relative_speed2(vs) - r0) <= 1e-12 * (1 + r0))


@pytest.mark.parametrize("d", [2, 3])
def test_micro_reversibility_and_involution(d):
    pair, v = random_inputs(d, 5000, 10 + d)
    vs = collide(pair, v)
    assert np.max(np.abs(relative_cross_section(pair, vs) + relative_cross_section(pair, v))) < 1e-12
    assert np.max(np.abs(collide(pair, vs) - v)) < 1e-12


def test_denominator_bound():
    pair, _ = random_inputs(3, 10000, 5)
    inner = pair.inner()
    assert np.all(1 + inner >= 0.5 - 1e-15)
    assert np.all(1 + inner <= 1.5 + 1e-15)


def test_classify():
    assert classify(PAIR, V) is CollisionClass.POST
    assert classify(-PAIR, V) is CollisionClass.PRE
    assert classify_value(0.0) is CollisionClass.GRAZING
    assert classify_value(-math.sqrt(2)) is CollisionClass.PRE


def test_classification_swaps_under_collision():
    pair, v = random_inputs(2, 200, 3)
    for i in range(200):
        before = classify(pair[i], v[i])
        after = classify(pair[i], collide(pair[i], v[i]))
        assert {before, after} == {CollisionClass.PRE, CollisionClass.POST}


def test_impact_pair_normalization():
    p = ImpactPair([1.0, 0.0], [1.0, 0.0])
    assert np.sum(p.stacked**2) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        ImpactPair([1e-4, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        ImpactPair([1.0, 0.0], [1.0, 0.0, 0.0])


def test_conservation_solution():
    assert is_conservation_solution(V, V, 1e-12)
    assert is_conservation_solution(V, collide(PAIR, V), 1e-12)
    assert not is_conservation_solution(V, [[1, 1], [1, 0], [0, 1]], 1e-12)


def sample_solution(v, rng):
    """A random triple with the momentum and energy of ``v``, built without collide."""
    mean = v.mean(0)
    dev = rng.standard_normal(v.shape)
    dev -= dev.mean(0)
    dev *= math.sqrt(np.sum((v - mean) ** 2) / np.sum(dev**2))
    return mean + dev


@pytest.mark.parametrize("d", [2, 3])
def test_every_conservation_solution_is_a_collision(d):
    rng = np.random.default_rng(d)
    for _ in range(50):
        v = rng.standard_normal((3, d))
        target = sample_solution(v, rng)
        assert is_conservation_solution(v, target, 1e-10)
        found = impact_pair_for_solution(v, target)
        assert found is not None
        assert np.allclose(collide(found, v), target, atol=1e-10)


def test_collision_invariants():
    assert check_collision_invariant(lambda v: np.ones(v.shape[:-1]), 10**4, 0) < 1e-12
    assert check_collision_invariant(lambda v: np.sum(v * v, -1), 10**4, 0) < 1e-10
    assert check_collision_invariant(lambda v: v[..., 1], 10**4, 0, d=3) < 1e-10
    assert check_collision_invariant(lambda v: v[..., 0] ** 3, 10**4, 0) > 1e-3
