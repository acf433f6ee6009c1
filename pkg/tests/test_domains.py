import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasihyp.domains import (HalfSpace, PBall, Polytope, Ray, ScalarField, apply_j, boundary_distance,
                              boundary_distance_bracket, contains, cube, ellipse, line_distance,
                              midpoint_convexity_violations, parse_domain, plane_slice_distance, quartic_body,
                              ray_hit, rounded_quartic_body, unit_ball)
from quasihyp.errors import InputError, PreconditionError

BODIES = {
    "ball": unit_ball(3),
    "square": cube(2),
    "ellipse": ellipse(),
    "l1": PBall(1.0, 2),
    "linf": PBall(math.inf, 2),
    "p3": PBall(3.0, 2),
    "rounded_quartic": rounded_quartic_body(),
    "polytope": Polytope([[1, 0], [0, 1], [-1, -1]], [1, 1, 1]),
}


def test_j_squares_to_minus_identity():
    E = np.eye(4)
    assert np.allclose(apply_j(apply_j(E)), -E)


def test_contains_examples():
    disk = unit_ball(2)
    assert contains(disk, [0, 0])
    assert not contains(disk, [1, 0])
    assert contains(cube(2), [0.5, -0.99])
    with pytest.raises(InputError):
        contains(disk, [0, 0, 0])


def test_ray_hit_examples():
    assert ray_hit(unit_ball(2), Ray([0, 0], [1, 0])) == pytest.approx(1.0, abs=1e-12)
    assert ray_hit(cube(2), Ray([0, 0], np.array([1, 1]) / math.sqrt(2))) == pytest.approx(math.sqrt(2), abs=1e-12)
    H = HalfSpace(2, base_point=[1.0, 0.0])
    assert ray_hit(H, Ray([1, 0], [-1, 0])) == pytest.approx(1.0)
    assert ray_hit(H, Ray([1, 0], [1, 0])) == math.inf
    with pytest.raises(PreconditionError):
        ray_hit(unit_ball(2), Ray([2, 0], [1, 0]))


def test_boundary_distance_examples():
    assert boundary_distance(unit_ball(2), [0.3, 0]) == pytest.approx(0.7, abs=1e-12)
    assert boundary_distance(cube(2), [0.2, -0.5]) == pytest.approx(0.5, abs=1e-12)
    assert boundary_distance(ellipse(), [0, 0]) == pytest.approx(1.0, abs=1e-9)


def test_ellipse_boundary_distance_brute_force():
    # independent oracle: min distance to 10^4 boundary samples
    th = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    B = np.column_stack([2 * np.cos(th), np.sin(th)])
    for p in ([0.0, 0.0], [0.7, 0.2], [-1.2, -0.3]):
        brute = np.min(np.linalg.norm(B - p, axis=1))
        assert boundary_distance(ellipse(), p) == pytest.approx(brute, rel=1e-4)


def test_sampled_bracket_contains_value():
    body = rounded_quartic_body()
    lo, hi = boundary_distance_bracket(body, [1.0, 0.2])
    assert lo <= boundary_distance(body, [1.0, 0.2]) <= hi
    assert hi - lo < 0.05 * hi


def test_line_distance_examples():
    assert line_distance(unit_ball(2), [0.3, 0], [0, 1]) == pytest.approx(math.sqrt(0.91), abs=1e-12)
    assert line_distance(cube(2), [0.9, 0], [1, 0]) == pytest.approx(0.1, abs=1e-12)
    c1 = unit_ball(1, ScalarField.COMPLEX)
    for v in ([1, 0], [0.3, -0.8], [0, 1]):
        assert line_distance(c1, [0.5, 0], v) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(PreconditionError):
        line_distance(unit_ball(2), [0, 0], [0, 0])


def test_plane_slice_examples():
    assert plane_slice_distance(unit_ball(3), [0, 0, 0], np.eye(3)[:, :2])[0] == pytest.approx(1.0, abs=1e-9)
    assert plane_slice_distance(cube(2), [0.5, 0.5], np.eye(2))[0] == pytest.approx(0.5, abs=1e-9)
    H = HalfSpace(3, base_point=[1.0, 0.0, 0.0])
    assert plane_slice_distance(H, [1, 0, 0], np.eye(3)[:, :2])[0] == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("name", sorted(BODIES))
def test_membership_consistent_with_ray_hits(name):
    body = BODIES[name]
    rng = np.random.default_rng(1)
    n = body.ambient_dim
    P = body.base_point + 0.3 * rng.uniform(-1, 1, (100, n)) * body.base_depth
    U = rng.standard_normal((100, n))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    h = body.hits(P, U)
    assert np.all(body.inside(P + (h * (1 - 1e-9))[:, None] * U))
    assert not np.any(body.inside(P + (h * (1 + 1e-9))[:, None] * U))


@pytest.mark.parametrize("name", sorted(BODIES))
def test_ray_hit_scales_with_body(name):
    body = BODIES[name]
    p = body.base_point
    rng = np.random.default_rng(2)
    U = rng.standard_normal((20, body.ambient_dim))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    big = body.scaled(2.5, p)
    P = np.repeat(p[None], 20, axis=0)
    assert np.allclose(big.hits(P, U), 2.5 * body.hits(P, U), rtol=1e-8)


@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(0, 2 * np.pi))
def test_complex_line_distance_at_most_real(x, y, th):
    body = unit_ball(2, ScalarField.COMPLEX)
    p = np.array([x, 0.1, y, -0.2])
    v = np.array([math.cos(th), 0.3, math.sin(th), 0.0])
    real = min(body.hits(p[None], v[None] / np.linalg.norm(v))[0], body.hits(p[None], -v[None] / np.linalg.norm(v))[0])
    assert line_distance(body, p, v) <= real + 1e-9


def test_boundary_distance_is_min_of_line_distances():
    body = ellipse()
    p = np.array([0.5, 0.3])
    th = np.linspace(0, np.pi, 2000)
    lines = [line_distance(body, p, [math.cos(t), math.sin(t)]) for t in th]
    assert boundary_distance(body, p) == pytest.approx(min(lines), rel=1e-5)


def test_quartic_fixtures_are_convex():
    assert midpoint_convexity_violations(quartic_body()) == []
    assert midpoint_convexity_violations(rounded_quartic_body()) == []


def test_parse_domain_rejects_unknown_keys():
    with pytest.raises(InputError, match="bogus"):
        parse_domain({"type": "pball", "p": 2, "dim": 2, "bogus": 1})
    with pytest.raises(InputError, match="'dim'"):
        parse_domain({"type": "pball", "p": 2})
    body = parse_domain({"type": "polytope", "dim": 2, "A": [[1, 0], [0, 1], [-1, 0], [0, -1]], "b": [1, 1, 1, 1]})
    assert body.bounded and contains(body, [0.9, 0.9])
    assert not parse_domain({"type": "halfspace", "dim": 3}).bounded


def test_base_point_must_be_interior():
    with pytest.raises(InputError):
        Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4), base_point=[1.0, 0.0])
