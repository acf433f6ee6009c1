import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasihyp.errors import CheckFailed, InputError, PreconditionError
from quasihyp.filling import (Horizontal, Lengths, ModelMetric, StarCurve, Vertical, builtin_metric, check_conditions,
                              curve_length, derive_constants, isoperimetric_audit, linear_envelope, model_distance,
                              normalize_to_star, random_closed_curve, random_star_curve, reduce_and_fill, replay)

M = builtin_metric()
T0_ORACLE = math.log(2) + 0.1


@pytest.fixture(scope="module")
def consts():
    return derive_constants(M)


def test_constants_of_builtin_metric(consts):
    assert consts.T0 == pytest.approx(0.793147, abs=1e-6)
    assert consts.T0 == pytest.approx(T0_ORACLE, abs=1e-15)
    assert consts.L == 1.0
    assert 2 * (1 + consts.T0) == pytest.approx(3.586294, abs=1e-6)
    assert consts.R == max(2.0, 2 * (1 + consts.T0), consts.diam_num, 4.5)
    assert consts.R >= 4.5


def test_doubling_C2_does_not_decrease_L_or_R(consts):
    other = derive_constants(ModelMetric(C2=2.0))
    assert other.L >= consts.L and other.R >= consts.R


def test_invalid_constants_rejected():
    with pytest.raises(InputError):
        ModelMetric(C1=0.0)


def test_conditions_hold_with_unit_constants():
    slack = check_conditions(M)
    assert all(v >= -1e-12 for v in slack.values())


def test_conditions_detect_a_bad_constant():
    # the built-in norm does not satisfy (c) with lambda = 2
    slack = check_conditions(dataclasses.replace(M, lam=2.0))
    assert min(slack.values()) < 0


def test_vertical_distance_example():
    lo, up = model_distance(M, (0.3, 0.5), (0.3, 0.25))
    assert lo == pytest.approx(math.log(2), abs=1e-12)
    assert up == pytest.approx(math.log(2), abs=1e-6)


def test_distance_of_a_point_to_itself():
    assert model_distance(M, (0.2, 0.4), (0.2, 0.4)) == (0.0, 0.0)


@given(st.floats(0, 1), st.floats(0.01, 1), st.floats(0, 1), st.floats(0.01, 1))
def test_distance_bounds_symmetric_and_ordered(x, t, y, s):
    lo, up = model_distance(M, (x, t), (y, s), refine=False)
    lo2, up2 = model_distance(M, (y, s), (x, t), refine=False)
    assert lo <= up + 1e-12
    assert up == pytest.approx(up2, abs=1e-9) and lo == pytest.approx(lo2, abs=1e-12)


def test_distance_rejects_points_outside():
    with pytest.raises(PreconditionError):
        model_distance(M, (0.0, 0.0), (0.0, 0.5))


def test_horizontal_length_scales_with_depth():
    assert curve_length(M, [[0, 0.5], [0.25, 0.5]]) == pytest.approx(0.5, rel=1e-12)
    assert curve_length(M, [[0, 1.0], [0, 0.1]]) == pytest.approx(math.log(10), rel=1e-9)


def square_word(consts, level=0, width=0.2):
    return StarCurve([Vertical(0.0, level, "down"), Horizontal(level + 1, (0.0, width)),
                      Vertical(width, level, "up"), Horizontal(level, (width, 0.0))])


def as_polyline(star, T0):
    pts = []
    for p in star.pieces:
        if isinstance(p, Vertical):
            pts.append([p.start[0], math.exp(-p.start[1] * T0)])
        else:
            pts.extend([x, math.exp(-p.level * T0)] for x in p.path[:-1])
    pts.append(pts[0])
    return pts


def test_normalization_is_idempotent_on_star_curves(consts):
    star = square_word(consts)
    out, rep = normalize_to_star(M, as_polyline(star, consts.T0), consts)
    assert out.N == star.N and rep.already_star
    assert out.to_json() == star.to_json()


def test_circle_normalization_obeys_the_count_bound(consts):
    t = math.exp(-1.5 * consts.T0)
    P = [[i / 16, t] for i in range(17)]
    star, rep = normalize_to_star(M, P, consts)
    assert rep.length_in == pytest.approx(1 / t, rel=1e-9)
    assert star.N <= (1 + 1 / t) * (2 + 2 / consts.T0)
    assert rep.length_out <= rep.length_in + 1 + 1e-9


def test_normalization_reversal_keeps_N(consts):
    P = random_closed_curve(np.random.default_rng(3), 20.0, M)
    a, _ = normalize_to_star(M, P, consts)
    b, _ = normalize_to_star(M, P[::-1], consts)
    assert a.N == b.N


def test_normalization_preconditions(consts):
    with pytest.raises(PreconditionError):
        normalize_to_star(M, [[0, 0.5], [0.3, 0.5], [0.3, 0.2]], consts)
    with pytest.raises(PreconditionError):
        normalize_to_star(M, [[0, 0.5], [0.3, 1.5], [0, 0.5]], consts)


def test_rectangle_word_needs_at_most_four_triangles(consts):
    star = square_word(consts)
    cert = reduce_and_fill(M, star, consts)
    assert cert.triangles <= 4 and replay(cert, star)


def test_level_zero_curve_is_one_triangle(consts):
    star = StarCurve([Horizontal(0, (0.0, 0.5)), Horizontal(0, (0.5, 1.0))])
    cert = reduce_and_fill(M, star, consts)
    assert cert.triangles == 1 and cert.max_diameter <= consts.R


def test_empty_word_is_zero_triangles(consts):
    assert reduce_and_fill(M, StarCurve([]), consts).triangles == 0
    star, _ = normalize_to_star(M, [[0.3, 0.5], [0.3, 0.5]], consts)
    assert star.N == 0 and reduce_and_fill(M, star, consts).triangles == 0


def test_invalid_word_is_rejected(consts):
    broken = StarCurve([Vertical(0.0, 0, "down"), Horizontal(0, (0.5, 0.7))])
    with pytest.raises(CheckFailed):
        broken.validate(Lengths(M, consts.T0), consts.L)
    with pytest.raises(InputError):
        StarCurve.from_json([{"type": "Q"}])
    with pytest.raises(InputError):
        Vertical(0.0, -1, "up")


def test_random_certificates_are_within_N(consts):
    rng = np.random.default_rng(0)
    lengths = Lengths(M, consts.T0)
    for _ in range(200):
        star = random_star_curve(consts, rng, 60, lengths=lengths)
        assert star.N <= 60
        cert = reduce_and_fill(M, star, consts)
        assert cert.triangles <= star.N
        assert cert.max_diameter <= consts.R
        assert len(cert.log) <= 2 * star.N
        assert replay(cert, star)


def test_replay_detects_tampering(consts):
    star = random_star_curve(consts, np.random.default_rng(5), 60)
    cert = reduce_and_fill(M, star, consts)
    if not cert.log:
        pytest.skip("seed produced a base case")
    other = StarCurve(star.pieces[1:] + star.pieces[:1])
    step = cert.log[0]
    cert.log[0] = dataclasses.replace(step, removed=list(step.removed[::-1]))
    with pytest.raises(CheckFailed):
        replay(cert, other if step.case == "2" else star)


def test_star_json_roundtrip(consts):
    star = random_star_curve(consts, np.random.default_rng(1), 40)
    again = StarCurve.from_json(json.loads(json.dumps(star.to_json())))
    assert again.pieces == star.pieces
    cert = reduce_and_fill(M, star, consts)
    assert json.loads(json.dumps(cert.to_json()))["triangles"] == cert.triangles


def test_doubled_curve_at_most_doubles_the_count(consts):
    rng = np.random.default_rng(7)
    for _ in range(5):
        P = random_closed_curve(rng, float(rng.uniform(5, 30)), M)
        shift = np.array([round(P[-1, 0] - P[0, 0]), 0.0])
        Q = np.vstack([P, P[1:] + shift])
        one = reduce_and_fill(M, normalize_to_star(M, P, consts)[0], consts).triangles
        two = reduce_and_fill(M, normalize_to_star(M, Q, consts)[0], consts).triangles
        assert two <= 2 * one + 8


def test_linear_envelope_on_exact_line():
    L = np.array([1.0, 2.0, 5.0])
    A, B = linear_envelope(L, 3 * L + 1)
    assert A == pytest.approx(3) and B == pytest.approx(1)


def test_isoperimetric_audit_is_linear(consts):
    audit = isoperimetric_audit(M, n_trials=30, seed=0, constants=consts)
    assert math.isfinite(audit.A) and math.isfinite(audit.B)
    # a sample correlation of 30 unrelated values has spread ~ 1/sqrt(30); the 0.1 threshold needs 100 trials
    assert abs(audit.correlation) < 2 / math.sqrt(30)
    assert all(r["triangles"] <= audit.A * r["length"] + audit.B + 1e-9 for r in audit.records)
