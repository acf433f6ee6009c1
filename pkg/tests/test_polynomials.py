import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasihyp.errors import InputError, PreconditionError
from quasihyp.polynomials import (PolynomialR, bounds_audit, contact_order_graph_domain, polynomial_bounds_check,
                                  random_polynomial, vanishing_order)

Y4 = PolynomialR({(4,): 1.0}, 1)


def test_vanishing_order_examples():
    assert vanishing_order(Y4) == 4
    assert vanishing_order(PolynomialR({(1, 1): 1.0, (0, 3): 1.0}, 2)) == 2
    assert vanishing_order(PolynomialR({}, 2)) == math.inf


def test_json_roundtrip_and_parse_errors():
    P = PolynomialR.from_json({"coeffs": {"(1,1)": 2.0, "(0,3)": -1.5}})
    assert P.dim == 2 and P.degree == 3
    assert PolynomialR.from_json(P.to_json()) == P
    with pytest.raises(InputError):
        PolynomialR.from_json({"coeffs": {"(a,b)": 1.0}})
    with pytest.raises(InputError):
        PolynomialR.from_json({"coeffs": [1, 2]})


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.integers(0, 2 ** 31 - 1))
def test_evaluation_and_composition_agree(y, seed):
    rng = np.random.default_rng(seed)
    P = random_polynomial(2, 3, rng)
    B = rng.standard_normal((2, 2))
    z = np.array(y)
    assert P.compose_linear(B).evaluate(z) == pytest.approx(P.evaluate(B @ z), rel=1e-9, abs=1e-9)
    assert P.norm() >= 0


def test_norm_is_zero_only_for_zero():
    assert PolynomialR({}, 2).norm() == 0
    assert PolynomialR({(1, 0): -1e-3}, 2).norm() > 0


def test_linear_monomial_needs_no_slack():
    P = PolynomialR({(1,): 1.0}, 1)
    for r, R in ((0.1, 1.0), (0.5, 0.8), (0.3, 0.3)):
        assert polynomial_bounds_check(P, r, R).A == pytest.approx(1.0, abs=1e-9)


def test_pure_power_lower_bound_is_tight():
    rep = polynomial_bounds_check(PolynomialR({(2,): 1.0}, 1), 0.5, 1.0)
    assert rep.max_r == pytest.approx(0.25) and rep.max_R == pytest.approx(1.0)
    assert rep.required["lower_ratio"] == pytest.approx(1.0)


def test_bounds_need_vanishing_at_origin():
    with pytest.raises(PreconditionError):
        polynomial_bounds_check(PolynomialR({(0,): 1.0, (1,): 1.0}, 1), 0.5, 1.0)


def test_bounds_audit_is_stable_across_sampling_seeds():
    a = bounds_audit(2, 4, sample_seed=0)["A"]
    b = bounds_audit(2, 4, sample_seed=1)["A"]
    assert math.isfinite(a) and abs(a - b) <= 0.1 * min(a, b)


def test_contact_order_quartic():
    co = contact_order_graph_domain(Y4, 1, measure=True)
    assert co.L == 4 and co.predicted_lambda == 0.25
    assert 0.23 <= co.measured_lambda <= 0.27


def test_contact_order_round():
    co = contact_order_graph_domain(PolynomialR({(2, 0): 1.0, (0, 2): 1.0}, 2), 1)
    assert co.L == 2 and co.predicted_lambda == 0.5


def test_contact_order_mixed_powers_by_k():
    f = PolynomialR({(2, 0): 1.0, (0, 6): 1.0}, 2)
    # lines: the y2 axis has order 6; the only tangential 2-plane is the whole tangent space, where the order is 2
    assert contact_order_graph_domain(f, 1).L == 6
    assert contact_order_graph_domain(f, 2).L == 2


def test_contact_order_rejects_nonconvex():
    with pytest.raises(PreconditionError):
        contact_order_graph_domain(PolynomialR({(2,): 1.0, (4,): -1.0}, 1), 1, width=1.0)
