import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdyn.errors import DomainError, ValidationError
from hyperdyn.maps import (
    HyperbolicityData,
    Point2,
    cat_map,
    distance,
    estimate_splitting,
    exact_frame,
    forward,
    horseshoe,
    inverse,
    iterate,
    jacobian,
    sample_invariant_set,
    verify_cone_criterion,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
torus = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)


@given(unit, st.floats(0.0, 1 / 3), st.booleans())
def test_horseshoe_inverse_undoes_forward(x, y, upper):
    model = horseshoe()
    p = model.point(x, y + (2 / 3 if upper else 0.0))
    q = inverse(model, forward(model, p))
    assert distance(p, q) <= 1e-12


def test_horseshoe_branches_match_formula():
    model = horseshoe()
    assert forward(model, model.point(0.9, 0.1)) == model.point(0.3, 0.1 * 3)
    q = forward(model, model.point(0.3, 0.8))
    assert q.x == pytest.approx(0.1 + 2 / 3, abs=1e-15)
    assert q.y == pytest.approx(0.4, abs=1e-15)


def test_horseshoe_gap_is_outside_the_domain():
    with pytest.raises(DomainError):
        forward(horseshoe(), Point2(0.5, 0.5))


@given(torus, torus)
def test_cat_inverse_undoes_forward(x, y):
    model = cat_map()
    p = model.point(x, y)
    assert distance(p, inverse(model, forward(model, p))) <= 1e-12


@given(torus, torus, torus, torus, torus, torus)
def test_torus_distance_is_a_metric(a, b, c, d, e, f):
    p, q, r = Point2(a, b, "torus"), Point2(c, d, "torus"), Point2(e, f, "torus")
    assert distance(p, q) == pytest.approx(distance(q, p))
    assert 0 <= distance(p, q) <= 0.5
    assert distance(p, r) <= distance(p, q) + distance(q, r) + 1e-15


def test_torus_distance_wraps():
    assert distance(Point2(0.99, 0.0, "torus"), Point2(0.01, 0.0, "torus")) == pytest.approx(0.02)


def test_cat_frame_matches_numpy_eigenvectors():
    model = cat_map()
    fr = exact_frame(model)
    w, V = np.linalg.eigh(np.array(model.matrix, float))
    for vec, ev in ((fr.e_s, w.min()), (fr.e_u, w.max())):
        v = np.array(vec)
        assert np.allclose(np.array(model.matrix) @ v, ev * v, atol=1e-12)
    assert fr.angle == pytest.approx(math.pi / 2)


def test_estimated_splitting_agrees_with_closed_form():
    model = cat_map()
    p = model.point(0.2, 0.9)
    est, ref = estimate_splitting(model, p), exact_frame(model, p)
    for a, b in ((est.e_s, ref.e_s), (est.e_u, ref.e_u)):
        assert abs(abs(np.dot(a, b)) - 1) < 1e-10


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_horseshoe_samples_are_invariant(seed):
    model = horseshoe()
    for p in sample_invariant_set(model, 5, np.random.default_rng(seed)):
        q = iterate(model, p, 3)
        assert 0 <= q.x <= 1 and (q.y <= 1 / 3 + 1e-12 or q.y >= 2 / 3 - 1e-12)


def test_cone_criterion_holds_on_both_models():
    rng = np.random.default_rng(0)
    for model in (horseshoe(), cat_map()):
        rep = verify_cone_criterion(model, sample_invariant_set(model, 20, rng), 0.2, model.hyp.lam)
        assert rep.passed


def test_cone_criterion_fails_for_overstated_rate():
    model = cat_map()
    rep = verify_cone_criterion(model, [model.point(0.1, 0.1)], 0.2, 0.1)
    assert not rep.passed and rep.expansion_margin < 0


def test_jacobian_of_cat_is_its_matrix():
    model = cat_map()
    assert np.array_equal(jacobian(model, model.point(0.4, 0.4)), np.array([[2, 1], [1, 1]]))


@pytest.mark.parametrize("kw", [{"lam": 1.0}, {"lam": 0.5, "c": 0.5}, {"lam": 0.5, "K_lip": 1.2},
                                {"lam": 0.5, "mu_adapt": 0.4}])
def test_invalid_hyperbolicity_data(kw):
    with pytest.raises(ValidationError):
        HyperbolicityData(**kw)


def test_rational_inputs_keep_exact_values():
    from fractions import Fraction

    hyp = HyperbolicityData(lam=Fraction(1, 3))
    assert hyp.exact("lam") == Fraction(1, 3)
    assert hyp.lam == 1 / 3
