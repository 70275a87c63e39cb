import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdyn.constants import shadowing_accuracy
from hyperdyn.errors import DomainError, GapTooSmall, NotNearReturn, ToleranceExceeded
from hyperdyn.maps import cat_map, distance, forward, horseshoe, iterate
from hyperdyn.partition import base_partition
from hyperdyn.symbolic import itinerary
from hyperdyn.shadowing import (
    PseudoOrbit,
    anosov_close,
    block_length,
    noisy_orbit,
    required_gap,
    shadow,
    specification_orbit,
    true_orbit,
    validate_pseudo_orbit,
)


def test_true_orbit_is_its_own_shadow():
    model = cat_map()
    orb = PseudoOrbit(true_orbit(model, model.point(0.1, 0.2), 20), 1e-9)
    r = shadow(model, orb)
    assert r.achieved_beta <= 1e-12


def test_gap_audit_locates_worst_jump():
    model = cat_map()
    pts = true_orbit(model, model.point(0.1, 0.2), 6)
    pts[4] = model.point(pts[4].x + 1e-3, pts[4].y)
    audit = validate_pseudo_orbit(model, PseudoOrbit(pts, 1e-4))
    assert not audit.valid
    assert audit.location in (3, 4)
    assert audit.worst_gap >= 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1e-6, 1e-5, 1e-4]))
def test_shadow_within_predicted_beta(seed, amp):
    model = cat_map()
    rng = np.random.default_rng(seed)
    orb = noisy_orbit(model, model.point(*rng.random(2)), 30, amp, rng)
    r = shadow(model, orb)
    assert r.achieved_beta <= shadowing_accuracy(1.5, model.hyp.lam, orb.alpha)
    assert max(r.per_step_errors) == pytest.approx(r.achieved_beta)


def test_understated_alpha_is_reported():
    model = cat_map()
    rng = np.random.default_rng(3)
    orb = noisy_orbit(model, model.point(0.3, 0.3), 30, 1e-4, rng)
    liar = PseudoOrbit(orb.points, orb.alpha * 1e-3)
    with pytest.raises(ToleranceExceeded):
        shadow(model, liar)
    assert "tolerance_exceeded" in shadow(model, liar, strict=False).flags


def test_block_length_is_minimal():
    model = cat_map()
    M = block_length(model)
    lam, eps, delta = model.hyp.lam, model.hyp.delta0, model.hyp.delta0
    assert M >= 1
    if M > 1:
        assert lam ** (M - 1) * eps >= delta / 2


def test_close_fixed_point_of_cat():
    model = cat_map()
    r = anosov_close(model, model.point(1e-4, 2e-4), 1)
    assert distance(r.point, model.point(0.0, 0.0)) <= 1e-12
    assert r.residual <= 1e-12


def test_close_horseshoe_period_two():
    model = horseshoe()
    r = anosov_close(model, model.point(0.75 + 1e-6, 0.25 + 1e-7), 2)
    assert (r.point.x, r.point.y) == pytest.approx((0.75, 0.25), abs=1e-12)
    assert distance(iterate(model, r.point, 2), r.point) <= 1e-12


def test_close_requires_near_return():
    model = cat_map()
    with pytest.raises(NotNearReturn):
        anosov_close(model, model.point(0.3, 0.7), 1)
    with pytest.raises(DomainError):
        anosov_close(model, model.point(0.3, 0.7), 0)


def test_cat_specification_joins_distant_segments():
    model = cat_map()
    g = required_gap(model)
    a, b = model.point(0.12, 0.34), model.point(0.71, 0.05)
    r = specification_orbit(model, [(a, 4), (b, 4)], gap=g)
    assert r.offsets == (0, 4 + g)
    # round-off grows like lambda^-period along the orbit
    floor = 1e-15 * model.hyp.lam ** -r.period
    assert distance(iterate(model, r.point, r.period), r.point) <= floor
    beta = r.shadow.predicted_beta
    for start, off in ((a, 0), (b, 4 + g)):
        for j in range(4):
            assert distance(iterate(model, r.point, off + j), iterate(model, start, j)) <= beta


def _forward_coded(word, x=0.25):
    # point of the horseshoe whose forward symbols start with ``word``
    y = sum(2 * a / 3 ** (j + 1) for j, a in enumerate(word)) + 0.25 / 3 ** len(word)
    return horseshoe().point(x, y)


def test_horseshoe_specification_contains_both_words():
    model = horseshoe()
    part = base_partition(model)
    w1, w2 = (0, 1, 1), (1, 0, 0, 1)
    r = specification_orbit(model, [(_forward_coded(w1), 3), (_forward_coded(w2), 4)], gap=1)
    it = itinerary(model, part, r.point, r.period)
    for w, off in zip((w1, w2), r.offsets):
        assert tuple(it.at(off + j) for j in range(len(w))) == w
    assert distance(iterate(model, r.point, r.period), r.point) <= 1e-9


def test_single_segment_returns_its_start():
    model = horseshoe()
    p = _forward_coded((1, 0, 1))
    r = specification_orbit(model, [(p, 3)], gap=1)
    assert distance(r.point, p) <= r.shadow.predicted_beta


def test_specification_gap_must_cover_mixing_time():
    model = cat_map()
    with pytest.raises(GapTooSmall):
        specification_orbit(model, [(model.point(0.1, 0.1), 3)], gap=required_gap(model) - 1)
    with pytest.raises(GapTooSmall):
        specification_orbit(horseshoe(), [(_forward_coded((0,)), 3)], gap=0)


def test_cat_gap_from_lattice_geometry():
    # covering radius of the cat lattice in its orthonormal eigenbasis is (e_1 + e_2)/2
    model = cat_map()
    R = (0.5257311121191336 + 0.85065080835204) / 2
    alpha = (1 - model.hyp.lam) * 0.05 / 1.5
    h = next(h for h in range(50) if model.hyp.lam**h * R < alpha)
    assert required_gap(model) == 2 * h == 8


def test_noisy_orbit_alpha_is_worst_gap():
    model = cat_map()
    orb = noisy_orbit(model, model.point(0.5, 0.5), 10, 1e-5, np.random.default_rng(1))
    gaps = [distance(forward(model, p), q) for p, q in zip(orb.points, orb.points[1:])]
    assert max(gaps) <= orb.alpha <= max(gaps) * (1 + 1e-9)


def test_close_horseshoe_period_three_word():
    # the repeated word 010 codes (3/13, 3/13) in both ternary expansions
    model = horseshoe()
    r = anosov_close(model, model.point(3 / 13 + 1e-6, 3 / 13 - 1e-7), 3)
    assert (r.point.x, r.point.y) == pytest.approx((3 / 13, 3 / 13), abs=1e-12)
    assert r.max_distance <= r.shadow.predicted_beta + 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_horseshoe_shadow_keeps_coarse_itinerary(seed):
    from hyperdyn.maps import sample_invariant_set

    model = horseshoe()
    rng = np.random.default_rng(seed)
    x = sample_invariant_set(model, 1, rng)[0]
    def noisy(p, d):
        # keep the perturbed point in the strip of the true one
        lo = 0.0 if p.y <= 1 / 3 else 2 / 3
        return model.point(min(max(p.x + d[0], 0.0), 1.0), min(max(p.y + d[1], lo), lo + 1 / 3))

    pts = [noisy(p, d) for p, d in zip(true_orbit(model, x, 12), rng.uniform(-1e-5, 1e-5, (12, 2)))]
    audit = validate_pseudo_orbit(model, PseudoOrbit(pts, 1.0))
    r = shadow(model, PseudoOrbit(pts, audit.worst_gap * (1 + 1e-9)))
    orbit = true_orbit(model, r.start, 12)
    assert [int(q.y > 0.5) for q in orbit] == [int(p.y > 0.5) for p in pts]


def _cat_periodic_point(n, k=(3, 7)):
    # exact solution of (A^n - I) q = k, reduced mod 1
    from fractions import Fraction

    A = np.array([[2, 1], [1, 1]], dtype=object)
    An = np.linalg.matrix_power(A, n)
    a, b, c, d = int(An[0, 0]) - 1, int(An[0, 1]), int(An[1, 0]), int(An[1, 1]) - 1
    det = a * d - b * c
    return Fraction(d * k[0] - b * k[1], det) % 1, Fraction(-c * k[0] + a * k[1], det) % 1


def _near_return(model, q, n):
    # push the periodic point along its stable leaf so d(f^n x, x) < 1e-3
    es = np.array([1.0, -(1 + 5**0.5) / 2])
    es /= np.linalg.norm(es)
    x = model.point((float(q[0]) + 1e-4 * es[0]) % 1.0, (float(q[1]) + 1e-4 * es[1]) % 1.0)
    assert distance(iterate(model, x, n), x) < 1e-3
    return x


@pytest.mark.parametrize("n", [5, 10, 15, 20])
def test_cat_close_lands_on_lattice_periodic_point(n):
    from fractions import Fraction

    model = cat_map()
    q = _cat_periodic_point(n)
    r = anosov_close(model, _near_return(model, q, n), n)
    err = [abs(float(Fraction(v) - w)) for v, w in zip((r.point.x, r.point.y), q)]
    assert max(min(e, 1 - e) for e in err) <= 1e-10


@pytest.mark.parametrize("n", [5, 10, 15, 20])
def test_cat_close_residual_at_stated_tolerance(n):
    # f^n(p) - p in float64 carries |A^n - I| ulp of round-off (about 1e-8 at n = 20)
    model = cat_map()
    r = anosov_close(model, _near_return(model, _cat_periodic_point(n), n), n)
    assert r.residual <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_two_shadows_agree_mid_window(seed):
    model = cat_map()
    rng = np.random.default_rng(seed)
    n = 40
    orb = noisy_orbit(model, model.point(*rng.random(2)), n, 1e-5, rng)
    jitter = [model.point((p.x + e[0]) % 1.0, (p.y + e[1]) % 1.0)
              for p, e in zip(orb.points, rng.uniform(-1e-7, 1e-7, (n, 2)))]
    r1 = shadow(model, orb)
    r2 = shadow(model, PseudoOrbit(jitter, orb.alpha + 4e-7))
    M = r1.block
    b1, b2 = r1.predicted_beta, r2.predicted_beta + 2e-7
    for j, (a, b) in enumerate(zip(r1.anchors, r2.anchors)):
        p = orb.points[j * M]
        assert distance(a, p) <= b1 and distance(b, p) <= b2
    # expansiveness: orbits that stay beta-close on a long window meet in the middle
    mid = len(r1.anchors) // 2
    assert distance(r1.anchors[mid], r2.anchors[mid]) <= 1e-10
