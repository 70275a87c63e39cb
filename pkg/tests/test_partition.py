from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdyn.errors import BudgetExceeded, CapExceeded, DegenerateOverlap, DomainError, UnsupportedModel
from hyperdyn.maps import cat_map, horseshoe
from hyperdyn.partition import (
    Partition,
    Rectangle,
    base_partition,
    build_cover_via_shadowing,
    check_coverage,
    corrupt_partition,
    cylinder_bounds,
    refine_intersections,
    refine_once,
    refine_to_diameter,
    transition_matrix,
    verify_markov,
    word_partition,
)

HS = horseshoe()


def _refined(k):
    part = base_partition(HS)
    for _ in range(k):
        part = refine_once(HS, part)
    return part


def test_base_partition_and_matrix():
    part = base_partition(HS)
    assert part.m == 2
    assert transition_matrix(HS, part).A.tolist() == [[1, 1], [1, 1]]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_refinement_count_and_diameter(k):
    part = _refined(k)
    assert part.m == 2 ** (2 * k + 1)
    assert part.diameter == pytest.approx(3.0**-k, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_refined_rectangles_are_exact_cylinders(k):
    part = _refined(k)
    got = {tuple(int(v) for v in part.words[i]): (part.s_lo[i], part.s_hi[i], part.u_lo[i], part.u_hi[i])
           for i in range(part.m)}
    assert len(got) == 2 ** (2 * k + 1)
    # oracle: every binary word of length 2k+1 and its ternary-digit box
    for w in product((0, 1), repeat=2 * k + 1):
        past = [w[k - j] for j in range(1, k + 1)]
        fut = w[k:]
        s_lo = sum(2 * a / 3**j for j, a in enumerate(past, 1))
        u_lo = sum(2 * a / 3 ** (j + 1) for j, a in enumerate(fut))
        box = (s_lo, s_lo + 3.0**-k, u_lo, u_lo + 3.0 ** -(k + 1))
        assert np.allclose(got[w], box, atol=1e-15)
        assert np.allclose([float(v) for v in cylinder_bounds(w, k)], box, atol=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_forward_words_give_de_bruijn_matrix(k):
    part = word_partition(HS, k)
    assert part.m == 2**k
    A = transition_matrix(HS, part).A
    words = [tuple(w) for w in part.words]
    oracle = np.array([[int(a[1:] == b[:-1]) for b in words] for a in words])
    assert np.array_equal(A, oracle)


def test_refine_to_diameter_stops_at_target():
    part = refine_to_diameter(HS, base_partition(HS), 4e-2 / 9)
    assert part.diameter <= 4e-2 / 9
    # 3^-4 > 4e-2/9 >= 3^-5
    assert part.rounds == 5 and part.m == 2**11


def test_refinement_budget():
    with pytest.raises(BudgetExceeded):
        refine_to_diameter(HS, base_partition(HS), 1e-4, budget=1000)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_markov_and_cover(k):
    part = _refined(k)
    assert verify_markov(HS, part, rng=np.random.default_rng(k)).passed
    cov = check_coverage(HS, part, 2000, np.random.default_rng(k))
    assert cov.covered and cov.disjoint


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 7), st.floats(0.02, 0.3))
def test_widened_rectangle_breaks_markov(index, factor):
    part = _refined(1)
    rep = verify_markov(HS, corrupt_partition(part, index, factor), rng=np.random.default_rng(0))
    assert not rep.passed
    assert rep.location is not None and rep.kind in ("stable", "unstable")
    assert "FAIL" in rep.summary()


def test_analytic_partitions_are_horseshoe_only():
    with pytest.raises(UnsupportedModel):
        base_partition(cat_map())


def test_dense_matrix_cap():
    with pytest.raises(CapExceeded):
        transition_matrix(HS, _refined(6))


def test_shadowing_cover_of_horseshoe():
    cover = build_cover_via_shadowing(HS, 0.1, 0.5, np.random.default_rng(0), n_samples=2000,
                                      orbit_windows=400)
    part = Partition.from_rectangles(cover, HS.name)
    assert check_coverage(HS, part, 2000, np.random.default_rng(1), margin=0.1).covered
    pieces = refine_intersections(HS, cover)
    rep = check_coverage(HS, pieces, 2000, np.random.default_rng(1), margin=0.1)
    assert rep.covered and rep.disjoint


@pytest.mark.slow
def test_shadowing_cover_of_cat_map():
    model = cat_map()
    cover = build_cover_via_shadowing(model, 0.02, 0.1, np.random.default_rng(0), n_samples=8000)
    pieces = refine_intersections(model, cover)
    rep = check_coverage(model, pieces, 2000, np.random.default_rng(1), margin=0.02)
    assert rep.covered and rep.disjoint


def test_cover_preconditions():
    with pytest.raises(DomainError):
        build_cover_via_shadowing(cat_map(), 0.1, 0.05)
    with pytest.raises(DomainError):
        build_cover_via_shadowing(cat_map(), 0.01, 0.2)


def test_near_coincident_edges_are_rejected():
    a = Rectangle(0, (0.0, 0.5), (0.0, 0.5), None, np.array([[0.1, 0.1]]))
    b = Rectangle(1, (0.3, 0.5 + 1e-10), (0.2, 0.7), None, np.array([[0.4, 0.6]]))
    with pytest.raises(DegenerateOverlap) as info:
        refine_intersections(HS, [a, b], tol=1e-9)
    assert info.value.pair == (0, 1)


def test_overlapping_pair_splits_into_pieces():
    a = Rectangle(0, (0.0, 0.6), (0.0, 0.6), None, np.array([[0.1, 0.1], [0.5, 0.5]]))
    b = Rectangle(1, (0.4, 1.0), (0.4, 1.0), None, np.array([[0.9, 0.9], [0.45, 0.45]]))
    part = refine_intersections(HS, [a, b])
    boxes = sorted(zip(part.s_lo, part.s_hi, part.u_lo, part.u_hi))
    assert boxes == [(0.0, 0.4, 0.0, 0.4), (0.4, 0.6, 0.4, 0.6), (0.6, 1.0, 0.6, 1.0)]
