import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components

from hyperdyn.errors import (
    AlphabetMismatch,
    CapExceeded,
    EmptyIntersection,
    OutsidePartition,
    UnsupportedModel,
)
from hyperdyn.maps import cat_map, forward, horseshoe
from hyperdyn.partition import Partition, base_partition, word_partition
from hyperdyn.symbolic import (
    SymbolWindow,
    brute_periodic_count,
    check_irreducible_aperiodic,
    coding_accuracy,
    count_periodic,
    de_bruijn,
    decode,
    full_shift,
    is_admissible,
    itinerary,
    random_admissible_word,
    shift,
    spectral_radius,
    symbol_frequencies,
    trace_power,
    verify_conjugacy,
)

HS = horseshoe()
BASE = base_partition(HS)
GOLDEN = np.array([[1, 1], [1, 0]])

binary = st.lists(st.integers(0, 1), min_size=1, max_size=12)
small_matrix = st.lists(st.integers(0, 1), min_size=9, max_size=9).map(lambda v: np.array(v).reshape(3, 3))


@given(binary, st.integers(0, 5), st.integers(-3, 3))
def test_shift_moves_time_zero(symbols, offset, j):
    w = SymbolWindow(tuple(symbols), offset % len(symbols), periodic=True)
    assert shift(w).at(j) == w.at(j + 1)


def test_window_bounds():
    w = SymbolWindow((0, 1, 1, 0), offset=1)
    assert (w.first, w.last) == (-1, 2)
    assert w.span(-1, 2) == (0, 1, 1, 0)
    assert w.covers(-1, 2) and not w.covers(-2, 0)


def test_admissibility_checks_alphabet():
    with pytest.raises(AlphabetMismatch):
        is_admissible(GOLDEN, SymbolWindow((0, 2)))
    assert not is_admissible(GOLDEN, SymbolWindow((1, 1)))
    assert is_admissible(GOLDEN, SymbolWindow((1, 0, 1, 0)))


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.integers(1, 30))
def test_random_words_are_admissible(seed, length):
    w = random_admissible_word(GOLDEN, length, np.random.default_rng(seed))
    assert len(w) == length and is_admissible(GOLDEN, w)


@pytest.mark.parametrize("A, rho", [(full_shift(2), 2.0), (GOLDEN, (1 + 5**0.5) / 2),
                                    (np.array([[0, 1], [1, 0]]), 1.0), (full_shift(3), 3.0)])
def test_spectral_radius_known_values(A, rho):
    assert spectral_radius(A).rho == pytest.approx(rho, abs=1e-12)


@settings(max_examples=40)
@given(small_matrix)
def test_spectral_radius_matches_eigvals(A):
    n, _ = connected_components(A, directed=True, connection="strong")
    oracle = max(abs(np.linalg.eigvals(A.astype(float))))
    r = spectral_radius(A)
    tol = 1e-9 if n == 1 else 1e-6
    assert r.rho == pytest.approx(oracle, abs=tol)
    if r.rho > 0:
        assert r.entropy == pytest.approx(math.log(r.rho))


@pytest.mark.parametrize("k", range(1, 7))
def test_de_bruijn_entropy_is_log2(k):
    assert spectral_radius(de_bruijn(k)).entropy == pytest.approx(math.log(2), abs=1e-12)


@settings(max_examples=30)
@given(small_matrix, st.integers(1, 9))
def test_trace_equals_enumeration(A, n):
    exact = np.linalg.matrix_power(A.astype(object), n)
    assert trace_power(A, n) == sum(exact[i, i] for i in range(3)) == brute_periodic_count(A, n)


def test_enumeration_cap_carries_trace():
    with pytest.raises(CapExceeded) as info:
        count_periodic(full_shift(2), 25, cap=2**20)
    assert info.value.trace == 2**25
    assert count_periodic(GOLDEN, 10).agree


@settings(max_examples=40)
@given(small_matrix)
def test_irreducibility_and_aperiodicity_against_oracles(A):
    n, _ = connected_components(A, directed=True, connection="strong")
    rep = check_irreducible_aperiodic(A)
    assert rep.irreducible == (n == 1)
    if rep.irreducible:
        # Wielandt: a primitive 3x3 matrix has A^5 > 0
        primitive = bool(np.all(np.linalg.matrix_power(A, 5) > 0))
        assert rep.aperiodic == primitive


def test_period_of_a_cycle():
    rep = check_irreducible_aperiodic(np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]]))
    assert rep.irreducible and not rep.aperiodic and rep.period == 3


def test_periodic_word_decodes_to_period_two_point():
    r = decode(HS, BASE, SymbolWindow((0, 1), 0, True), 30)
    assert (r.point.x, r.point.y) == pytest.approx((0.75, 0.25), abs=1e-14)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 1), min_size=13, max_size=13))
def test_decode_matches_ternary_digits(symbols):
    N = 6
    w = SymbolWindow(tuple(symbols), N)
    r = decode(HS, BASE, w, N)
    x = sum(Fraction(2 * w.at(-j), 3**j) for j in range(1, N + 1)) + Fraction(1, 2 * 3**N)
    y = sum(Fraction(2 * w.at(j), 3 ** (j + 1)) for j in range(N + 1)) + Fraction(1, 2 * 3 ** (N + 1))
    assert r.point.x == float(x) and r.point.y == float(y)
    assert r.diameter <= coding_accuracy(HS, BASE, N)


def test_decode_is_horseshoe_only():
    with pytest.raises(UnsupportedModel):
        decode(cat_map(), BASE, SymbolWindow((0, 1), 0, True), 3)


def test_forbidden_transition_has_empty_cylinder():
    part = word_partition(HS, 2)
    # "00" cannot be followed by "11"
    with pytest.raises(EmptyIntersection):
        decode(HS, part, SymbolWindow((0, 3, 3), 1), 1)


def test_fixed_point_itinerary_is_flagged_on_the_corner():
    w = itinerary(HS, BASE, HS.point(0.0, 0.0), 3)
    assert w.symbols == (0,) * 7
    assert w.flagged == tuple(range(-3, 4))


def test_itinerary_round_trip_of_period_two_point():
    w = itinerary(HS, BASE, HS.point(0.75, 0.25), 4)
    assert w.symbols == (0, 1, 0, 1, 0, 1, 0, 1, 0)
    assert w.flagged == ()


def test_point_outside_partition():
    only_lower = Partition(np.array([0.0]), np.array([1.0]), np.array([0.0]), np.array([1 / 3]), HS.name)
    with pytest.raises(OutsidePartition):
        itinerary(HS, only_lower, HS.point(0.25, 0.75), 1)


@pytest.mark.parametrize("N", [5, 20])
def test_conjugacy(N):
    rep = verify_conjugacy(HS, BASE, 50, N, np.random.default_rng(N))
    assert rep.passed and rep.worst_residual <= rep.bound


def test_conjugacy_residual_is_image_of_decode():
    w = SymbolWindow((0, 1, 1, 0, 1, 0, 0), 3)
    p = decode(HS, BASE, w, 2).point
    q = decode(HS, BASE, shift(w), 2).point
    fp = forward(HS, p)
    assert max(abs(fp.x - q.x), abs(fp.y - q.y)) <= 2 * coding_accuracy(HS, BASE, 2)


@pytest.mark.parametrize("n", [3, 6])
def test_frequencies_uniform_on_full_shift(n):
    assert np.allclose(symbol_frequencies(HS, BASE, n), [0.5, 0.5], atol=1e-12)


def test_frequencies_on_refined_coding():
    f = symbol_frequencies(HS, word_partition(HS, 2), 4)
    assert np.allclose(f, 0.25, atol=1e-12)
