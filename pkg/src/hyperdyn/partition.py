"""Markov partitions built from product rectangles.

Rectangles are coordinate products ``s_interval x u_interval``.  On the affine
horseshoe the stable coordinate is ``x`` and the unstable one is ``y``, the
invariant set is a product of Cantor sets and this representation is exact.
Partitions obtained from the shadowing cover carry their sample points as a
payload.

Refinement joins a partition with its pullback and its pushforward.  On
coded partitions (each rectangle carries a symbol word) the candidates of
the join are selected by word overlap and the rectangles themselves come
from interval images under the affine branches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .constants import DEFAULT_C, shadowing_tolerance
from .errors import (
    BudgetExceeded,
    CapExceeded,
    DegenerateOverlap,
    DomainError,
    InsufficientDensity,
    UnsupportedModel,
)
from .maps import (
    Point2,
    SystemModel,
    forward_xy,
    inverse_xy,
    sample_invariant_set,
    wrapped_difference,
)
from .shadowing import PseudoOrbit, shadow

__all__ = [
    "MARGIN",
    "Rectangle",
    "Partition",
    "TransitionMatrix",
    "MarkovReport",
    "CoverageReport",
    "base_partition",
    "cylinder_bounds",
    "refine_once",
    "refine_to_diameter",
    "word_partition",
    "verify_markov",
    "transition_matrix",
    "check_coverage",
    "build_cover_via_shadowing",
    "refine_intersections",
    "corrupt_partition",
]

MARGIN = 1e-9
COINCIDENT = 1e-12
DEFAULT_BUDGET = 10**6
DENSE_CAP = 4096
THIRD = 1.0 / 3.0


@dataclass(frozen=True)
class Rectangle:
    id: int
    s_interval: tuple[float, float]
    u_interval: tuple[float, float]
    word: tuple[int, ...] | None = None
    samples: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def diameter(self) -> float:
        return max(self.s_interval[1] - self.s_interval[0], self.u_interval[1] - self.u_interval[0])

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (self.s_interval[0] - margin <= x <= self.s_interval[1] + margin
                and self.u_interval[0] - margin <= y <= self.u_interval[1] + margin)


@dataclass(frozen=True, eq=False)
class Partition:
    """Rectangles stored column-wise.

    ``words[i, center]`` is the symbol of the rectangle itself; positions to
    the left record past symbols and positions to the right future ones.
    """

    s_lo: np.ndarray
    s_hi: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    model: str
    words: np.ndarray | None = None
    center: int = 0
    rounds: int = 0
    payloads: tuple | None = None

    @property
    def m(self) -> int:
        return int(self.s_lo.size)

    def __len__(self):
        return self.m

    @property
    def diameters(self) -> np.ndarray:
        return np.maximum(self.s_hi - self.s_lo, self.u_hi - self.u_lo)

    @property
    def diameter(self) -> float:
        return float(self.diameters.max()) if self.m else 0.0

    def rectangle(self, i: int) -> Rectangle:
        word = tuple(int(v) for v in self.words[i]) if self.words is not None else None
        samples = self.payloads[i] if self.payloads is not None else None
        return Rectangle(i, (float(self.s_lo[i]), float(self.s_hi[i])),
                         (float(self.u_lo[i]), float(self.u_hi[i])), word, samples)

    @property
    def rectangles(self) -> list[Rectangle]:
        return [self.rectangle(i) for i in range(self.m)]

    @classmethod
    def from_rectangles(cls, rects: Sequence[Rectangle], model: str, center: int = 0,
                        rounds: int = 0) -> "Partition":
        arr = np.array([[r.s_interval[0], r.s_interval[1], r.u_interval[0], r.u_interval[1]]
                        for r in rects], dtype=float).reshape(-1, 4)
        words = None
        if rects and all(r.word is not None for r in rects):
            words = np.array([r.word for r in rects], dtype=np.uint8).reshape(len(rects), -1)
        payloads = None
        if rects and any(r.samples is not None for r in rects):
            payloads = tuple(r.samples for r in rects)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy(),
                   model, words, center, rounds, payloads)


def _require_horseshoe(model: SystemModel, what: str):
    if model.kind != "affine_horseshoe":
        raise UnsupportedModel(f"{what} is only available for the affine horseshoe; "
                               "use build_cover_via_shadowing for other models")


def base_partition(model: SystemModel) -> Partition:
    """The two horizontal-strip rectangles ``[0,1] x [0,1/3]`` and ``[0,1] x [2/3,1]``."""
    _require_horseshoe(model, "base_partition")
    return Partition(np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                     np.array([0.0, 2 * THIRD]), np.array([THIRD, 1.0]),
                     model.name, np.array([[0], [1]], dtype=np.uint8), 0, 0)


def cylinder_bounds(word: Sequence[int], center: int) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    """Exact hull of the horseshoe cylinder with symbols ``word`` (``word[center]`` at time 0).

    Past symbols ``a_{-j}`` fix the ternary digits of ``x`` and present and
    future symbols ``a_j`` fix those of ``y``.
    """
    past = [word[center - j] for j in range(1, center + 1)]
    fut = list(word[center:])
    s_lo = sum((Fraction(2 * a, 3**j) for j, a in enumerate(past, 1)), Fraction(0))
    u_lo = sum((Fraction(2 * a, 3 ** (j + 1)) for j, a in enumerate(fut)), Fraction(0))
    return s_lo, s_lo + Fraction(1, 3 ** len(past)), u_lo, u_lo + Fraction(1, 3 ** len(fut))


def _branch(u_lo: np.ndarray, u_hi: np.ndarray) -> np.ndarray:
    mid = 0.5 * (u_lo + u_hi)
    b = np.where(mid <= THIRD + MARGIN, 0, np.where(mid >= 2 * THIRD - MARGIN, 1, -1))
    if np.any(b < 0):
        raise DomainError("rectangle does not lie in a single horizontal strip")
    return b


def _image(s_lo, s_hi, u_lo, u_hi, b):
    """Forward image of product intervals on branch ``b``."""
    return (s_lo / 3 + 2 * b / 3, s_hi / 3 + 2 * b / 3, 3 * u_lo - 2 * b, 3 * u_hi - 2 * b)


def _preimage(s_lo, s_hi, u_lo, u_hi, b):
    """Pullback of product intervals through branch ``b``."""
    return (3 * s_lo - 2 * b, 3 * s_hi - 2 * b, (u_lo + 2 * b) / 3, (u_hi + 2 * b) / 3)


def _codes(words: np.ndarray) -> dict:
    return {w.tobytes(): i for i, w in enumerate(words)}


def _lookup(table: dict, words: np.ndarray) -> np.ndarray:
    return np.array([table.get(w.tobytes(), -1) for w in words], dtype=np.int64)


def _intersect(a, b):
    lo = np.maximum(a[0], b[0])
    hi = np.minimum(a[1], b[1])
    return lo, hi


def refine_once(model: SystemModel, part: Partition) -> Partition:
    """One round ``R ∩ f^{-1}(S) ∩ f(T)`` over compatible triples.

    A coded partition with words of length ``L`` becomes one with words of
    length ``L + 2``; each rectangle has at most four children.
    """
    _require_horseshoe(model, "refinement")
    if part.words is None:
        return _refine_pairwise(model, part)
    m, L = part.words.shape
    table = _codes(part.words)
    b_r = _branch(part.u_lo, part.u_hi)
    out_words, cols = [], [[], [], [], []]
    for left in (0, 1):
        for right in (0, 1):
            nxt = np.concatenate([part.words[:, 1:], np.full((m, 1), right, np.uint8)], axis=1)
            prv = np.concatenate([np.full((m, 1), left, np.uint8), part.words[:, :-1]], axis=1)
            si, ti = _lookup(table, nxt), _lookup(table, prv)
            ok = (si >= 0) & (ti >= 0)
            idx = np.nonzero(ok)[0]
            si, ti = si[ok], ti[ok]
            pre = _preimage(part.s_lo[si], part.s_hi[si], part.u_lo[si], part.u_hi[si], b_r[idx])
            b_t = _branch(part.u_lo[ti], part.u_hi[ti])
            img = _image(part.s_lo[ti], part.s_hi[ti], part.u_lo[ti], part.u_hi[ti], b_t)
            s_lo, s_hi = _intersect((part.s_lo[idx], part.s_hi[idx]), pre[:2])
            s_lo, s_hi = _intersect((s_lo, s_hi), img[:2])
            u_lo, u_hi = _intersect((part.u_lo[idx], part.u_hi[idx]), pre[2:])
            u_lo, u_hi = _intersect((u_lo, u_hi), img[2:])
            keep = (s_hi - s_lo > MARGIN * 1e-3) & (u_hi - u_lo > MARGIN * 1e-3)
            for c, v in zip(cols, (s_lo, s_hi, u_lo, u_hi)):
                c.append(v[keep])
            w = np.concatenate([np.full((m, 1), left, np.uint8), part.words,
                                np.full((m, 1), right, np.uint8)], axis=1)
            out_words.append(w[idx[keep]])
    words = np.concatenate(out_words)
    arrays = [np.concatenate(c) for c in cols]
    order = np.lexsort(words.T[::-1])
    return Partition(*(a[order] for a in arrays), part.model, words[order], part.center + 1,
                     part.rounds + 1)


def _refine_pairwise(model: SystemModel, part: Partition) -> Partition:
    m = part.m
    if m > DENSE_CAP:
        raise CapExceeded(f"uncoded refinement limited to {DENSE_CAP} rectangles")
    b = _branch(part.u_lo, part.u_hi)
    rects = []
    for i in range(m):
        pre = _preimage(part.s_lo, part.s_hi, part.u_lo, part.u_hi, b[i])
        img = _image(part.s_lo, part.s_hi, part.u_lo, part.u_hi, b)
        for j in range(m):
            s = (max(part.s_lo[i], pre[0][j]), min(part.s_hi[i], pre[1][j]))
            u = (max(part.u_lo[i], pre[2][j]), min(part.u_hi[i], pre[3][j]))
            if s[1] - s[0] <= MARGIN or u[1] - u[0] <= MARGIN:
                continue
            for k in range(m):
                s2 = (max(s[0], img[0][k]), min(s[1], img[1][k]))
                u2 = (max(u[0], img[2][k]), min(u[1], img[3][k]))
                if s2[1] - s2[0] > MARGIN and u2[1] - u2[0] > MARGIN:
                    rects.append(Rectangle(len(rects), s2, u2))
    return Partition.from_rectangles(rects, part.model, rounds=part.rounds + 1)


def refine_to_diameter(
    model: SystemModel,
    part: Partition,
    eps: float,
    budget: int = DEFAULT_BUDGET,
) -> Partition:
    """Refine until every rectangle has diameter at most ``eps``.

    Each round on the horseshoe divides both extents by 3 and multiplies the
    rectangle count by 4, so ``k`` rounds from the base partition give
    ``2**(2k+1)`` rectangles of diameter ``3**-k``.

    Raises
    ------
    BudgetExceeded
        Before a round whose output could exceed ``budget`` rectangles.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    while part.diameter > eps * (1 + 1e-12):
        if 4 * part.m > budget:
            raise BudgetExceeded(
                f"next round would need up to {4 * part.m} rectangles (budget {budget})")
        part = refine_once(model, part)
    return part


def word_partition(model: SystemModel, k: int) -> Partition:
    """Partition by the forward words ``a_0 .. a_{k-1}`` (``2**k`` rectangles).

    Obtained from the base partition by ``k - 1`` joins with the pullback
    only; rectangles are full-width in ``x`` and have height ``3**-k``.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    part = base_partition(model)
    for _ in range(k - 1):
        m, L = part.words.shape
        table = _codes(part.words)
        b = _branch(part.u_lo, part.u_hi)
        cols, words = [[], [], [], []], []
        for right in (0, 1):
            nxt = np.concatenate([part.words[:, 1:], np.full((m, 1), right, np.uint8)], axis=1)
            si = _lookup(table, nxt)
            idx = np.nonzero(si >= 0)[0]
            si = si[idx]
            pre = _preimage(part.s_lo[si], part.s_hi[si], part.u_lo[si], part.u_hi[si], b[idx])
            s = _intersect((part.s_lo[idx], part.s_hi[idx]), pre[:2])
            u = _intersect((part.u_lo[idx], part.u_hi[idx]), pre[2:])
            for c, v in zip(cols, (*s, *u)):
                c.append(v)
            words.append(np.concatenate([part.words[idx], np.full((idx.size, 1), right, np.uint8)], axis=1))
        w = np.concatenate(words)
        order = np.lexsort(w.T[::-1])
        part = Partition(*(np.concatenate(c)[order] for c in cols), part.model, w[order], 0,
                         part.rounds + 1)
    return part


# --- point location ----------------------------------------------------------------


class _Locator:
    """Find the rectangle whose interior (shrunk by ``margin``) contains a point.

    Rectangles sharing the same stable interval are grouped; when those
    groups are disjoint, lookups are two binary searches.  Otherwise a
    chunked brute-force scan is used.
    """

    def __init__(self, part: Partition, margin: float):
        self.part, self.margin = part, margin
        # stable intervals equal up to round-off share a group
        by_s = np.argsort(part.s_lo, kind="stable")
        gid = np.empty(part.m, dtype=np.int64)
        gid[by_s] = np.concatenate([[0], np.cumsum(np.diff(part.s_lo[by_s]) > COINCIDENT)])
        key = np.lexsort((part.u_lo, gid))
        self.order = key
        s_lo, s_hi = part.s_lo[key], part.s_hi[key]
        new = np.ones(part.m, bool)
        new[1:] = gid[key][1:] != gid[key][:-1]
        self.starts = np.nonzero(new)[0]
        self.ends = np.append(self.starts[1:], part.m)
        self.g_lo = np.minimum.reduceat(s_lo, self.starts)
        self.g_hi = np.minimum.reduceat(s_hi, self.starts)
        spread = np.maximum.reduceat(s_hi, self.starts) - self.g_hi
        u_lo = part.u_lo[key]
        u_hi = part.u_hi[key]
        self.u_lo, self.u_hi = u_lo, u_hi
        grouped_ok = (np.all(self.g_hi[:-1] <= self.g_lo[1:] + COINCIDENT)
                      and np.all(spread <= COINCIDENT)
                      and not np.any((u_hi[:-1] > u_lo[1:] + COINCIDENT) & ~new[1:]))
        self.fast = bool(grouped_ok)
        gid = np.repeat(np.arange(self.starts.size), self.ends - self.starts)
        self.u_min = float(u_lo.min())
        self.span = float(u_hi.max() - self.u_min) + 1.0
        self.keys = gid * self.span + (u_lo - self.u_min)

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X, Y = np.asarray(X, float), np.asarray(Y, float)
        out = np.full(X.shape, -1, dtype=np.int64)
        p, mg = self.part, self.margin
        if not self.fast:
            for start in range(0, X.size, 512):
                sl = slice(start, start + 512)
                x, y = X[sl, None], Y[sl, None]
                hit = ((p.s_lo + mg < x) & (x < p.s_hi - mg) & (p.u_lo + mg < y) & (y < p.u_hi - mg))
                any_hit = hit.any(axis=1)
                out[sl] = np.where(any_hit, hit.argmax(axis=1), -1)
            return out
        g = np.searchsorted(self.g_lo, X, side="right") - 1
        ok = g >= 0
        g = np.clip(g, 0, None)
        ok &= (self.g_lo[g] + mg < X) & (X < self.g_hi[g] - mg)
        # one global search: groups laid end to end on a shifted axis
        j = np.searchsorted(self.keys, g * self.span + (Y - self.u_min), side="right") - 1
        j = np.clip(j, 0, p.m - 1)
        ok &= (j >= self.starts[g]) & (j < self.ends[g])
        ok &= (self.u_lo[j] + mg < Y) & (Y < self.u_hi[j] - mg)
        out[ok] = self.order[j[ok]]
        return out


def _sample_rectangles(model: SystemModel, part: Partition, per_rect: int, rng: np.random.Generator):
    """Sample points of the invariant set inside each rectangle.

    Coded horseshoe partitions are sampled by completing the word with random
    symbols (24 extra digits); otherwise points are uniform in the rectangle.
    """
    m = part.m
    idx = np.repeat(np.arange(m), per_rect)
    if model.kind == "affine_horseshoe" and part.words is not None:
        extra = 24
        w = 3.0 ** -np.arange(1, extra + 1)
        tail_s = (2 * rng.integers(0, 2, (idx.size, extra))) @ w
        tail_u = (2 * rng.integers(0, 2, (idx.size, extra))) @ w
        X = part.s_lo[idx] + (part.s_hi[idx] - part.s_lo[idx]) * tail_s
        Y = part.u_lo[idx] + (part.u_hi[idx] - part.u_lo[idx]) * tail_u
        return idx, X, Y
    X = part.s_lo[idx] + (part.s_hi[idx] - part.s_lo[idx]) * rng.random(idx.size)
    Y = part.u_lo[idx] + (part.u_hi[idx] - part.u_lo[idx]) * rng.random(idx.size)
    return idx, X, Y


@dataclass(frozen=True)
class MarkovReport:
    passed: bool
    worst_margin: float
    location: tuple[int, int] | None
    kind: str | None
    checked: int
    tolerance: float

    def summary(self) -> str:
        state = "pass" if self.passed else "FAIL"
        where = "" if self.location is None else f" at {self.kind} slice {self.location[0]}->{self.location[1]}"
        return f"markov {state}: worst margin {self.worst_margin:.3e}{where} ({self.checked} samples)"


def _forward_samples(model: SystemModel, X, Y):
    if model.kind == "affine_horseshoe":
        # nearest affine branch, so widened or straddling rectangles still map
        b = np.where(Y <= 0.5, 0, 1)
        return X / 3 + 2 * b / 3, 3 * Y - 2 * b
    return forward_xy(model, X, Y)


def _slice_images(model: SystemModel, part: Partition, idx, X, Y):
    """Images of the stable and unstable slices of rectangle ``idx`` through ``(X, Y)``."""
    if model.kind == "affine_horseshoe":
        b = np.where(Y <= 0.5, 0, 1)
        img = _image(part.s_lo[idx], part.s_hi[idx], part.u_lo[idx], part.u_hi[idx], b)
        return img
    lo = forward_xy(model, part.s_lo[idx], Y)
    hi = forward_xy(model, part.s_hi[idx], Y)
    dlo = forward_xy(model, X, part.u_lo[idx])
    dhi = forward_xy(model, X, part.u_hi[idx])
    return lo[0], hi[0], dlo[1], dhi[1]


def verify_markov(
    model: SystemModel,
    part: Partition,
    samples_per_rect: int = 4,
    rng: np.random.Generator | None = None,
    tol: float = MARGIN,
) -> MarkovReport:
    """Sampled check of the slice conditions.

    For sample points ``x`` in rectangle ``i`` whose image lies in the
    interior of rectangle ``j``, the image of the stable slice of ``x`` must
    lie inside the stable extent of ``j`` and the image of the unstable slice
    must cover the unstable extent of ``j``.  The signed margin of the worse
    of the two is recorded; the partition passes when no margin is below
    ``-tol``.
    """
    if part.m == 0:
        raise DomainError("empty partition")
    rng = rng or np.random.default_rng(0)
    idx, X, Y = _sample_rectangles(model, part, samples_per_rect, rng)
    FX, FY = _forward_samples(model, X, Y)
    loc = _Locator(part, tol)
    j = loc(FX, FY)
    ok = j >= 0
    idx, X, Y, j = idx[ok], X[ok], Y[ok], j[ok]
    if idx.size == 0:
        return MarkovReport(False, -np.inf, None, "no_transitions", 0, tol)
    s_lo, s_hi, u_lo, u_hi = _slice_images(model, part, idx, X, Y)
    stable = np.minimum(s_lo - part.s_lo[j], part.s_hi[j] - s_hi)
    unstable = np.minimum(part.u_lo[j] - u_lo, u_hi - part.u_hi[j])
    both = np.minimum(stable, unstable)
    w = int(np.argmin(both))
    worst = float(both[w])
    kind = "stable" if stable[w] <= unstable[w] else "unstable"
    passed = worst >= -tol
    return MarkovReport(passed, worst, (int(idx[w]), int(j[w])), kind, int(idx.size), tol)


@dataclass(frozen=True)
class TransitionMatrix:
    A: np.ndarray
    m: int

    def __post_init__(self):
        if self.A.shape != (self.m, self.m):
            raise DomainError("matrix shape does not match symbol count")


def transition_matrix(
    model: SystemModel,
    part: Partition,
    samples_per_rect: int = 64,
    rng: np.random.Generator | None = None,
) -> TransitionMatrix:
    """``A[i, j] = 1`` iff the interior of ``R_i`` meets the preimage of the interior of ``R_j``.

    On the horseshoe this is an interval test on the forward image of each
    rectangle (split across both strips when a rectangle straddles the gap);
    on other models it is sampled.
    """
    m = part.m
    if m > DENSE_CAP:
        raise CapExceeded(f"dense transition matrix limited to {DENSE_CAP} symbols")
    A = np.zeros((m, m), dtype=np.int64)
    if model.kind == "affine_horseshoe":
        for b, (lo, hi) in enumerate(((0.0, THIRD), (2 * THIRD, 1.0))):
            ul = np.maximum(part.u_lo, lo)
            uh = np.minimum(part.u_hi, hi)
            live = uh - ul > MARGIN
            img = _image(part.s_lo, part.s_hi, ul, uh, b)
            s_ov = (np.minimum(img[1][:, None], part.s_hi[None, :])
                    - np.maximum(img[0][:, None], part.s_lo[None, :]))
            u_ov = (np.minimum(img[3][:, None], part.u_hi[None, :])
                    - np.maximum(img[2][:, None], part.u_lo[None, :]))
            A |= ((s_ov > MARGIN) & (u_ov > MARGIN) & live[:, None]).astype(np.int64)
        return TransitionMatrix(A, m)
    rng = rng or np.random.default_rng(0)
    idx, X, Y = _sample_rectangles(model, part, samples_per_rect, rng)
    FX, FY = forward_xy(model, X, Y)
    j = _Locator(part, MARGIN)(FX, FY)
    ok = j >= 0
    A[idx[ok], j[ok]] = 1
    return TransitionMatrix(A, m)


@dataclass(frozen=True)
class CoverageReport:
    covered: bool
    disjoint: bool
    uncovered: int
    overlaps: int
    samples: int


def check_coverage(model: SystemModel, part: Partition, n: int = 10_000,
                   rng: np.random.Generator | None = None, margin: float = MARGIN) -> CoverageReport:
    """Sampled cover (every invariant-set sample in some closed rectangle) and
    disjointness (no sample in two interiors)."""
    rng = rng or np.random.default_rng(0)
    pts = sample_invariant_set(model, n, rng)
    X = np.array([p.x for p in pts])
    Y = np.array([p.y for p in pts])
    inside_closed = np.zeros(n, dtype=np.int64)
    inside_open = np.zeros(n, dtype=np.int64)
    for start in range(0, part.m, 256):
        sl = slice(start, start + 256)
        xs, ys = X[:, None], Y[:, None]
        closed = ((part.s_lo[sl] - margin <= xs) & (xs <= part.s_hi[sl] + margin)
                  & (part.u_lo[sl] - margin <= ys) & (ys <= part.u_hi[sl] + margin))
        opened = ((part.s_lo[sl] + margin < xs) & (xs < part.s_hi[sl] - margin)
                  & (part.u_lo[sl] + margin < ys) & (ys < part.u_hi[sl] - margin))
        inside_closed += closed.sum(axis=1)
        inside_open += opened.sum(axis=1)
    uncovered = int(np.sum(inside_closed == 0))
    overlaps = int(np.sum(inside_open > 1))
    return CoverageReport(uncovered == 0, overlaps == 0, uncovered, overlaps, n)


def corrupt_partition(part: Partition, index: int = 0, factor: float = 0.10) -> Partition:
    """Copy with rectangle ``index`` widened by ``factor`` about its centre in both extents."""
    s_lo, s_hi, u_lo, u_hi = (a.copy() for a in (part.s_lo, part.s_hi, part.u_lo, part.u_hi))
    ds = (s_hi[index] - s_lo[index]) * factor / 2
    du = (u_hi[index] - u_lo[index]) * factor / 2
    s_lo[index] -= ds
    s_hi[index] += ds
    u_lo[index] -= du
    u_hi[index] += du
    return Partition(s_lo, s_hi, u_lo, u_hi, part.model, part.words, part.center, part.rounds,
                     part.payloads)


# --- cover by shadowing ------------------------------------------------------------


def _greedy_net(X: np.ndarray, Y: np.ndarray, space: str, gamma: float) -> list[int]:
    chosen: list[int] = []
    dist = np.full(X.size, np.inf)
    for i in range(X.size):
        if dist[i] < gamma:
            continue
        chosen.append(i)
        dx, dy = wrapped_difference(space, X - X[i], Y - Y[i])
        dist = np.minimum(dist, np.maximum(np.abs(dx), np.abs(dy)))
    return chosen


def _max_gap(X, Y, PX, PY, space) -> float:
    worst = 0.0
    for start in range(0, X.size, 512):
        dx, dy = wrapped_difference(space, X[start:start + 512, None] - PX[None, :],
                                    Y[start:start + 512, None] - PY[None, :])
        d = np.maximum(np.abs(dx), np.abs(dy)).min(axis=1)
        worst = max(worst, float(d.max()))
    return worst


def build_cover_via_shadowing(
    model: SystemModel,
    gamma: float,
    beta: float,
    rng: np.random.Generator | None = None,
    C: float = DEFAULT_C,
    n_samples: int = 4000,
    n_probe: int = 500,
    windows: int = 4,
    half_width: int = 3,
    orbit_windows: int = 1500,
) -> list[Rectangle]:
    """Cover of the invariant set by shadow-point sets ``T_s``.

    A ``gamma``-dense net ``P`` is drawn from sampled invariant-set points and
    joined into a transition relation ``p_i -> p_j`` whenever
    ``d(f(p_i), p_j) < alpha``.  Admissible symbol windows of half-width
    ``half_width`` are drawn in two ways: by following the orbits of up to
    ``orbit_windows`` sampled points and recording the nearest net point at
    each time, and as ``windows`` random walks through each net point.  Each
    window is shadowed and the shadow point at its centre is assigned to the
    centre net point.  Each rectangle is the coordinate hull of those points (unwrapped
    around the net point on the torus) and keeps them as its payload.

    Raises
    ------
    DomainError
        When ``gamma`` is not below ``alpha / 2`` or ``beta`` exceeds
        the product-structure scale ``delta0``.
    InsufficientDensity
        When fresh probe points lie farther than ``gamma`` from the samples.
    """
    rng = rng or np.random.default_rng(0)
    if not beta <= model.hyp.delta0:
        raise DomainError(f"beta = {beta:g} must not exceed delta0 = {model.hyp.delta0:g}")
    alpha = shadowing_tolerance(C, model.hyp.exact("lam"), beta)
    if not gamma < alpha / 2:
        raise DomainError(f"gamma = {gamma:g} must be below alpha/2 = {alpha / 2:g} for beta = {beta:g}")
    space = model.space
    pts = sample_invariant_set(model, n_samples, rng)
    X = np.array([p.x for p in pts])
    Y = np.array([p.y for p in pts])
    probe = sample_invariant_set(model, n_probe, rng)
    gap = _max_gap(np.array([p.x for p in probe]), np.array([p.y for p in probe]), X, Y, space)
    if gap > gamma:
        raise InsufficientDensity(f"sampled set leaves a gap of {gap:.3g} > gamma = {gamma:g}")
    net = _greedy_net(X, Y, space, gamma)
    P = [pts[i] for i in net]
    PX, PY = X[net], Y[net]
    FX, FY = forward_xy(model, PX, PY)
    dx, dy = wrapped_difference(space, PX[None, :] - FX[:, None], PY[None, :] - FY[:, None])
    T = np.maximum(np.abs(dx), np.abs(dy)) < alpha
    succ = [np.nonzero(T[i])[0] for i in range(len(P))]
    pred = [np.nonzero(T[:, j])[0] for j in range(len(P))]
    windows_by_center: list[list[list[int]]] = [[] for _ in P]
    # windows traced by sampled orbits: nearest net point at each time
    for i in rng.permutation(X.size)[:orbit_windows]:
        seq = _traced_window(model, pts[i], PX, PY, succ, half_width)
        if seq is not None:
            windows_by_center[seq[half_width]].append(seq)
    # random admissible windows through each net point
    for s in range(len(P)):
        for _ in range(windows):
            fwd, back = [s], [s]
            for _ in range(half_width):
                if succ[fwd[-1]].size == 0 or pred[back[-1]].size == 0:
                    break
                fwd.append(int(rng.choice(succ[fwd[-1]])))
                back.append(int(rng.choice(pred[back[-1]])))
            else:
                windows_by_center[s].append(back[::-1] + fwd[1:])
    rects = []
    for s, ps in enumerate(P):
        found = []
        for seq in windows_by_center[s]:
            res = shadow(model, PseudoOrbit(tuple(P[q] for q in seq), alpha), C=C)
            z = res.start
            for _ in range(half_width):
                fx, fy = forward_xy(model, z.x, z.y)
                z = model.point(float(fx), float(fy))
            found.append(z)
        if not found:
            continue
        ddx, ddy = wrapped_difference(space, np.array([q.x - ps.x for q in found]),
                                      np.array([q.y - ps.y for q in found]))
        sx, sy = ps.x + ddx, ps.y + ddy
        payload = np.column_stack([sx, sy])
        rects.append(Rectangle(len(rects), (float(sx.min()), float(sx.max())),
                               (float(sy.min()), float(sy.max())), None, payload))
    return rects


def _traced_window(model: SystemModel, p: Point2, PX, PY, succ, half_width: int) -> list[int] | None:
    """Admissible window following the orbit of ``p``: each step moves to the
    successor of the current net point nearest to the next orbit point."""
    orbit = [p]
    q = p
    try:
        for _ in range(half_width):
            q = model.point(*(float(v) for v in inverse_xy(model, q.x, q.y)))
            orbit.insert(0, q)
        q = p
        for _ in range(half_width):
            q = model.point(*(float(v) for v in forward_xy(model, q.x, q.y)))
            orbit.append(q)
    except DomainError:
        return None
    seq: list[int] = []
    for q in orbit:
        cand = succ[seq[-1]] if seq else np.arange(PX.size)
        if cand.size == 0:
            return None
        dx, dy = wrapped_difference(p.space, PX[cand] - q.x, PY[cand] - q.y)
        seq.append(int(cand[np.argmin(np.maximum(np.abs(dx), np.abs(dy)))]))
    return seq


def refine_intersections(
    model: SystemModel,
    cover: Sequence[Rectangle],
    tol: float = MARGIN,
) -> Partition:
    """Split overlapping cover rectangles into disjoint product pieces.

    For every payload point ``x`` of ``T_j`` and every ``T_k`` overlapping
    ``T_j``, ``x`` falls in one of four patterns according to whether its
    stable coordinate lies in the stable extent of ``T_k`` and whether its
    unstable coordinate lies in the unstable extent of ``T_k``.  The piece
    containing ``x`` is cut out of ``T_j`` accordingly (an ``in`` bit
    intersects with ``T_k``, an ``out`` bit keeps the side of ``T_j`` outside
    ``T_k`` containing ``x``), and pieces are intersected over every ``T_j``
    that contains ``x``.  Identical pieces are merged and closed up.

    Raises
    ------
    DegenerateOverlap
        When two overlapping rectangles have endpoints that nearly but not
        exactly coincide (``1e-12 < gap <= tol``), so the pattern of points
        near that edge cannot be decided.
    """
    rects = list(cover)
    if any(r.samples is None for r in rects):
        raise DomainError("cover rectangles must carry sample payloads")
    n = len(rects)
    lo = np.array([[r.s_interval[0], r.u_interval[0]] for r in rects]).reshape(n, 2)
    hi = np.array([[r.s_interval[1], r.u_interval[1]] for r in rects]).reshape(n, 2)
    overlap = np.all((np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None])) > -COINCIDENT,
                     axis=2)
    np.fill_diagonal(overlap, False)
    for j, k in zip(*np.nonzero(np.triu(overlap))):
        ends_j = np.concatenate([lo[j], hi[j]])
        ends_k = np.concatenate([lo[k], hi[k]])
        gaps = np.abs(ends_j[:, None] - ends_k[None, :])
        if np.any((gaps > COINCIDENT) & (gaps <= tol)):
            raise DegenerateOverlap(f"rectangles {j} and {k} have near-coincident edges", pair=(int(j), int(k)))
    pieces: dict[tuple, list] = {}
    for j, r in enumerate(rects):
        for pt in r.samples:
            members = [i for i in range(n) if np.all(lo[i] - COINCIDENT <= pt) and np.all(pt <= hi[i] + COINCIDENT)]
            if j not in members:
                members.append(j)
            box_lo = np.max(lo[members], axis=0)
            box_hi = np.min(hi[members], axis=0)
            for i in members:
                for k in np.nonzero(overlap[i])[0]:
                    if k in members:
                        continue
                    for axis in (0, 1):
                        inside = lo[k, axis] - COINCIDENT <= pt[axis] <= hi[k, axis] + COINCIDENT
                        if inside:
                            box_lo[axis] = max(box_lo[axis], lo[k, axis])
                            box_hi[axis] = min(box_hi[axis], hi[k, axis])
                        elif pt[axis] < lo[k, axis]:
                            box_hi[axis] = min(box_hi[axis], lo[k, axis])
                        else:
                            box_lo[axis] = max(box_lo[axis], hi[k, axis])
            key = tuple(np.round(np.concatenate([box_lo, box_hi]) / tol).astype(np.int64))
            pieces.setdefault(key, [box_lo, box_hi, []])[2].append(pt)
    out = []
    for box_lo, box_hi, pts in pieces.values():
        out.append(Rectangle(len(out), (float(box_lo[0]), float(box_hi[0])),
                             (float(box_lo[1]), float(box_hi[1])), None, np.array(pts)))
    return Partition.from_rectangles(out, model.name)
