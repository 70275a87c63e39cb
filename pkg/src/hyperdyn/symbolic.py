"""Subshifts of finite type and the coding of the horseshoe.

Matrix side: admissibility, spectral radius by power iteration, exact
periodic-point counts from integer matrix powers cross-checked by brute
enumeration, irreducibility and period.

Point side: ``decode`` intersects the pullbacks of the rectangles named by a
symbol window (exact rational interval arithmetic on the horseshoe),
``itinerary`` reads the symbols off an orbit, and ``verify_conjugacy``
checks that shifting a word and mapping its point agree.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .constants import DEFAULT_C
from .errors import AlphabetMismatch, CapExceeded, DomainError, EmptyIntersection, OutsidePartition, UnsupportedModel
from .maps import Point2, SystemModel, forward, inverse
from .partition import Partition, cylinder_bounds

__all__ = [
    "SymbolWindow",
    "SpectralResult",
    "PeriodicCount",
    "IrreducibilityReport",
    "DecodeResult",
    "ConjugacyReport",
    "as_matrix",
    "is_admissible",
    "spectral_radius",
    "trace_power",
    "brute_periodic_count",
    "count_periodic",
    "check_irreducible_aperiodic",
    "decode",
    "coding_accuracy",
    "itinerary",
    "verify_conjugacy",
    "shift",
    "random_admissible_word",
    "full_shift",
    "de_bruijn",
    "symbol_frequencies",
]

SPECTRAL_TOL = 1e-12
SPECTRAL_CAP = 100_000
BRUTE_CAP = 2**20
BOUNDARY_MARGIN = 1e-12


def as_matrix(A) -> np.ndarray:
    """Integer matrix from a :class:`TransitionMatrix`, array or nested list."""
    A = getattr(A, "A", A)
    arr = np.asarray(A)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DomainError("transition matrix must be square")
    if np.any(arr < 0):
        raise DomainError("transition matrix must be nonnegative")
    return arr.astype(np.int64)


def full_shift(m: int) -> np.ndarray:
    return np.ones((m, m), dtype=np.int64)


def de_bruijn(k: int, m: int = 2) -> np.ndarray:
    """Transition matrix on words of length ``k``: ``w -> w'`` iff ``w[1:] == w'[:-1]``.

    Words are indexed in lexicographic order (most significant symbol first).
    """
    n = m**k
    A = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        tail = i % m ** (k - 1)
        for c in range(m):
            A[i, tail * m + c] = 1
    return A


@dataclass(frozen=True)
class SymbolWindow:
    """Finite symbol word with ``symbols[offset]`` at time 0.

    A periodic window stands for the bi-infinite repetition of ``symbols``.
    """

    symbols: tuple[int, ...]
    offset: int = 0
    periodic: bool = False
    flagged: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if not self.symbols:
            raise DomainError("empty symbol window")

    def __len__(self):
        return len(self.symbols)

    @property
    def first(self) -> int:
        return -self.offset

    @property
    def last(self) -> int:
        return len(self.symbols) - 1 - self.offset

    def at(self, j: int) -> int:
        i = j + self.offset
        if self.periodic:
            return self.symbols[i % len(self.symbols)]
        if not 0 <= i < len(self.symbols):
            raise DomainError(f"time {j} outside the window [{self.first}, {self.last}]")
        return self.symbols[i]

    def covers(self, lo: int, hi: int) -> bool:
        return self.periodic or (self.first <= lo and hi <= self.last)

    def span(self, lo: int, hi: int) -> tuple[int, ...]:
        return tuple(self.at(j) for j in range(lo, hi + 1))


def shift(w: SymbolWindow, k: int = 1) -> SymbolWindow:
    """Shift by ``k``: the new symbol at time ``j`` is the old one at ``j + k``."""
    if w.periodic:
        n = len(w)
        return SymbolWindow(w.symbols, (w.offset + k) % n, True)
    return SymbolWindow(w.symbols, w.offset + k, False)


def is_admissible(A, w: SymbolWindow) -> bool:
    A = as_matrix(A)
    m = A.shape[0]
    s = w.symbols
    if any(not 0 <= v < m for v in s):
        raise AlphabetMismatch(f"symbols must lie in 0..{m - 1}")
    ok = all(A[a, b] > 0 for a, b in zip(s[:-1], s[1:]))
    if w.periodic:
        ok = ok and A[s[-1], s[0]] > 0
    return bool(ok)


def random_admissible_word(A, length: int, rng: np.random.Generator, offset: int | None = None) -> SymbolWindow:
    """Random walk on the transition graph from a uniformly chosen state."""
    A = as_matrix(A)
    succ = [np.nonzero(A[i])[0] for i in range(A.shape[0])]
    s = [int(rng.integers(A.shape[0]))]
    while len(s) < length:
        nxt = succ[s[-1]]
        if nxt.size == 0:
            raise DomainError(f"state {s[-1]} has no successor")
        s.append(int(rng.choice(nxt)))
    return SymbolWindow(tuple(s), length // 2 if offset is None else offset)


@dataclass(frozen=True)
class SpectralResult:
    rho: float
    entropy: float
    iterations: int
    residual: float
    flags: tuple[str, ...] = ()


def _components(A: np.ndarray) -> list[np.ndarray]:
    # strongly connected classes that carry at least one edge
    n = A.shape[0]
    fwd = [np.nonzero(A[i])[0] for i in range(n)]
    bwd = [np.nonzero(A[:, i])[0] for i in range(n)]
    seen = np.zeros(n, dtype=bool)
    out = []
    for i in range(n):
        if seen[i]:
            continue
        comp = _reach(fwd, i) & _reach(bwd, i)
        seen |= comp
        idx = np.nonzero(comp)[0]
        if A[np.ix_(idx, idx)].any():
            out.append(idx)
    return out


def _block_radius(B: np.ndarray, tol: float, cap: int) -> tuple[float, int, float]:
    # I + B is primitive for irreducible B; squeeze the Collatz-Wielandt bounds
    P = B + np.eye(B.shape[0])
    v = np.ones(B.shape[0])
    lo = hi = 0.0
    for it in range(1, cap + 1):
        w = P @ v
        r = w / v
        lo, hi = float(r.min()), float(r.max())
        if hi - lo <= tol * hi:
            break
        v = w / float(w.max())
    return (lo + hi) / 2 - 1.0, it, hi - lo


def spectral_radius(A, tol: float = SPECTRAL_TOL, cap: int = SPECTRAL_CAP) -> SpectralResult:
    """Spectral radius by power iteration from the all-ones vector.

    Iteration stops once the Rayleigh quotient changes by at most ``tol`` and
    the residual ``|Av - rho v|`` of the normalised iterate is below
    ``sqrt(tol) rho``.  Matrices that are not primitive (periodic or
    reducible), or that have not settled after ``cap`` steps, are split into
    strongly connected classes; each class ``B`` is iterated as ``I + B``
    until its Collatz-Wielandt bounds meet and the largest class radius is
    returned, flagged, with the bound gap as residual.
    """
    M = as_matrix(A).astype(float)
    v = np.ones(M.shape[0]) / math.sqrt(M.shape[0])
    rho = 0.0
    it = 0
    rep = check_irreducible_aperiodic(M)
    for it in range(1, cap + 1 if rep.aperiodic else 1):
        w = M @ v
        est = float(v @ w)
        residual = float(np.max(np.abs(w - est * v)))
        if abs(est - rho) <= tol and residual <= math.sqrt(tol) * est:
            return SpectralResult(est, math.log(est), it, residual, ())
        rho = est
        v = w / float(np.linalg.norm(w))
    rho, gap = 0.0, 0.0
    for idx in _components(M > 0):
        r, k, g = _block_radius(M[np.ix_(idx, idx)], tol, cap)
        it += k
        if r > rho:
            rho, gap = r, g
    if rho == 0.0:
        return SpectralResult(0.0, -math.inf, it, 0.0, ("nilpotent",))
    return SpectralResult(rho, math.log(rho), it, gap, ("component_fallback",))


def _int_matmul(X: list[list[int]], Y: list[list[int]]) -> list[list[int]]:
    n = len(X)
    cols = list(zip(*Y))
    return [[sum(a * b for a, b in zip(X[i], cols[j])) for j in range(n)] for i in range(n)]


def trace_power(A, n: int) -> int:
    """``tr(A^n)`` in exact integer arithmetic (square-and-multiply)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    M = [[int(v) for v in row] for row in as_matrix(A)]
    size = len(M)
    R = [[int(i == j) for j in range(size)] for i in range(size)]
    while n:
        if n & 1:
            R = _int_matmul(R, M)
        M = _int_matmul(M, M)
        n >>= 1
    return sum(R[i][i] for i in range(size))


def brute_periodic_count(A, n: int, cap: int = BRUTE_CAP) -> int:
    """Number of admissible cyclic words of length ``n``, weighted by the product of entries."""
    A = as_matrix(A)
    m = A.shape[0]
    if m**n > cap:
        raise CapExceeded(f"{m}^{n} words exceed the enumeration cap {cap}")
    words = np.indices((m,) * n).reshape(n, -1)
    weight = np.ones(words.shape[1], dtype=np.int64)
    for i in range(n):
        weight *= A[words[i], words[(i + 1) % n]]
    return int(weight.sum())


@dataclass(frozen=True)
class PeriodicCount:
    n: int
    trace: int
    brute: int | None

    @property
    def agree(self) -> bool:
        return self.brute is not None and self.brute == self.trace


def count_periodic(A, n: int, cap: int = BRUTE_CAP) -> PeriodicCount:
    """Period-``n`` point count of the shift, by trace and by enumeration.

    Raises
    ------
    CapExceeded
        When enumeration would exceed ``cap`` words; the trace count is
        attached to the exception as ``trace``.
    """
    t = trace_power(A, n)
    try:
        b = brute_periodic_count(A, n, cap)
    except CapExceeded as exc:
        exc.trace = t
        raise
    return PeriodicCount(n, t, b)


@dataclass(frozen=True)
class IrreducibilityReport:
    irreducible: bool
    aperiodic: bool
    period: int | None


def _reach(adj: list[np.ndarray], start: int) -> np.ndarray:
    seen = np.zeros(len(adj), bool)
    seen[start] = True
    q = deque([start])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                q.append(v)
    return seen


def check_irreducible_aperiodic(A) -> IrreducibilityReport:
    """Irreducibility by reachability; period as the gcd of ``level(u) + 1 - level(v)``
    over all edges, with BFS levels from node 0."""
    A = as_matrix(A) > 0
    n = A.shape[0]
    fwd = [np.nonzero(A[i])[0] for i in range(n)]
    bwd = [np.nonzero(A[:, i])[0] for i in range(n)]
    if not (_reach(fwd, 0).all() and _reach(bwd, 0).all()):
        return IrreducibilityReport(False, False, None)
    level = np.full(n, -1)
    level[0] = 0
    q = deque([0])
    while q:
        u = q.popleft()
        for v in fwd[u]:
            if level[v] < 0:
                level[v] = level[u] + 1
                q.append(v)
    g = 0
    for u in range(n):
        for v in fwd[u]:
            g = math.gcd(g, int(abs(level[u] + 1 - level[v])))
    return IrreducibilityReport(True, g == 1, g)


# --- coding ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecodeResult:
    point: Point2
    accuracy: float
    diameter: float
    bounds: tuple[Fraction, Fraction, Fraction, Fraction]


def coding_accuracy(model: SystemModel, part: Partition, N: int, C: float = DEFAULT_C) -> float:
    """``C lambda^N diam(R)``."""
    return C * model.hyp.lam**N * part.diameter


def _exact_rects(model: SystemModel, part: Partition):
    if model.kind != "affine_horseshoe" or part.words is None:
        raise UnsupportedModel("decode needs a coded partition of the affine horseshoe")
    return [cylinder_bounds(tuple(int(v) for v in w), part.center) for w in part.words]


def _strip(u_lo: Fraction, u_hi: Fraction) -> int:
    if u_hi <= Fraction(1, 3):
        return 0
    if u_lo >= Fraction(2, 3):
        return 1
    raise DomainError("rectangle straddles the strips")


def _meet(a, b):
    r = (max(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), min(a[3], b[3]))
    if r[0] > r[1] or r[2] > r[3]:
        raise EmptyIntersection("pullbacks of the window do not intersect")
    return r


def decode(model: SystemModel, part: Partition, w: SymbolWindow, N: int, C: float = DEFAULT_C) -> DecodeResult:
    """Point coded by ``w``: centre of ``K_N = ∩_{|n| <= N} f^{-n}(R_{a_n})``.

    The forward half is built from the far end inwards,
    ``J = R_{a_n} ∩ f^{-1}(J)``, and the backward half likewise with images,
    ``I = R_{a_n} ∩ f(I)``.  All endpoints are exact rationals.

    Raises
    ------
    EmptyIntersection
        When the window is inadmissible for the partition.
    """
    if not w.covers(-N, N):
        raise DomainError(f"window does not cover [-{N}, {N}]")
    rects = _exact_rects(model, part)
    m = len(rects)
    syms = w.span(-N, N)
    if any(not 0 <= s < m for s in syms):
        raise AlphabetMismatch(f"symbols must lie in 0..{m - 1}")
    J = rects[syms[-1]]
    for n in range(N - 1, -1, -1):
        R = rects[syms[n + N]]
        b = _strip(R[2], R[3])
        pre = (3 * J[0] - 2 * b, 3 * J[1] - 2 * b, (J[2] + 2 * b) / 3, (J[3] + 2 * b) / 3)
        J = _meet(R, pre)
    I = rects[syms[0]]
    for n in range(-N + 1, 1):
        b = _strip(I[2], I[3])
        img = (I[0] / 3 + Fraction(2 * b, 3), I[1] / 3 + Fraction(2 * b, 3), 3 * I[2] - 2 * b, 3 * I[3] - 2 * b)
        I = _meet(rects[syms[n + N]], img)
    K = _meet(I, J)
    x = (K[0] + K[1]) / 2
    y = (K[2] + K[3]) / 2
    diam = float(max(K[1] - K[0], K[3] - K[2]))
    return DecodeResult(model.point(float(x), float(y)), coding_accuracy(model, part, N, C), diam, K)


def _containing(part: Partition, p: Point2, margin: float) -> list[int]:
    inside = ((part.s_lo - margin <= p.x) & (p.x <= part.s_hi + margin)
              & (part.u_lo - margin <= p.y) & (p.y <= part.u_hi + margin))
    return [int(i) for i in np.nonzero(inside)[0]]


def _on_boundary(part: Partition, i: int, p: Point2, margin: float) -> bool:
    return bool(min(abs(p.x - part.s_lo[i]), abs(p.x - part.s_hi[i]),
                    abs(p.y - part.u_lo[i]), abs(p.y - part.u_hi[i])) <= margin)


def itinerary(model: SystemModel, part: Partition, x: Point2, N: int,
              margin: float = BOUNDARY_MARGIN) -> SymbolWindow:
    """Symbols of ``f^j(x)`` for ``j = -N .. N``.

    A point in several closed rectangles gets the lowest index; times where
    this happened, or where the point sits within ``margin`` of an edge, are
    listed in ``flagged``.

    Raises
    ------
    OutsidePartition
        When some iterate lies in no rectangle.
    """
    orbit = {0: x}
    p = x
    for j in range(1, N + 1):
        p = forward(model, p)
        orbit[j] = p
    p = x
    for j in range(1, N + 1):
        p = inverse(model, p)
        orbit[-j] = p
    syms, flagged = [], []
    for j in range(-N, N + 1):
        hits = _containing(part, orbit[j], margin)
        if not hits:
            raise OutsidePartition(f"f^{j}(x) = ({orbit[j].x:.6g}, {orbit[j].y:.6g}) lies in no rectangle")
        if len(hits) > 1 or _on_boundary(part, hits[0], orbit[j], margin):
            flagged.append(j)
        syms.append(hits[0])
    return SymbolWindow(tuple(syms), N, False, tuple(flagged))


@dataclass(frozen=True)
class ConjugacyReport:
    passed: bool
    worst_residual: float
    bound: float
    residuals: tuple[float, ...] = field(repr=False)


def verify_conjugacy(
    model: SystemModel,
    part: Partition,
    samples: int,
    N: int,
    rng: np.random.Generator | None = None,
    A=None,
    C: float = DEFAULT_C,
) -> ConjugacyReport:
    """Compare ``decode(shift(w))`` with ``f(decode(w))`` on random admissible windows."""
    from .partition import transition_matrix

    rng = rng or np.random.default_rng(0)
    A = as_matrix(A) if A is not None else transition_matrix(model, part).A
    bound = 2 * coding_accuracy(model, part, N, C)
    res = []
    for _ in range(samples):
        w = random_admissible_word(A, 2 * N + 3, rng, offset=N + 1)
        p = decode(model, part, w, N).point
        q = decode(model, part, shift(w), N).point
        fp = forward(model, p)
        res.append(max(abs(fp.x - q.x), abs(fp.y - q.y)))
    worst = max(res) if res else 0.0
    return ConjugacyReport(worst <= bound, worst, bound, tuple(res))


def symbol_frequencies(model: SystemModel, part: Partition, n: int) -> np.ndarray:
    """Symbol frequencies over every period-``n`` point of the coded partition.

    Each admissible cyclic word is decoded to its periodic point and the
    symbols are read back off the orbit with :func:`itinerary`.
    """
    from .partition import transition_matrix

    A = transition_matrix(model, part).A
    m = A.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    N = n
    words = np.indices((m,) * n).reshape(n, -1).T
    for word in words:
        w = SymbolWindow(tuple(int(v) for v in word), 0, True)
        if not is_admissible(A, w):
            continue
        p = decode(model, part, w, N).point
        it = itinerary(model, part, p, 0)
        q = p
        syms = [it.symbols[0]]
        for _ in range(n - 1):
            q = forward(model, q)
            syms.append(_containing(part, q, BOUNDARY_MARGIN)[0])
        counts += np.bincount(syms, minlength=m)
    total = counts.sum()
    return counts / total if total else counts.astype(float)

