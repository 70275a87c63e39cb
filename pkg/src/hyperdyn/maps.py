"""Planar and toral diffeomorphisms with declared hyperbolicity data.

Three model kinds are supported:

* ``affine_horseshoe``: two affine branches acting on the horizontal strips
  ``H0 = [0,1] x [0,1/3]`` and ``H1 = [0,1] x [2/3,1]``, contracting the
  horizontal direction by 3 and stretching the vertical one by 3.
* ``cat_map``: a hyperbolic integer matrix acting on the torus ``R^2 / Z^2``.
* ``user_grid``: a tabulated forward map, evaluated by bilinear interpolation,
  with finite-difference derivatives.

Every evaluation routine exists in two flavours: a ``Point2`` version for
single points and an ``*_xy`` version that works on numpy arrays and is used
by the numerical engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DegenerateError, DomainError, ValidationError

__all__ = [
    "Point2",
    "HyperbolicityData",
    "GridTable",
    "SystemModel",
    "SplittingFrame",
    "ConeReport",
    "horseshoe",
    "cat_map",
    "user_grid",
    "distance",
    "wrapped_difference",
    "forward",
    "inverse",
    "jacobian",
    "iterate",
    "forward_xy",
    "inverse_xy",
    "local_forward_xy",
    "local_inverse_xy",
    "estimate_splitting",
    "exact_frame",
    "frame_at",
    "verify_cone_criterion",
    "sample_invariant_set",
    "is_homogeneous",
]

Space = Literal["plane", "torus"]
Kind = Literal["affine_horseshoe", "cat_map", "user_grid"]

DOMAIN_TOL = 1e-12
SPLITTING_TOL = 1e-9
FD_STEP = 1e-6
C0_FLOOR = 1e-3


def _wrap(a):
    a = np.mod(a, 1.0)
    return np.where(a >= 1.0, 0.0, a)


def _wrap_scalar(v: float) -> float:
    v = float(v) % 1.0
    return 0.0 if v >= 1.0 else v


@dataclass(frozen=True)
class Point2:
    x: float
    y: float
    space: Space = "plane"

    def __post_init__(self):
        if self.space not in ("plane", "torus"):
            raise ValueError(f"unknown space {self.space!r}")
        if self.space == "torus":
            object.__setattr__(self, "x", _wrap_scalar(self.x))
            object.__setattr__(self, "y", _wrap_scalar(self.y))
        else:
            object.__setattr__(self, "x", float(self.x))
            object.__setattr__(self, "y", float(self.y))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def wrapped_difference(space: Space, dx, dy):
    """Componentwise difference reduced to [-1/2, 1/2) on the torus."""
    if space == "torus":
        dx = np.mod(np.asarray(dx, dtype=float) + 0.5, 1.0) - 0.5
        dy = np.mod(np.asarray(dy, dtype=float) + 0.5, 1.0) - 0.5
    return dx, dy


def distance(p: Point2, q: Point2) -> float:
    """Max-metric distance; wrap-around on the torus."""
    dx, dy = abs(p.x - q.x), abs(p.y - q.y)
    if p.space == "torus":
        dx, dy = min(dx, 1.0 - dx), min(dy, 1.0 - dy)
    return max(dx, dy)


@dataclass(frozen=True)
class HyperbolicityData:
    """Constants consumed by the ledger and the numerical engines.

    ``C0`` may be zero for affine models; ``C0_effective`` applies the floor
    used by the manifold-size formula.  Fields given as ``int`` or
    ``Fraction`` are stored as floats, with the exact value kept for the
    ledger (see :meth:`exact`).
    """

    lam: float
    c: float = 1.0
    mu_adapt: float = 1.0
    C0: float = 0.0
    C1: float = 1.0
    K_lip: float = 0.5
    L: float = 3.0
    L_inv: float = 3.0
    beta_holder: float = 1.0
    delta0: float = 0.1
    C0_floor: float = C0_FLOOR

    def __post_init__(self):
        exact = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, Fraction)) and not isinstance(v, bool):
                exact[f.name] = Fraction(v)
            object.__setattr__(self, f.name, float(v))
        object.__setattr__(self, "_exact", exact)
        checks = [
            (0.0 < self.lam < 1.0, "lambda must lie in (0,1)"),
            (self.lam < self.mu_adapt <= 1.0, "need lambda < mu_adapt <= 1"),
            (self.c >= 1.0, "c must be >= 1"),
            (self.L >= 1.0 and self.L_inv >= 1.0, "L and L_inv must be >= 1"),
            (self.C0 >= 0.0, "C0 must be >= 0"),
            (self.C1 > 0.0, "C1 must be > 0"),
            (0.0 < self.K_lip < 1.0, "K_lip must lie in (0,1)"),
            (0.0 < self.beta_holder <= 1.0, "beta_holder must lie in (0,1]"),
            (self.delta0 > 0.0, "delta0 must be > 0"),
            (self.C0_floor > 0.0, "C0_floor must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)

    def exact(self, name: str):
        """Exact value of a field when it was given as a rational, else the float."""
        return self._exact.get(name, getattr(self, name))

    @property
    def C0_effective(self) -> float:
        return max(self.C0, self.C0_floor)

    @property
    def C0_clamped(self) -> bool:
        return self.C0 < self.C0_floor

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "c": self.c,
            "mu_adapt": self.mu_adapt,
            "C0": self.C0,
            "C1": self.C1,
            "K_lip": self.K_lip,
            "L": self.L,
            "L_inv": self.L_inv,
            "beta_holder": self.beta_holder,
            "delta0": self.delta0,
            "C0_floor": self.C0_floor,
        }


@dataclass(frozen=True, eq=False)
class GridTable:
    """Forward map sampled on a rectangular grid ``xs x ys``."""

    xs: np.ndarray
    ys: np.ndarray
    fx: np.ndarray
    fy: np.ndarray

    def __post_init__(self):
        xs, ys = np.asarray(self.xs, float), np.asarray(self.ys, float)
        fx, fy = np.asarray(self.fx, float), np.asarray(self.fy, float)
        if fx.shape != (xs.size, ys.size) or fy.shape != fx.shape:
            raise ValidationError("table shape must be (len(xs), len(ys))")
        for name, arr in (("xs", xs), ("ys", ys), ("fx", fx), ("fy", fy)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "_interp_x", RegularGridInterpolator((xs, ys), fx, method="linear")
        )
        object.__setattr__(
            self, "_interp_y", RegularGridInterpolator((xs, ys), fy, method="linear")
        )

    def contains(self, x, y):
        return (
            (x >= self.xs[0] - DOMAIN_TOL)
            & (x <= self.xs[-1] + DOMAIN_TOL)
            & (y >= self.ys[0] - DOMAIN_TOL)
            & (y <= self.ys[-1] + DOMAIN_TOL)
        )

    def evaluate(self, x, y):
        pts = np.stack(
            [np.clip(x, self.xs[0], self.xs[-1]), np.clip(y, self.ys[0], self.ys[-1])],
            axis=-1,
        )
        return self._interp_x(pts), self._interp_y(pts)


@dataclass(frozen=True, eq=False)
class SystemModel:
    kind: Kind
    hyp: HyperbolicityData
    matrix: tuple[tuple[int, int], tuple[int, int]] | None = None
    grid: GridTable | None = None
    name: str = ""
    mixing_gap: int = 1

    @property
    def space(self) -> Space:
        return "torus" if self.kind == "cat_map" else "plane"

    def point(self, x: float, y: float) -> Point2:
        return Point2(x, y, self.space)

    @property
    def inverse_matrix(self) -> np.ndarray:
        (a, b), (c, d) = self.matrix
        det = a * d - b * c
        return np.array([[d, -b], [-c, a]], dtype=float) / det


def horseshoe(**overrides) -> SystemModel:
    """Affine horseshoe with rates 1/3 (stable) and 3 (unstable).

    The affine branches have zero second derivative, so ``C0`` is 0 and the
    floor from :class:`HyperbolicityData` applies.  Stable and unstable leaves
    are full horizontal and vertical segments, so the product structure is
    global on the unit square and ``delta0`` exceeds its diameter.
    """
    data = dict(lam=Fraction(1, 3), c=1, mu_adapt=1, C0=0, C1=1, K_lip=Fraction(1, 2),
                L=3, L_inv=3, beta_holder=1, delta0=2)
    data.update(overrides)
    return SystemModel("affine_horseshoe", HyperbolicityData(**data), name="horseshoe",
                       mixing_gap=1)


def cat_map(matrix: Sequence[Sequence[int]] = ((2, 1), (1, 1)), **overrides) -> SystemModel:
    """Hyperbolic toral automorphism; defaults to Arnold's cat map."""
    m = tuple(tuple(int(v) for v in row) for row in matrix)
    if len(m) != 2 or any(len(r) != 2 for r in m):
        raise ValidationError("cat map matrix must be 2x2")
    (a, b), (c, d) = m
    det = a * d - b * c
    if abs(det) != 1:
        raise ValidationError("cat map matrix must be unimodular")
    tr = a + d
    disc = tr * tr - 4 * det
    if disc <= 0:
        raise ValidationError("cat map matrix must be hyperbolic")
    mu = (abs(tr) + math.sqrt(disc)) / 2
    data = dict(lam=1 / mu, c=1.0, mu_adapt=1.0, C0=0.0, C1=1.0, K_lip=0.5,
                L=mu, L_inv=mu, beta_holder=1.0, delta0=0.1)
    data.update(overrides)
    return SystemModel("cat_map", HyperbolicityData(**data), matrix=m, name="catmap",
                       mixing_gap=1)


def user_grid(xs, ys, fx, fy, hyp: HyperbolicityData, name: str = "user_grid") -> SystemModel:
    return SystemModel("user_grid", hyp, grid=GridTable(xs, ys, fx, fy), name=name)


def is_homogeneous(model: SystemModel) -> bool:
    """True when the derivative is the same matrix at every point."""
    return model.kind in ("affine_horseshoe", "cat_map")


# --- horseshoe branches -------------------------------------------------------

def _h_branch_fwd(y):
    lo = y <= 1 / 3 + DOMAIN_TOL
    hi = y >= 2 / 3 - DOMAIN_TOL
    return lo, hi


def _h_branch_inv(x):
    lo = x <= 1 / 3 + DOMAIN_TOL
    hi = x >= 2 / 3 - DOMAIN_TOL
    return lo, hi


def _horseshoe_apply(x, y, branch):
    return x / 3 + 2 * branch / 3, 3 * y - 2 * branch


def _horseshoe_unapply(x, y, branch):
    return 3 * x - 2 * branch, (y + 2 * branch) / 3


def _horseshoe_forward(x, y):
    in_square = (x >= -DOMAIN_TOL) & (x <= 1 + DOMAIN_TOL) & (y >= -DOMAIN_TOL) & (y <= 1 + DOMAIN_TOL)
    lo, hi = _h_branch_fwd(y)
    bad = ~in_square | ~(lo | hi)
    if np.any(bad):
        raise DomainError("horseshoe point outside both horizontal strips H0, H1")
    return _horseshoe_apply(x, y, np.where(lo, 0.0, 1.0))


def _horseshoe_inverse(x, y):
    in_square = (x >= -DOMAIN_TOL) & (x <= 1 + DOMAIN_TOL) & (y >= -DOMAIN_TOL) & (y <= 1 + DOMAIN_TOL)
    lo, hi = _h_branch_inv(x)
    bad = ~in_square | ~(lo | hi)
    if np.any(bad):
        raise DomainError("horseshoe point outside both vertical strips V0, V1")
    return _horseshoe_unapply(x, y, np.where(lo, 0.0, 1.0))


# --- user grid ------------------------------------------------------------------

def _grid_forward(model: SystemModel, x, y):
    g = model.grid
    if not np.all(g.contains(x, y)):
        raise DomainError("point outside the tabulated grid")
    return g.evaluate(x, y)


def _grid_jacobian(model: SystemModel, x: float, y: float) -> np.ndarray:
    h = FD_STEP
    g = model.grid
    xs = np.array([x + h, x - h, x, x])
    ys = np.array([y, y, y + h, y - h])
    fx, fy = g.evaluate(xs, ys)
    return np.array(
        [[(fx[0] - fx[1]) / (2 * h), (fx[2] - fx[3]) / (2 * h)],
         [(fy[0] - fy[1]) / (2 * h), (fy[2] - fy[3]) / (2 * h)]]
    )


def _grid_inverse_point(model: SystemModel, px: float, py: float) -> tuple[float, float]:
    g = model.grid
    # seed Newton from the table node whose image lands closest to the target
    d = np.maximum(np.abs(g.fx - px), np.abs(g.fy - py))
    i, j = np.unravel_index(int(np.argmin(d)), d.shape)
    x, y = float(g.xs[i]), float(g.ys[j])
    for _ in range(60):
        fx, fy = g.evaluate(np.array([x]), np.array([y]))
        rx, ry = float(fx[0]) - px, float(fy[0]) - py
        if max(abs(rx), abs(ry)) < 1e-14:
            break
        J = _grid_jacobian(model, x, y)
        dx, dy = np.linalg.solve(J, [rx, ry])
        x, y = x - dx, y - dy
    else:
        raise DomainError("inverse of tabulated map did not converge")
    if not g.contains(np.array([x]), np.array([y]))[0]:
        raise DomainError("preimage outside the tabulated grid")
    return x, y


# --- public evaluation ------------------------------------------------------------

def forward_xy(model: SystemModel, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model.kind == "affine_horseshoe":
        return _horseshoe_forward(x, y)
    if model.kind == "cat_map":
        (a, b), (c, d) = model.matrix
        return _wrap(a * x + b * y), _wrap(c * x + d * y)
    return _grid_forward(model, x, y)


def inverse_xy(model: SystemModel, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model.kind == "affine_horseshoe":
        return _horseshoe_inverse(x, y)
    if model.kind == "cat_map":
        (a, b), (c, d) = model.inverse_matrix
        return _wrap(a * x + b * y), _wrap(c * x + d * y)
    flat = [_grid_inverse_point(model, float(px), float(py))
            for px, py in zip(np.ravel(x), np.ravel(y))]
    out = np.array(flat, dtype=float).reshape(np.shape(x) + (2,))
    return out[..., 0], out[..., 1]


def local_forward_xy(model: SystemModel, x, y, anchor: Point2):
    """Forward map in a neighbourhood of ``anchor``.

    For the horseshoe the affine branch containing the anchor is applied to
    every input, which extends the map smoothly across the strip edges; on the
    torus the unwrapped linear action is returned.  Used by chart computations.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model.kind == "affine_horseshoe":
        lo, hi = _h_branch_fwd(np.array(anchor.y))
        if not (lo or hi):
            raise DomainError("anchor outside both horizontal strips")
        return _horseshoe_apply(x, y, 0.0 if lo else 1.0)
    if model.kind == "cat_map":
        (a, b), (c, d) = model.matrix
        return a * x + b * y, c * x + d * y
    return _grid_forward(model, x, y)


def local_inverse_xy(model: SystemModel, x, y, anchor: Point2):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model.kind == "affine_horseshoe":
        lo, hi = _h_branch_inv(np.array(anchor.x))
        if not (lo or hi):
            raise DomainError("anchor outside both vertical strips")
        return _horseshoe_unapply(x, y, 0.0 if lo else 1.0)
    if model.kind == "cat_map":
        (a, b), (c, d) = model.inverse_matrix
        return a * x + b * y, c * x + d * y
    return inverse_xy(model, x, y)


def forward(model: SystemModel, p: Point2) -> Point2:
    fx, fy = forward_xy(model, p.x, p.y)
    return model.point(float(fx), float(fy))


def inverse(model: SystemModel, p: Point2) -> Point2:
    fx, fy = inverse_xy(model, p.x, p.y)
    return model.point(float(fx), float(fy))


def iterate(model: SystemModel, p: Point2, n: int) -> Point2:
    step = forward if n >= 0 else inverse
    for _ in range(abs(n)):
        p = step(model, p)
    return p


def jacobian(model: SystemModel, p: Point2) -> np.ndarray:
    if model.kind == "affine_horseshoe":
        forward(model, p)  # domain check
        return np.array([[1 / 3, 0.0], [0.0, 3.0]])
    if model.kind == "cat_map":
        return np.array(model.matrix, dtype=float)
    if not model.grid.contains(np.array(p.x), np.array(p.y)):
        raise DomainError("point outside the tabulated grid")
    return _grid_jacobian(model, p.x, p.y)


# --- splitting -----------------------------------------------------------------------

@dataclass(frozen=True)
class SplittingFrame:
    base: Point2
    e_s: tuple[float, float]
    e_u: tuple[float, float]
    angle: float

    def matrix(self) -> np.ndarray:
        """Columns are ``e_s`` and ``e_u``: chart coordinates to ambient offsets."""
        return np.array([[self.e_s[0], self.e_u[0]], [self.e_s[1], self.e_u[1]]])


def _orient(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    if abs(v[0]) > 1e-12:
        return v if v[0] > 0 else -v
    return v if v[1] > 0 else -v


def _make_frame(base: Point2, e_s, e_u) -> SplittingFrame:
    e_s = _orient(np.asarray(e_s, dtype=float))
    e_u = _orient(np.asarray(e_u, dtype=float))
    cosang = min(1.0, abs(float(e_s @ e_u)))
    angle = math.acos(cosang)
    if angle < SPLITTING_TOL:
        raise DegenerateError(f"stable and unstable directions collapse (angle {angle:.3e})")
    return SplittingFrame(base, (float(e_s[0]), float(e_s[1])), (float(e_u[0]), float(e_u[1])), angle)


def exact_frame(model: SystemModel, base: Point2 | None = None) -> SplittingFrame:
    """Closed-form splitting for the affine and linear models."""
    base = base if base is not None else model.point(0.0, 0.0)
    if model.kind == "affine_horseshoe":
        return _make_frame(base, (1.0, 0.0), (0.0, 1.0))
    if model.kind == "cat_map":
        (a, b), (c, d) = model.matrix
        tr, det = a + d, a * d - b * c
        root = math.sqrt(tr * tr - 4 * det)
        big = (tr + root) / 2 if tr > 0 else (tr - root) / 2
        small = det / big
        # (b, ev - a) is an eigenvector when b != 0, otherwise (ev - d, c)
        def eig(ev):
            return (b, ev - a) if b != 0 else (ev - d, c)
        return _make_frame(base, eig(small), eig(big))
    raise DomainError("no closed-form splitting for tabulated models")


def estimate_splitting(model: SystemModel, p: Point2, n: int = 30) -> SplittingFrame:
    """Estimate ``(E^s, E^u)`` at ``p`` by pushing a generic vector along the cocycle.

    The unstable direction is the normalized image of a generic vector under
    the ``n``-step forward cocycle started at ``f^{-n}(p)``; the stable
    direction comes from the backward cocycle started at ``f^{n}(p)``.

    Parameters
    ----------
    model : SystemModel
    p : Point2
        Base point; its orbit segment ``f^{-n}(p) .. f^{n}(p)`` must stay in
        the domain.
    n : int
        Number of cocycle steps, at least 1.

    Returns
    -------
    SplittingFrame

    Raises
    ------
    DegenerateError
        When the two directions are closer than the splitting tolerance.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if is_homogeneous(model):
        # the derivative does not depend on the point, so the orbit is not needed
        J = jacobian(model, p) if model.kind == "cat_map" else np.diag([1 / 3, 3.0])
        if model.kind == "affine_horseshoe":
            forward(model, p)
        fwd = [J] * n
        bwd = [np.linalg.inv(J)] * n
    else:
        back = [p]
        for _ in range(n):
            back.append(inverse(model, back[-1]))
        ahead = [p]
        for _ in range(n):
            ahead.append(forward(model, ahead[-1]))
        fwd = [jacobian(model, q) for q in reversed(back[1:])]
        bwd = [np.linalg.inv(jacobian(model, q)) for q in reversed(ahead[:-1])]
    generic = np.array([0.8, 0.6])
    v = generic.copy()
    for J in fwd:
        v = J @ v
        v /= np.linalg.norm(v)
    w = generic.copy()
    for Jinv in bwd:
        w = Jinv @ w
        w /= np.linalg.norm(w)
    return _make_frame(p, w, v)


def frame_at(model: SystemModel, p: Point2, n: int = 30) -> SplittingFrame:
    if is_homogeneous(model):
        return exact_frame(model, p)
    return estimate_splitting(model, p, n)


@dataclass(frozen=True)
class ConeReport:
    passed: bool
    worst_margin: float
    inclusion_margin: float
    expansion_margin: float
    worst_sample: int


def verify_cone_criterion(
    model: SystemModel,
    samples: Sequence[Point2],
    cone_width: float,
    lam: float,
    frames: Sequence[SplittingFrame] | None = None,
) -> ConeReport:
    """Check the cone criterion on boundary rays of both cones.

    Cones are taken in splitting coordinates at each sample: the unstable cone
    is ``|v_s| <= a |v_u|`` and the stable cone ``|v_u| <= a |v_s|``.  The
    derivative must map the unstable cone into the image unstable cone and
    stretch it by at least ``1/lam``; the inverse derivative must do the same
    for the stable cone.  Margins are reported as slack, so zero is the
    boundary case and still passes.
    """
    if cone_width <= 0:
        raise DomainError("cone width must be positive")
    a = cone_width
    u_rays = [np.array([a, 1.0]), np.array([-a, 1.0]), np.array([0.0, 1.0])]
    s_rays = [np.array([1.0, a]), np.array([1.0, -a]), np.array([1.0, 0.0])]
    worst = math.inf
    worst_incl = math.inf
    worst_exp = math.inf
    worst_idx = -1
    for idx, x in enumerate(samples):
        fr_x = frames[idx] if frames is not None else frame_at(model, x)
        fx = forward(model, x)
        fr_fx = frame_at(model, fx)
        J = jacobian(model, x)
        M = np.linalg.solve(fr_fx.matrix(), J @ fr_x.matrix())
        Minv = np.linalg.inv(M)
        incl, expn = math.inf, math.inf
        for v in u_rays:
            w = M @ v
            incl = min(incl, a - abs(w[0]) / abs(w[1]))
            expn = min(expn, np.max(np.abs(w)) / np.max(np.abs(v)) - 1 / lam)
        for v in s_rays:
            w = Minv @ v
            incl = min(incl, a - abs(w[1]) / abs(w[0]))
            expn = min(expn, np.max(np.abs(w)) / np.max(np.abs(v)) - 1 / lam)
        worst_incl = min(worst_incl, incl)
        worst_exp = min(worst_exp, expn)
        if min(incl, expn) < worst:
            worst = min(incl, expn)
            worst_idx = idx
    passed = worst >= -1e-12
    return ConeReport(passed, float(worst), float(worst_incl), float(worst_exp), worst_idx)


def sample_invariant_set(model: SystemModel, n: int, rng: np.random.Generator) -> list[Point2]:
    """Random points of the invariant set (Cantor product for the horseshoe)."""
    if model.kind == "affine_horseshoe":
        digits = 34
        weights = 3.0 ** -np.arange(1, digits + 1)
        xs = (2 * rng.integers(0, 2, size=(n, digits))) @ weights
        ys = (2 * rng.integers(0, 2, size=(n, digits))) @ weights
        return [Point2(x, y) for x, y in zip(xs, ys)]
    if model.kind == "cat_map":
        pts = rng.random((n, 2))
        return [Point2(x, y, "torus") for x, y in pts]
    g = model.grid
    xs = rng.uniform(g.xs[0], g.xs[-1], n)
    ys = rng.uniform(g.ys[0], g.ys[-1], n)
    return [Point2(x, y) for x, y in zip(xs, ys)]
