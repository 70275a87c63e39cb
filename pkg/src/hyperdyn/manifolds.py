"""Local stable and unstable manifolds by the backward graph transform.

A local stable manifold at ``x`` is represented as the graph of a function
``u = phi(s)`` over the stable disk of a chart centred at ``x``.  The backward
graph transform pulls a candidate graph at ``f(x)`` back to ``x`` by solving,
node by node, for the ``u`` that lands on the candidate after one step.  Its
fixed point is the local stable manifold.  Unstable manifolds run the same
engine with the inverse map and the roles of ``s`` and ``u`` exchanged.

The bracket ``[x, y]`` is the intersection of the stable leaf of ``x`` with the
unstable leaf of ``y``, found by iterating ``u -> phi_x(psi_y(u))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .constants import graph_contraction_rate, leafwise_rate
from .errors import InnerDivergence, NoIntersection, NonContraction, SmallnessViolation, TooFar
from .maps import (
    Point2,
    SplittingFrame,
    SystemModel,
    distance,
    forward,
    forward_xy,
    frame_at,
    inverse,
    is_homogeneous,
    jacobian,
    local_forward_xy,
    local_inverse_xy,
    wrapped_difference,
)

__all__ = [
    "GRID_NODES",
    "Chart",
    "GraphFunction",
    "BracketResult",
    "ContractionReport",
    "backward_graph_step",
    "local_stable_manifold",
    "local_unstable_manifold",
    "bracket",
    "contraction_report",
    "rotated_frame",
]

GRID_NODES = 257
INNER_TOL = 1e-13
INNER_CAP = 200
OUTER_TOL = 1e-11
OUTER_CAP = 500
STALL_STEPS = 5
RATIO_SLACK = 0.05
BRACKET_MIN_EPS = 1e-6

Kind = Literal["stable", "unstable"]


@dataclass(frozen=True)
class Chart:
    base: Point2
    frame: SplittingFrame
    delta: float

    def to_ambient(self, s, u):
        es, eu = self.frame.e_s, self.frame.e_u
        x = self.base.x + s * es[0] + u * eu[0]
        y = self.base.y + s * es[1] + u * eu[1]
        return x, y

    def from_ambient(self, x, y):
        dx, dy = wrapped_difference(self.base.space, np.asarray(x) - self.base.x,
                                    np.asarray(y) - self.base.y)
        F = self.frame.matrix()
        det = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        s = (F[1, 1] * dx - F[0, 1] * dy) / det
        u = (-F[1, 0] * dx + F[0, 0] * dy) / det
        return s, u

    def point(self, s: float, u: float) -> Point2:
        x, y = self.to_ambient(s, u)
        return Point2(float(x), float(y), self.base.space)

    def moved_to(self, base: Point2) -> "Chart":
        return Chart(base, replace(self.frame, base=base), self.delta)


@dataclass(frozen=True, eq=False)
class GraphFunction:
    """Piecewise-linear graph over a uniform grid of ``GRID_NODES`` nodes.

    For ``kind="stable"`` the nodes are stable coordinates ``s`` and the
    values are ``u``; for ``kind="unstable"`` the roles are swapped.
    """

    chart: Chart
    nodes: np.ndarray
    values: np.ndarray
    kind: Kind = "stable"
    flags: tuple[str, ...] = ()
    step_sizes: tuple[float, ...] = ()
    theta: float | None = None
    iterations: int = 0

    def __call__(self, t):
        return np.interp(t, self.nodes, self.values)

    def slope(self, t):
        h = self.nodes[1] - self.nodes[0]
        idx = np.clip(np.searchsorted(self.nodes, t) - 1, 0, self.nodes.size - 2)
        return (self.values[idx + 1] - self.values[idx]) / h

    @property
    def lip_bound(self) -> float:
        return float(np.max(np.abs(np.diff(self.values))) / (self.nodes[1] - self.nodes[0]))

    @property
    def step_ratios(self) -> tuple[float, ...]:
        st = self.step_sizes
        return tuple(st[i] / st[i - 1] for i in range(1, len(st)) if st[i - 1] > 0)

    @property
    def predicted_iterations(self) -> float | None:
        if self.theta is None or not 0 < self.theta < 1:
            return None
        return math.log(OUTER_TOL / self.chart.delta) / math.log(self.theta)

    def chart_coords(self):
        if self.kind == "stable":
            return self.nodes, self.values
        return self.values, self.nodes

    def ambient(self):
        s, u = self.chart_coords()
        return self.chart.to_ambient(s, u)


def zero_graph(chart: Chart, kind: Kind = "stable") -> GraphFunction:
    nodes = np.linspace(-chart.delta, chart.delta, GRID_NODES)
    return GraphFunction(chart, nodes, np.zeros(GRID_NODES), kind)


def rotated_frame(frame: SplittingFrame, angle_s: float, angle_u: float = 0.0) -> SplittingFrame:
    """Copy of ``frame`` with its axes rotated; used to build misaligned charts."""
    def rot(v, a):
        c, s = math.cos(a), math.sin(a)
        return (c * v[0] - s * v[1], s * v[0] + c * v[1])
    e_s, e_u = rot(frame.e_s, angle_s), rot(frame.e_u, angle_u)
    cosang = min(1.0, abs(e_s[0] * e_u[0] + e_s[1] * e_u[1]))
    return SplittingFrame(frame.base, e_s, e_u, math.acos(cosang))


def _chart_derivative(model: SystemModel, chart: Chart, image: Chart, kind: Kind) -> np.ndarray:
    J = jacobian(model, chart.base)
    if kind == "unstable":
        J = jacobian(model, image.base)
        J = np.linalg.inv(J)
    return np.linalg.solve(image.frame.matrix(), J @ chart.frame.matrix())


def _image_point(model: SystemModel, p: Point2, kind: Kind) -> Point2:
    return forward(model, p) if kind == "stable" else inverse(model, p)


def backward_graph_step(
    model: SystemModel,
    phi: GraphFunction,
    chart: Chart | None = None,
) -> GraphFunction:
    """One step of the backward graph transform.

    ``phi`` is a graph in the chart at the image point (``f(x)`` for stable
    graphs, ``f^{-1}(x)`` for unstable ones).  ``chart`` is the target chart at
    ``x``; when omitted, ``phi.chart`` is used and, if its base is not fixed,
    the graph is transported to the image point by translation, which is
    exact for homogeneous models.

    Each node is solved by the inner iteration
    ``t <- t - r(t) / r'(t)`` where ``r(t)`` is the signed distance of the
    image of the chart point from ``phi`` along the transverse axis, and
    ``r'`` uses the chart derivative at the base.  In an aligned chart this
    is exactly ``u <- B^{-1}[phi(A s + a) - b]``.

    Raises
    ------
    InnerDivergence
        When the inner corrections fail to shrink for ``STALL_STEPS`` steps.
    """
    kind = phi.kind
    chart = chart or phi.chart
    image_base = _image_point(model, chart.base, kind)
    image = phi.chart
    if image.base != image_base:
        image = phi.chart.moved_to(image_base)
    local = local_forward_xy if kind == "stable" else local_inverse_xy
    M = _chart_derivative(model, chart, image, kind)
    # index 0 = graph parameter axis, 1 = value axis (s,u for stable; u,s for unstable)
    p, q = (0, 1) if kind == "stable" else (1, 0)
    nodes = np.linspace(-chart.delta, chart.delta, GRID_NODES)
    t = phi.values.copy() if phi.chart.delta == chart.delta else np.zeros(GRID_NODES)
    flags = set()
    changes: list[float] = []
    for _ in range(INNER_CAP):
        coords = [None, None]
        coords[p], coords[q] = nodes, t
        X, Y = chart.to_ambient(coords[0], coords[1])
        FX, FY = local(model, X, Y, chart.base)
        img = image.from_ambient(FX, FY)
        par, val = img[p], img[q]
        res = phi(par) - val
        deriv = phi.slope(par) * M[p, q] - M[q, q]
        step = -res / deriv
        t = t + step
        change = float(np.max(np.abs(step)))
        changes.append(change)
        if change <= INNER_TOL:
            break
        if len(changes) > STALL_STEPS and all(
            changes[-i] >= changes[-i - 1] for i in range(1, STALL_STEPS + 1)
        ):
            raise InnerDivergence(f"inner iteration stalled at change {change:.3e}")
    else:
        raise InnerDivergence(f"inner iteration hit the cap with change {changes[-1]:.3e}")
    if np.any(np.abs(par) > image.delta * (1 + 1e-12)):
        flags.add("out_of_chart")
    out = GraphFunction(chart, nodes, t, kind, tuple(sorted(flags)))
    return out


def _theta(model: SystemModel, delta: float) -> float | None:
    h = model.hyp
    try:
        return graph_contraction_rate(h.exact("lam"), h.exact("C1"), delta, h.exact("K_lip"))
    except SmallnessViolation:
        return None


def _manifold(
    model: SystemModel,
    x: Point2,
    delta: float,
    tol: float,
    frame: SplittingFrame | None,
    kind: Kind,
    max_iter: int,
) -> GraphFunction:
    frame = frame if frame is not None else frame_at(model, x)
    chart = Chart(x, replace(frame, base=x), delta)
    theta = _theta(model, delta)
    limit = None if theta is None else theta + RATIO_SLACK
    image_x = _image_point(model, x, kind)
    transported = is_homogeneous(model) or distance(image_x, x) == 0.0
    phi = zero_graph(chart, kind)
    orbit = [x]
    steps: list[float] = []
    flags: set[str] = set()
    above = 0
    for n in range(1, max_iter + 1):
        if transported:
            new = backward_graph_step(model, phi, chart)
        else:
            # pull the zero graph at the n-th orbit point back along the orbit
            while len(orbit) <= n:
                orbit.append(_image_point(model, orbit[-1], kind))
            charts = [Chart(q, frame_at(model, q), delta) for q in orbit[: n + 1]]
            new = zero_graph(charts[n], kind)
            for j in range(n - 1, -1, -1):
                new = backward_graph_step(model, new, charts[j])
        flags.update(new.flags)
        change = float(np.max(np.abs(new.values - phi.values)))
        steps.append(change)
        phi = new
        if limit is not None and len(steps) >= 2 and steps[-2] > 0:
            above = above + 1 if steps[-1] / steps[-2] > limit else 0
            if above >= STALL_STEPS:
                raise NonContraction(
                    f"graph transform ratio {steps[-1] / steps[-2]:.4f} exceeds theta+{RATIO_SLACK}"
                )
        if change <= tol:
            break
    else:
        flags.add("iteration_cap")
    if phi.lip_bound > model.hyp.K_lip:
        flags.add("lipschitz_exceeds_K")
    if np.max(np.abs(phi.values)) > delta:
        flags.add("graph_leaves_chart")
    return replace(phi, flags=tuple(sorted(flags)), step_sizes=tuple(steps), theta=theta,
                   iterations=len(steps))


def local_stable_manifold(
    model: SystemModel,
    x: Point2,
    delta: float,
    tol: float = OUTER_TOL,
    frame: SplittingFrame | None = None,
    max_iter: int = OUTER_CAP,
) -> GraphFunction:
    """Local stable manifold at ``x`` as the fixed point of the backward graph transform.

    Parameters
    ----------
    model : SystemModel
    x : Point2
        Base point on the invariant set.
    delta : float
        Chart half-width.
    tol : float
        Stop once the sup-norm change between iterates is at most ``tol``.
    frame : SplittingFrame, optional
        Chart axes.  Defaults to the splitting at ``x``; pass a rotated
        frame to work in a deliberately misaligned chart.
    max_iter : int
        Iteration cap; hitting it is flagged, not raised.

    Returns
    -------
    GraphFunction
        Converged graph with the per-iteration sup-norm changes in
        ``step_sizes`` and the ledger contraction rate in ``theta``.

    Raises
    ------
    NonContraction
        When successive step ratios exceed ``theta + 0.05`` five times in a row.
    """
    return _manifold(model, x, delta, tol, frame, "stable", max_iter)


def local_unstable_manifold(
    model: SystemModel,
    x: Point2,
    delta: float,
    tol: float = OUTER_TOL,
    frame: SplittingFrame | None = None,
    max_iter: int = OUTER_CAP,
) -> GraphFunction:
    """Local unstable manifold, computed by the same engine run on the inverse map."""
    return _manifold(model, x, delta, tol, frame, "unstable", max_iter)


@lru_cache(maxsize=256)
def _homogeneous_graph(model: SystemModel, delta: float, kind: Kind) -> GraphFunction:
    base = model.point(0.0, 0.0)
    if kind == "stable":
        return local_stable_manifold(model, base, delta)
    return local_unstable_manifold(model, base, delta)


def _graph_at(model: SystemModel, x: Point2, delta: float, kind: Kind) -> GraphFunction:
    if is_homogeneous(model):
        g = _homogeneous_graph(model, delta, kind)
        return replace(g, chart=g.chart.moved_to(x))
    if kind == "stable":
        return local_stable_manifold(model, x, delta)
    return local_unstable_manifold(model, x, delta)


@dataclass(frozen=True)
class BracketResult:
    point: Point2
    dist_to_x: float
    dist_to_y: float
    iterations: int


def bracket(model: SystemModel, x: Point2, y: Point2, eps: float | None = None) -> BracketResult:
    """Intersection of the local stable leaf of ``x`` with the local unstable leaf of ``y``.

    ``eps`` is the chart half-width used for both leaves; by default it is
    ``max(2.5 d(x, y), 1e-6)`` (rounded up to a power of two on homogeneous models),
    comfortably above the bound ``C1 d(x, y)`` with ``C1 = (1 - K_lip)^{-1}``.
    """
    d = distance(x, y)
    if d >= model.hyp.delta0:
        raise TooFar(f"d(x,y) = {d:.3g} is not below delta0 = {model.hyp.delta0:.3g}")
    if d == 0.0:
        return BracketResult(x, 0.0, 0.0, 0)
    if eps is None:
        eps = max(2.5 * d, BRACKET_MIN_EPS)
        if is_homogeneous(model):
            # round up to a power of two so cached leaves are reused
            eps = 2.0 ** math.ceil(math.log2(eps))
    phi = _graph_at(model, x, eps, "stable")
    psi = _graph_at(model, y, eps, "unstable")
    cx = phi.chart
    # unstable leaf of y expressed in the chart at x, as s = g(u)
    X, Y = psi.ambient()
    s_pts, u_pts = cx.from_ambient(X, Y)
    order = np.argsort(u_pts)
    u_sorted, s_sorted = u_pts[order], s_pts[order]
    if np.any(np.diff(u_sorted) <= 0):
        raise NoIntersection("unstable leaf is not a graph over the unstable axis at x")
    lo, hi = u_sorted[0], u_sorted[-1]
    _, u = cx.from_ambient(y.x, y.y)
    u = float(u)
    it = 0
    for it in range(1, INNER_CAP + 1):
        if not lo <= u <= hi:
            raise NoIntersection("bracket iteration left the unstable leaf")
        s = float(np.interp(u, u_sorted, s_sorted))
        if abs(s) > eps * (1 + 1e-12):
            raise NoIntersection("bracket iteration left the stable leaf")
        u_new = float(phi(s))
        if abs(u_new - u) <= 1e-16 + 1e-15 * abs(u):
            u = u_new
            break
        u = u_new
    else:
        raise NoIntersection("bracket iteration did not converge")
    s = float(np.interp(u, u_sorted, s_sorted))
    z = cx.point(s, u)
    return BracketResult(z, distance(z, x), distance(z, y), it)


@dataclass(frozen=True)
class ContractionReport:
    ratios: np.ndarray  # shape (samples, n): d(f^k x, f^k y) / d(x, y), k = 1..n
    worst: tuple[float, ...]
    bound: tuple[float, ...]
    passed: bool


def contraction_report(
    model: SystemModel,
    x: Point2,
    phi: GraphFunction,
    n: int,
    samples: Sequence[float] | None = None,
) -> ContractionReport:
    """Per-step distance ratios for points on a stable graph.

    Points ``y`` are taken on ``phi`` at the stable coordinates ``samples``
    (default: every eighth grid node).  A zero initial distance yields ratio
    0 by convention.  The bound is ``lambda'^k`` with the leafwise rate from
    the ledger.
    """
    if phi.kind != "stable":
        raise ValueError("contraction_report needs a stable graph")
    s = np.asarray(samples, float) if samples is not None else phi.nodes[::8]
    u = phi(s)
    X, Y = phi.chart.to_ambient(s, u)
    px, py = np.full_like(X, x.x), np.full_like(Y, x.y)
    dx, dy = wrapped_difference(x.space, X - px, Y - py)
    d0 = np.maximum(np.abs(dx), np.abs(dy))
    anchor = x
    ratios = np.zeros((s.size, n))
    for k in range(n):
        X, Y = local_forward_xy(model, X, Y, anchor)
        px, py = local_forward_xy(model, px, py, anchor)
        anchor = model.point(float(px[0]), float(py[0]))
        dx, dy = wrapped_difference(x.space, X - px, Y - py)
        dk = np.maximum(np.abs(dx), np.abs(dy))
        ratios[:, k] = np.where(d0 > 0, dk / np.where(d0 > 0, d0, 1.0), 0.0)
    lp = leafwise_rate(model.hyp.exact("lam"))
    bound = tuple(lp ** (k + 1) for k in range(n))
    worst = tuple(float(v) for v in ratios.max(axis=0)) if s.size else tuple(0.0 for _ in range(n))
    passed = all(w <= b for w, b in zip(worst, bound))
    return ContractionReport(ratios, worst, bound, passed)
