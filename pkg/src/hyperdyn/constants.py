"""Closed-form constants of uniformly hyperbolic dynamics.

Every function here is a direct evaluation of an explicit bound: adapted
metric distortion, splitting angle, Hölder exponents, manifold size, graph
transform contraction, shadowing tolerance, expansiveness horizon and coding
depth.  :func:`build_report` gathers them into one serializable record.

Rational formulas are evaluated in exact arithmetic on the binary values of
their inputs and rounded once at the end, so e.g. ``c / (1 - lam)`` with
``lam = 1/3`` returns exactly ``1.5``.  Integer-valued results are ceilings
of log ratios.  A slack of ``1e-12`` is
subtracted before rounding up so exact powers (e.g. ``3**-14``) do not tip
over into the next integer through floating rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .errors import DomainError, HyperdynError, SmallnessViolation
from .maps import HyperbolicityData

__all__ = [
    "CEIL_SLACK",
    "DEFAULT_C",
    "adapted_metric_constant",
    "angle_lower_bound",
    "holder_exponent_stable",
    "holder_exponent_unstable",
    "manifold_size",
    "graph_contraction_rate",
    "shadowing_tolerance",
    "shadowing_accuracy",
    "expansiveness_horizon",
    "coding_truncation_depth",
    "grid_resolution_for_accuracy",
    "leafwise_rate",
    "ReportTargets",
    "ConstantsReport",
    "build_report",
    "REPORT_KEYS",
]

CEIL_SLACK = 1e-12
DEFAULT_C = 1.5


def _ceil(v: float) -> int:
    return math.ceil(v - CEIL_SLACK)


def _q(v) -> Fraction:
    return Fraction(v)


def adapted_metric_constant(c: float, lam: float, mu: float) -> float:
    """Distortion ``c / (1 - lam/mu)`` of the adapted metric; ``mu = 1`` allowed."""
    if not (c >= 1 and 0 <= lam < 1 and 0 < mu <= 1):
        raise DomainError("need c >= 1, 0 <= lambda < 1, 0 < mu <= 1")
    if lam >= mu:
        raise DomainError("adapted metric needs lambda < mu")
    return float(_q(c) / (1 - _q(lam) / _q(mu)))


def angle_lower_bound(K: float) -> float:
    if K < 1:
        raise DomainError("K must be >= 1")
    return math.asin(1 / K)


def _holder(beta: float, lam: float, L: float) -> float:
    if not (0 < beta <= 1 and 0 < lam < 1 and L >= 1):
        raise DomainError("need 0 < beta <= 1, 0 < lambda < 1, L >= 1")
    gain = beta * math.log(1 / lam)
    return gain / (math.log(L) + gain)


def holder_exponent_stable(beta: float, lam: float, L: float) -> float:
    """Hölder exponent of the stable bundle; ``L`` bounds the forward derivative."""
    return _holder(beta, lam, L)


def holder_exponent_unstable(beta: float, lam: float, L_inv: float) -> float:
    return _holder(beta, lam, L_inv)


def manifold_size(lam: float, C0: float) -> float:
    if C0 <= 0:
        raise DomainError("C0 must be positive (clamp affine models first)")
    if not 0 < lam < 1:
        raise DomainError("lambda must lie in (0,1)")
    return float((1 - _q(lam)) ** 2 / (4 * _q(C0)))


def graph_contraction_rate(lam: float, C1: float, delta: float, K_lip: float) -> float:
    """Contraction factor of the backward graph transform on Lipschitz graphs."""
    if not 0 < lam < 1 or delta < 0 or C1 <= 0:
        raise DomainError("need 0 < lambda < 1, delta >= 0, C1 > 0")
    load = _q(lam) * _q(C1) * _q(delta) * (_q(K_lip) + 1)
    if not load < 1 - _q(lam):
        raise SmallnessViolation(
            f"smallness condition fails: lambda*C1*delta*(K+1) = {float(load):.6g} >= 1 - lambda"
        )
    return float(_q(lam) / (1 - load))


def shadowing_tolerance(C: float, lam: float, beta: float) -> float:
    """Pseudo-orbit tolerance ``(1 - lam) beta / C`` that guarantees beta-shadowing."""
    if not (C > 0 and 0 < lam < 1 and beta > 0):
        raise DomainError("need C > 0, 0 < lambda < 1, beta > 0")
    return float((1 - _q(lam)) * _q(beta) / _q(C))


def shadowing_accuracy(C: float, lam: float, alpha: float) -> float:
    """Inverse of :func:`shadowing_tolerance`: predicted tracking distance."""
    if not (C > 0 and 0 < lam < 1 and alpha >= 0):
        raise DomainError("need C > 0, 0 < lambda < 1, alpha >= 0")
    return float(_q(C) * _q(alpha) / (1 - _q(lam)))


def expansiveness_horizon(eps: float, delta: float, lam: float, C: float = 0.0) -> int:
    if not (0 < delta < eps):
        raise DomainError("need 0 < delta < eps")
    if not 0 < lam < 1 or C < 0:
        raise DomainError("need 0 < lambda < 1 and C >= 0")
    return _ceil(math.log(eps / delta) / math.log(1 / lam) + C)


def coding_truncation_depth(C: float, lam: float, diamR: float, target: float) -> int:
    """Smallest ``N >= 0`` with ``C * lam**N * diamR <= target``."""
    if not (C > 0 and 0 < lam < 1 and diamR > 0 and target > 0):
        raise DomainError("all arguments must be positive and lambda < 1")
    ratio = C * diamR / target
    if ratio <= 1:
        return 0
    return max(0, _ceil(math.log(ratio) / math.log(1 / lam)))


def grid_resolution_for_accuracy(delta: float) -> dict:
    """Refinement depth for horseshoe coding at accuracy ``delta``.

    The rectangle diameter must not exceed ``4 delta / 9`` (shadowing ratio
    ``4/9`` at ``lambda = 1/3``, ``C = 3/2``); the depth is the smallest
    ``k >= 1`` with ``3**-k`` below that, and the symbol count is ``2**k``.
    """
    if not 0 < delta <= 1:
        raise DomainError("delta must lie in (0,1]")
    target = 4 * delta / 9
    k = max(1, _ceil(math.log(1 / target) / math.log(3)))
    return {"k": k, "rectangle_count": 2**k, "diameter_bound": target}


def leafwise_rate(lam: float) -> float:
    """Rate ``(5 lam + 3) / 8`` bounding contraction along local stable leaves."""
    return float((5 * _q(lam) + 3) / 8)


REPORT_KEYS = (
    "K_adapted",
    "angle_bound_rad",
    "alpha_s",
    "alpha_u",
    "eps0",
    "theta",
    "alpha_shadow",
    "N_expansive",
    "N_coding",
    "k_grid",
    "rectangle_count",
)


@dataclass(frozen=True)
class ReportTargets:
    delta_coding: float = 1e-6
    eps_expansive: float = 0.1
    delta_expansive: float = 1e-3
    C: float = DEFAULT_C
    C_expansive: float = 0.0
    beta: float = 1.0
    chart_delta: float = 0.1
    diamR: float = 1.0


@dataclass(frozen=True)
class ConstantsReport:
    K_adapted: float
    angle_bound_rad: float
    alpha_s: float
    alpha_u: float
    eps0: float
    theta: float
    alpha_shadow: float
    N_expansive: int
    N_coding: int
    k_grid: int
    rectangle_count: int
    K_mu_limit: float
    lambda_prime: float
    mu_convention: str
    C0_clamped: bool
    inputs: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantsReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ConstantsReport":
        return cls.from_dict(json.loads(text))


def _tagged(name, fn, *args):
    try:
        return fn(*args)
    except HyperdynError as exc:
        exc.formula = name
        exc.args = (f"[{name}] {exc}",)
        raise


def build_report(data: HyperbolicityData, targets: ReportTargets | None = None) -> ConstantsReport:
    """Evaluate every ledger formula on ``data``.

    ``K_adapted`` uses ``data.mu_adapt``; ``K_mu_limit`` always uses the
    ``mu = 1`` limit, and ``mu_convention`` records which of the two the
    primary value follows.  Errors from a formula are re-raised with the
    formula name prepended and stored on ``exc.formula``.
    """
    t = targets or ReportTargets()
    q = data.exact
    lam = q("lam")
    K = _tagged("adapted_metric_constant", adapted_metric_constant, q("c"), lam, q("mu_adapt"))
    K_lim = _tagged("adapted_metric_constant", adapted_metric_constant, q("c"), lam, 1)
    grid = _tagged("grid_resolution_for_accuracy", grid_resolution_for_accuracy, t.delta_coding)
    return ConstantsReport(
        K_adapted=K,
        angle_bound_rad=_tagged("angle_lower_bound", angle_lower_bound, K),
        alpha_s=_tagged("holder_exponent_stable", holder_exponent_stable, data.beta_holder, lam, data.L),
        alpha_u=_tagged("holder_exponent_unstable", holder_exponent_unstable, data.beta_holder, lam, data.L_inv),
        eps0=_tagged("manifold_size", manifold_size, lam, data.C0_effective),
        theta=_tagged("graph_contraction_rate", graph_contraction_rate, lam, q("C1"), t.chart_delta, q("K_lip")),
        alpha_shadow=_tagged("shadowing_tolerance", shadowing_tolerance, t.C, lam, t.beta),
        N_expansive=_tagged("expansiveness_horizon", expansiveness_horizon,
                            t.eps_expansive, t.delta_expansive, lam, t.C_expansive),
        N_coding=_tagged("coding_truncation_depth", coding_truncation_depth, t.C, lam, t.diamR, t.delta_coding),
        k_grid=grid["k"],
        rectangle_count=grid["rectangle_count"],
        K_mu_limit=K_lim,
        lambda_prime=leafwise_rate(lam),
        mu_convention="limit_mu_1" if data.mu_adapt == 1.0 else "open_interval",
        C0_clamped=data.C0_clamped,
        inputs=data.as_dict(),
        targets=asdict(t),
    )
