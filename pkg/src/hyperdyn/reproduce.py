"""Worked numbers for the affine horseshoe, recomputed and compared with reference values."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from fractions import Fraction

from .constants import build_report, grid_resolution_for_accuracy, shadowing_tolerance
from .maps import horseshoe
from .partition import base_partition, cylinder_bounds, refine_once

__all__ = [
    "Row",
    "horseshoe_rows",
    "format_table",
    "cylinder_diameter",
    "DIAMETER_DEPTH",
    "MATERIALISED_DEPTH",
]

DIAMETER_DEPTH = 14
MATERIALISED_DEPTH = 5
REL_TOL = 1e-12


@dataclass(frozen=True)
class Row:
    quantity: str
    computed: str
    reference: str
    match: bool
    note: str = ""
    value: object = None
    reference_value: object = None

    def to_dict(self) -> dict:
        return asdict(self)


def _close(a: float, b: float) -> bool:
    return a == b or abs(a - b) <= REL_TOL * max(abs(a), abs(b))


def cylinder_diameter(k: int) -> float:
    """Largest diameter over sample two-sided cylinders of depth ``k``, from exact endpoints."""
    words = [(0,) * (2 * k + 1), (1,) * (2 * k + 1), tuple(j % 2 for j in range(2 * k + 1))]
    best = Fraction(0)
    for w in words:
        s_lo, s_hi, u_lo, u_hi = cylinder_bounds(w, k)
        best = max(best, s_hi - s_lo, u_hi - u_lo)
    return float(best)


def _diameter_law() -> tuple[bool, str]:
    # exact cylinders for every word of a few shapes, k = 1..DIAMETER_DEPTH
    ok = True
    for k in range(1, DIAMETER_DEPTH + 1):
        shapes = [(0,) * (2 * k + 1), (1,) * (2 * k + 1), tuple(j % 2 for j in range(2 * k + 1))]
        for w in shapes:
            s_lo, s_hi, u_lo, u_hi = cylinder_bounds(w, k)
            ok &= max(s_hi - s_lo, u_hi - u_lo) == Fraction(1, 3**k)
    for k in range(1, 4):
        for w in itertools.product((0, 1), repeat=2 * k + 1):
            s_lo, s_hi, u_lo, u_hi = cylinder_bounds(w, k)
            ok &= max(s_hi - s_lo, u_hi - u_lo) == Fraction(1, 3**k)
    model = horseshoe()
    part = base_partition(model)
    for k in range(1, MATERIALISED_DEPTH + 1):
        part = refine_once(model, part)
        ok &= _close(part.diameter, 3.0**-k) and part.m == 2 ** (2 * k + 1)
    return bool(ok), f"3^-k for k=1..{DIAMETER_DEPTH} (exact), refined k<={MATERIALISED_DEPTH}"


def horseshoe_rows(delta: float = 1e-6) -> list[Row]:
    model = horseshoe()
    rep = build_report(model.hyp)
    rows = []

    rows.append(Row("adapted metric K", f"{rep.K_mu_limit:.12g}", "3/2",
                    _close(rep.K_mu_limit, 1.5), "c/(1-lambda) with c=1, lambda=1/3",
                    rep.K_mu_limit, 1.5))

    # the reference bound (1-lambda)/(2|D^2 f|) is unbounded for affine branches;
    # agreement means the clamped formula also does not restrict the unit square
    rows.append(Row("stable manifold eps0", f"{rep.eps0:.12g}", "unbounded (D^2 f = 0)",
                    rep.C0_clamped and rep.eps0 >= 1.0,
                    f"C0 clamped to floor {model.hyp.C0_floor:g}; (1-lambda)^2/(4 C0)",
                    rep.eps0, None))

    ratio = shadowing_tolerance(1.5, model.hyp.exact("lam"), 1.0)
    rows.append(Row("shadowing ratio alpha/beta", f"{ratio:.12g}", "4/9",
                    _close(ratio, 4 / 9), "C = 3/2", ratio, 4 / 9))

    ok, note = _diameter_law()
    k = grid_resolution_for_accuracy(delta)["k"]
    d = cylinder_diameter(k)
    rows.append(Row("partition diameter", f"{d:.12g} at k={k}", f"3^-{k}",
                    ok and _close(d, 3.0**-k), note, d, 3.0**-k))

    g = grid_resolution_for_accuracy(delta)
    rows.append(Row("grid resolution (k, count)", f"({g['k']}, {g['rectangle_count']})",
                    "(14, 16384)", (g["k"], g["rectangle_count"]) == (14, 16384),
                    f"delta = {delta:g}, diameter <= {g['diameter_bound']:.3g}",
                    (g["k"], g["rectangle_count"]), (14, 16384)))
    return rows


def format_table(rows: list[Row]) -> str:
    head = ("quantity", "computed", "reference", "match", "note")
    body = [(r.quantity, r.computed, r.reference, "yes" if r.match else "NO", r.note) for r in rows]
    widths = [max(len(str(x[i])) for x in [head, *body]) for i in range(len(head))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip() for line in [head, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
