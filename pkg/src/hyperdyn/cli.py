"""Command-line front end.

Exit status: 0 on success, 1 when a computation fails or a check does not
pass, 2 for usage errors (bad flags, unreadable or malformed input files).
"""

from __future__ import annotations

import argparse
import contextlib
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .constants import ReportTargets, build_report
from .errors import CapExceeded, HyperdynError, ParseError
from .manifolds import bracket, local_stable_manifold, local_unstable_manifold
from .maps import SystemModel, frame_at, sample_invariant_set
from .partition import (
    base_partition,
    check_coverage,
    refine_once,
    refine_to_diameter,
    transition_matrix,
    verify_markov,
    word_partition,
)
from .reproduce import format_table, horseshoe_rows
from .shadowing import (
    PseudoOrbit,
    anosov_close,
    noisy_orbit,
    required_gap,
    shadow,
    specification_orbit,
    validate_pseudo_orbit,
)
from .symbolic import (
    SymbolWindow,
    check_irreducible_aperiodic,
    count_periodic,
    decode,
    itinerary,
    spectral_radius,
    verify_conjugacy,
)

__all__ = ["main", "run", "build_parser"]


class UsageError(Exception):
    pass


def _point(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y but got {text!r}") from None
    return x, y


def _segment(text: str) -> tuple[float, float, int]:
    try:
        x, y, n = text.split(",")
        return float(x), float(y), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y,LENGTH but got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="horseshoe",
                        help="builtin name (horseshoe, catmap) or model file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker threads for batch work")
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--format", choices=("json", "csv", "text"), default=None)

    p = argparse.ArgumentParser(prog="hyperdyn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    c = add("constants", "evaluate the constants ledger")
    c.add_argument("--delta", type=float, default=1e-6, help="coding accuracy target")
    c.add_argument("--beta", type=float, default=1.0, help="shadowing accuracy")
    c.add_argument("--eps", type=float, default=0.1, help="expansiveness scale")

    c = add("splitting", "stable and unstable directions at a point")
    c.add_argument("--point", type=_point)

    c = add("manifold", "local stable or unstable manifold as a graph")
    c.add_argument("--point", type=_point)
    c.add_argument("--delta", type=float, default=0.05, help="chart half-width")
    c.add_argument("--unstable", action="store_true")

    c = add("bracket", "local product [x, y]")
    c.add_argument("--point", type=_point, required=True)
    c.add_argument("--point2", type=_point, required=True)
    c.add_argument("--eps", type=float)

    c = add("shadow", "shadow a pseudo-orbit")
    c.add_argument("--orbit", help="CSV of index,x,y; otherwise a noisy orbit is generated")
    c.add_argument("--point", type=_point)
    c.add_argument("--N", type=int, default=50, help="generated orbit length")
    c.add_argument("--alpha", type=float, default=1e-4, help="noise amplitude of generated orbits")
    c.add_argument("--count", type=int, default=1, help="number of generated orbits")

    c = add("close", "periodic point near an almost-returning orbit")
    c.add_argument("--point", type=_point, required=True)
    c.add_argument("--N", type=int, required=True, help="period")
    c.add_argument("--beta", type=float)

    c = add("specify", "periodic orbit following given segments")
    c.add_argument("--segment", type=_segment, action="append", required=True,
                   help="X,Y,LENGTH (repeatable)")
    c.add_argument("--gap", type=int, default=None, help="transition length")
    c.add_argument("--beta", type=float)

    def partition_flags(c):
        c.add_argument("--k", type=int, help="refinement rounds")
        c.add_argument("--eps", type=float, help="target rectangle diameter")
        c.add_argument("--forward", action="store_true", help="forward-word partition with 2^k symbols")

    c = add("partition", "Markov partition of the horseshoe")
    partition_flags(c)

    c = add("matrix", "transition matrix of a partition")
    partition_flags(c)

    c = add("entropy", "spectral radius and topological entropy")
    c.add_argument("--matrix", help="matrix file; otherwise taken from a partition")
    partition_flags(c)

    c = add("count-periodic", "periodic point counts by trace and enumeration")
    c.add_argument("--matrix")
    c.add_argument("--N", type=int, default=6, help="largest period")
    partition_flags(c)

    c = add("decode", "points coded by symbol windows")
    c.add_argument("--words", help="word file")
    c.add_argument("--word", help="symbols, e.g. 0110")
    c.add_argument("--offset", type=int, default=0)
    c.add_argument("--periodic", action="store_true")
    c.add_argument("--N", type=int, default=20, help="truncation depth")
    partition_flags(c)

    c = add("itinerary", "symbol sequence of a point")
    c.add_argument("--point", type=_point, required=True)
    c.add_argument("--N", type=int, default=10)
    partition_flags(c)

    c = add("verify", "Markov, coverage, mixing and conjugacy checks")
    c.add_argument("--N", type=int, default=20, help="conjugacy depth")
    c.add_argument("--samples", type=int, default=100)
    partition_flags(c)

    add("reproduce-horseshoe", "recompute the worked horseshoe numbers")
    return p


# --- helpers -------------------------------------------------------------------------


def _model(args) -> SystemModel:
    return io.load_model(args.model)


def _base_point(model: SystemModel, args):
    if getattr(args, "point", None) is not None:
        return model.point(*args.point)
    return sample_invariant_set(model, 1, np.random.default_rng(args.seed))[0]


def _partition(model: SystemModel, args):
    if args.forward:
        return word_partition(model, args.k or 1)
    part = base_partition(model)
    if args.eps is not None:
        return refine_to_diameter(model, part, args.eps)
    for _ in range(args.k or 0):
        part = refine_once(model, part)
    return part


def _matrix(model, args):
    if getattr(args, "matrix", None):
        return io.read_matrix(args.matrix)
    return transition_matrix(model, _partition(model, args)).A


def _frame_dict(fr) -> dict:
    return {"base": [fr.base.x, fr.base.y], "e_s": list(fr.e_s), "e_u": list(fr.e_u), "angle": fr.angle}


# --- commands ------------------------------------------------------------------------
# each returns (payload, ok); payload is a dict for json or a writer callback


def cmd_constants(args, header):
    model = _model(args)
    rep = build_report(model.hyp, ReportTargets(delta_coding=args.delta, beta=args.beta,
                                                eps_expansive=args.eps))
    return {"report": rep.to_dict()}, True


def cmd_splitting(args, header):
    model = _model(args)
    return {"frame": _frame_dict(frame_at(model, _base_point(model, args)))}, True


def cmd_manifold(args, header):
    model = _model(args)
    x = _base_point(model, args)
    fn = local_unstable_manifold if args.unstable else local_stable_manifold
    g = fn(model, x, args.delta)
    if args.format == "csv":
        return (lambda fh: io.write_manifold(fh, g, header)), True
    return {"kind": g.kind, "iterations": g.iterations, "theta": g.theta, "flags": list(g.flags),
            "lip_bound": g.lip_bound(), "nodes": len(g.nodes),
            "frame": _frame_dict(g.chart.frame), "delta": g.chart.delta}, True


def cmd_bracket(args, header):
    model = _model(args)
    r = bracket(model, model.point(*args.point), model.point(*args.point2), args.eps)
    return {"point": [r.point.x, r.point.y], "dist_to_x": r.dist_to_x,
            "dist_to_y": r.dist_to_y, "iterations": r.iterations}, True


def _shadow_summary(r) -> dict:
    return {"start": [r.start.x, r.start.y], "achieved_beta": r.achieved_beta,
            "predicted_beta": r.predicted_beta, "alpha": r.alpha, "block": r.block,
            "flags": list(r.flags)}


def cmd_shadow(args, header):
    model = _model(args)
    if args.orbit:
        pts = io.read_orbit(args.orbit, model)
        probe = PseudoOrbit(tuple(pts), float("inf"))
        alpha = validate_pseudo_orbit(model, probe).worst_gap * (1 + 1e-12) or 1e-300
        orbits = [PseudoOrbit(tuple(pts), alpha)]
    else:
        rng = np.random.default_rng(args.seed)
        starts = ([model.point(*args.point)] * args.count if args.point is not None
                  else sample_invariant_set(model, args.count, rng))
        orbits = [noisy_orbit(model, s, args.N, args.alpha, rng) for s in starts]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(lambda o: shadow(model, o), orbits))
    if args.format == "csv":
        if len(results) != 1:
            raise UsageError("csv output holds a single orbit; use --count 1")
        return (lambda fh: io.write_shadow_errors(fh, results[0], header)), True
    return {"results": [_shadow_summary(r) for r in results]}, True


def cmd_close(args, header):
    model = _model(args)
    r = anosov_close(model, model.point(*args.point), args.N, args.beta)
    return {"point": [r.point.x, r.point.y], "period": r.period, "max_distance": r.max_distance,
            "residual": r.residual}, True


def cmd_specify(args, header):
    model = _model(args)
    segs = [(model.point(x, y), n) for x, y, n in args.segment]
    gap = required_gap(model) if args.gap is None else args.gap
    r = specification_orbit(model, segs, gap, args.beta)
    return {"point": [r.point.x, r.point.y], "period": r.period, "offsets": list(r.offsets),
            "max_jump": r.max_jump, "shadow": _shadow_summary(r.shadow)}, True


def cmd_partition(args, header):
    model = _model(args)
    part = _partition(model, args)
    if args.format == "json":
        return {"rectangles": part.m, "rounds": part.rounds, "diameter": part.diameter}, True
    return (lambda fh: io.write_partition(fh, part, header)), True


def cmd_matrix(args, header):
    model = _model(args)
    A = transition_matrix(model, _partition(model, args)).A
    if args.format == "json":
        return {"matrix": A}, True
    return (lambda fh: io.write_matrix(fh, A, header)), True


def cmd_entropy(args, header):
    A = _matrix(_model(args), args)
    r = spectral_radius(A)
    return {"rho": r.rho, "entropy": r.entropy, "iterations": r.iterations,
            "residual": r.residual, "flags": list(r.flags)}, True


def cmd_count_periodic(args, header):
    A = _matrix(_model(args), args)
    rows = []
    for n in range(1, args.N + 1):
        try:
            c = count_periodic(A, n)
            rows.append({"n": n, "trace": c.trace, "brute": c.brute, "agree": c.agree})
        except CapExceeded as exc:
            rows.append({"n": n, "trace": exc.trace, "brute": None, "agree": None})
    ok = all(r["agree"] is not False for r in rows)
    return {"counts": rows}, ok


def cmd_decode(args, header):
    model = _model(args)
    part = _partition(model, args)
    if args.words:
        words = io.read_words(args.words)
    elif args.word:
        syms = tuple(int(c) for c in args.word.replace(",", ""))
        words = [SymbolWindow(syms, args.offset, args.periodic)]
    else:
        raise UsageError("give --word or --words")
    out = []
    for w in words:
        r = decode(model, part, w, args.N)
        out.append({"point": [r.point.x, r.point.y], "accuracy": r.accuracy, "diameter": r.diameter})
    return {"points": out}, True


def cmd_itinerary(args, header):
    model = _model(args)
    part = _partition(model, args)
    w = itinerary(model, part, model.point(*args.point), args.N)
    if args.format == "text":
        return (lambda fh: io.write_words(fh, [w], header)), True
    return {"symbols": list(w.symbols), "offset": w.offset, "flagged": list(w.flagged)}, True


def cmd_verify(args, header):
    model = _model(args)
    part = _partition(model, args)
    rng = np.random.default_rng(args.seed)
    mk = verify_markov(model, part, rng=rng)
    cov = check_coverage(model, part, rng=rng)
    A = transition_matrix(model, part).A
    irr = check_irreducible_aperiodic(A)
    conj = verify_conjugacy(model, part, args.samples, args.N, rng, A)
    ok = mk.passed and cov.covered and cov.disjoint and irr.irreducible and irr.aperiodic and conj.passed
    return {"passed": ok, "markov": mk.summary(),
            "coverage": {"covered": cov.covered, "disjoint": cov.disjoint, "uncovered": cov.uncovered,
                         "overlaps": cov.overlaps},
            "mixing": {"irreducible": irr.irreducible, "aperiodic": irr.aperiodic, "period": irr.period},
            "conjugacy": {"passed": conj.passed, "worst": conj.worst_residual, "bound": conj.bound}}, ok


def cmd_reproduce_horseshoe(args, header):
    rows = horseshoe_rows()
    ok = all(r.match for r in rows)
    if args.format == "json":
        return {"rows": [r.to_dict() for r in rows], "all_match": ok}, ok
    return (lambda fh: fh.write(format_table(rows))), ok


COMMANDS = {
    "constants": cmd_constants,
    "splitting": cmd_splitting,
    "manifold": cmd_manifold,
    "bracket": cmd_bracket,
    "shadow": cmd_shadow,
    "close": cmd_close,
    "specify": cmd_specify,
    "partition": cmd_partition,
    "matrix": cmd_matrix,
    "entropy": cmd_entropy,
    "count-periodic": cmd_count_periodic,
    "decode": cmd_decode,
    "itinerary": cmd_itinerary,
    "verify": cmd_verify,
    "reproduce-horseshoe": cmd_reproduce_horseshoe,
}


# accepted --format values per command; the first is the default
FORMATS = {name: ("json",) for name in COMMANDS}
FORMATS.update({
    "manifold": ("json", "csv"),
    "shadow": ("json", "csv"),
    "partition": ("csv", "json"),
    "matrix": ("text", "json"),
    "itinerary": ("json", "text"),
    "reproduce-horseshoe": ("text", "json"),
})


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    header = io.make_header(argv, args.seed)
    allowed = FORMATS[args.command]
    if args.format is None:
        args.format = allowed[0]
    elif args.format not in allowed:
        stderr.write(f"hyperdyn: usage error: {args.command} writes {', '.join(allowed)}, not {args.format}\n")
        return 2
    try:
        payload, ok = COMMANDS[args.command](args, header)
    except (ParseError, UsageError) as exc:
        stderr.write(f"hyperdyn: usage error: {exc}\n")
        return 2
    except OSError as exc:
        stderr.write(f"hyperdyn: usage error: {exc}\n")
        return 2
    except HyperdynError as exc:
        stderr.write(f"hyperdyn: {exc.code}: {exc}\n")
        return 1
    text = io.dump_json(payload, header) if isinstance(payload, dict) else io.to_text(payload)
    if args.out:
        Path(args.out).write_text(text)
    else:
        stdout.write(text)
    return 0 if ok else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
