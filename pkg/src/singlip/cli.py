"""Command line front end: one subcommand per analysis stage.

Exit codes: 0 when the requested analysis reached a verdict, 2 when it
finished but could not decide (an Unknown), 1 on any error.  All reports
go to stdout as deterministic JSON; --emit-csv additionally dumps the
sample sets behind the report.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .complexes import BadBeta, IncompleteCover, holder_complex, plane_complex, combinatorially_equivalent
from .config import AnalysisConfig, BadConfig, apply_flags, load_config
from .exprs import ExprError
from .fibers import AXIS_ANGLES, ray_at, ray_fiber
from .maps import HypothesisFailed, StripRegion, assemble_case_iv, estimate_distortion
from .metric import Regularity, l_regularity_probe
from .pieces import (
    FAST_CLASSES,
    PieceClass,
    PlaneTag,
    check_well_separated,
    partition_wedge,
    plane_verdict,
)
from .report import (
    analysis_report,
    base_report,
    emit_regularity_csv,
    emit_verdict_csv,
    holder_block,
    render_json,
    write_csv,
)
from .specfile import SpecError, load_specfile

OK, ERROR, UNKNOWN = 0, 1, 2


class CliError(RuntimeError):
    """User-facing failure: bad flags, missing arcs, unusable input."""


# ---------------------------------------------------------------------------
# shared plumbing


def _load(args):
    case = load_specfile(args.spec)
    cfg = load_config(args.config) if args.config else AnalysisConfig()
    cfg = apply_flags(cfg, seed=getattr(args, "seed", None),
                      squeeze_c=getattr(args, "c", None))
    return case, cfg


def _ray(text: str):
    if text in AXIS_ANGLES:
        return ray_at(AXIS_ANGLES[text], snap_tol=1e-9)
    try:
        angle = float(text)
    except ValueError:
        raise CliError(f"--ray/--wedge takes +x, +y, -x, -y or an angle "
                       f"in radians, got {text!r}") from None
    return ray_at(angle, snap_tol=1e-9)


def _schedule_for(spec, cfg):
    # keep the sample ladder inside the declared window 0 < y <= eps
    start = min(cfg.schedule_start, 0.5 * spec.eps)
    return type(cfg.schedule())(start, cfg.schedule_ratio, cfg.schedule_count)


def _emit(args, text: str) -> None:
    sys.stdout.write(text)


def _run_verdict(spec, cfg):
    return plane_verdict(
        spec.f,
        wedge_slope=spec.wedge_slope,
        schedule=_schedule_for(spec, cfg),
        separation_tol=cfg.separation_tol,
        sweep_kw={"n_angles": cfg.sweep_angles},
    )


def _pair_arcs(spec, prefix: str):
    names = (f"{prefix}_minus", f"{prefix}_plus")
    try:
        return spec.arcs[names[0]], spec.arcs[names[1]]
    except KeyError as exc:
        raise CliError(
            f"regularity probe needs arcs {names[0]} and {names[1]} in the "
            f"spec file; {exc.args[0]!r} is missing") from None


# ---------------------------------------------------------------------------
# map construction from a partitioned wedge


def _arc_from_track(boundary):
    """Callable y -> x through a tracked boundary, log-log interpolated.

    Tracks are sampled on a geometric ladder; between rungs the arc is
    interpolated linearly in log-log space and past the ends it continues
    with the terminal slope, which preserves power-law growth and keeps
    distinct arcs ordered."""
    ts = np.asarray(boundary.ts, dtype=float)
    us = np.asarray(boundary.us, dtype=float)
    keep = np.isfinite(ts) & np.isfinite(us) & (ts > 0)
    ts, us = ts[keep], us[keep]
    order = np.argsort(ts)
    ts, us = ts[order], us[order]
    if us.size == 0 or float(np.max(np.abs(us))) < 1e-12:
        return lambda y: np.zeros_like(np.asarray(y, dtype=float))
    sign = -1.0 if float(np.median(us[np.abs(us) > 0])) < 0 else 1.0
    lt = np.log(ts)
    lu = np.log(np.clip(np.abs(us), 1e-300, None))

    def arc(y):
        y = np.asarray(y, dtype=float)
        ly = np.log(y)
        out = np.interp(ly, lt, lu)
        if lt.size >= 2:
            s_lo = (lu[1] - lu[0]) / (lt[1] - lt[0])
            s_hi = (lu[-1] - lu[-2]) / (lt[-1] - lt[-2])
            out = np.where(ly < lt[0], lu[0] + s_lo * (ly - lt[0]), out)
            out = np.where(ly > lt[-1], lu[-1] + s_hi * (ly - lt[-1]), out)
        return sign * np.exp(out)

    return arc


def _flanked_wall(partition):
    """Last fast piece with flat pieces on both sides, or None."""
    pieces = partition.pieces
    for i in range(len(pieces) - 2, 0, -1):
        if (pieces[i].klass in FAST_CLASSES
                and pieces[i - 1].klass is PieceClass.FLAT
                and pieces[i + 1].klass is PieceClass.FLAT):
            return i
    return None


def _map_strips(partition, eps):
    i = _flanked_wall(partition)
    if i is None:
        return None
    y_hi = min(0.1, 0.4 * eps)
    y_lo = y_hi / 10.0
    pieces = partition.pieces
    arcs = [_arc_from_track(b) for b in (pieces[i - 1].left, pieces[i].left,
                                         pieces[i].right, pieces[i + 1].right)]
    left = StripRegion(arcs[0], arcs[1], y_lo, y_hi, label="left flank")
    mid = StripRegion(arcs[1], arcs[2], y_lo, y_hi, label="wall")
    right = StripRegion(arcs[2], arcs[3], y_lo, y_hi, label="right flank")
    return left, mid, right


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(args) -> int:
    case, cfg = _load(args)
    spec = case.spec
    stage_errors = []
    verdict = None
    regularity = None
    holder = None
    try:
        verdict = _run_verdict(spec, cfg)
    except Exception as exc:
        stage_errors.append({"stage": "plane_verdict",
                             "error": f"{type(exc).__name__}: {exc}"})
    if verdict is not None and args.regularity:
        try:
            pair = _pair_arcs(spec, args.pair)
            regularity = l_regularity_probe(spec.f, pair)
        except Exception as exc:
            stage_errors.append({"stage": "regularity",
                                 "error": f"{type(exc).__name__}: {exc}"})
    if verdict is not None and args.holder:
        try:
            holder = holder_complex(verdict)
        except (IncompleteCover, BadBeta) as exc:
            stage_errors.append({"stage": "holder",
                                 "error": f"{type(exc).__name__}: {exc}"})
    rep = analysis_report(spec, cfg, verdict, regularity=regularity,
                          holder=holder, stage_errors=stage_errors)
    _emit(args, render_json(rep))
    if args.emit_csv and verdict is not None:
        emit_verdict_csv(args.emit_csv, verdict)
        if regularity is not None:
            emit_regularity_csv(args.emit_csv, regularity)
    if stage_errors:
        return ERROR
    if verdict.tag is PlaneTag.UNDECIDED:
        return UNKNOWN
    return OK


def cmd_fiber(args) -> int:
    case, cfg = _load(args)
    spec = case.spec
    fiber = ray_fiber(spec.f, _ray(args.ray),
                      wedge_slope=spec.wedge_slope,
                      schedule=_schedule_for(spec, cfg))
    rep = base_report(spec, cfg)
    rep["ray"] = fiber.ray.describe()
    rep["intervals"] = [[fiber.lo, fiber.hi]]
    rep["contains_infinity"] = fiber.contains_infinity
    rep["classification"] = fiber.classification().value
    rep["fiber"] = fiber
    _emit(args, render_json(rep))
    return OK


def cmd_pieces(args) -> int:
    case, cfg = _load(args)
    spec = case.spec
    partition = partition_wedge(spec.f, _ray(args.ray),
                                wedge_slope=spec.wedge_slope,
                                schedule=_schedule_for(spec, cfg))
    separation = check_well_separated(partition, cfg.separation_tol)
    rep = base_report(spec, cfg)
    rep["partition"] = partition
    rep["separation"] = separation
    rep["pieces"] = [p.describe() for p in partition.pieces]
    _emit(args, render_json(rep))
    if args.emit_csv:
        rows_label, rows_t, rows_u = [], [], []
        for b in partition.boundaries:
            rows_label.extend([b.label or b.kind.value] * len(b.ts))
            rows_t.extend(np.asarray(b.ts).tolist())
            rows_u.extend(np.asarray(b.us).tolist())
        write_csv(Path(args.emit_csv) / "boundaries.csv",
                  {"arc": rows_label, "t": np.asarray(rows_t),
                   "u": np.asarray(rows_u)})
    return OK


def cmd_regularity(args) -> int:
    case, cfg = _load(args)
    spec = case.spec
    pair = _pair_arcs(spec, args.pair)
    report = l_regularity_probe(spec.f, pair)
    rep = base_report(spec, cfg)
    rep["regularity"] = report
    rep["verdict"] = report.verdict.value
    _emit(args, render_json(rep))
    if args.emit_csv:
        emit_regularity_csv(args.emit_csv, report)
    return OK if report.verdict is not Regularity.INCONCLUSIVE else UNKNOWN


def cmd_map(args) -> int:
    case, cfg = _load(args)
    spec = case.spec
    ray = _ray(args.wedge)
    if ray.label != "+y":
        raise CliError("map construction is implemented for the +y wedge; "
                       f"got {ray.describe()}")
    partition = partition_wedge(spec.f, ray, wedge_slope=spec.wedge_slope,
                                schedule=_schedule_for(spec, cfg))
    rep = base_report(spec, cfg)
    strips = _map_strips(partition, spec.eps)
    if strips is None:
        rep["outcome"] = "no_fast_piece"
        rep["detail"] = ("the wedge has no fast piece flanked by flat "
                         "pieces; no squeeze map is needed")
        _emit(args, render_json(rep))
        return OK
    left, mid, right = strips
    bundle = assemble_case_iv(spec.f, left, mid, right, c=cfg.squeeze_c)
    if isinstance(bundle, HypothesisFailed):
        rep["outcome"] = "hypothesis_failed"
        rep["detail"] = str(bundle)
        _emit(args, render_json(rep))
        return OK
    window = StripRegion(left.left, right.right, left.y_lo, left.y_hi,
                         label="map window")
    est = estimate_distortion(bundle, window, n_pairs=cfg.n_pairs,
                              seed=cfg.seed)
    rep["outcome"] = "bundle_built"
    rep["regions"] = [str(r) if isinstance(r, str) else getattr(r, "label", "")
                      for r, _ in bundle.charts]
    rep["notes"] = bundle.notes
    rep["distortion"] = est
    _emit(args, render_json(rep))
    return OK


def cmd_holder(args) -> int:
    case, cfg = _load(args)
    spec = case.spec
    verdict = _run_verdict(spec, cfg)
    cx = holder_complex(verdict)
    rep = base_report(spec, cfg)
    rep["holder"] = holder_block(cx)
    _emit(args, render_json(rep))
    return OK


# ---------------------------------------------------------------------------
# corpus


def _fixture_dir() -> Path:
    return Path(__file__).resolve().parent / "fixtures"


def _parse_fraction_cycle(text: str):
    from fractions import Fraction
    return tuple(Fraction(part.strip()) for part in text.split(",") if part.strip())


def _check_expectation(key: str, want: str, verdict, holder_cache) -> tuple[str, bool]:
    """Returns (got, ok) for one expect.<key> entry."""
    if key == "verdict":
        got = verdict.tag.value
        return got, got == want
    if key == "reason":
        got = verdict.reason.value
        return got, got == want
    if key.startswith("fiber."):
        label = key[6:]
        for w in verdict.wedges:
            if w.fiber.ray.label == label:
                got = w.fiber.classification().value
                return got, got == want
        return "no wedge at " + label, False
    if key == "holder":
        cx = holder_cache()
        want_cx = plane_complex(_parse_fraction_cycle(want))
        got = cx.describe()
        return got, bool(combinatorially_equivalent(cx, want_cx))
    return f"unknown expectation {key!r}", False


def cmd_corpus(args) -> int:
    cfg = load_config(args.config) if args.config else AnalysisConfig()
    cfg = apply_flags(cfg, seed=args.seed)
    fdir = Path(args.fixtures) if args.fixtures else _fixture_dir()
    manifest = json.loads((fdir / "manifest.json").read_text(encoding="utf-8"))
    failures = 0
    rows = []
    for entry in manifest["cases"]:
        name = entry["name"]
        if args.filter and args.filter not in name:
            continue
        case = load_specfile(fdir / entry["file"])
        spec = case.spec
        verdict = _run_verdict(spec, cfg)
        cache = {}

        def holder_cache():
            if "cx" not in cache:
                cache["cx"] = holder_complex(verdict)
            return cache["cx"]

        for key, (want, tag) in sorted(case.expected.items()):
            got, ok = _check_expectation(key, want, verdict, holder_cache)
            rows.append((name, key, want, got, ok, tag))
            failures += 0 if ok else 1
    if not rows:
        sys.stdout.write("no fixtures matched\n")
        return ERROR
    width = max(len(r[0]) for r in rows)
    for name, key, want, got, ok, tag in rows:
        status = "PASS" if ok else "FAIL"
        sys.stdout.write(f"{status}  {name:<{width}}  {key}: expected "
                         f"{want!r}, got {got!r}  {tag}\n".rstrip() + "\n")
    sys.stdout.write(f"{len(rows) - failures}/{len(rows)} expectations hold\n")
    return ERROR if failures else OK


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="singlip",
        description="Decide outer bilipschitz equivalence to the plane for "
                    "a singular graph surface, stage by stage.")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("spec", help="path to a .surf surface description")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the sampling seed")
        p.add_argument("--emit-csv", metavar="DIR", default=None,
                       help="dump sample sets as CSV into DIR")

    p = sub.add_parser("analyze", help="full pipeline to a plane verdict")
    common(p)
    p.add_argument("--regularity", action="store_true",
                   help="also probe l-regularity along the spec's pair arcs")
    p.add_argument("--holder", action="store_true",
                   help="also assemble the Holder complex")
    p.add_argument("--pair", default="A",
                   help="arc name prefix for the pair family (default A)")
    p.set_defaults(run=cmd_analyze)

    p = sub.add_parser("fiber", help="slope fiber over one ray")
    common(p)
    p.add_argument("--ray", required=True, help="+x, +y, -x, -y or radians")
    p.set_defaults(run=cmd_fiber)

    p = sub.add_parser("pieces", help="partition one wedge into pieces")
    common(p)
    p.add_argument("--ray", required=True, help="+x, +y, -x, -y or radians")
    p.set_defaults(run=cmd_pieces)

    p = sub.add_parser("regularity", help="inner/outer distance growth "
                                          "along the spec's pair arcs")
    common(p)
    p.add_argument("--pair", default="A",
                   help="arc name prefix for the pair family (default A)")
    p.set_defaults(run=cmd_regularity)

    p = sub.add_parser("map", help="build and verify the squeeze map bundle "
                                   "for a wedge")
    common(p)
    p.add_argument("--wedge", default="+y", help="wedge ray (default +y)")
    p.add_argument("--c", type=float, default=None,
                   help="squeeze constant (default from config)")
    p.set_defaults(run=cmd_map)

    p = sub.add_parser("holder", help="Holder complex of the surface germ")
    common(p)
    p.set_defaults(run=cmd_holder)

    p = sub.add_parser("corpus", help="run every fixture against its "
                                      "expectations")
    common(p, spec=False)
    p.add_argument("--filter", default=None,
                   help="only fixtures whose name contains this text")
    p.add_argument("--fixtures", default=None,
                   help="fixture directory (default: packaged corpus)")
    p.set_defaults(run=cmd_corpus)
    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (SpecError, BadConfig, CliError, ExprError,
            IncompleteCover, BadBeta) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return ERROR
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
