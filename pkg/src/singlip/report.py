"""Deterministic JSON and CSV emission for analysis results.

Reports must be byte-identical across runs with the same config and seed:
keys are sorted, no timestamps or machine identifiers are recorded, and
non-finite floats are spelled as the strings "inf", "-inf", "nan" (JSON
has no literals for them).  Every dataclass in the result tree is
serialized with all its fields, so each reported number sits next to the
fit record or sample set that produced it.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np

from .complexes import HolderComplex
from .exprs import Abs, BinOp, Neg, Num, Pow, Root, Var, to_text
from .specfile import SurfaceSpec

TOOL_VERSION = "singlip 0.1.0"

_EXPR_NODES = (Num, Var, BinOp, Pow, Root, Abs, Neg)


def to_jsonable(obj):
    """Map a result object tree onto plain JSON-ready data."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, _EXPR_NODES):
        return to_text(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    # opaque helper objects (charts, meshes): name the type, drop the state
    return f"<{type(obj).__name__}>"


def render_json(payload) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# report assembly


def _surface_block(spec: SurfaceSpec) -> dict:
    return {
        "name": spec.name,
        "f": spec.f_text,
        "wedge_slope": spec.wedge_slope,
        "eps": spec.eps,
        "arcs": {k: a.describe() for k, a in sorted(spec.arcs.items())},
    }


def base_report(spec: SurfaceSpec, cfg) -> dict:
    return {
        "surface": _surface_block(spec),
        "config_echo": cfg.echo(),
        "tool_version": TOOL_VERSION,
        "stage_errors": [],
    }


def analysis_report(spec: SurfaceSpec, cfg, verdict=None, *,
                    regularity=None, holder=None,
                    stage_errors=None) -> dict:
    rep = base_report(spec, cfg)
    if verdict is not None:
        rep["cone_check"] = verdict.cone
        rep["fibers"] = [
            {"fiber": w.fiber, "classification": w.fiber.classification().value}
            for w in verdict.wedges
        ]
        rep["partitions"] = [
            {"ray": w.fiber.ray.describe(), "partition": w.partition,
             "separation": w.separation, "error": w.error}
            for w in verdict.wedges
        ]
        rep["verdict"] = {"tag": verdict.tag, "reason": verdict.reason,
                          "notes": verdict.notes}
    if regularity is not None:
        rep["regularity"] = regularity
    if holder is not None:
        rep["holder"] = holder_block(holder)
    if stage_errors:
        rep["stage_errors"] = stage_errors
    return rep


def holder_block(cx: HolderComplex) -> dict:
    return {
        "edges": [{"label": e.label, "exponent": str(e.exponent)}
                  for e in cx.edges],
        "cycle": cx.describe(),
    }


# ---------------------------------------------------------------------------
# CSV emission


def write_csv(path: str | Path, columns: dict) -> Path:
    """Write named columns with a header row; columns must align in length."""
    names = list(columns)
    if len(names) < 2:
        raise ValueError("a CSV dump needs at least two named columns")
    cols = [np.asarray(columns[n]).ravel() for n in names]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns must have equal length")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            w.writerow([repr(float(c[i])) if np.issubdtype(c.dtype, np.floating)
                        else c[i] for c in cols])
    return p


def emit_verdict_csv(outdir: str | Path, verdict) -> list[Path]:
    """Dump the sweep scores and each wedge's boundary tracks."""
    outdir = Path(outdir)
    written = [write_csv(outdir / "sweep.csv",
                         {"angle": verdict.sweep.angles,
                          "score": verdict.sweep.scores})]
    for w in verdict.wedges:
        if w.partition is None:
            continue
        label = w.fiber.ray.describe().replace(" ", "_")
        rows_label, rows_t, rows_u = [], [], []
        for b in w.partition.boundaries:
            rows_label.extend([b.label or b.kind.value] * len(b.ts))
            rows_t.extend(b.ts.tolist())
            rows_u.extend(b.us.tolist())
        written.append(write_csv(
            outdir / f"boundaries_{label}.csv",
            {"arc": rows_label, "t": np.asarray(rows_t), "u": np.asarray(rows_u)}))
    return written


def emit_regularity_csv(outdir: str | Path, report) -> Path:
    ys = [p.y for p in report.pairs]
    return write_csv(Path(outdir) / "regularity_pairs.csv",
                     {"y": np.asarray(ys),
                      "d_outer": np.asarray([p.d_o for p in report.pairs]),
                      "d_inner": np.asarray([p.d_i for p in report.pairs]),
                      "ratio": np.asarray([p.ratio for p in report.pairs])})
