"""Command-line front end: ``overlap estimate | simulate | kernels``.

Exit codes: 0 success, 2 bad input or configuration, 3 degenerate density.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DegenerateDensityError, ValidationError
from .kde import BandwidthRule
from .kernels import KERNELS, kernel_moment
from .montecarlo import SCENARIOS, SimulationConfig, export_simulation, normality_diagnostics, run_replications
from .overlap import ML_MODES, AnalysisConfig, OverlapReport, estimate_overlap

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def read_rows(path) -> List[Tuple[int, List[str]]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        rows.append((lineno, cells))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    # optional header: first row whose value cell is not numeric
    if not _is_number(rows[0][1][0]):
        rows = rows[1:]
    if not rows:
        raise ValidationError(f"{path}: header only, no data rows")
    return rows


def _value(path, lineno: int, cell: str) -> float:
    if not _is_number(cell):
        raise ValidationError(f"{path}: row {lineno}, column 1: non-numeric value {cell!r}")
    return float(cell)


def read_values(path) -> np.ndarray:
    """Numbers from the first column of a CSV file (header optional)."""
    return np.array([_value(path, ln, cells[0]) for ln, cells in read_rows(path)])


def read_groups(path, groups: Optional[Sequence[str]] = None) -> Tuple[Dict[str, np.ndarray], List[str]]:
    """Split a two-column ``value,group`` CSV into per-group arrays."""
    out: Dict[str, List[float]] = {}
    order: List[str] = []
    for ln, cells in read_rows(path):
        if len(cells) < 2 or not cells[1]:
            raise ValidationError(f"{path}: row {ln}, column 2: missing group label")
        v = _value(path, ln, cells[0])
        if cells[1] not in out:
            out[cells[1]] = []
            order.append(cells[1])
        out[cells[1]].append(v)
    if groups is None:
        if len(order) != 2:
            raise ValidationError(f"{path}: expected exactly two groups, found {len(order)} ({', '.join(order)})")
        groups = order
    missing = [g for g in groups if g not in out]
    if missing:
        raise ValidationError(f"{path}: group(s) not found: {', '.join(missing)}")
    return {g: np.array(out[g]) for g in groups}, list(groups)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _report_csv(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["measure", "point", "variance", "se", "ci_lo", "ci_hi", "level"])
    for name, m in d["measures"].items():
        ci = m.get("ci") or {}
        w.writerow([name, m["point"], m["variance"], m["se"], ci.get("lo"), ci.get("hi"), ci.get("level")])
    return buf.getvalue()


def _report_text(d: dict) -> str:
    lines = [
        f"n: x={d['n']['x']} y={d['n']['y']}  h={d['h']:.6g}  kernel={d['config']['kernel']}",
        f"support: [{d['support']['lo']:.6g}, {d['support']['hi']:.6g}] ({d['support']['policy']})",
    ]
    for name, m in d["measures"].items():
        ci = m.get("ci")
        ci_txt = f"[{ci['lo']:.4f}, {ci['hi']:.4f}] @ {ci['level']:g}" if ci else "n/a"
        se = f"{m['se']:.4f}" if m["se"] is not None else "n/a"
        lines.append(f"{name}: {m['point']:.4f}  se {se}  CI {ci_txt}")
    for wmsg in d["warnings"]:
        lines.append(f"warning: {wmsg}")
    return "\n".join(lines) + "\n"


def render_report(report: OverlapReport, fmt: str) -> str:
    d = report.to_dict()
    if fmt == "json":
        return json.dumps(d, indent=2) + "\n"
    if fmt == "csv":
        return _report_csv(d)
    return _report_text(d)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_estimate(args) -> int:
    if args.data:
        if args.x or args.y:
            raise ValidationError("use either --data or --x/--y, not both")
        groups = args.groups.split(",") if args.groups else None
        if groups is not None and len(groups) != 2:
            raise ValidationError("--groups takes exactly two labels")
        split, labels = read_groups(args.data, groups)
        x, y = split[labels[0]], split[labels[1]]
    else:
        if not (args.x and args.y):
            raise ValidationError("need --x and --y (or --data)")
        x, y = read_values(args.x), read_values(args.y)
    cfg = AnalysisConfig(
        kernel=args.kernel,
        bandwidth=args.bandwidth,
        support=args.support,
        grid=args.grid,
        level=args.level,
        ml_mode=args.ml_mode,
    )
    report = estimate_overlap(x, y, cfg)
    _emit(render_report(report, args.format), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = SimulationConfig(
        scenario=args.scenario,
        n=args.n,
        reps=args.reps,
        seed=args.seed,
        kernel=args.kernel,
        bandwidth=BandwidthRule.parse(args.bandwidth),
        grid=args.grid,
        measure=args.measure,
        workers=args.workers,
    )
    rset = run_replications(cfg)
    diag = normality_diagnostics(rset)
    summary = export_simulation(rset, diag, args.out)
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_kernels(args) -> int:
    cols = [(0, 1), (1, 1), (2, 1), (0, 2)]
    sys.stdout.write("name,half_width," + ",".join(f"k{i}{j}" for i, j in cols) + "\n")
    for name, k in KERNELS.items():
        vals = ",".join(f"{kernel_moment(k, i, j):.10g}" for i, j in cols)
        sys.stdout.write(f"{name},{k.half_width:g},{vals}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="overlap", description="Kernel estimates of Pianka and MacArthur-Levins overlap.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate overlap between two samples")
    e.add_argument("--x", help="CSV whose first column is the x sample")
    e.add_argument("--y", help="CSV whose first column is the y sample")
    e.add_argument("--data", help="CSV with value,group columns")
    e.add_argument("--groups", help="two group labels to compare, as x,y (default: the two groups in file order)")
    e.add_argument("--kernel", default="epanechnikov", choices=sorted(KERNELS))
    e.add_argument("--bandwidth", default="paper_app",
                   help="paper_app | paper_sim | power:ALPHA | scaled_log:C,P | fixed:H (default paper_app)")
    e.add_argument("--support", default="auto", help="auto | LO,HI | quantile:Q (default auto)")
    e.add_argument("--grid", type=int, default=1001, help="odd number of grid points (default 1001)")
    e.add_argument("--level", type=float, default=0.95)
    e.add_argument("--ml-mode", default="rederived", choices=ML_MODES)
    e.add_argument("--format", default="json", choices=("json", "csv", "text"))
    e.add_argument("--out", help="write the report here instead of stdout")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="Monte Carlo check of the limiting distribution")
    s.add_argument("--scenario", default="case_I", choices=sorted(SCENARIOS))
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--measure", default="pianka", choices=("pianka", "macarthur_levins"))
    s.add_argument("--kernel", default="epanechnikov", choices=sorted(KERNELS))
    s.add_argument("--bandwidth", default="paper_sim")
    s.add_argument("--grid", type=int, default=1001)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("kernels", help="list built-in kernels and their moments")
    k.set_defaults(func=cmd_kernels)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateDensityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
