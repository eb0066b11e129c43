"""CSV and SVG emission for experiment rows.

Output is deterministic: floats are written with ``repr`` (shortest
round-trip form) and SVGs carry no date and a fixed id salt.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import CSV_FIELDS, Row, Timing  # noqa: E402

INT_FIELDS = {"C", "N", "z", "seed", "runs", "slots"}
STR_FIELDS = {"experiment", "policy", "rng_id"}

plt.rcParams.update({"svg.hashsalt": "aoiopt", "svg.fonttype": "none", "figure.max_open_warning": 0})


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def write_csv(rows: list[Row], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row.values()])
    return path


def read_csv(path: str | Path) -> list[Row]:
    rows = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path}: header does not match the report schema")
        for rec in reader:
            vals = {}
            for name in CSV_FIELDS:
                raw = rec[name]
                if name in STR_FIELDS:
                    vals[name] = raw
                elif name in INT_FIELDS:
                    vals[name] = int(raw)
                else:
                    vals[name] = float(raw)
            rows.append(Row(**vals))
    return rows


def write_timings(timings: list[Timing], path: str | Path) -> Path:
    """Wall-clock table; machine dependent, so kept apart from the row CSVs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["C", "N", "w", "z", "analytic_seconds", "simulated_seconds", "ratio",
                         "exhaustive_seconds", "exhaustive_ratio", "note"])
        for t in timings:
            writer.writerow([t.C, t.N, _fmt(t.w), t.z, f"{t.analytic_seconds:.4g}",
                             f"{t.simulated_seconds:.4g}", f"{t.ratio:.4g}",
                             f"{t.exhaustive_seconds:.4g}", f"{t.exhaustive_ratio:.4g}", t.note])
    return path


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def _user(w: float) -> str:
    return "active" if w == 1.0 else "passive"


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _line_chart(series: dict, xlabel: str, ylabel: str, title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for label in sorted(series):
        pts = sorted(series[label])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=10)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def _bar_chart(groups: list, bars: list, values: dict, ylabel: str, title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    width = 0.8 / max(len(bars), 1)
    for i, bar in enumerate(bars):
        xs = [g + (i - (len(bars) - 1) / 2) * width for g in range(len(groups))]
        ys = [values.get((grp, bar), math.nan) for grp in groups]
        ax.bar(xs, ys, width=width, label=str(bar))
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels([str(g) for g in groups])
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    return _save(fig, path)


def _mismatch_figures(rows, out: Path, stem: str, csv_too: bool, svg_too: bool) -> list[Path]:
    paths = []
    groups = defaultdict(list)
    for row in rows:
        wag = row.policy == "wag"
        setting = f"r{row.param1:g}" if wag else f"s{row.param2:g}"
        groups[(row.C, row.N, _user(row.w), setting)].append(row)
    for (C, N, user, setting), grp in sorted(groups.items()):
        name = f"{stem}_C{C}_N{N}_{user}_{setting}"
        if csv_too:
            paths.append(write_csv(grp, out / f"{name}.csv"))
        if svg_too:
            series = defaultdict(list)
            for row in grp:
                x = row.param2 if row.policy == "wag" else row.param1
                series[f"z={row.z}"].append((x, 100.0 * row.mismatch))
            xlabel = "H" if grp[0].policy == "wag" else "r"
            title = f"{grp[0].policy} mismatch, C={C}, N={N}, {user}, {setting}"
            paths.append(_line_chart(series, xlabel, "mismatch (%)", title, out / f"{name}.svg"))
    return paths


def _optimality_figures(rows, out: Path, stem: str) -> list[Path]:
    groups = defaultdict(list)
    for row in rows:
        groups[(row.C, row.N, _user(row.w))].append(row)
    paths = []
    for (C, N, user), grp in sorted(groups.items()):
        series = defaultdict(list)
        for row in grp:
            series[f"z={row.z}"].append((row.param1, 100.0 * row.mismatch))
        title = f"gap between s=1 and best s, C={C}, N={N}, {user}"
        paths.append(_line_chart(series, "r", "gap (%)", title, out / f"{stem}_C{C}_N{N}_{user}.svg"))
    return paths


def _compare_figures(rows, out: Path, stem: str) -> list[Path]:
    groups = defaultdict(list)
    for row in rows:
        groups[(row.C, row.N, row.w)].append(row)
    paths = []
    for (C, N, w), grp in sorted(groups.items()):
        zs = sorted({r.z for r in grp})
        policies = list(dict.fromkeys(r.policy for r in grp))
        values = {(r.z, r.policy): r.f_value for r in grp}
        title = f"empirical F, C={C}, N={N}, w={w:.3g}"
        path = out / f"{stem}_C{C}_N{N}_w{w:.3g}.svg"
        paths.append(_bar_chart([f"z={z}" for z in zs], policies,
                                {(f"z={k[0]}", k[1]): v for k, v in values.items()},
                                "F", title, path))
    return paths


def _efficiency_figures(rows, out: Path, stem: str) -> list[Path]:
    groups = defaultdict(list)
    for row in rows:
        if row.policy == "ratio":
            groups[(row.C, row.w)].append(row)
    paths = []
    for (C, w), grp in sorted(groups.items()):
        zs = sorted({r.z for r in grp})
        ns = sorted({r.N for r in grp})
        values = {(f"z={r.z}", f"N={r.N}"): r.f_value for r in grp}
        title = f"F(WaG) / F(WaG_R), C={C}, w={w:.3g}"
        paths.append(_bar_chart([f"z={z}" for z in zs], [f"N={n}" for n in ns], values,
                                "ratio", title, out / f"{stem}_C{C}_w{w:.3g}.svg"))
    return paths


def render_svg(rows: list[Row], out_dir: str | Path, stem: str) -> list[Path]:
    """Figures matching the experiment kind found in ``rows``."""
    if not rows:
        return []
    out = Path(out_dir)
    kind = rows[0].experiment
    if kind.startswith("mismatch"):
        return _mismatch_figures(rows, out, stem, csv_too=False, svg_too=True)
    if kind == "optimality":
        return _optimality_figures(rows, out, stem)
    if kind == "compare":
        return _compare_figures(rows, out, stem)
    if kind == "efficiency":
        return _efficiency_figures(rows, out, stem)
    return []


def emit_report(rows: list[Row], out_dir: str | Path, stem: str, fmt: str = "both") -> list[Path]:
    """Write ``<stem>.csv`` plus the figures (and, for mismatch runs, one CSV
    per user type and setting).  An empty row set yields a header-only CSV."""
    if fmt not in ("csv", "svg", "both"):
        raise ValueError(f"format must be csv, svg or both, got {fmt!r}")
    out = Path(out_dir)
    paths = []
    csv_on, svg_on = fmt in ("csv", "both"), fmt in ("svg", "both")
    if csv_on:
        paths.append(write_csv(rows, out / f"{stem}.csv"))
    if rows and rows[0].experiment.startswith("mismatch"):
        paths += _mismatch_figures(rows, out, stem, csv_on, svg_on)
    elif svg_on:
        paths += render_svg(rows, out, stem)
    return paths
