"""Long-format CSV panels, ground-truth sidecars and tabular reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .panel import Labels, PanelDataset, validate

FORMATS = ("csv", "markdown", "json")


class CsvFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnMapping:
    industry: str = "industry"
    country: str = "country"
    period: str = "period"
    y: str = "y"
    x: tuple[str, ...] | None = None  # None: every remaining column, in header order


def _fmt(v: float) -> str:
    # repr is the shortest string that round-trips
    return repr(float(v))


def write_csv(data: PanelDataset, path, var_names: Sequence[str] | None = None) -> None:
    """Write a panel in long format, industry-major, periods ascending."""
    labels = data.labels or Labels()
    d = data.d_x
    names = list(var_names or labels.variables or [f"x{k + 1}" for k in range(d)])
    periods = labels.periods or tuple(range(1, data.T + 1))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["industry", "country", "period", "y", *names])
        for i in range(data.L):
            ind = labels.industries[i] if labels.industries else f"I{i + 1:03d}"
            Y, X = data.Y_block(i), data.X_block(i)
            for j in range(data.N[i]):
                cty = labels.countries[i][j] if labels.countries else f"C{j + 1:04d}"
                for t in range(data.T):
                    w.writerow([ind, cty, periods[t], _fmt(Y[j, t]), *(_fmt(v) for v in X[j, t])])


def load_csv(path, mapping: ColumnMapping | None = None) -> PanelDataset:
    """Read a long-format CSV into a validated panel.

    Industries and countries are ordered lexicographically, periods
    ascending.  Every (industry, country) pair must cover the same periods.
    """
    mapping = mapping or ColumnMapping()
    keys = [mapping.industry, mapping.country, mapping.period]
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in (*keys, mapping.y) if c not in df.columns]
    if missing:
        raise CsvFormatError(f"missing column(s): {', '.join(missing)}")
    xcols = list(mapping.x) if mapping.x else [c for c in df.columns if c not in (*keys, mapping.y)]
    absent = [c for c in xcols if c not in df.columns]
    if absent or not xcols:
        raise CsvFormatError(f"regressor columns not found: {absent or 'none given'}")
    if df.empty:
        raise CsvFormatError("no data rows")

    periods = pd.to_numeric(df[mapping.period], errors="coerce")
    bad = df.index[periods.isna() | (periods != periods.round())]
    if len(bad):
        raise CsvFormatError(f"unparseable period in row(s) {_rows(bad)}")
    df[mapping.period] = periods.astype(np.int64)
    values = {}
    for c in (mapping.y, *xcols):
        v = pd.to_numeric(df[c].str.strip(), errors="coerce")
        bad = df.index[v.isna() & ~df[c].str.strip().str.lower().isin(["nan", ""])]
        if len(bad):
            raise CsvFormatError(f"unparseable number in column {c!r}, row(s) {_rows(bad)}")
        blank = df.index[df[c].str.strip() == ""]
        if len(blank):
            raise CsvFormatError(f"empty value in column {c!r}, row(s) {_rows(blank)}")
        values[c] = df[c].map(float)  # exact decimal-to-double conversion

    dup = df.duplicated(subset=keys, keep=False)
    if dup.any():
        first = df.loc[dup, keys].iloc[0]
        raise CsvFormatError(
            f"duplicate key (industry={first.iloc[0]!r}, country={first.iloc[1]!r}, "
            f"period={first.iloc[2]}) in {int(dup.sum())} rows")

    all_periods = sorted(df[mapping.period].unique())
    T = len(all_periods)
    table = pd.DataFrame({c: values[c] for c in (mapping.y, *xcols)})
    table[keys] = df[keys]
    table = table.sort_values(keys, kind="mergesort")

    gaps = []
    Ys, Xs, industries, countries = [], [], [], []
    for ind, g_ind in table.groupby(mapping.industry, sort=True):
        ys, xs, names = [], [], []
        for cty, g in g_ind.groupby(mapping.country, sort=True):
            have = g[mapping.period].tolist()
            if have != all_periods:
                gaps.extend((ind, cty, p) for p in sorted(set(all_periods) - set(have)))
                continue
            ys.append(g[mapping.y].to_numpy(float))
            xs.append(g[xcols].to_numpy(float))
            names.append(str(cty))
        industries.append(str(ind))
        countries.append(tuple(names))
        Ys.append(np.array(ys).reshape(len(ys), T))
        Xs.append(np.array(xs).reshape(len(xs), T, len(xcols)))
    if gaps:
        shown = ", ".join(f"({i}, {c}, {p})" for i, c, p in gaps[:20])
        more = f" and {len(gaps) - 20} more" if len(gaps) > 20 else ""
        raise CsvFormatError(f"unbalanced time coverage; missing (industry, country, period): {shown}{more}")

    labels = Labels(tuple(industries), tuple(countries), tuple(xcols), tuple(int(p) for p in all_periods))
    data = PanelDataset.from_blocks(Ys, Xs, labels)
    validate(data)
    return data


def _rows(index) -> str:
    # data rows are 1-based and the header is line 1
    return ", ".join(str(int(r) + 2) for r in list(index)[:10])


def truth_to_dict(truth) -> dict:
    return {
        "beta0": truth.beta0.tolist(),
        "lG": truth.lG,
        "lS": list(truth.lS),
        "N": [int(g.shape[0]) for g in truth.GammaG],
        "FG": truth.FG.tolist(),
        "FS": [f.tolist() for f in truth.FS],
        "GammaG": [g.tolist() for g in truth.GammaG],
        "GammaS": [g.tolist() for g in truth.GammaS],
    }


def write_json(obj: Any, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)


@dataclass
class Report:
    title: str
    meta: dict
    tables: list[Table]


def _cell(v: Any, full: bool) -> str:
    if isinstance(v, (float, np.floating)):
        return _fmt(v) if full else f"{float(v):.4f}"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def _jsonable(v: Any) -> Any:
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def render(report: Report, fmt: str) -> str:
    """Render a report as delimited text, markdown tables or JSON."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    if fmt == "json":
        doc = {
            "title": report.title,
            "meta": _jsonable(report.meta),
            "tables": {t.name: [dict(zip(t.columns, _jsonable(r))) for r in t.rows] for t in report.tables},
        }
        return json.dumps(doc, indent=2) + "\n"
    out = io.StringIO()
    meta_line = json.dumps(_jsonable(report.meta), sort_keys=True)
    if fmt == "csv":
        out.write(f"# {report.title}\n# meta: {meta_line}\n")
        w = csv.writer(out, lineterminator="\n")
        for t in report.tables:
            out.write(f"# table: {t.name}\n")
            w.writerow(t.columns)
            for r in t.rows:
                w.writerow([_cell(v, True) for v in r])
        return out.getvalue()
    out.write(f"# {report.title}\n\n```\n{meta_line}\n```\n")
    for t in report.tables:
        out.write(f"\n## {t.name}\n\n")
        out.write("| " + " | ".join(t.columns) + " |\n")
        out.write("|" + "|".join("---" for _ in t.columns) + "|\n")
        for r in t.rows:
            out.write("| " + " | ".join(_cell(v, False) for v in r) + " |\n")
    return out.getvalue()
