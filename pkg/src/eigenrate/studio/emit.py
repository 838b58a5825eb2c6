"""Report serialization: canonical JSON, CSV, gnuplot data and script.

Every file goes through a temp file in the target directory plus ``os.replace``
so readers never see a partial report.
"""
from __future__ import annotations

import json
import math
import os
import tempfile

from .report import SCHEMA, StudyReport, canonical_json

BASE_COLUMNS = ("level", "h", "N", "index", "lam", "lam_h", "hx", "hy")


class EmitError(OSError):
    pass


def write_atomic(path: str, text: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
            os.chmod(tmp, 0o644)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _num(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def table_columns(report: StudyReport) -> list:
    keys = sorted({k for r in report.records for k in r.errors})
    return list(BASE_COLUMNS) + keys


def table_rows(report: StudyReport) -> list:
    cols = table_columns(report)[len(BASE_COLUMNS):]
    rows = []
    for r in report.records:
        hs = list(r.hs) + [float("nan")] * (2 - len(r.hs))
        row = [r.level, r.h, r.N, r.index, r.lam, r.lam_h, hs[0], hs[1]]
        row += [r.errors.get(k, float("nan")) for k in cols]
        rows.append(row)
    return rows


def to_csv(report: StudyReport) -> str:
    cols = table_columns(report)
    lines = [f"# {SCHEMA} study={report.study} kind={report.kind}; columns: "
             "level = cells per direction, h = max diameter, N = free DOFs, index = eigen index, "
             "lam/lam_h = exact/discrete eigenvalue, hx/hy = max size per direction, "
             "region/Hj = broken norm of order j of the error",
             ",".join(cols)]
    lines += [",".join(_num(v) for v in row) for row in table_rows(report)]
    return "\n".join(lines) + "\n"


def to_dat(report: StudyReport) -> str:
    cols = table_columns(report)
    lines = [f"# {SCHEMA} study={report.study} kind={report.kind}",
             "# " + " ".join(f"{i + 1}:{c}" for i, c in enumerate(cols))]
    lines += [" ".join(_num(v) for v in row) for row in table_rows(report)]
    return "\n".join(lines) + "\n"


def to_gnuplot(report: StudyReport, datfile: str) -> str:
    cols = table_columns(report)
    err = [(i + 1, c) for i, c in enumerate(cols) if i >= len(BASE_COLUMNS)]
    out = [f"# gnuplot script for study {report.study}",
           "set logscale xy",
           "set xlabel 'h'",
           "set ylabel 'error'",
           "set key left top",
           f"set title '{report.study}'"]
    if err:
        plots = [f"'{datfile}' using 2:{i} with linespoints title '{c}'" for i, c in err]
        out.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(out) + "\n"


def emit(report: StudyReport, out_dir: str, formats=("json", "csv", "dat")) -> list:
    """Write the requested formats; returns the written paths.

    ``json`` also writes ``<study>.timings.json`` (wall-clock is kept out of
    the main report so it stays byte-identical across runs); ``dat`` also
    writes the ``.gp`` script.
    """
    base = os.path.join(out_dir, report.study)
    written = []
    for fmt in formats:
        if fmt == "json":
            written.append(write_atomic(base + ".json", report.to_json()))
            timings = {k: round(v, 6) for k, v in sorted(report.timings.items())}
            written.append(write_atomic(base + ".timings.json",
                                        json.dumps(timings, sort_keys=True, indent=1) + "\n"))
        elif fmt == "csv":
            written.append(write_atomic(base + ".csv", to_csv(report)))
        elif fmt == "dat":
            written.append(write_atomic(base + ".dat", to_dat(report)))
            written.append(write_atomic(base + ".gp", to_gnuplot(report, os.path.basename(base) + ".dat")))
        else:
            raise ValueError(f"unknown format {fmt!r}")
    return written


def read_report(path: str) -> StudyReport:
    try:
        with open(path) as fh:
            return StudyReport.from_json(fh.read())
    except OSError as exc:
        raise EmitError(f"cannot read {path}: {exc.strerror or exc}") from exc


__all__ = ["EmitError", "emit", "read_report", "to_csv", "to_dat", "to_gnuplot",
           "write_atomic", "canonical_json"]
