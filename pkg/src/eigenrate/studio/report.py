"""StudyReport: the in-memory result of one study and its canonical JSON."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..rates import ErrorRecord, RateFit, ReliabilityReport

SCHEMA = "eigenrate/v1"


@dataclass(frozen=True)
class Gate:
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"passed": bool(self.passed), "detail": self.detail}


@dataclass
class StudyReport:
    study: str
    kind: str
    config: dict
    levels: list = field(default_factory=list)  # per-level dicts (cells, h, N, lams, certificate)
    records: list = field(default_factory=list)  # ErrorRecord
    fits: dict = field(default_factory=dict)  # name -> RateFit
    ratios: dict = field(default_factory=dict)  # name -> list of floats
    reliability: ReliabilityReport | None = None
    table: list = field(default_factory=list)
    gates: dict = field(default_factory=dict)  # name -> Gate
    timings: dict = field(default_factory=dict)  # stage -> seconds; kept out of the JSON

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates.values())

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "study": self.study,
            "kind": self.kind,
            "config": dict(self.config),
            "levels": list(self.levels),
            "records": [r.to_dict() for r in self.records],
            "fits": {k: f.to_dict() for k, f in self.fits.items()},
            "ratios": {k: list(v) for k, v in self.ratios.items()},
            "reliability": None if self.reliability is None else self.reliability.to_dict(),
            "table": list(self.table),
            "gates": {k: g.to_dict() for k, g in self.gates.items()},
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "StudyReport":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        rel = d.get("reliability")
        return cls(
            study=d["study"],
            kind=d["kind"],
            config=dict(d["config"]),
            levels=list(d["levels"]),
            records=[ErrorRecord.from_dict(_nan_floats(r)) for r in d["records"]],
            fits={k: RateFit(_num(f["slope"]), _num(f["intercept"]), _num(f["residual"]),
                             tuple(f["window"]), tuple(_num(x) for x in f["pairwise"]))
                  for k, f in d["fits"].items()},
            ratios={k: [_num(x) for x in v] for k, v in d["ratios"].items()},
            reliability=None if rel is None else ReliabilityReport(
                _num(rel["tolerance"]), rel["mode"], tuple(rel["N"]), tuple(rel["counts"]),
                _num(rel["exponent"]), _num(rel["theta"])),
            table=list(d["table"]),
            gates={k: Gate(bool(g["passed"]), g["detail"]) for k, g in d["gates"].items()},
        )

    @classmethod
    def from_json(cls, text: str) -> "StudyReport":
        return cls.from_dict(json.loads(text))


def _num(x):
    return float("nan") if x is None else x


def _nan_floats(rec: dict) -> dict:
    out = dict(rec)
    for key in ("lam", "lam_h", "h"):
        out[key] = _num(out[key])
    out["errors"] = {k: _num(v) for k, v in out["errors"].items()}
    return out


def plain(obj):
    """Convert to JSON-ready builtins: tuples to lists, numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(plain(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"
