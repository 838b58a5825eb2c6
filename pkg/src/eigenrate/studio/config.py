"""Study configuration: INI sections, typed keys, strict validation.

A config file holds one ``[study:<name>]`` section per study and an optional
``[run]`` section with output settings.  Every key is typed and checked; keys
that do not belong to a study kind are rejected.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from importlib import resources

KINDS = ("laplace-1d", "laplace-2d", "beam", "approx", "reliability", "spectrum")
GATES = {
    "laplace-1d": ("certify", "dispersion", "upper", "lower", "eigen-eoc", "monotone",
                   "scaling", "quasi-optimal", "annihilation"),
    "beam": ("certify", "root", "upper", "lower", "eigen-eoc", "monotone", "pleijel",
             "annihilation"),
    "approx": ("anisotropic", "theorem-bound", "annihilation"),
    "reliability": ("certify", "reliability"),
    "spectrum": ("weyl", "table"),
}
GATES["laplace-2d"] = GATES["laplace-1d"]
# used when a study lists no gates
DEFAULT_GATES = {
    "laplace-1d": ("certify", "upper"),
    "laplace-2d": ("certify", "upper"),
    "beam": ("certify", "root", "eigen-eoc"),
    "approx": ("anisotropic",),
    "reliability": ("certify", "reliability"),
    "spectrum": ("table",),
}


class ConfigError(ValueError):
    pass


def _ints(s: str) -> tuple:
    out = []
    for part in s.replace(" ", "").split(","):
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _strs(s: str) -> tuple:
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# key -> (parser, default); None default means "derived at run time"
COMMON = {
    "kind": (str, None),
    "description": (str, ""),
    "family": (str, None),
    "gates": (_strs, ()),
    "seed": (int, 0),
}
EIGEN = {
    "levels": (_ints, None),
    "modes": (_ints, (1,)),
    "norms": (_ints, (0, 1)),
    "p": (float, 2.0),
    "regions": (_strs, ("omega", "G")),
    "mesh": (str, None),
    "grading": (float, 1.0),
    "solver": (str, "auto"),
    "max_dofs": (int, 4096),
    "eoc_tol": (float, 0.1),
    "eoc_window": (int, 3),
    "lower_slack": (float, 0.15),
    "spread_max": (float, 10.0),
    "ratio_min_levels": (int, 4),
    "ratio_norms": (_ints, None),
    "lambda_rate": (float, None),
    "lambda_tol": (float, 0.2),
    "best_approx": (_bool, False),
    "annihilation": (_bool, True),
}
LAPLACE = {
    "dispersion_count": (int, 10),
    "dispersion_tol": (float, 1e-9),
    "scaling_level": (int, None),
    "scaling_modes": (int, 8),
    "scaling_cap": (float, 0.1),
    "scaling_slope": (float, None),
    "scaling_tol": (float, 0.1),
    "closed_form_tol": (float, 0.05),
}
BEAM = {
    "kappa_ref": (float, 4.7300407449),
    "kappa_tol": (float, 1e-9),
    "pleijel_j": (int, 100),
    "pleijel_tol": (float, 1e-3),
}
APPROX = {
    "target": (str, None),
    "levels": (_ints, None),
    "base": (int, 4),
    "refine": (_strs, ("x", "y")),
    "expect_x": (str, "rate"),
    "expect_y": (str, "flat"),
    "rate": (float, None),
    "eoc_tol": (float, 0.1),
    "eoc_window": (int, 3),
    "flat_tol": (float, 0.01),
    "bound_factor": (float, 5.0),
    "annihilation": (_bool, True),
}
RELIABILITY = {
    "levels": (_ints, None),
    "tolerance": (float, 0.01),
    "tol_mode": (str, "relative"),
    "ratio_target": (float, None),
    "ratio_tol": (float, 0.01),
    "exponent_target": (float, 1.0),
    "exponent_tol": (float, 0.1),
    "solver": (str, "dense"),
    "max_dofs": (int, 4096),
}
SPECTRUM = {
    "domain": (str, "square"),
    "count": (int, 20),
    "weyl_window": (_ints, (50, 200)),
    "weyl_band": (float, 0.15),
    "exact_tol": (float, 1e-12),
}
SCHEMA = {
    "laplace-1d": {**COMMON, **EIGEN, **LAPLACE},
    "laplace-2d": {**COMMON, **EIGEN, **LAPLACE},
    "beam": {**COMMON, **EIGEN, **BEAM},
    "approx": {**COMMON, **APPROX},
    "reliability": {**COMMON, **RELIABILITY},
    "spectrum": {**COMMON, **SPECTRUM},
}
RUN_KEYS = {"out": (str, "eigenrate-out"), "formats": (_strs, ("json", "csv", "dat"))}
FORMATS = ("json", "csv", "dat")


@dataclass
class StudyConfig:
    name: str
    kind: str
    values: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def active_gates(self) -> tuple:
        return tuple(self.values["gates"]) or DEFAULT_GATES[self.kind]

    def replace(self, **overrides) -> "StudyConfig":
        """A re-validated copy with some raw keys overridden."""
        raw = dict(self.raw)
        raw.update({k: str(v) for k, v in overrides.items()})
        return _parse_study(self.name, raw)

    def echo(self) -> dict:
        """The config as written (strings), for the report."""
        return {"name": self.name, **dict(sorted(self.raw.items()))}


@dataclass
class RunConfig:
    studies: list
    out: str = "eigenrate-out"
    formats: tuple = FORMATS
    source: str = ""

    def study(self, name: str) -> StudyConfig:
        for s in self.studies:
            if s.name == name:
                return s
        raise ConfigError(f"no study named {name!r}; available: {', '.join(self.names())}")

    def names(self) -> list:
        return [s.name for s in self.studies]


def _parse_study(name: str, section) -> StudyConfig:
    raw = {k: v for k, v in section.items()}
    kind = raw.get("kind")
    if kind is None:
        raise ConfigError(f"[study:{name}] is missing 'kind'")
    if kind not in SCHEMA:
        raise ConfigError(f"[study:{name}] unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    schema = SCHEMA[kind]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"[study:{name}] unknown keys for kind {kind}: {', '.join(unknown)}")
    values = {}
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"[study:{name}] bad value for {key}: {raw[key]!r}") from exc
        else:
            values[key] = default
    cfg = StudyConfig(name, kind, values, raw)
    validate(cfg)
    return cfg


def validate(cfg: StudyConfig) -> None:
    """Cross-field checks that do not need the numerics."""
    v = cfg.values
    where = f"[study:{cfg.name}]"
    bad_gates = sorted(set(v["gates"]) - set(GATES[cfg.kind]))
    if bad_gates:
        raise ConfigError(f"{where} gates not available for {cfg.kind}: {', '.join(bad_gates)}")
    if cfg.kind != "spectrum" and not v.get("family"):
        raise ConfigError(f"{where} needs a family")
    if cfg.kind in ("laplace-1d", "laplace-2d", "beam", "approx", "reliability"):
        levels = v.get("levels")
        if not levels:
            raise ConfigError(f"{where} needs levels")
        if any(n < 1 for n in levels) or list(levels) != sorted(set(levels)):
            raise ConfigError(f"{where} levels must be increasing positive cell counts")
    if cfg.kind in ("laplace-1d", "laplace-2d", "beam"):
        if v["solver"] not in ("auto", "dense", "lanczos"):
            raise ConfigError(f"{where} unknown solver {v['solver']!r}")
        if any(j < 0 for j in v["norms"]) or any(mo < 1 for mo in v["modes"]):
            raise ConfigError(f"{where} norms must be >= 0 and modes >= 1")
        bad = sorted(set(v["regions"]) - {"omega", "G"})
        if bad:
            raise ConfigError(f"{where} unknown regions {bad}")
        if v["p"] < 2:
            raise ConfigError(f"{where} p must be at least 2")
        if v["mesh"] is not None:
            allowed = {"laplace-1d": ("interval",), "beam": ("interval",),
                       "laplace-2d": ("tri", "tri-alt", "rect")}[cfg.kind]
            if v["mesh"] not in allowed:
                raise ConfigError(f"{where} mesh {v['mesh']!r} not in {allowed}")
    if cfg.kind == "approx":
        if not v["target"]:
            raise ConfigError(f"{where} needs a target expression")
        for d in v["refine"]:
            if d not in ("x", "y"):
                raise ConfigError(f"{where} refine directions are x and y")
        for key in ("expect_x", "expect_y"):
            if v[key] not in ("rate", "flat"):
                raise ConfigError(f"{where} {key} must be 'rate' or 'flat'")
    if cfg.kind == "reliability" and v["tol_mode"] not in ("relative", "absolute"):
        raise ConfigError(f"{where} tol_mode must be relative or absolute")
    if cfg.kind == "spectrum":
        if v["domain"] not in ("square", "interval"):
            raise ConfigError(f"{where} domain must be square or interval")
        if len(v["weyl_window"]) != 2 or v["weyl_window"][0] < 1:
            raise ConfigError(f"{where} weyl_window needs two positive indices")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    studies = []
    run = {}
    for sec in cp.sections():
        if sec == "run":
            unknown = sorted(set(cp[sec]) - set(RUN_KEYS))
            if unknown:
                raise ConfigError(f"[run] unknown keys: {', '.join(unknown)}")
            run = {k: RUN_KEYS[k][0](v) for k, v in cp[sec].items()}
        elif sec.startswith("study:"):
            name = sec.split(":", 1)[1].strip()
            if not name:
                raise ConfigError("empty study name")
            studies.append(_parse_study(name, cp[sec]))
        else:
            raise ConfigError(f"unknown section [{sec}]")
    if not studies:
        raise ConfigError(f"{source}: no [study:...] sections")
    formats = run.get("formats", FORMATS)
    bad = sorted(set(formats) - set(FORMATS))
    if bad:
        raise ConfigError(f"unknown output formats {bad}")
    return RunConfig(studies, run.get("out", "eigenrate-out"), tuple(formats), source)


def builtin_path(name: str) -> str:
    return str(resources.files("eigenrate") / "configs" / f"{name}.ini")


def load_config(path: str) -> RunConfig:
    """Read a config file; bare names resolve to the packaged configs."""
    if not os.path.exists(path) and os.path.exists(builtin_path(path)):
        path = builtin_path(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=path)
