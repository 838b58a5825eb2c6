"""Run a study end to end: meshes, assembly, solves, error tables and gates."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import gevp, spectra
from ..femcore import FESpace, assemble, get_family
from ..functions import SymbolicFunction
from ..meshkit import interval_mesh, rect_mesh, unit_square_triangles
from ..polyspace import annihilation_check
from ..rates import (
    ErrorRecord,
    best_approximation,
    bound_ratio,
    broken_error,
    eoc,
    lambda_scaling,
    match_eigenpair,
    reliability,
    rhs_seminorm,
)
from .config import ConfigError, StudyConfig
from .report import Gate, StudyReport

THREADS_ENV = "EIGENRATE_THREADS"
MONOTONE_TOL = 1e-10  # relative slack for lambda_h >= lambda (solver noise)
QUASI_OPT_TOL = 1e-9
SPOT_CHECKS = 8


class StudyError(RuntimeError):
    """A numerical stage failed; the message names the study, level and stage."""


def thread_count(default: int = 0) -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0")
    return n


def _map_levels(fn, items, threads: int) -> list:
    """Ordered map; threads = 0 is the sequential reference mode."""
    if threads <= 0 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class _Clock:
    def __init__(self):
        self.stages = {}

    def add(self, stage: str, seconds: float) -> None:
        self.stages[stage] = self.stages.get(stage, 0.0) + seconds


def _gate(fn):
    """Evaluate a gate body; arithmetic failures become a failing gate with the reason."""
    try:
        return fn()
    except (ValueError, ArithmeticError, IndexError, KeyError) as exc:
        return Gate(False, f"error: {exc}")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# -----------------------------------------------------------------------------
# eigenvalue studies (laplace-1d, laplace-2d, beam)


PROBLEMS = {"laplace-1d": ("interval", 1), "laplace-2d": ("square", 1), "beam": ("beam", 2)}


def _family(cfg: StudyConfig):
    dim = 2 if cfg.kind in ("laplace-2d", "approx") else 1
    try:
        fam = get_family(cfg.family, dim)
    except KeyError as exc:
        raise ConfigError(f"[study:{cfg.name}] {exc.args[0]}") from None
    return fam


def _eigen_mesh(cfg: StudyConfig, fam, n: int):
    if cfg.kind != "laplace-2d":
        return interval_mesh(0.0, 1.0, n, cfg.grading)
    kind = cfg.mesh or ("rect" if fam.cell == "rectangle" else "tri")
    if (kind == "rect") != (fam.cell == "rectangle"):
        raise ConfigError(f"[study:{cfg.name}] mesh {kind!r} does not fit family {fam.name}")
    if kind == "rect":
        return rect_mesh(n, n, grading=(cfg.grading, cfg.grading))
    if cfg.grading != 1.0:
        raise ConfigError(f"[study:{cfg.name}] grading is only available on interval/rect meshes")
    return unit_square_triangles(n, "alternating" if kind == "tri-alt" else "fixed")


def _window(cfg: StudyConfig) -> int:
    """Number of discrete eigenpairs each level computes."""
    gates = cfg.active_gates
    k = max(cfg.modes)
    if "dispersion" in gates:
        k = max(k, cfg.dispersion_count)
    if "scaling" in gates:
        k = max(k, cfg.scaling_modes)
    return k


def _exact(problem: str, k: int) -> list:
    # one group per index suffices: every group holds at least one eigenfunction
    return spectra.exact_spectrum(problem, k + 1)


def _spot_residual(pair, pairs, seed: int, level: int) -> float:
    """Independent residual recomputation on a seeded random sample of pairs."""
    rng = np.random.default_rng([seed, level])
    pick = rng.choice(len(pairs), size=min(SPOT_CHECKS, len(pairs)), replace=False)
    normA = math.sqrt(float(pair.A.multiply(pair.A).sum()))
    worst = 0.0
    for q in sorted(pick):
        x = pairs[q].vector
        res = pair.A @ x - pairs[q].lam * (pair.B @ x)
        worst = max(worst, float(np.linalg.norm(res)) / (normA * max(1.0, float(np.linalg.norm(x)))))
    return worst


def _eigen_level(cfg: StudyConfig, fam, m: int, problem: str, k: int, exact: list, n: int):
    clock = _Clock()
    stage = "mesh"
    try:
        t = time.perf_counter()
        mesh = _eigen_mesh(cfg, fam, n)
        space = FESpace(mesh, fam, m)
        stage = "assemble"
        pair = assemble(space, m)
        clock.add(f"n={n}/assemble", time.perf_counter() - t)
        if pair.n > cfg.max_dofs:
            raise StudyError(f"study {cfg.name}: level n={n}: assemble: "
                             f"{pair.n} free DOFs exceed max_dofs = {cfg.max_dofs}")
        stage = "solve"
        t = time.perf_counter()
        kk = min(k, pair.n)
        pairs, cert = gevp.solve_gevp(pair, k=kk, method=cfg.solver, return_certificate=True)
        spot = _spot_residual(pair, pairs, cfg.seed, n)
        clock.add(f"n={n}/solve", time.perf_counter() - t)
        stage = "errors"
        t = time.perf_counter()
        hs = tuple(float(s) for s in mesh.sizes.max(axis=0))
        records = []
        for mode in cfg.modes:
            match = match_eigenpair(pairs, space, exact, mode)
            errors = {}
            for region in cfg.regions:
                for j in cfg.norms:
                    errors[f"{region}/H{j}"] = broken_error(match.u, match.uh, j, cfg.p, region)
            if cfg.best_approx:
                for j in (jj for jj in cfg.norms if jj <= 1):
                    pp = best_approximation(mesh, fam, match.u, "l2" if j == 0 else "h1")
                    errors[f"omega/H{j}/best"] = broken_error(match.u, pp, j, cfg.p, "omega", mesh=mesh)
            records.append(ErrorRecord(n, float(mesh.h), int(pair.n), mode, float(match.lam),
                                       float(match.lam_h), hs, errors))
        clock.add(f"n={n}/errors", time.perf_counter() - t)
    except (ConfigError, StudyError):
        raise
    except Exception as exc:  # solver or assembly failure, with context
        raise StudyError(f"study {cfg.name}: level n={n}: {stage}: {exc}") from exc
    level = {
        "cells": n, "h": float(mesh.h), "N": int(pair.n),
        "lams": [float(p.lam) for p in pairs],
        "certificate": {"max_residual": cert.max_residual, "orthogonality": cert.orthogonality,
                        "method": cert.method, "spot_residual": spot},
    }
    return level, records, clock.stages


def _series(report: StudyReport, mode: int, key: str):
    recs = [r for r in report.records if r.index == mode]
    return np.array([r.errors[key] for r in recs]), np.array([r.h for r in recs]), recs


def _gate_certify(report: StudyReport) -> Gate:
    worst_r = max(lv["certificate"]["max_residual"] for lv in report.levels)
    worst_o = max(lv["certificate"]["orthogonality"] for lv in report.levels)
    worst_s = max(lv["certificate"]["spot_residual"] for lv in report.levels)
    ok = worst_r <= gevp.RESIDUAL_TOL and worst_o <= gevp.ORTHO_TOL and worst_s <= gevp.RESIDUAL_TOL
    return Gate(ok, f"max residual {worst_r:.3g}, B-orthogonality {worst_o:.3g}, spot {worst_s:.3g}")


def _gate_dispersion(cfg, fam, report) -> Gate:
    if fam.name != "P1" or fam.dim != 1 or cfg.grading != 1.0:
        raise ValueError("the dispersion oracle covers uniform P1 interval meshes only")
    worst = 0.0
    for lv in report.levels:
        h = lv["h"]
        kmax = min(cfg.dispersion_count, len(lv["lams"]))
        ks = np.arange(1, kmax + 1)
        t = ks * math.pi * h
        ref = 6.0 / h**2 * (1 - np.cos(t)) / (2 + np.cos(t))
        worst = max(worst, float(np.max(np.abs(np.array(lv["lams"][:kmax]) - ref) / ref)))
    return Gate(worst <= cfg.dispersion_tol, f"max relative deviation {worst:.3g} (tol {cfg.dispersion_tol:g})")


def _gate_upper(cfg, fam, report) -> Gate:
    r = fam.r
    notes, ok = [], True
    for mode in cfg.modes:
        for j in cfg.norms:
            e, h, _ = _series(report, mode, f"omega/H{j}")
            fit = eoc(e, h, cfg.eoc_window)
            report.fits[f"mode{mode}/omega/H{j}"] = fit
            good = abs(fit.slope - (r - j)) <= cfg.eoc_tol
            ok &= good
            notes.append(f"mode {mode} H{j}: {_fmt(fit.slope)} vs {r - j}")
    return Gate(ok, "; ".join(notes))


def _gate_lower(cfg, fam, m, report) -> Gate:
    r = fam.r
    notes, ok = [], True
    norms = cfg.ratio_norms or cfg.norms
    for mode in cfg.modes:
        for j in cfg.norms:
            e, h, _ = _series(report, mode, f"G/H{j}")
            fit = eoc(e, h, cfg.eoc_window)
            report.fits[f"mode{mode}/G/H{j}"] = fit
            good = fit.slope <= r - j + cfg.lower_slack
            ok &= good
            notes.append(f"mode {mode} G H{j}: {_fmt(fit.slope)} <= {r - j}+{cfg.lower_slack:g}")
        for j in norms:
            e, h, recs = _series(report, mode, f"G/H{j}")
            if len(e) < cfg.ratio_min_levels:
                raise ValueError(f"bound ratios need at least {cfg.ratio_min_levels} levels")
            ratios = [bound_ratio(ei, hi, rec.lam, r, j, m) for ei, hi, rec in zip(e, h, recs)]
            report.ratios[f"mode{mode}/G/H{j}"] = ratios
            lo, hi = min(ratios), max(ratios)
            good = lo > 0 and hi / lo <= cfg.spread_max
            ok &= good
            notes.append(f"ratio H{j} in [{_fmt(lo)}, {_fmt(hi)}]")
    return Gate(ok, "; ".join(notes))


def _gate_eigen_eoc(cfg, fam, m, report) -> Gate:
    target = cfg.lambda_rate if cfg.lambda_rate is not None else 2.0 * (fam.r - m)
    notes, ok = [], True
    for mode in cfg.modes:
        recs = [r for r in report.records if r.index == mode]
        e = np.array([abs(r.lam_h - r.lam) for r in recs])
        h = np.array([r.h for r in recs])
        fit = eoc(e, h, cfg.eoc_window)
        report.fits[f"mode{mode}/lambda"] = fit
        ok &= abs(fit.slope - target) <= cfg.lambda_tol
        notes.append(f"mode {mode}: {_fmt(fit.slope)} vs {target:g}")
    return Gate(ok, "; ".join(notes))


def _gate_monotone(cfg, fam, exact, report) -> Gate:
    if not fam.conforming:
        raise ValueError(f"{fam.name} is nonconforming; the upper-bound property does not apply")
    flat = [lam for grp in exact for lam in [grp.lam] * grp.multiplicity]
    worst = math.inf
    for lv in report.levels:
        for lam_h, lam in zip(lv["lams"], flat):
            worst = min(worst, (lam_h - lam) / lam)
    ok = worst >= -MONOTONE_TOL
    # refinement never raises a conforming eigenvalue on nested meshes
    nested = all(b % a == 0 for a, b in zip(cfg.levels, cfg.levels[1:]))
    if nested and cfg.grading == 1.0:
        for a, b in zip(report.levels, report.levels[1:]):
            k = min(len(a["lams"]), len(b["lams"]))
            ok &= all(y <= x * (1 + MONOTONE_TOL) for x, y in zip(a["lams"][:k], b["lams"][:k]))
    return Gate(ok, f"min relative gap {worst:.3g}")


def _gate_scaling(cfg, fam, report) -> Gate:
    target = cfg.scaling_level if cfg.scaling_level is not None else 64
    lv = next((x for x in report.levels if x["cells"] == target), None)
    if lv is None:
        raise ValueError(f"scaling level {target} is not among the levels")
    k = cfg.scaling_modes
    exact = _exact(PROBLEMS[cfg.kind][0], k)
    flat = np.array([g.lam for g in exact for _ in range(g.multiplicity)])[:k]
    lams_h = np.array(lv["lams"][:k])
    if len(lams_h) < k:
        raise ValueError(f"only {len(lams_h)} eigenvalues computed at the scaling level")
    rel = (lams_h - flat) / flat
    h = lv["h"]
    fit = lambda_scaling(rel, flat, h, cfg.scaling_cap)
    report.fits["lambda-scaling"] = fit
    slope = cfg.scaling_slope if cfg.scaling_slope is not None else fam.r - 1.0
    ok = abs(fit.slope - slope) <= cfg.scaling_tol
    detail = f"slope {_fmt(fit.slope)} vs {slope:g} (max lambda h^2 {_fmt(flat.max() * h * h)})"
    if fam.name == "P1" and fam.dim == 1:
        closed = flat * h * h / 12.0
        dev = float(np.max(np.abs(rel / closed - 1)))
        report.ratios["lambda-scaling/closed-form"] = list(rel / closed)
        ok &= dev <= cfg.closed_form_tol
        detail += f"; closed form lambda h^2/12 within {dev:.3g}"
    return Gate(ok, detail)


def _gate_quasi(cfg, report) -> Gate:
    if not cfg.best_approx:
        raise ValueError("set best_approx = true to measure best approximations")
    worst = 0.0
    for rec in report.records:
        for j in (jj for jj in cfg.norms if jj <= 1):
            worst = max(worst, rec.errors[f"omega/H{j}/best"] / rec.errors[f"omega/H{j}"])
    return Gate(worst <= 1 + QUASI_OPT_TOL, f"max best/Galerkin ratio {worst:.6f}")


def _gate_annihilation(cfg, fam, m) -> Gate:
    got = annihilation_check(fam, m, fam.r)
    return Gate(got == cfg.annihilation, f"{fam.name} m={m} r={fam.r}: {got} (expected {cfg.annihilation})")


def _gate_root(cfg) -> Gate:
    k1 = spectra.beam_root(1)
    dev = abs(k1 - cfg.kappa_ref)
    return Gate(dev <= cfg.kappa_tol, f"kappa_1 = {k1:.13f}, deviation {dev:.3g}")


def _gate_pleijel(cfg) -> Gate:
    j = cfg.pleijel_j
    lam = spectra.beam_root(j) ** 4
    ratio = lam / spectra.pleijel_estimate(j, 1)
    want = ((j + 0.5) / j) ** 4
    dev = abs(ratio / want - 1)
    return Gate(dev <= cfg.pleijel_tol, f"j={j}: ratio {ratio:.10g} vs {want:.10g}, deviation {dev:.3g}")


def run_eigen(cfg: StudyConfig, threads: int = 0) -> StudyReport:
    fam = _family(cfg)
    problem, m = PROBLEMS[cfg.kind]
    if m > fam.space.degree or (m == 2 and fam.name != "Hermite3"):
        raise ConfigError(f"[study:{cfg.name}] {fam.name} is not H^{m}-conforming")
    k = _window(cfg)
    exact = _exact(problem, k)
    report = StudyReport(cfg.name, cfg.kind, cfg.echo())
    out = _map_levels(lambda n: _eigen_level(cfg, fam, m, problem, k, exact, n), list(cfg.levels), threads)
    for level, records, stages in out:
        report.levels.append(level)
        report.records.extend(records)
        report.timings.update(stages)
    t = time.perf_counter()
    body = {
        "certify": lambda: _gate_certify(report),
        "dispersion": lambda: _gate_dispersion(cfg, fam, report),
        "upper": lambda: _gate_upper(cfg, fam, report),
        "lower": lambda: _gate_lower(cfg, fam, m, report),
        "eigen-eoc": lambda: _gate_eigen_eoc(cfg, fam, m, report),
        "monotone": lambda: _gate_monotone(cfg, fam, exact, report),
        "scaling": lambda: _gate_scaling(cfg, fam, report),
        "quasi-optimal": lambda: _gate_quasi(cfg, report),
        "annihilation": lambda: _gate_annihilation(cfg, fam, m),
        "root": lambda: _gate_root(cfg),
        "pleijel": lambda: _gate_pleijel(cfg),
    }
    for name in cfg.active_gates:
        report.gates[name] = _gate(body[name])
    report.timings["gates"] = time.perf_counter() - t
    return report


# -----------------------------------------------------------------------------
# anisotropic approximation


def _approx_level(cfg, fam, target, n: int):
    row = {}
    for d in cfg.refine:
        nx, ny = (n, cfg.base) if d == "x" else (cfg.base, n)
        mesh = rect_mesh(nx, ny)
        pp = best_approximation(mesh, fam, target, "l2")
        row[f"{d}/L2"] = broken_error(target, pp, 0, 2.0, "omega", mesh=mesh)
        row[f"{d}/rhs"] = rhs_seminorm(target, mesh, fam, (0, 0))
    return ErrorRecord(n, 1.0 / n, int(n), 0, hs=(1.0 / n, 1.0 / n), errors=row)


def run_approx(cfg: StudyConfig, threads: int = 0) -> StudyReport:
    fam = _family(cfg)
    if fam.cell != "rectangle":
        raise ConfigError(f"[study:{cfg.name}] anisotropic studies need a rectangle family")
    try:
        target = SymbolicFunction(cfg.target, 2)
    except ValueError as exc:
        raise ConfigError(f"[study:{cfg.name}] {exc}") from None
    report = StudyReport(cfg.name, cfg.kind, cfg.echo())
    t = time.perf_counter()
    report.records = _map_levels(lambda n: _approx_level(cfg, fam, target, n), list(cfg.levels), threads)
    report.timings["approximation"] = time.perf_counter() - t
    rate = cfg.rate if cfg.rate is not None else float(fam.r)
    hs = np.array([1.0 / n for n in cfg.levels])

    def anisotropic():
        notes, ok = [], True
        for d in cfg.refine:
            e = np.array([rec.errors[f"{d}/L2"] for rec in report.records])
            expect = cfg.expect_x if d == "x" else cfg.expect_y
            if expect == "flat":
                dev = float(np.max(np.abs(e / e[0] - 1)))
                report.ratios[f"{d}/flat"] = list(e / e[0])
                ok &= dev < cfg.flat_tol
                notes.append(f"refine {d}: change {dev:.3g} (< {cfg.flat_tol:g})")
            else:
                fit = eoc(e, hs, cfg.eoc_window)
                report.fits[f"{d}/L2"] = fit
                ok &= abs(fit.slope - rate) <= cfg.eoc_tol
                notes.append(f"refine {d}: EOC {_fmt(fit.slope)} vs {rate:g}")
        return Gate(ok, "; ".join(notes))

    def theorem_bound():
        worst = 0.0
        for d in cfg.refine:
            for rec in report.records:
                worst = max(worst, rec.errors[f"{d}/L2"] / rec.errors[f"{d}/rhs"])
        return Gate(worst <= cfg.bound_factor, f"max error/rhs {worst:.4g} (<= {cfg.bound_factor:g})")

    body = {"anisotropic": anisotropic, "theorem-bound": theorem_bound,
            "annihilation": lambda: _gate_annihilation(cfg, fam, 1)}
    for name in cfg.active_gates:
        report.gates[name] = _gate(body[name])
    return report


# -----------------------------------------------------------------------------
# reliable eigenvalue counts


def _reliability_level(cfg, fam, n: int):
    clock = _Clock()
    try:
        t = time.perf_counter()
        space = FESpace(interval_mesh(0.0, 1.0, n), fam, 1)
        pair = assemble(space, 1)
        if pair.n > cfg.max_dofs:
            raise StudyError(f"study {cfg.name}: level n={n}: assemble: "
                             f"{pair.n} free DOFs exceed max_dofs = {cfg.max_dofs}")
        pairs, cert = gevp.solve_gevp(pair, method=cfg.solver, return_certificate=True)
        spot = _spot_residual(pair, pairs, cfg.seed, n)
        clock.add(f"n={n}/solve", time.perf_counter() - t)
    except StudyError:
        raise
    except Exception as exc:
        raise StudyError(f"study {cfg.name}: level n={n}: solve: {exc}") from exc
    level = {
        "cells": n, "h": 1.0 / n, "N": int(pair.n), "lams": [float(p.lam) for p in pairs],
        "certificate": {"max_residual": cert.max_residual, "orthogonality": cert.orthogonality,
                        "method": cert.method, "spot_residual": spot},
    }
    return level, clock.stages


def run_reliability(cfg: StudyConfig, threads: int = 0) -> StudyReport:
    fam = _family(cfg)
    report = StudyReport(cfg.name, cfg.kind, cfg.echo())
    for level, stages in _map_levels(lambda n: _reliability_level(cfg, fam, n), list(cfg.levels), threads):
        report.levels.append(level)
        report.timings.update(stages)
    Nmax = max(lv["N"] for lv in report.levels)
    exact = [(k * math.pi) ** 2 for k in range(1, Nmax + 1)]
    spectra_list = [(lv["N"], lv["lams"]) for lv in report.levels]
    target = cfg.ratio_target if cfg.ratio_target is not None else (
        math.sqrt(12 * cfg.tolerance) / math.pi if cfg.tol_mode == "relative" else None)

    def rel_gate():
        rep = reliability(spectra_list, exact, cfg.tolerance, cfg.tol_mode, fam.r, 1)
        report.reliability = rep
        fractions = [c / N for c, N in zip(rep.counts, rep.N)]
        report.ratios["reliable-fraction"] = fractions
        ok = abs(rep.exponent - cfg.exponent_target) <= cfg.exponent_tol
        notes = [f"exponent {_fmt(rep.exponent)} vs {cfg.exponent_target:g}"]
        if target is not None:
            ok &= all(abs(f - target) <= cfg.ratio_tol for f in fractions)
            notes.append("j*/N " + ", ".join(_fmt(f) for f in fractions) + f" vs {target:.4f}")
        return Gate(ok, "; ".join(notes))

    body = {"certify": lambda: _gate_certify(report), "reliability": rel_gate}
    for name in cfg.active_gates:
        report.gates[name] = _gate(body[name])
    return report


# -----------------------------------------------------------------------------
# closed-form spectra and Weyl


def _enumerate_square(count: int) -> list:
    """Brute-force (k^2 + l^2, multiplicity) table, independent of the spectra module."""
    K = 1
    while True:
        vals = {}
        for k in range(1, K + 1):
            for l in range(1, K + 1):
                vals[k * k + l * l] = vals.get(k * k + l * l, 0) + 1
        keys = sorted(q for q in vals if q <= K * K + 1)
        if len(keys) >= count:
            return [(q, vals[q]) for q in keys[:count]]
        K += 1


def run_spectrum(cfg: StudyConfig, threads: int = 0) -> StudyReport:
    report = StudyReport(cfg.name, cfg.kind, cfg.echo())
    t = time.perf_counter()
    lo, hi = cfg.weyl_window
    if cfg.domain == "square":
        groups = spectra.laplace_square(cfg.count)
        report.table = [{"index": i + 1, "lam": g.lam, "multiplicity": g.multiplicity,
                         "modes": [list(md) for md in g.modes]} for i, g in enumerate(groups)]
        values = spectra.square_eigenvalues(hi)
        n = 2
    else:
        groups = spectra.laplace_interval(cfg.count)
        report.table = [{"index": i + 1, "lam": g.lam, "multiplicity": 1, "modes": [list(g.modes[0])]}
                        for i, g in enumerate(groups)]
        values = np.array([g.lam for g in spectra.laplace_interval(hi)])
        n = 1
    js = list(range(lo, hi + 1))
    ratios = [float(values[j - 1] / spectra.weyl_estimate(j, n)) for j in js]
    report.ratios["weyl"] = ratios
    report.timings["spectrum"] = time.perf_counter() - t

    def table():
        if cfg.domain == "square":
            ref = [(math.pi**2 * q, mult) for q, mult in _enumerate_square(cfg.count)]
        else:
            ref = [((k * math.pi) ** 2, 1) for k in range(1, cfg.count + 1)]
        got = [(row["lam"], row["multiplicity"]) for row in report.table]
        ok = len(got) == len(ref) and all(
            abs(a - b) <= cfg.exact_tol * b and ma == mb for (a, ma), (b, mb) in zip(got, ref))
        return Gate(ok, f"{len(got)} entries against the enumeration oracle")

    def weyl():
        dev = np.abs(np.array(ratios) - 1)
        if cfg.domain == "interval":
            worst = float(dev.max())
            return Gate(worst <= cfg.exact_tol, f"max |ratio - 1| = {worst:.3g} on j in [{lo}, {hi}]")
        outside = [j for j, d in zip(js, dev) if d > cfg.weyl_band]
        detail = (f"ratio in [{min(ratios):.4f}, {max(ratios):.4f}] on j in [{lo}, {hi}]; "
                  f"{len(outside)} indices outside +-{cfg.weyl_band:g}")
        if outside:
            detail += f" (first {outside[0]})"
        return Gate(not outside, detail)

    body = {"table": table, "weyl": weyl}
    for name in cfg.active_gates:
        report.gates[name] = _gate(body[name])
    return report


RUNNERS = {
    "laplace-1d": run_eigen, "laplace-2d": run_eigen, "beam": run_eigen,
    "approx": run_approx, "reliability": run_reliability, "spectrum": run_spectrum,
}


def run_study(cfg: StudyConfig, threads: int | None = None) -> StudyReport:
    """Run one validated study; ``threads`` = 0 is the sequential reference mode."""
    threads = thread_count() if threads is None else threads
    t = time.perf_counter()
    report = RUNNERS[cfg.kind](cfg, threads)
    report.timings["total"] = time.perf_counter() - t
    return report
