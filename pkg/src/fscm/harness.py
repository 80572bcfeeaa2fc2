"""Convergence studies: configuration, overkill references, rate fits and reports.

A study runs every (h, N, variant) of its matrix against one overkill
reference computed with the singular complement method on a mesh refined
``h_factor`` times beyond the finest h and with N_ref Fourier modes.  Per-mode
solutions do not depend on N, so each (h, variant) solves the largest N once
and the smaller N are truncations of it.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import presets
from .fourier import FSCMSolution, aggregate_errors, difference_norms, mode_norms, solve_fscm
from .mesh import triangulate
from .modesolver import Discretization
from .singular import FamilyId

log = logging.getLogger(__name__)

WORKERS_ENV = "FSCM_WORKERS"
VARIANTS = ("scm", "plain")
FAMILY_ORDER = (FamilyId.EDGE2, FamilyId.EDGE1, FamilyId.EDGE0, FamilyId.CONE0)

HEADER = ["h", "N", "variant", "err_H1", "err_L2w", "slope_group", "c_edge", "c_cone",
          "delta_edge2", "delta_edge1", "delta_edge0", "delta_cone0", "h_target", "status"]
SINGULAR_HEADER = ["h", "family", "err_dual_L2w", "err_primal_V11", "delta_h", "dual_norm",
                   "h_target", "status"]


class ConfigError(ValueError):
    pass


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def _is_power_of_two(x: float) -> bool:
    e = math.log2(x)
    return x >= 1.0 and abs(e - round(e)) < 1e-9


@dataclass
class StudyConfig:
    geometry: object = "L"                    # preset name or list of [r, z] vertices
    rhs: str = "const"
    h_list: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    N_list: list = field(default_factory=lambda: [4])
    variants: list = field(default_factory=lambda: ["scm"])
    c_star: float = 1.0
    margin: float = 0.05
    output_dir: str = "fscm-out"
    h_factor: int = 8
    n_ref: int | None = None                  # default 2 max(N) + 4

    def __post_init__(self):
        self.h_list = [float(h) for h in self.h_list]
        self.N_list = [int(n) for n in self.N_list]
        self.variants = list(self.variants)
        if not self.h_list:
            raise ConfigError("h_list is empty")
        if any(b >= a for a, b in zip(self.h_list, self.h_list[1:])) or self.h_list[-1] <= 0:
            raise ConfigError("h_list must be positive and strictly decreasing")
        if any(not _is_power_of_two(h / self.h_list[-1]) for h in self.h_list):
            raise ConfigError("the h values must differ by powers of two so that meshes nest")
        if not _is_power_of_two(float(self.h_factor)) or self.h_factor < 2:
            raise ConfigError("h_factor must be a power of two, at least 2")
        if not self.N_list or any(n < 0 for n in self.N_list) or len(set(self.N_list)) != len(self.N_list):
            raise ConfigError("N_list must hold distinct non-negative integers")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ConfigError(f"variants must be drawn from {VARIANTS}")
        if self.n_ref is not None and self.n_ref < max(self.N_list):
            raise ConfigError("n_ref must be at least max(N_list)")
        if not self.c_star > 0:
            raise ConfigError("c_star must be positive")
        # resolve presets early so a bad name fails before any computation
        try:
            poly = presets.geometry(self.geometry)
            presets.rhs(self.rhs, poly)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def N_ref(self) -> int:
        return self.n_ref if self.n_ref is not None else 2 * max(self.N_list) + 4

    @property
    def h_ref(self) -> float:
        return self.h_list[-1] / self.h_factor

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Row:
    h: float
    N: int
    variant: str
    err_H1: float = math.nan
    err_L2w: float = math.nan
    slope_group: str = ""
    c_edge: float = math.nan
    c_cone: float = math.nan
    delta_edge2: float = math.nan
    delta_edge1: float = math.nan
    delta_edge0: float = math.nan
    delta_cone0: float = math.nan
    h_target: float = math.nan
    status: str = "ok"


@dataclass
class RateFit:
    group: str
    variable: str          # "h" or "N"
    quantity: str
    n_points: int
    slope: float
    residual: float


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    header: list = field(default_factory=lambda: list(HEADER))
    title: str = ""

    def fit(self, group: str, variable: str = "h", quantity: str = "err_H1") -> RateFit:
        for f in self.fits:
            if f.group == group and f.variable == variable and f.quantity == quantity:
                return f
        raise KeyError((group, variable, quantity))


def fit_rate(points) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(x) and the residual norm.

    Rows with a zero or non-finite error are dropped with a warning; at least
    three usable points are required.
    """
    pts = [(float(x), float(e)) for x, e in points]
    good = [(x, e) for x, e in pts if x > 0 and e > 0 and math.isfinite(e)]
    if len(good) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(good)} degenerate rows from the rate fit", RuntimeWarning)
    if len(good) < 3:
        raise ValueError("a rate fit needs at least three points with positive errors")
    lx = np.log([x for x, _ in good])
    le = np.log([e for _, e in good])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, le, rcond=None)
    residual = float(np.linalg.norm(A @ coef - le))
    return float(coef[0]), residual


def _delta_fields(disc: Discretization) -> dict:
    out = {}
    for fid, name in zip(FAMILY_ORDER, ("delta_edge2", "delta_edge1", "delta_edge0", "delta_cone0")):
        if fid in disc.pairs:
            out[name] = float(disc.pairs[fid].pair.delta_h)
    return out


def _coef_fields(sol: FSCMSolution) -> dict:
    out = {}
    if 0 in sol.modes:
        coeffs = sol.modes[0].coeffs
        if FamilyId.EDGE0 in coeffs:
            out["c_edge"] = float(np.real(coeffs[FamilyId.EDGE0]))
        if FamilyId.CONE0 in coeffs:
            out["c_cone"] = float(np.real(coeffs[FamilyId.CONE0]))
    return out


def _solve_reference(cfg: StudyConfig, poly, source, workers: int):
    mesh = triangulate(poly, cfg.h_ref)
    disc = Discretization(poly, mesh, cfg.margin, cfg.c_star, enable_scm=True)
    sol = solve_fscm(source.fourier(cfg.N_ref), disc, workers)
    return disc, sol


def _run_group(cfg: StudyConfig, poly, source, h_target: float, variant: str, reference) -> list:
    ref_disc, ref_sol, ref_norms = reference
    n_sorted = sorted(cfg.N_list)
    rows = []
    try:
        t0 = time.perf_counter()
        disc = Discretization(poly, triangulate(poly, h_target), cfg.margin, cfg.c_star,
                              enable_scm=(variant == "scm"))
        full = solve_fscm(source.fourier(n_sorted[-1]), disc)
        # per-mode errors do not depend on N, every truncation reuses them
        diff = difference_norms(full, ref_sol.modes, ref_disc.qs, range(0, n_sorted[-1] + 1))
        log.info("h=%g %s: solved and measured N=%d in %.1fs", h_target, variant, n_sorted[-1],
                 time.perf_counter() - t0)
    except Exception as exc:  # recorded per row, the study goes on
        return [Row(math.nan, n, variant, slope_group=f"{variant}/N={n}", h_target=h_target,
                    status=f"error: {type(exc).__name__}: {exc}") for n in n_sorted]
    deltas = _delta_fields(disc)
    for n in n_sorted:
        row = Row(disc.h, n, variant, slope_group=f"{variant}/N={n}", h_target=h_target, **deltas)
        try:
            row.err_H1, row.err_L2w = aggregate_errors(diff, ref_norms, n, cfg.N_ref, symmetric=True)
            for key, val in _coef_fields(full.truncated(n)).items():
                setattr(row, key, val)
        except Exception as exc:
            row.status = f"error: {type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def _fits(rows: list, cfg: StudyConfig) -> list:
    fits = []
    ok = [r for r in rows if r.status == "ok"]
    for variant in cfg.variants:
        for n in sorted(cfg.N_list):
            pts = [(r.h, r.err_H1) for r in ok if r.variant == variant and r.N == n]
            if len(pts) >= 3:
                fits.append(_make_fit(f"{variant}/N={n}", "h", "err_H1", pts))
        for h in cfg.h_list:
            pts = [(r.N, r.err_H1) for r in ok if r.variant == variant and r.h_target == h and r.N > 0]
            if len(pts) >= 3:
                fits.append(_make_fit(f"{variant}/h={h!r}", "N", "err_H1", pts))
    return fits


def _make_fit(group, variable, quantity, pts) -> RateFit:
    try:
        slope, res = fit_rate(pts)
    except ValueError:
        slope, res = math.nan, math.nan
    return RateFit(group, variable, quantity, len(pts), slope, res)


def run_study(cfg: StudyConfig, workers: int | None = None) -> ConvergenceReport:
    """Run the (h, N, variant) matrix against an overkill reference."""
    workers = default_workers() if workers is None else max(1, int(workers))
    poly = presets.geometry(cfg.geometry)
    source = presets.rhs(cfg.rhs, poly)
    t0 = time.perf_counter()
    ref_disc, ref_sol = _solve_reference(cfg, poly, source, workers)
    ref_norms = mode_norms(ref_sol.modes, ref_disc.qs, range(min(cfg.N_list) + 1, cfg.N_ref + 1))
    log.info("reference h=%g N=%d: %.1fs", cfg.h_ref, cfg.N_ref, time.perf_counter() - t0)
    groups = [(h, v) for v in cfg.variants for h in cfg.h_list]
    reference = (ref_disc, ref_sol, ref_norms)

    def run(g):
        return _run_group(cfg, poly, source, g[0], g[1], reference)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, groups))
    else:
        results = [run(g) for g in groups]
    rows = [r for group in results for r in group]
    title = f"geometry={cfg.geometry!r} rhs={cfg.rhs} h_ref={cfg.h_ref!r} N_ref={cfg.N_ref}"
    return ConvergenceReport(rows, _fits(rows, cfg), list(HEADER), title)


def singular_study(cfg: StudyConfig, families=None) -> ConvergenceReport:
    """Errors of the discrete dual and primal singular functions against the overkill mesh."""
    poly = presets.geometry(cfg.geometry)
    ref = Discretization(poly, triangulate(poly, cfg.h_ref), cfg.margin, cfg.c_star)
    fids = [f for f in FAMILY_ORDER if f in ref.pairs and (families is None or f in families)]
    rows = []
    for h in cfg.h_list:
        try:
            disc = Discretization(poly, triangulate(poly, h), cfg.margin, cfg.c_star)
        except Exception as exc:
            rows += [SingularRow(math.nan, f.value, h_target=h, status=f"error: {type(exc).__name__}: {exc}")
                     for f in fids]
            continue
        for f in fids:
            rows.append(_singular_row(f, disc, ref, h))
    fits = []
    for f in fids:
        ok = [r for r in rows if r.variant == f.value and r.status == "ok"]
        for q in ("err_dual_L2w", "err_primal_V11"):
            pts = [(r.h, getattr(r, q)) for r in ok]
            if len(pts) >= 3:
                fits.append(_make_fit(f.value, "h", q, pts))
    title = f"singular functions on geometry={cfg.geometry!r} h_ref={cfg.h_ref!r}"
    return ConvergenceReport(rows, fits, list(SINGULAR_HEADER), title)


@dataclass
class SingularRow:
    h: float
    family: str
    err_dual_L2w: float = math.nan
    err_primal_V11: float = math.nan
    delta_h: float = math.nan
    dual_norm: float = math.nan
    h_target: float = math.nan
    status: str = "ok"

    @property
    def variant(self) -> str:
        return self.family


def _singular_row(fid: FamilyId, disc: Discretization, ref: Discretization, h: float) -> SingularRow:
    row = SingularRow(disc.h, fid.value, h_target=h)
    try:
        p, pr = disc.pairs[fid].pair, ref.pairs[fid].pair
        k = fid.k
        row.err_dual_L2w = (pr.dual - p.dual).norms(ref.qs, k).norm_0_1
        row.err_primal_V11 = (pr.primal - p.primal).norms(ref.qs, k).triple_1_1
        row.delta_h = float(p.delta_h)
        row.dual_norm = float(p.dual_norm)
    except Exception as exc:
        row.status = f"error: {type(exc).__name__}: {exc}"
    return row


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def csv_text(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.header)
    for row in report.rows:
        writer.writerow([_fmt(getattr(row, col)) for col in report.header])
    return buf.getvalue()


def summary_text(report: ConvergenceReport) -> str:
    lines = [report.title, f"{len(report.rows)} rows, "
             f"{sum(1 for r in report.rows if r.status != 'ok')} failed", ""]
    lines.append("fitted log-log slopes")
    for f in report.fits:
        lines.append(f"  {f.quantity} vs {f.variable} [{f.group}]: slope {f.slope:.4f} "
                     f"(residual {f.residual:.2e}, {f.n_points} points)")
    failed = [r for r in report.rows if r.status != "ok"]
    if failed:
        lines += ["", "failures"]
        lines += [f"  h={_fmt(r.h_target)} {r.variant}: {r.status}" for r in failed]
    return "\n".join(lines) + "\n"


def emit(report: ConvergenceReport, directory, stem: str = "results") -> tuple[Path, Path]:
    """Write <stem>.csv and <stem>-summary.txt (UTF-8, LF line endings)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    csv_path = d / f"{stem}.csv"
    summary_path = d / f"{stem}-summary.txt"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(report))
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_text(report))
    return csv_path, summary_path


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
