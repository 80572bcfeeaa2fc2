"""Command line entry point: ``fscm run|presets|mesh|singular``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import presets
from .geometry import classify_corners
from .harness import (WORKERS_ENV, ConfigError, StudyConfig, emit, run_study, singular_study,
                      summary_text)
from .mesh import triangulate


def _load(path) -> StudyConfig:
    return StudyConfig.load(path)


def cmd_run(args) -> int:
    cfg = _load(args.config)
    report = run_study(cfg, args.workers)
    out = Path(args.output or cfg.output_dir)
    csv_path, _ = emit(report, out, "results")
    sys.stdout.write(summary_text(report))
    sys.stdout.write(f"wrote {csv_path}\n")
    return 0 if all(r.status == "ok" for r in report.rows) else 1


def cmd_singular(args) -> int:
    cfg = _load(args.config)
    report = singular_study(cfg)
    out = Path(args.output or cfg.output_dir)
    csv_path, _ = emit(report, out, "singular")
    sys.stdout.write(summary_text(report))
    sys.stdout.write(f"wrote {csv_path}\n")
    return 0 if all(r.status == "ok" for r in report.rows) else 1


def cmd_mesh(args) -> int:
    cfg = _load(args.config)
    poly = presets.geometry(cfg.geometry)
    out = Path(args.output or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c in classify_corners(poly):
        sys.stdout.write(f"corner {c.index} at {c.location}: {c.kind.value}"
                         f"{'' if c.alpha is None else f', alpha={c.alpha:.6f}'}"
                         f"{'' if c.nu is None else f', nu={c.nu:.6f}, sharp={c.sharp}'}\n")
    for i, h in enumerate(cfg.h_list):
        mesh = triangulate(poly, h)
        path = out / f"mesh-{i}.txt"
        mesh.write_text(path)
        sys.stdout.write(f"h_target={h:g} h={mesh.h:.6f} nodes={mesh.n_nodes} "
                         f"triangles={mesh.n_triangles} min_angle={mesh.shape_reg:.2f} -> {path}\n")
    return 0


def cmd_presets(args) -> int:
    sys.stdout.write("geometries:\n")
    for name, (verts, desc) in presets.GEOMETRIES.items():
        sys.stdout.write(f"  {name:8s} {desc}\n")
        sys.stdout.write(f"           vertices {[tuple(round(c, 6) for c in v) for v in verts]}\n")
    sys.stdout.write("right-hand sides:\n")
    for name, desc in presets.RHS_PRESETS.items():
        sys.stdout.write(f"  {name:8s} {desc}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fscm", description="Fourier singular complement solver for "
                                "axisymmetric Poisson problems")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence study from a JSON config")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="output directory (overrides the config)")
    run.add_argument("-j", "--workers", type=int, default=None,
                     help=f"parallel rows (default: ${WORKERS_ENV} or 1)")
    run.set_defaults(func=cmd_run)

    sing = sub.add_parser("singular", help="study the discrete singular functions only")
    sing.add_argument("config")
    sing.add_argument("-o", "--output")
    sing.set_defaults(func=cmd_singular)

    mesh = sub.add_parser("mesh", help="write the meshes of a config as text files")
    mesh.add_argument("config")
    mesh.add_argument("-o", "--output")
    mesh.set_defaults(func=cmd_mesh)

    pre = sub.add_parser("presets", help="list geometry and right-hand side presets")
    pre.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"fscm: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
