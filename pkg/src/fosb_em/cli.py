"""Command line entry point ``fosb-em``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 acceptance-check failure (only with ``--check``).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from ._accel import backend
from .config import EXPERIMENTS, ConfigError, parse_config, serialize, with_overrides
from .geometry import MeshError
from .operators import AssemblyError
from .solve import SolverError

log = logging.getLogger("fosb_em")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


def _header(cfg) -> list:
    return [f"# fosb-em {__version__} config {cfg.hash()} experiment {cfg.experiment} backend {backend()}"]


def write_table(path: Path, cfg, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in _header(cfg):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])


def write_artifacts(out: Path, cfg, result: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, (cols, rows) in result.get("tables", {}).items():
        write_table(out / f"{name}.csv", cfg, cols, rows)
    with open(out / "summary.txt", "w") as fh:
        for line in _header(cfg):
            fh.write(line + "\n")
        for line in result.get("summary", []):
            fh.write(line + "\n")
    with open(out / "checks.csv", "w", newline="") as fh:
        for line in _header(cfg):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "passed", "value", "threshold"])
        for name, (ok, value, thr) in result.get("checks", {}).items():
            w.writerow([name, int(ok), f"{value:.6g}", thr])
    (out / "config.txt").write_text("".join(_header(cfg)) + "\n" + serialize(cfg))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fosb-em", description="First-order sparse boundary element experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="flat key = value configuration file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--check", action="store_true", help="exit with status 4 if an acceptance check fails")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    from .experiments import EXPERIMENT_DRIVERS

    try:
        cfg = parse_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"experiment: config says {cfg.experiment!r}, command line says {args.experiment!r}")
        cfg = with_overrides(cfg, out=args.out, seed=args.seed)
        if args.workers < 1:
            raise ConfigError("workers: must be at least 1")
    except ConfigError as e:
        print(f"fosb-em: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    stage = cfg.experiment
    t0 = time.perf_counter()
    try:
        result = EXPERIMENT_DRIVERS[cfg.experiment](cfg, workers=args.workers)
    except (SolverError, AssemblyError, MeshError, RuntimeError, FloatingPointError) as e:
        print(f"fosb-em: solver failure in stage {stage}: {e}", file=sys.stderr)
        return EXIT_SOLVER
    result.setdefault("summary", []).append(f"wall time {time.perf_counter() - t0:.1f}s")
    out = Path(cfg.out)
    write_artifacts(out, cfg, result)
    failed = False
    for name, (ok, value, thr) in result.get("checks", {}).items():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.4g} (required {thr})")
        failed |= not ok
    for line in result.get("summary", []):
        print(line)
    if args.check and failed:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
