#!/usr/bin/env python3
"""Grating Scatter - Main Entry Point.

Solves for the field of a point source over an infinite periodic sound-hard
boundary, either for one Bloch wavenumber or for the aperiodic problem via
the Floquet-Bloch contour integral.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .config import MODE_ALIASES, RunConfig, load_config
from .errors import ConfigError, NumericalError
from .floquet import (
    grid_points,
    image_source_field,
    masked_targets,
    quadrature_from_config,
    solve_aperiodic,
)
from .geometry import curve_from_config
from .output import write_field_csv, write_report_json, write_table_csv
from .solver import (
    boundary_residual,
    eval_field,
    periodized_source,
    precompute,
    quasi_residuals,
    solve_quasi,
    total_field,
)
from .study import BENCHMARK_COLUMNS, STUDY_COLUMNS, SWEEPS, run_benchmark, run_study

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

CLI_MODES = ("dense", "id-full", "id-half", "corner")


def _evaluation_points(pre, config: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """Targets followed by grid points; mask of the ones that can be evaluated."""
    targets = np.array(config.problem.targets, dtype=float)
    if config.problem.grid is None:
        return targets, np.ones(len(targets), dtype=bool)
    grid, _ = grid_points(config.problem.grid)
    mask = masked_targets(pre, grid)
    logger.info(f"Grid: {int(mask.sum())}/{len(grid)} points above and away from the boundary")
    points = np.vstack([targets, grid])
    return points, np.concatenate([np.ones(len(targets), dtype=bool), mask])


def _complex_pairs(values) -> list:
    return [[float(v.real), float(v.imag)] for v in np.ravel(values)]


def run_solve_quasi(config: RunConfig, kappa: Optional[complex] = None) -> dict:
    """Quasiperiodic solve at one Bloch wavenumber with residual checks.

    Args:
        config: Run configuration.
        kappa: Bloch wavenumber; defaults to floquet.kappa.

    Returns:
        Report payload (also written to the output directory).
    """
    kappa = config.floquet.resolved_kappa if kappa is None else complex(kappa)
    curve = curve_from_config(config.geometry)
    pre = precompute(curve, config)
    source = periodized_source(pre, kappa, config.problem.x0)
    sol = solve_quasi(pre, kappa, source)

    residual = boundary_residual(sol, config.problem.n_probes)
    quasi = quasi_residuals(sol)
    logger.info(
        f"kappa={kappa:.6g}: boundary residual {residual:.2e}, "
        f"quasiperiodicity {quasi.quasiperiodicity:.2e}, top matching {quasi.top_matching:.2e}"
    )
    logger.info(f"Timing: precompute {pre.seconds:.3f}s, solve {sol.seconds:.4f}s")

    points, valid = _evaluation_points(pre, config)
    response = np.full(len(points), np.nan + 1j * np.nan)
    values = np.full(len(points), np.nan + 1j * np.nan)
    response[valid] = eval_field(sol, points[valid])
    values[valid] = total_field(sol, points[valid], check=False)

    out_dir = config.output.out_dir
    if config.output.write_field:
        write_field_csv(out_dir / "field.csv", points, values)
    n_targets = len(config.problem.targets)
    payload = {
        "command": "solve-quasi",
        "config": config.to_dict(),
        "kappa": kappa,
        "alpha": sol.alpha,
        "N": pre.pan.n,
        "timings": {"precompute_s": pre.seconds, "solve_s": sol.seconds},
        "boundary_residual": residual,
        "quasiperiodicity_residual": quasi.quasiperiodicity,
        "top_matching_residual": quasi.top_matching,
        "schur_rank": sol.schur_rank,
        "schur_residual": sol.schur_residual,
        "source_residual": source.residual,
        "n_compress": pre.n_compress,
        "neighbor_ranks": None if pre.neighbors is None else list(pre.neighbors.ranks),
        "targets": {
            "points": points[:n_targets],
            "total": _complex_pairs(values[:n_targets]),
            "response": _complex_pairs(response[:n_targets]),
        },
        "sigma": _complex_pairs(sol.sigma),
        "c": _complex_pairs(sol.c),
        "a": _complex_pairs(sol.a),
    }
    if config.output.write_report:
        write_report_json(out_dir / "report.json", payload)
    return payload


def run_solve_aperiodic(config: RunConfig) -> dict:
    """Full Floquet-Bloch pipeline for the configured point source."""
    curve = curve_from_config(config.geometry)
    pre = precompute(curve, config)
    quad = quadrature_from_config(config)
    points, valid = _evaluation_points(pre, config)
    result = solve_aperiodic(
        pre, config.problem.x0, points[valid], quad, workers=config.floquet.workers
    )
    scattered = np.full(len(points), np.nan + 1j * np.nan)
    total = np.full(len(points), np.nan + 1j * np.nan)
    scattered[valid], total[valid] = result.scattered, result.total

    out_dir = config.output.out_dir
    if config.output.write_field:
        write_field_csv(out_dir / "field.csv", points, scattered)
    n_targets = len(config.problem.targets)
    payload = {
        "command": "solve-aperiodic",
        "config": config.to_dict(),
        "N": pre.pan.n,
        "timings": {
            "precompute_s": result.precompute_seconds,
            "solve_s": result.solve_seconds,
            "wall_s": result.wall_seconds,
        },
        "targets": {
            "points": points[:n_targets],
            "scattered": _complex_pairs(scattered[:n_targets]),
            "total": _complex_pairs(total[:n_targets]),
        },
        "kappa_nodes": [diag.to_dict() for diag in result.diagnostics],
    }
    if config.geometry.kind == "flat":
        exact = image_source_field(
            pre.omega, config.problem.x0, points[:n_targets], pre.cell.y_bottom
        )
        error = float(
            np.max(np.abs(scattered[:n_targets] - exact)) / np.max(np.abs(exact))
        )
        payload["image_oracle"] = {"exact": _complex_pairs(exact), "rel_error": error}
        logger.info(f"Image-source oracle: relative error {error:.2e}")
    if config.output.write_report:
        write_report_json(out_dir / "report.json", payload)
    return payload


def run_study_command(config: RunConfig, sweep: str, values: list[int]) -> list[dict]:
    rows = run_study(config, sweep, values)
    out_dir = config.output.out_dir
    if config.output.write_table:
        write_table_csv(out_dir / "table.csv", rows, STUDY_COLUMNS)
    if config.output.write_report:
        write_report_json(
            out_dir / "report.json",
            {"command": "study", "sweep": sweep, "config": config.to_dict(), "rows": rows},
        )
    return rows


def run_benchmark_command(config: RunConfig, modes: list[str]) -> list[dict]:
    if len(modes) < 2:
        logger.warning("Benchmarking a single mode; comparison columns stay empty")
    rows = run_benchmark(config, [MODE_ALIASES[m] for m in modes])
    out_dir = config.output.out_dir
    if config.output.write_table:
        write_table_csv(out_dir / "table.csv", rows, BENCHMARK_COLUMNS)
    if config.output.write_report:
        write_report_json(
            out_dir / "report.json",
            {"command": "benchmark", "config": config.to_dict(), "rows": rows},
        )
    return rows


def _kappa_arg(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        "-c",
        type=Path,
        help="Path to config file (default: config.yaml)",
    )
    common.add_argument("--mode", choices=CLI_MODES, help="Solver mode")
    common.add_argument("--grading", choices=("none", "zero", "pi"), help="Contour grading")
    common.add_argument("--b", type=float, help="Grading strength")
    common.add_argument("--nkappa", type=int, help="Number of contour nodes")
    common.add_argument("--workers", type=int, help="Concurrent quasiperiodic solves")
    common.add_argument("--out", type=Path, help="Output directory (default: results)")
    common.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable verbose logging",
    )

    parser = argparse.ArgumentParser(
        description="Point-source scattering from periodic sound-hard boundaries",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Quasiperiodic solve at the configured kappa
  python -m src.main solve-quasi --config config.yaml

  # Same solve with the half-circle ID accelerated solver
  python -m src.main solve-quasi --mode id-half --kappa 0.97+0.1j

  # Aperiodic field with a graded contour, 4 parallel solves
  python -m src.main solve-aperiodic --grading zero --b 5 --nkappa 60 --workers 4

  # Panel convergence table
  python -m src.main study --sweep panels --values 4 8 20 40

  # Compare solver modes
  python -m src.main benchmark --modes dense id-half corner
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    quasi = commands.add_parser("solve-quasi", parents=[common], help="One quasiperiodic solve")
    quasi.add_argument("--kappa", type=_kappa_arg, help="Bloch wavenumber (complex)")

    commands.add_parser("solve-aperiodic", parents=[common], help="Floquet-Bloch integral")

    study = commands.add_parser("study", parents=[common], help="Self-convergence table")
    study.add_argument("--sweep", choices=SWEEPS, required=True, help="Parameter to sweep")
    study.add_argument("--values", type=int, nargs="+", required=True, help="Sweep values")

    bench = commands.add_parser("benchmark", parents=[common], help="Solver mode timings")
    bench.add_argument(
        "--modes",
        choices=CLI_MODES,
        nargs="+",
        default=list(CLI_MODES),
        help="Modes to time (default: all)",
    )
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point.

    Returns:
        Exit code (0 success, 2 configuration error, 3 numerical failure).
    """
    args = build_parser().parse_args(argv)

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        config = load_config(args.config).with_overrides(
            mode=args.mode,
            grading=args.grading,
            b=args.b,
            n_kappa=args.nkappa,
            workers=args.workers,
            out_dir=args.out,
        )
        if args.command == "solve-quasi":
            run_solve_quasi(config, args.kappa)
        elif args.command == "solve-aperiodic":
            run_solve_aperiodic(config)
        elif args.command == "study":
            run_study_command(config, args.sweep, args.values)
        else:
            run_benchmark_command(config, args.modes)
        return 0
    except (FileNotFoundError, ConfigError) as e:
        logger.error(str(e))
        return 2
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        if e.singular_values is not None:
            logger.error(f"Trailing singular values: {e.singular_values}")
        return 3
    except Exception as e:
        logger.exception(f"Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
