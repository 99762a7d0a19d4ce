"""Convergence studies and solver-mode benchmarks."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import ConfigError
from .floquet import quadrature_from_config, solve_aperiodic
from .geometry import curve_from_config
from .solver import periodized_source, precompute, solve_quasi, total_field

logger = logging.getLogger(__name__)

SWEEPS = ("panels", "refinements", "nkappa")
STUDY_COLUMNS = ("value", "N", "precompute_s", "solve_s", "rel_error")
BENCHMARK_COLUMNS = (
    "mode",
    "N",
    "precompute_s",
    "solve_s",
    "dense_over_mode",
    "n_compress",
    "rank_left",
    "rank_right",
    "break_even_solves",
)


def relative_error(values: np.ndarray, reference: np.ndarray) -> float:
    """Max-norm error relative to the largest reference magnitude."""
    scale = float(np.max(np.abs(reference)))
    error = float(np.max(np.abs(np.asarray(values) - reference)))
    return error / scale if scale > 0 else error


def _timed_quasi_solves(pre, kappa: complex, x0, targets, repetitions: int):
    """Median solve-stage time over repetitions, and the last target values."""
    source = periodized_source(pre, kappa, x0)
    times = []
    for _ in range(repetitions):
        sol = solve_quasi(pre, kappa, source)
        times.append(sol.seconds)
    return float(np.median(times)), total_field(sol, targets)


def run_study(config: RunConfig, sweep: str, values: Sequence[int]) -> list[dict]:
    """Self-convergence table over one discretization parameter.

    ``panels`` and ``refinements`` sweep N_pan and N_ref for the quasiperiodic
    solve at floquet.kappa; ``nkappa`` sweeps the contour node count of the
    aperiodic solve on one precompute. The largest value is the reference.

    Raises:
        ConfigError: For an unknown sweep or fewer than two distinct values.
    """
    if sweep not in SWEEPS:
        raise ConfigError("study.sweep", f"must be one of {SWEEPS}")
    values = sorted({int(v) for v in values})
    if len(values) < 2:
        raise ConfigError("study.values", "need at least two sweep values")

    p = config.problem
    targets = np.array(p.targets, dtype=float)
    curve = curve_from_config(config.geometry)
    rows, fields = [], []

    if sweep == "nkappa":
        pre = precompute(curve, config)
        for n in values:
            quad = quadrature_from_config(config.with_overrides(n_kappa=n))
            result = solve_aperiodic(pre, p.x0, targets, quad, config.floquet.workers)
            fields.append(result.scattered)
            rows.append(
                {
                    "value": n,
                    "N": pre.pan.n,
                    "precompute_s": pre.seconds,
                    "solve_s": result.solve_seconds,
                }
            )
            logger.info(f"Study nkappa={n}: {result.solve_seconds:.3f}s of solves")
    else:
        kappa = config.floquet.resolved_kappa
        for v in values:
            if sweep == "panels":
                cfg = config.with_overrides(N_pan=v)
            else:
                cfg = config.with_overrides(N_ref=v)
            pre = precompute(curve, cfg)
            solve_s, u = _timed_quasi_solves(pre, kappa, p.x0, targets, p.repetitions)
            fields.append(u)
            rows.append(
                {"value": v, "N": pre.pan.n, "precompute_s": pre.seconds, "solve_s": solve_s}
            )
            logger.info(f"Study {sweep}={v}: N={pre.pan.n}, solve {solve_s:.4f}s")

    reference = fields[-1]
    for row, u in zip(rows[:-1], fields[:-1]):
        row["rel_error"] = relative_error(u, reference)
        logger.info(f"  {sweep}={row['value']}: relative error {row['rel_error']:.2e}")
    rows[-1]["rel_error"] = None
    return rows


@dataclass(frozen=True)
class ModeTiming:
    """Precompute and median solve time of one solver mode."""

    mode: str
    N: int
    precompute_s: float
    solve_s: float
    n_compress: Optional[int]
    ranks: Optional[tuple[int, int]]


def break_even_solves(fast: ModeTiming, dense: ModeTiming) -> Optional[int]:
    """Fewest solves after which the fast mode's total time beats dense."""
    if fast.solve_s >= dense.solve_s:
        return None
    extra = fast.precompute_s - dense.precompute_s
    return max(1, math.ceil(extra / (dense.solve_s - fast.solve_s)))


def run_benchmark(config: RunConfig, modes: Sequence[str]) -> list[dict]:
    """Per-mode precompute and median per-solve wall times at floquet.kappa.

    Precompute is timed once; solves are repeated ``problem.repetitions``
    times. Comparison columns need ``dense`` among the modes.
    """
    p = config.problem
    targets = np.array(p.targets, dtype=float)
    curve = curve_from_config(config.geometry)
    kappa = config.floquet.resolved_kappa

    timings = []
    for mode in modes:
        pre = precompute(curve, config.with_overrides(mode=mode))
        solve_s, _ = _timed_quasi_solves(pre, kappa, p.x0, targets, p.repetitions)
        ranks = None if pre.neighbors is None else pre.neighbors.ranks
        timings.append(
            ModeTiming(pre.mode, pre.pan.n, pre.seconds, solve_s, pre.n_compress, ranks)
        )
        logger.info(
            f"Benchmark {pre.mode}: precompute {pre.seconds:.3f}s, solve {solve_s:.4f}s"
        )

    dense = next((t for t in timings if t.mode == "dense"), None)
    rows = []
    for t in timings:
        compare = dense is not None and t is not dense
        rows.append(
            {
                "mode": t.mode,
                "N": t.N,
                "precompute_s": t.precompute_s,
                "solve_s": t.solve_s,
                "dense_over_mode": dense.solve_s / t.solve_s if compare else None,
                "n_compress": t.n_compress,
                "rank_left": None if t.ranks is None else t.ranks[0],
                "rank_right": None if t.ranks is None else t.ranks[1],
                "break_even_solves": break_even_solves(t, dense) if compare else None,
            }
        )
    return rows
