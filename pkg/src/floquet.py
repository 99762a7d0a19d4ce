"""Floquet-Bloch contour quadrature and the aperiodic point-source driver."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import ConfigError, NumericalError
from .geometry import points_above_boundary
from .solver import (
    Precompute,
    check_near_boundary,
    near_boundary,
    periodized_source,
    solve_quasi,
    to_unit_strip,
    total_field,
)
from .specfun import greens

logger = logging.getLogger(__name__)

GRADING_TARGETS = ("zero", "pi_over_d")

# cosh overflows double precision just above this.
MAX_GRADING = 700.0


@dataclass(frozen=True)
class ContourQuadrature:
    """Nodes and weights on the deformed Brillouin-zone contour.

    Weights include d(kappa)/ds, so sum_j w_j f(kappa_j) approximates the
    contour integral of f over one zone and the weights sum to 2 pi / d.
    """

    s: np.ndarray
    kappa: np.ndarray
    weights: np.ndarray
    d: float
    grading: str = "none"
    b: float = 0.0
    amplitude: float = 1.0

    @property
    def n(self) -> int:
        return len(self.kappa)


def contour(s, d: float = 1.0, amplitude: float = 1.0):
    """kappa(s) = s - i a sin(s d)."""
    s = np.asarray(s, dtype=float)
    kappa = s - 1j * amplitude * np.sin(s * d)
    return kappa[()] if kappa.ndim == 0 else kappa


def _zone_grid(N_kappa: int, d: float) -> tuple[np.ndarray, float]:
    h = 2 * np.pi / (d * N_kappa)
    return -np.pi / d + h * np.arange(N_kappa), h


def trapezoid_nodes(N_kappa: int, d: float = 1.0, amplitude: float = 1.0) -> ContourQuadrature:
    """Periodic trapezoid rule on the contour (no duplicated endpoint)."""
    if N_kappa < 2:
        raise ConfigError("floquet.N_kappa", "need at least 2 nodes")
    s, h = _zone_grid(N_kappa, d)
    weights = h * (1 - 1j * amplitude * d * np.cos(s * d))
    return ContourQuadrature(
        s=s, kappa=contour(s, d, amplitude), weights=weights, d=d, amplitude=amplitude
    )


def graded_nodes(
    N_kappa: int, b: float, target: str, d: float = 1.0, amplitude: float = 1.0
) -> ContourQuadrature:
    """Contour rule with nodes clustered exponentially at kappa = 0 or pi/d.

    The reparameterization theta(s) has derivative c cosh(b sin(sd/2))
    (clustering at zero) or c cosh(b cos(sd/2)) (clustering at the zone
    edge), normalized so that theta maps the zone onto itself. theta is the
    FFT antiderivative of the trigonometric interpolant of theta'.

    Raises:
        ConfigError: For an unknown target, odd N_kappa or b outside [0, 700].
    """
    if target not in GRADING_TARGETS:
        raise ConfigError("floquet.grading", f"unknown grading target {target!r}")
    if N_kappa < 2 or N_kappa % 2:
        raise ConfigError("floquet.N_kappa", "graded quadrature needs an even node count")
    if not 0 <= b <= MAX_GRADING:
        raise ConfigError("floquet.b", f"grading strength must lie in [0, {MAX_GRADING:g}]")

    s, h = _zone_grid(N_kappa, d)
    phase = np.sin(0.5 * s * d) if target == "zero" else np.cos(0.5 * s * d)
    raw = np.cosh(b * phase)
    dtheta = raw * (N_kappa / raw.sum())

    coeffs = np.fft.fft(dtheta - 1.0) / N_kappa
    k = np.fft.fftfreq(N_kappa, 1.0 / N_kappa)
    anti = np.zeros(N_kappa, dtype=complex)
    nonzero = k != 0
    anti[nonzero] = coeffs[nonzero] / (1j * k[nonzero] * d)
    anti[N_kappa // 2] = 0.0
    theta = s + np.real(N_kappa * np.fft.ifft(anti) - anti.sum())

    kappa = theta - 1j * amplitude * np.sin(theta * d)
    weights = h * (1 - 1j * amplitude * d * np.cos(theta * d)) * dtheta
    spacing = np.diff(theta)
    logger.debug(
        f"Graded contour ({target}, b={b:g}): spacing ratio "
        f"{spacing.max() / spacing.min():.3g}"
    )
    return ContourQuadrature(
        s=s, kappa=kappa, weights=weights, d=d, grading=target, b=b, amplitude=amplitude
    )


def quadrature_from_config(config: RunConfig) -> ContourQuadrature:
    """Contour rule from the floquet section and the geometry period."""
    f, d = config.floquet, config.geometry.d
    if f.grading == "none":
        return trapezoid_nodes(f.N_kappa, d, f.contour_amplitude)
    return graded_nodes(f.N_kappa, f.b, f.grading, d, f.contour_amplitude)


@dataclass(frozen=True)
class KappaDiagnostic:
    """Bookkeeping for one contour node."""

    index: int
    kappa: complex
    weight: complex
    seconds: float
    schur_rank: int
    schur_residual: float
    source_residual: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kappa": [self.kappa.real, self.kappa.imag],
            "weight": [self.weight.real, self.weight.imag],
            "seconds": self.seconds,
            "schur_rank": self.schur_rank,
            "schur_residual": self.schur_residual,
            "source_residual": self.source_residual,
        }


@dataclass(frozen=True)
class AperiodicResult:
    """Aperiodic scattered and total fields at the targets."""

    targets: np.ndarray
    scattered: np.ndarray
    total: np.ndarray
    diagnostics: tuple[KappaDiagnostic, ...]
    precompute_seconds: float
    solve_seconds: float
    wall_seconds: float


def _solve_node(pre: Precompute, x0: np.ndarray, targets: np.ndarray, kappa: complex):
    start = time.perf_counter()
    source = periodized_source(pre, kappa, x0)
    sol = solve_quasi(pre, kappa, source)
    values = total_field(sol, targets, check=False)
    return values, sol, source, time.perf_counter() - start


def solve_aperiodic(
    pre: Precompute,
    x0,
    targets,
    quad: ContourQuadrature,
    workers: int = 1,
) -> AperiodicResult:
    """Scattered field of a single point source by the Floquet-Bloch integral.

    Every contour node gives a quasiperiodic solve with the periodized source.
    The quasiperiodic total fields at the targets are summed as
    u_tot = d/(2 pi) sum_j w_j u_tot_j in node order, independent of the
    worker count, and the free-space source G(x, x0) is subtracted to give
    the scattered field.

    Args:
        pre: Precomputed solver state.
        x0: Source location inside the unit cell.
        targets: (m, 2) evaluation points above the boundary.
        quad: Contour quadrature.
        workers: Number of concurrent quasiperiodic solves.

    Raises:
        ConfigError: If the source is not inside the unit cell.
        NumericalError: If any node's solve fails; carries the node's kappa and index.
    """
    start = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    d = pre.pan.period
    if pre.omega >= np.pi / d:
        logger.warning(
            f"omega={pre.omega:g} >= pi/d: higher Rayleigh-Bloch orders become "
            "propagating on the contour and branch points may be crossed"
        )
    check_near_boundary(pre, to_unit_strip(pre.cell, targets)[0])
    logger.info(
        f"Aperiodic solve: {quad.n} contour nodes (grading {quad.grading}), "
        f"{len(targets)} targets, {workers} worker(s)"
    )

    def run(j: int):
        try:
            values, sol, source, seconds = _solve_node(pre, x0, targets, quad.kappa[j])
        except NumericalError as exc:
            raise NumericalError(
                f"Quasiperiodic solve {j} at kappa={quad.kappa[j]:.6g} failed: {exc}",
                condition=exc.condition,
                singular_values=exc.singular_values,
                residual=exc.residual,
                kappa=complex(quad.kappa[j]),
                index=j,
            ) from exc
        logger.debug(f"kappa node {j + 1}/{quad.n} done in {seconds:.3f}s")
        diagnostic = KappaDiagnostic(
            index=j,
            kappa=complex(quad.kappa[j]),
            weight=complex(quad.weights[j]),
            seconds=seconds,
            schur_rank=sol.schur_rank,
            schur_residual=sol.schur_residual,
            source_residual=source.residual,
        )
        return values, diagnostic

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(quad.n)))
    else:
        results = [run(j) for j in range(quad.n)]

    total = np.zeros(len(targets), dtype=complex)
    for j, (values, _) in enumerate(results):
        total += quad.weights[j] * values
    total *= d / (2 * np.pi)
    scattered = total - greens(pre.omega, targets, x0)

    diagnostics = tuple(diag for _, diag in results)
    solve_seconds = float(sum(diag.seconds for diag in diagnostics))
    wall = time.perf_counter() - start
    logger.info(f"Aperiodic solve finished: {solve_seconds:.3f}s of solves, {wall:.3f}s wall")
    return AperiodicResult(
        targets=targets,
        scattered=scattered,
        total=total,
        diagnostics=diagnostics,
        precompute_seconds=pre.seconds,
        solve_seconds=solve_seconds,
        wall_seconds=wall,
    )


def image_source_field(omega: float, x0, targets, y_wall: float = 0.0) -> np.ndarray:
    """Exact scattered field of a point source over the flat sound-hard line y = y_wall."""
    x0 = np.asarray(x0, dtype=float)
    image = np.array([x0[0], 2 * y_wall - x0[1]])
    return greens(omega, np.asarray(targets, dtype=float).reshape(-1, 2), image)


def grid_points(grid) -> tuple[np.ndarray, tuple[int, int]]:
    """Flattened points of a GridSpec (row-major in y) and the grid shape."""
    xs = np.linspace(*grid.x[:2], grid.x[2])
    ys = np.linspace(*grid.y[:2], grid.y[2])
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()]), X.shape


def masked_targets(pre: Precompute, points, factor: Optional[float] = None) -> np.ndarray:
    """Mask of grid points that can be evaluated: above the boundary and not too near it."""
    local, _ = to_unit_strip(pre.cell, points)
    return points_above_boundary(pre.curve, local) & ~near_boundary(pre, local, factor)
