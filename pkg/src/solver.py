"""Bloch-phase recycling direct solver for the periodized system.

``precompute`` builds everything that does not depend on the Bloch phase
once; ``solve_quasi`` then scales the stored blocks by alpha and solves the
block system through a Schur complement on the small proxy/Rayleigh-Bloch
unknowns.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla

from .assembly import (
    COPIES,
    PointSourceRep,
    SystemBlocks,
    adjoint_double_layer_rows,
    assemble_system,
    build_point_source,
    neumann_rhs,
    proxy_traces,
    rayleigh_bloch_orders,
    rayleigh_bloch_sum,
)
from .config import RunConfig
from .errors import NumericalError
from .geometry import BoundaryCurve, build_panelization, build_unit_cell
from .lowrank import (
    CornerCompression,
    NeighborFactors,
    build_corner_compression,
    compress_neighbor,
    corner_split,
    pinv_solve,
    woodbury_apply,
)
from .quadrature import interpolation_matrix
from .specfun import Wavenumbers, greens, greens_gradient

logger = logging.getLogger(__name__)

Solve = Callable[[np.ndarray], np.ndarray]

MODES = ("dense", "id_full_circle", "id_half_circle", "corner_compression")

# Panels closer than this many of their own lengths to a residual point get graded rules.
RESIDUAL_NEAR_FACTOR = 3.0


def _lu(matrix: np.ndarray, what: str) -> tuple:
    """LU factorization that reports exact singularity as a NumericalError."""
    lu, piv = sla.lu_factor(matrix)
    if np.any(np.diag(lu) == 0) or not np.all(np.isfinite(lu)):
        condition = float(np.linalg.cond(matrix))
        raise NumericalError(
            f"{what} is singular (condition {condition:.2e})", condition=condition
        )
    return lu, piv


@dataclass(frozen=True)
class Precompute:
    """Bloch-phase independent solver state.

    Exactly one of ``A0_lu`` and ``corner`` is set in the ID and corner modes;
    dense mode keeps neither and factors A(alpha) per solve.
    """

    blocks: SystemBlocks
    mode: str
    config: RunConfig
    curve: BoundaryCurve
    A0_lu: Optional[tuple] = None
    corner: Optional[CornerCompression] = None
    neighbors: Optional[NeighborFactors] = None
    seconds: float = 0.0

    @property
    def pan(self):
        return self.blocks.pan

    @property
    def cell(self):
        return self.blocks.cell

    @property
    def omega(self) -> float:
        return self.blocks.omega

    @property
    def n_compress(self) -> Optional[int]:
        return None if self.corner is None else self.corner.n_compress

    def A0_solve(self, f: np.ndarray) -> np.ndarray:
        """Apply A0^-1 (dense LU or corner-compressed)."""
        if self.corner is not None:
            return self.corner.solve(f)
        if self.A0_lu is None:
            raise NumericalError(f"mode {self.mode!r} keeps no A0 factorization")
        return sla.lu_solve(self.A0_lu, f)

    def A_solver(self, alpha: complex) -> Solve:
        """Solver for A(alpha) = A0 + alpha A_1 + alpha^-1 A_-1."""
        if self.mode == "dense":
            lu = _lu(self.blocks.A(alpha), f"A(alpha={alpha:.6g})")
            return lambda f: sla.lu_solve(lu, f)
        neighbors = self.neighbors
        L, R = neighbors.L, neighbors.scaled_R(alpha)
        return lambda f: woodbury_apply(self.A0_solve, L, R, f, A0inv_L=neighbors.A0inv_L)


def precompute(curve: BoundaryCurve, config: RunConfig) -> Precompute:
    """Discretize, assemble and factor everything independent of alpha.

    Args:
        curve: Boundary curve of one period.
        config: Run configuration (geometry, cell and solver sections are used).

    Returns:
        Reusable solver state shared by every quasiperiodic solve.

    Raises:
        ConfigError: On invalid discretization or proxy geometry.
        NumericalError: If A0 (or its corner-compressed form) is singular.
    """
    g, s = config.geometry, config.solver
    mode = s.mode
    if mode not in MODES:
        raise ValueError(f"unknown solver mode {mode!r}")
    start = time.perf_counter()
    logger.info(f"Precompute ({mode}): {g.kind} geometry, N_pan={g.N_pan}, N_ref={g.N_ref}")

    pan = build_panelization(curve, g.N_pan, g.N_ref, g.nodes_per_panel)
    cell = build_unit_cell(curve, config.cell, config.R_proxy)
    blocks = assemble_system(
        pan, cell, config.floquet.omega, config.cell.K, s.self_levels, s.adjacent_levels
    )

    A0_lu = corner = neighbors = None
    if mode != "dense":
        if mode == "corner_compression":
            corner = build_corner_compression(
                blocks.A0,
                pan,
                blocks.omega,
                s.eps,
                split=corner_split(pan),
                proxy_scale=s.corner_proxy_scale,
                n_proxy=s.n_proxy,
                block_diagonal=s.corner_acc_block_diagonal,
            )
        else:
            A0_lu = _lu(blocks.A0, "A0")
        proxy_kind = {"id_full_circle": "full_circle", "id_half_circle": "half_circle"}.get(
            mode, s.neighbor_proxy
        )
        sides = {
            direction: compress_neighbor(
                A_side,
                pan,
                direction,
                proxy_kind,
                s.eps,
                blocks.omega,
                n_proxy=s.n_proxy,
                scale=s.neighbor_proxy_scale,
            )
            for direction, A_side in (("left", blocks.A_minus1), ("right", blocks.A_plus1))
        }
        partial = Precompute(
            blocks=blocks, mode=mode, config=config, curve=curve, A0_lu=A0_lu, corner=corner
        )
        L = np.hstack([sides["left"].L, sides["right"].L])
        A0inv_L = partial.A0_solve(L)
        A0inv_L.setflags(write=False)
        neighbors = NeighborFactors(
            left=sides["left"], right=sides["right"], A0inv_L=A0inv_L, proxy_kind=proxy_kind
        )
        logger.info(f"Neighbor ranks (left, right): {neighbors.ranks}")

    seconds = time.perf_counter() - start
    logger.info(f"Precompute finished in {seconds:.3f}s (N={pan.n})")
    return Precompute(
        blocks=blocks,
        mode=mode,
        config=config,
        curve=curve,
        A0_lu=A0_lu,
        corner=corner,
        neighbors=neighbors,
        seconds=seconds,
    )


@dataclass(frozen=True)
class QPSolution:
    """Unknowns of one quasiperiodic solve and what is needed to evaluate them."""

    pre: Precompute
    wavenumbers: Wavenumbers
    sigma: np.ndarray
    c: np.ndarray
    a: np.ndarray
    g: np.ndarray
    source: Optional[PointSourceRep] = None
    schur_rank: int = 0
    schur_residual: float = 0.0
    singular_values: Optional[np.ndarray] = None
    seconds: float = 0.0

    @property
    def kappa(self) -> complex:
        return self.wavenumbers.kappa

    @property
    def alpha(self) -> complex:
        return self.wavenumbers.alpha


def periodized_source(pre: Precompute, kappa: complex, x0) -> PointSourceRep:
    """Quasiperiodic array of the point source at x0, built on the stored proxy traces."""
    s = pre.config.solver
    return build_point_source(
        pre.cell,
        Wavenumbers(pre.omega, complex(kappa), pre.pan.period),
        x0,
        K=pre.blocks.K,
        pinv_tol=s.pinv_tol,
        residual_tol=s.schur_residual_tol,
        blocks=pre.blocks,
    )


def solve_quasi(
    pre: Precompute, kappa: complex, rhs_source: Union[PointSourceRep, np.ndarray]
) -> QPSolution:
    """Solve the periodized system at one Bloch wavenumber.

    With y = A^-1 [g | B], the Schur complement on b = (c, a) is
    S = [[Q, 0], [V, -W]] - [[C], [Z]] A^-1 [B, 0] and b = -S^+ [C; Z] A^-1 g.

    Args:
        pre: Precomputed state at the same omega.
        kappa: Bloch wavenumber.
        rhs_source: Periodized incident point source, or the Neumann data g itself.

    Raises:
        NumericalError: If a factorization fails or the Schur residual exceeds
            ``solver.schur_residual_tol``.
    """
    start = time.perf_counter()
    blocks, cell = pre.blocks, pre.cell
    wavenumbers = Wavenumbers(pre.omega, complex(kappa), pre.pan.period)
    alpha = wavenumbers.alpha
    if isinstance(rhs_source, PointSourceRep):
        source = rhs_source
        g = neumann_rhs(source, pre.pan)
    else:
        source = None
        g = np.asarray(rhs_source, dtype=complex)

    A_solve = pre.A_solver(alpha)
    Y = A_solve(np.column_stack([g, blocks.B]))
    y_g, Y_B = Y[:, 0], Y[:, 1:]

    C_hat = np.vstack([blocks.C(alpha), blocks.Z(alpha)])
    n_rb = 2 * blocks.K + 1
    Q_hat = np.block(
        [
            [blocks.Q(alpha), np.zeros((cell.M_w, n_rb))],
            [blocks.V, -blocks.W(wavenumbers.kappa)],
        ]
    )
    CY = C_hat @ Y_B
    S = Q_hat - np.hstack([CY, np.zeros((CY.shape[0], n_rb))])
    rhs = -(C_hat @ y_g)
    b, rank, s = pinv_solve(S, rhs, pre.config.solver.pinv_tol)
    scale = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(S @ b - rhs) / scale) if scale > 0 else 0.0
    tail = s[-5:] / s[0] if s.size and s[0] > 0 else s[-5:]
    logger.debug(
        f"kappa={wavenumbers.kappa:.6g}: Schur rank {rank}/{S.shape[1]}, "
        f"residual {residual:.2e}, singular tail {np.array2string(tail, precision=2)}"
    )
    if residual > pre.config.solver.schur_residual_tol:
        raise NumericalError(
            f"Schur complement residual {residual:.2e} at kappa={wavenumbers.kappa:.6g} "
            f"(rank {rank}/{S.shape[1]})",
            singular_values=s[-10:],
            residual=residual,
            kappa=wavenumbers.kappa,
        )

    c = b[: cell.N_proxy]
    a = b[cell.N_proxy :]
    sigma = y_g - Y_B @ c
    return QPSolution(
        pre=pre,
        wavenumbers=wavenumbers,
        sigma=sigma,
        c=c,
        a=a,
        g=g,
        source=source,
        schur_rank=rank,
        schur_residual=residual,
        singular_values=s,
        seconds=time.perf_counter() - start,
    )


# --- evaluation ----------------------------------------------------------------


def to_unit_strip(cell, points) -> tuple[np.ndarray, np.ndarray]:
    """Translate points by whole periods into [x_L, x_R); returns (points, shifts)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    shifts = np.floor((points[:, 0] - cell.x_left) / cell.period)
    return points - np.outer(shifts, [cell.period, 0.0]), shifts


def near_boundary(pre: Precompute, points, factor: Optional[float] = None) -> np.ndarray:
    """Mask of points closer to a boundary copy than ``factor`` local panel lengths."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    factor = pre.config.solver.near_eval_factor if factor is None else factor
    pan = pre.pan
    lengths = np.repeat(pan.panel_lengths, pan.nodes_per_panel)
    near = np.zeros(len(points), dtype=bool)
    rows = np.arange(len(points))
    for l in COPIES:
        nodes = pan.nodes + np.array([l * pan.period, 0.0])
        dist = np.hypot(
            points[:, None, 0] - nodes[None, :, 0], points[:, None, 1] - nodes[None, :, 1]
        )
        nearest = np.argmin(dist, axis=1)
        near |= dist[rows, nearest] < factor * lengths[nearest]
    return near


def check_near_boundary(pre: Precompute, points: np.ndarray) -> None:
    policy = pre.config.solver.near_eval
    if policy == "ignore":
        return
    near = near_boundary(pre, points)
    if not np.any(near):
        return
    message = (
        f"{int(near.sum())} evaluation point(s) within "
        f"{pre.config.solver.near_eval_factor:g} panel lengths of the boundary"
    )
    if policy == "refuse":
        raise NumericalError(message)
    logger.warning(f"{message}; values there may be inaccurate")


def _eval_cell(sol: QPSolution, points: np.ndarray, gradient: bool = False):
    """Layer-potential plus proxy representation at points in the unit cell.

    Returns values, and with ``gradient`` also the (m, 2) gradients.
    """
    pre = sol.pre
    pan, omega, alpha = pre.pan, pre.omega, sol.alpha
    x = points[:, None, :]
    values = np.zeros(len(points), dtype=complex)
    grads = np.zeros((len(points), 2), dtype=complex)
    weighted = sol.sigma * pan.weights
    for l in COPIES:
        y = (pan.nodes + np.array([l * pan.period, 0.0]))[None, :, :]
        values += alpha**l * (greens(omega, x, y) @ weighted)
        if gradient:
            grads += alpha**l * np.einsum("mnk,n->mk", greens_gradient(omega, x, y), weighted)
    phi, grad_phi = proxy_traces(pre.cell, omega, points)
    values += phi @ sol.c
    if gradient:
        grads += np.einsum("mpk,p->mk", grad_phi, sol.c)
        return values, grads
    return values


def _rayleigh_bloch_gradient(sol: QPSolution, points: np.ndarray) -> np.ndarray:
    w = sol.wavenumbers
    n = rayleigh_bloch_orders(sol.pre.blocks.K)
    beta, k = w.beta(n), w.k(n)
    phase = np.exp(
        1j * np.outer(points[:, 0], beta)
        + 1j * np.outer(points[:, 1] - sol.pre.cell.y_top, k)
    )
    return np.stack([phase @ (1j * beta * sol.a), phase @ (1j * k * sol.a)], axis=-1)


def eval_field(sol: QPSolution, points, check: bool = True) -> np.ndarray:
    """Boundary response (layer potential, proxies, Rayleigh-Bloch) at points above the boundary.

    Points are translated into the unit strip by whole periods and pick up
    the phase alpha**m. Below the top line the layer potentials and proxies
    are summed; above it the Rayleigh-Bloch expansion is used.
    ``check=False`` skips the near-boundary test (callers that ran it once).

    Raises:
        NumericalError: If a point is too near the boundary and the near
            evaluation policy is ``refuse``.
    """
    cell = sol.pre.cell
    local, shifts = to_unit_strip(cell, points)
    if check:
        check_near_boundary(sol.pre, local)

    out = np.empty(len(points), dtype=complex)
    below = local[:, 1] <= cell.y_top
    if np.any(below):
        out[below] = _eval_cell(sol, local[below])
    if np.any(~below):
        out[~below] = rayleigh_bloch_sum(sol.wavenumbers, sol.a, local[~below], cell.y_top)
    return out * sol.alpha**shifts


def total_field(sol: QPSolution, points, check: bool = True) -> np.ndarray:
    """Quasiperiodic total field: boundary response plus the periodized source.

    Upgoing modes may sit in either part depending on the least-squares fit
    of the periodized source; only the sum is unique.

    Raises:
        ValueError: If the solution was computed from raw Neumann data.
        NumericalError: As for ``eval_field``.
    """
    if sol.source is None:
        raise ValueError("total field needs a solution driven by a point source")
    local, shifts = to_unit_strip(sol.pre.cell, points)
    scattered = eval_field(sol, points, check=check)
    return scattered + sol.source.value(local) * sol.alpha**shifts


# --- validation residuals ------------------------------------------------------


def _vertex_panels(pan) -> np.ndarray:
    """Refined panels with a corner vertex as an end point."""
    if pan.n_ref == 0 or not pan.curve.corner_params:
        return np.zeros(pan.n_panels, dtype=bool)
    corners = np.asarray(pan.curve.corner_params, dtype=float)
    scale = pan.curve.t_end - pan.curve.t_start
    ends = pan.panel_bounds
    gap = np.abs(ends[:, :, None] - corners[None, None, :]).min(axis=(1, 2))
    return gap <= 1e-12 * scale


def _probe_params(pre: Precompute, n_probes: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints between consecutive Gauss nodes of each panel, thinned to n_probes.

    Panels ending at a corner vertex carry the unresolved part of the corner
    singularity and get no residual points.
    """
    pan = pre.pan
    q = pan.nodes_per_panel
    params = pan.params.reshape(pan.n_panels, q)
    mids = 0.5 * (params[:, :-1] + params[:, 1:])
    panels = np.repeat(np.arange(pan.n_panels), q - 1)
    mids = mids.ravel()
    keep = ~_vertex_panels(pan)[panels]
    mids, panels = mids[keep], panels[keep]
    if len(mids) > n_probes:
        keep = np.unique(np.linspace(0, len(mids) - 1, n_probes).round().astype(int))
        mids, panels = mids[keep], panels[keep]
    return mids, panels


def boundary_residual(sol: QPSolution, n_probes: int = 200) -> float:
    """Max Neumann-condition residual at off-node boundary probes.

    The total normal derivative (scattered plus incident) is evaluated between
    collocation nodes, with the density interpolated on its panel, and
    reported relative to the largest incident normal derivative.
    """
    pre = sol.pre
    pan, curve = pre.pan, pre.curve
    s = pre.config.solver
    t, panels = _probe_params(pre, n_probes)
    rows = adjoint_double_layer_rows(
        pan, pre.omega, t, panels, s.self_levels, s.adjacent_levels, RESIDUAL_NEAR_FACTOR
    )

    sigma_probe = np.empty(len(t), dtype=complex)
    for p in np.unique(panels):
        members = np.flatnonzero(panels == p)
        a, b = pan.panel_bounds[p]
        interp = interpolation_matrix(pan.nodes_per_panel, (2 * t[members] - a - b) / (b - a))
        sigma_probe[members] = interp @ sol.sigma[pan.panel_slice(p)]

    points, normals = curve.position(t), curve.normal(t)
    _, grad_phi = proxy_traces(pre.cell, pre.omega, points)
    scattered = -0.5 * sigma_probe + sum(sol.alpha**l * (rows[l] @ sol.sigma) for l in COPIES)
    scattered = scattered + np.einsum("mk,mpk,p->m", normals, grad_phi, sol.c)

    if sol.source is not None:
        incident = np.einsum("mk,mk->m", normals, sol.source.gradient(points))
    else:
        incident = np.empty(len(t), dtype=complex)
        for p in np.unique(panels):
            members = np.flatnonzero(panels == p)
            a, b = pan.panel_bounds[p]
            interp = interpolation_matrix(
                pan.nodes_per_panel, (2 * t[members] - a - b) / (b - a)
            )
            incident[members] = -(interp @ sol.g[pan.panel_slice(p)])
    scale = float(np.max(np.abs(incident)))
    residual = float(np.max(np.abs(scattered + incident)))
    return residual / scale if scale > 0 else residual


@dataclass(frozen=True)
class QuasiResiduals:
    """Relative discrepancies of a solution across the walls and the top line."""

    quasiperiodicity: float
    top_matching: float


def quasi_residuals(sol: QPSolution, n_probes: int = 50) -> QuasiResiduals:
    """Wall quasiperiodicity and top matching residuals at fresh probe points.

    Wall probes compare value and x-flux at x_L against alpha^-1 times those
    at x_R; top probes compare value and y-flux of the cell representation
    with the Rayleigh-Bloch expansion. Wall probes too near the boundary are
    skipped.
    """
    pre = sol.pre
    cell = pre.cell
    y = cell.y_bottom + (np.arange(n_probes) + 0.5) / n_probes * (cell.y_top - cell.y_bottom)
    left = np.stack([np.full_like(y, cell.x_left), y], axis=-1)
    right = np.stack([np.full_like(y, cell.x_right), y], axis=-1)
    far = ~(near_boundary(pre, left) | near_boundary(pre, right))
    if not np.any(far):
        logger.warning("All wall probes are near the boundary; using them anyway")
        far[:] = True
    left, right = left[far], right[far]
    u_left, grad_left = _eval_cell(sol, left, gradient=True)
    u_right, grad_right = _eval_cell(sol, right, gradient=True)
    wall = np.concatenate(
        [u_left - u_right / sol.alpha, grad_left[:, 0] - grad_right[:, 0] / sol.alpha]
    )
    wall_scale = np.max(np.abs(np.concatenate([u_left, grad_left[:, 0]])))

    x = cell.x_left + (np.arange(n_probes) + 0.25) / n_probes * cell.period
    top = np.stack([x, np.full_like(x, cell.y_top)], axis=-1)
    u_top, grad_top = _eval_cell(sol, top, gradient=True)
    u_rb = rayleigh_bloch_sum(sol.wavenumbers, sol.a, top, cell.y_top)
    grad_rb = _rayleigh_bloch_gradient(sol, top)
    matching = np.concatenate([u_top - u_rb, grad_top[:, 1] - grad_rb[:, 1]])
    top_scale = np.max(np.abs(np.concatenate([u_top, grad_top[:, 1]])))

    def relative(diff, scale):
        worst = float(np.max(np.abs(diff)))
        return worst / float(scale) if scale > 0 else worst

    return QuasiResiduals(
        quasiperiodicity=relative(wall, wall_scale),
        top_matching=relative(matching, top_scale),
    )
