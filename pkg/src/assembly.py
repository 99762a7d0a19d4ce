"""Blocks of the periodized boundary-integral system.

Unknowns are the boundary density sigma (N), proxy coefficients c (N_proxy) and
Rayleigh-Bloch coefficients a (2K+1). Rows are the Neumann condition on the
boundary, the value/flux discrepancies between the walls and the value/flux
matching on the top line:

    [ A  B  0 ] [sigma]   [g]
    [ C  Q  0 ] [  c  ] = [0]
    [ Z  V -W ] [  a  ]   [0]

Every Bloch-phase dependence enters as a scalar alpha**l on a stored block,
except W, which is rebuilt per kappa. Wall and top blocks stack value rows
over flux rows; wall rows are (left trace) - alpha**-1 (right trace).
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .geometry import Panelization, UnitCell, shifted_copy
from .lowrank import pinv_solve
from .quadrature import graded_rule, interpolation_matrix
from .specfun import (
    Wavenumbers,
    adjoint_double_layer_kernel,
    combined_field,
    combined_field_gradient,
    greens,
    greens_gradient,
)

logger = logging.getLogger(__name__)

COPIES = (-1, 0, 1)

# Samples per panel used to locate the point nearest a target.
NEAR_SAMPLES = 65


# --- adjoint double layer with near-singular panel corrections -------------


def _panel_block(
    pan: Panelization,
    omega: float,
    targets: np.ndarray,
    target_normals: np.ndarray,
    p: int,
    anchor: float,
    levels: int,
    shift: float,
) -> np.ndarray:
    """Targets against panel p via a rule graded toward ``anchor``.

    The density is interpolated from the panel's Gauss nodes, so the result
    maps the panel's nodal density values to the targets.
    """
    a, b = pan.panel_bounds[p]
    s, w = graded_rule(a, b, anchor, pan.nodes_per_panel, levels)
    points = pan.curve.position(s) + np.array([shift, 0.0])
    weights = w * pan.curve.speed(s)
    interp = interpolation_matrix(pan.nodes_per_panel, (2 * s - a - b) / (b - a))
    kernel = adjoint_double_layer_kernel(omega, targets, target_normals, points)
    return (kernel * weights[None, :]) @ interp


def adjoint_double_layer_rows(
    pan: Panelization,
    omega: float,
    t: np.ndarray,
    panels: np.ndarray,
    self_levels: int = 6,
    adjacent_levels: int = 10,
    near_factor: Optional[float] = None,
) -> dict[int, np.ndarray]:
    """Adjoint double-layer rows for targets on the boundary, per copy.

    Args:
        pan: Panelization of one period.
        omega: Angular frequency.
        t: Target parameters on Gamma_0 (collocation nodes or probes).
        panels: Panel containing each target.
        self_levels: Grading depth toward the target on its own panel.
        adjacent_levels: Grading depth toward the shared end on adjacent panels.
        near_factor: If set, every other panel closer to a target than this
            many of its own lengths is also integrated with a rule graded
            toward its nearest point (same depth as adjacent panels).

    Returns:
        Mapping copy index l -> (len(t), N) matrix; copy l holds the
        interaction with Gamma_0 + l d. Adjacent panels across the period
        boundary are corrected inside the l = +-1 blocks.
    """
    t = np.asarray(t, dtype=float)
    panels = np.asarray(panels)
    curve = pan.curve
    d = pan.period
    targets = curve.position(t)
    normals = curve.normal(t)

    rows = {}
    for l in COPIES:
        copy = shifted_copy(pan, l)
        rows[l] = adjoint_double_layer_kernel(omega, targets, normals, copy.nodes) * pan.weights

    n_panels = pan.n_panels
    bounds = pan.panel_bounds
    for p in np.unique(panels):
        members = np.flatnonzero(panels == p)
        x, nu = targets[members], normals[members]
        own = pan.panel_slice(p)
        for i, member in enumerate(members):
            rows[0][member, own] = _panel_block(
                pan, omega, x[i : i + 1], nu[i : i + 1], p, t[member], self_levels, 0.0
            )[0]
        for step in (-1, 1):
            q, l = p + step, 0
            if q < 0:
                q, l = n_panels - 1, -1
            elif q >= n_panels:
                q, l = 0, 1
            anchor = bounds[q][1] if step == -1 else bounds[q][0]
            rows[l][members, pan.panel_slice(q)] = _panel_block(
                pan, omega, x, nu, q, anchor, adjacent_levels, l * d
            )
    if near_factor is not None:
        _correct_near_panels(
            rows, pan, omega, targets, normals, panels, adjacent_levels, near_factor
        )
    return rows


def _correct_near_panels(
    rows: dict[int, np.ndarray],
    pan: Panelization,
    omega: float,
    targets: np.ndarray,
    normals: np.ndarray,
    panels: np.ndarray,
    levels: int,
    near_factor: float,
) -> None:
    """Graded-rule rows for every (target, panel copy) pair that is near but not self."""
    d = pan.period
    lengths = pan.panel_lengths
    samples = np.linspace(0.0, 1.0, NEAR_SAMPLES)
    for l in COPIES:
        for q, (a, b) in enumerate(pan.panel_bounds):
            s = a + (b - a) * samples
            points = pan.curve.position(s) + np.array([l * d, 0.0])
            dist = np.hypot(
                targets[:, None, 0] - points[None, :, 0], targets[:, None, 1] - points[None, :, 1]
            )
            near = dist.min(axis=1) < near_factor * lengths[q]
            if l == 0:
                near &= panels != q
            for i in np.flatnonzero(near):
                anchor = s[np.argmin(dist[i])]
                rows[l][i, pan.panel_slice(q)] = _panel_block(
                    pan, omega, targets[i : i + 1], normals[i : i + 1], q, anchor, levels, l * d
                )[0]


def assemble_A_parts(
    pan: Panelization, omega: float, self_levels: int = 6, adjacent_levels: int = 10
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neumann blocks (A0, A_-1, A_1) with A(alpha) = A0 + alpha A_1 + alpha^-1 A_-1.

    A0 = -I/2 + D* of Gamma_0 on itself; A_+-1 hold D* from the shifted copies.
    """
    rows = adjoint_double_layer_rows(
        pan, omega, pan.params, pan.panel_index, self_levels, adjacent_levels
    )
    A0 = rows[0] - 0.5 * np.eye(pan.n)
    return A0, rows[-1], rows[1]


# --- proxy, wall and top blocks ---------------------------------------------


def proxy_traces(
    cell: UnitCell, omega: float, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Values (m, Np) and gradients (m, Np, 2) of the proxy basis at points."""
    x = points[:, None, :]
    z = cell.proxy_points[None, :, :]
    nz = cell.proxy_normals[None, :, :]
    return combined_field(omega, x, z, nz), combined_field_gradient(omega, x, z, nz)


def _proxy_values(cell: UnitCell, omega: float, points: np.ndarray) -> np.ndarray:
    """Values (m, Np) of the proxy basis at points."""
    return combined_field(
        omega, points[:, None, :], cell.proxy_points[None, :, :], cell.proxy_normals[None, :, :]
    )


def _stack(values: np.ndarray, gradients: np.ndarray, axis: int) -> np.ndarray:
    return np.vstack([values, gradients[..., axis]])


def assemble_proxy_blocks(
    cell: UnitCell, pan: Panelization, omega: float
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray], np.ndarray]:
    """Proxy blocks (B, (Q_left, Q_right), V).

    B holds the normal derivative of each proxy basis function at the boundary
    nodes. Q(alpha) = Q_left - alpha**-1 Q_right; V holds top traces.
    """
    _, grad = proxy_traces(cell, omega, pan.nodes)
    B = np.einsum("nk,npk->np", pan.normals, grad)
    Q_left = _stack(*proxy_traces(cell, omega, cell.left_nodes), axis=0)
    Q_right = _stack(*proxy_traces(cell, omega, cell.right_nodes), axis=0)
    V = _stack(*proxy_traces(cell, omega, cell.top_nodes), axis=1)
    return B, (Q_left, Q_right), V


def _single_layer_traces(
    pan: Panelization, omega: float, points: np.ndarray, l: int, axis: int
) -> np.ndarray:
    """Stacked value and flux (d/dx or d/dy) of the single layer on copy l."""
    copy = shifted_copy(pan, l)
    x = points[:, None, :]
    y = copy.nodes[None, :, :]
    values = greens(omega, x, y) * pan.weights
    flux = greens_gradient(omega, x, y)[..., axis] * pan.weights
    return np.vstack([values, flux])


@dataclass(frozen=True)
class WallBlocks:
    """Single-layer wall traces per copy; each entry is M_w x N."""

    left: dict[int, np.ndarray]
    right: dict[int, np.ndarray]

    def combine(self, alpha: complex) -> np.ndarray:
        return sum(alpha**l * (self.left[l] - self.right[l] / alpha) for l in COPIES)


def assemble_wall_blocks(cell: UnitCell, pan: Panelization, omega: float) -> WallBlocks:
    """Value and x-flux traces of each copy's single layer on both walls."""
    left = {l: _single_layer_traces(pan, omega, cell.left_nodes, l, axis=0) for l in COPIES}
    right = {l: _single_layer_traces(pan, omega, cell.right_nodes, l, axis=0) for l in COPIES}
    return WallBlocks(left=left, right=right)


def assemble_top_blocks(
    cell: UnitCell, pan: Panelization, omega: float
) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Top traces: per-copy single layer (2M x N) and proxy basis (2M x N_proxy)."""
    Z = {l: _single_layer_traces(pan, omega, cell.top_nodes, l, axis=1) for l in COPIES}
    V = _stack(*proxy_traces(cell, omega, cell.top_nodes), axis=1)
    return Z, V


def rayleigh_bloch_orders(K: int) -> np.ndarray:
    return np.arange(-K, K + 1)


def build_W(cell: UnitCell, wavenumbers: Wavenumbers, K: int) -> np.ndarray:
    """Rayleigh-Bloch traces on the top line, 2M x (2K+1).

    Value rows exp(i beta_n x); flux rows i k_n exp(i beta_n x).
    """
    n = rayleigh_bloch_orders(K)
    phase = np.exp(1j * np.outer(cell.top_x, wavenumbers.beta(n)))
    return np.vstack([phase, 1j * wavenumbers.k(n)[None, :] * phase])


@dataclass(frozen=True)
class SystemBlocks:
    """Bloch-phase independent pieces of the periodized system."""

    pan: Panelization
    cell: UnitCell
    omega: float
    K: int
    A0: np.ndarray
    A_minus1: np.ndarray
    A_plus1: np.ndarray
    B: np.ndarray
    Q_left: np.ndarray
    Q_right: np.ndarray
    walls: WallBlocks
    Z_parts: dict[int, np.ndarray]
    V: np.ndarray

    def A(self, alpha: complex) -> np.ndarray:
        return self.A0 + alpha * self.A_plus1 + self.A_minus1 / alpha

    def C(self, alpha: complex) -> np.ndarray:
        return self.walls.combine(alpha)

    def Q(self, alpha: complex) -> np.ndarray:
        return self.Q_left - self.Q_right / alpha

    def Z(self, alpha: complex) -> np.ndarray:
        return sum(alpha**l * self.Z_parts[l] for l in COPIES)

    def W(self, kappa: complex) -> np.ndarray:
        return build_W(self.cell, Wavenumbers(self.omega, kappa, self.pan.period), self.K)

    def full_matrix(self, kappa: complex) -> np.ndarray:
        """The complete rectangular system at kappa (for dense checks)."""
        alpha = np.exp(1j * kappa * self.pan.period)
        n_rb = 2 * self.K + 1
        top = np.hstack([self.A(alpha), self.B, np.zeros((self.pan.n, n_rb))])
        walls = np.hstack([self.C(alpha), self.Q(alpha), np.zeros((self.cell.M_w, n_rb))])
        tops = np.hstack([self.Z(alpha), self.V, -self.W(kappa)])
        return np.vstack([top, walls, tops])


def assemble_system(
    pan: Panelization,
    cell: UnitCell,
    omega: float,
    K: int,
    self_levels: int = 6,
    adjacent_levels: int = 10,
) -> SystemBlocks:
    """Assemble every alpha-independent block."""
    A0, A_minus1, A_plus1 = assemble_A_parts(pan, omega, self_levels, adjacent_levels)
    B, (Q_left, Q_right), V = assemble_proxy_blocks(cell, pan, omega)
    walls = assemble_wall_blocks(cell, pan, omega)
    Z_parts, _ = assemble_top_blocks(cell, pan, omega)
    blocks = SystemBlocks(
        pan=pan,
        cell=cell,
        omega=omega,
        K=K,
        A0=A0,
        A_minus1=A_minus1,
        A_plus1=A_plus1,
        B=B,
        Q_left=Q_left,
        Q_right=Q_right,
        walls=walls,
        Z_parts=Z_parts,
        V=V,
    )
    for arr in (A0, A_minus1, A_plus1, B, Q_left, Q_right, V, *Z_parts.values(),
                *walls.left.values(), *walls.right.values()):
        arr.setflags(write=False)
    logger.debug(
        f"Assembled system blocks: N={pan.n}, M_w={cell.M_w}, M={cell.M}, "
        f"N_proxy={cell.N_proxy}, K={K}"
    )
    return blocks


# --- quasiperiodic point source ----------------------------------------------


@dataclass(frozen=True)
class PointSourceRep:
    """Periodized field of the source array sum_l alpha**l delta(x - x_hat - l d)."""

    x_hat: np.ndarray
    c_hat: np.ndarray
    a_hat: np.ndarray
    wavenumbers: Wavenumbers
    cell: UnitCell
    K: int
    residual: float

    def _direct_terms(self, points: np.ndarray, fn) -> np.ndarray:
        d = self.wavenumbers.d
        alpha = self.wavenumbers.alpha
        return sum(
            alpha**l * fn(self.wavenumbers.omega, points, self.x_hat + np.array([l * d, 0.0]))
            for l in COPIES
        )

    def value(self, points) -> np.ndarray:
        """Field at points inside the unit strip (below or above the top line)."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.empty(len(points), dtype=complex)
        below = points[:, 1] <= self.cell.y_top
        if np.any(below):
            p = points[below]
            phi = _proxy_values(self.cell, self.wavenumbers.omega, p)
            out[below] = self._direct_terms(p, greens) + phi @ self.c_hat
        if np.any(~below):
            out[~below] = rayleigh_bloch_sum(
                self.wavenumbers, self.a_hat, points[~below], self.cell.y_top
            )
        return out

    def gradient(self, points) -> np.ndarray:
        """Gradient at points below the top line, shape (m, 2)."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        _, grad_phi = proxy_traces(self.cell, self.wavenumbers.omega, points)
        proxy = np.einsum("mpk,p->mk", grad_phi, self.c_hat)
        return self._direct_terms(points, greens_gradient) + proxy


def rayleigh_bloch_sum(
    wavenumbers: Wavenumbers, a: np.ndarray, points: np.ndarray, y_top: float
) -> np.ndarray:
    """sum_n a_n exp(i beta_n x + i k_n (y - y_top))."""
    K = (len(a) - 1) // 2
    n = rayleigh_bloch_orders(K)
    beta, k = wavenumbers.beta(n), wavenumbers.k(n)
    phase = np.exp(
        1j * np.outer(points[:, 0], beta) + 1j * np.outer(points[:, 1] - y_top, k)
    )
    return phase @ a


def build_point_source(
    cell: UnitCell,
    wavenumbers: Wavenumbers,
    x_hat,
    K: int = 20,
    pinv_tol: float = 1e-13,
    residual_tol: float = 1e-6,
    blocks: Optional[SystemBlocks] = None,
) -> PointSourceRep:
    """Periodize a point source with proxy and Rayleigh-Bloch coefficients.

    The three nearest images x_hat + l d (weighted alpha**l) are summed
    directly; the proxy and Rayleigh-Bloch coefficients are the truncated-SVD
    least-squares solution of the wall and top discrepancy rows.

    Args:
        cell: Unit cell.
        wavenumbers: omega, kappa and d of the solve.
        x_hat: Source location, strictly inside the unit cell.
        K: Rayleigh-Bloch truncation order.
        pinv_tol: Relative singular-value cutoff for the pseudoinverse.
        residual_tol: Largest acceptable relative residual.
        blocks: Precomputed blocks supplying the proxy traces Q and V.

    Raises:
        ConfigError: If x_hat is outside the unit cell.
        NumericalError: If the achieved residual exceeds ``residual_tol``.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if not (cell.x_left < x_hat[0] < cell.x_right and x_hat[1] < cell.y_top):
        raise ConfigError("problem.x0", f"source {tuple(x_hat)} is not inside the unit cell")
    omega, d, alpha = wavenumbers.omega, wavenumbers.d, wavenumbers.alpha

    if blocks is not None:
        Q_left, Q_right, V = blocks.Q_left, blocks.Q_right, blocks.V
    else:
        Q_left = _stack(*proxy_traces(cell, omega, cell.left_nodes), axis=0)
        Q_right = _stack(*proxy_traces(cell, omega, cell.right_nodes), axis=0)
        V = _stack(*proxy_traces(cell, omega, cell.top_nodes), axis=1)

    def direct(points: np.ndarray, axis: int) -> np.ndarray:
        value = np.zeros(len(points), dtype=complex)
        flux = np.zeros(len(points), dtype=complex)
        for l in COPIES:
            src = x_hat + np.array([l * d, 0.0])
            value += alpha**l * greens(omega, points, src)
            flux += alpha**l * greens_gradient(omega, points, src)[:, axis]
        return np.concatenate([value, flux])

    C_src = direct(cell.left_nodes, 0) - direct(cell.right_nodes, 0) / alpha
    Z_src = direct(cell.top_nodes, 1)
    W = build_W(cell, wavenumbers, K)
    n_rb = 2 * K + 1
    system = np.block(
        [
            [Q_left - Q_right / alpha, np.zeros((cell.M_w, n_rb))],
            [V, -W],
        ]
    )
    rhs = -np.concatenate([C_src, Z_src])
    solution, rank, _ = pinv_solve(system, rhs, pinv_tol)
    scale = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(system @ solution - rhs) / scale) if scale else 0.0
    logger.debug(
        f"Point source at kappa={wavenumbers.kappa:.6g}: rank {rank}/{system.shape[1]}, "
        f"residual {residual:.2e}"
    )
    if residual > residual_tol:
        raise NumericalError(
            f"Point-source periodization residual {residual:.2e} exceeds {residual_tol:.0e}",
            residual=residual,
            kappa=wavenumbers.kappa,
        )
    return PointSourceRep(
        x_hat=x_hat,
        c_hat=solution[: cell.N_proxy],
        a_hat=solution[cell.N_proxy :],
        wavenumbers=wavenumbers,
        cell=cell,
        K=K,
        residual=residual,
    )


def neumann_rhs(point_source: PointSourceRep, pan: Panelization) -> np.ndarray:
    """g = -nu . grad(psi) at the boundary nodes."""
    grad = point_source.gradient(pan.nodes)
    return -np.einsum("nk,nk->n", pan.normals, grad)
