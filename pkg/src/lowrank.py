"""Interpolatory decompositions, proxy compression and Woodbury updates."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, NumericalError
from .geometry import Panelization, shifted_copy
from .specfun import adjoint_double_layer_kernel, combined_field, combined_field_gradient

logger = logging.getLogger(__name__)

Solve = Callable[[np.ndarray], np.ndarray]


def pinv_solve(M: np.ndarray, rhs: np.ndarray, rtol: float) -> tuple[np.ndarray, int, np.ndarray]:
    """Least-squares solve with a truncated SVD pseudoinverse.

    Singular values below ``rtol`` times the largest are dropped.

    Returns:
        Tuple of (solution, retained rank, all singular values).
    """
    U, s, Vh = sla.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        shape = (M.shape[1],) + np.shape(rhs)[1:]
        return np.zeros(shape, dtype=np.result_type(M, rhs)), 0, s
    rank = int(np.count_nonzero(s > rtol * s[0]))
    coeffs = U[:, :rank].conj().T @ rhs
    coeffs = coeffs / (s[:rank] if coeffs.ndim == 1 else s[:rank, None])
    return Vh[:rank].conj().T @ coeffs, rank, s


# --- interpolatory decomposition ---------------------------------------------


@dataclass(frozen=True)
class InterpolatoryFactor:
    """Row ID M ~= P @ M[J[:rank]], with P[J[:rank]] equal to the identity."""

    P: np.ndarray
    J: np.ndarray
    rank: int

    @property
    def skeleton(self) -> np.ndarray:
        return self.J[: self.rank]


def interp_decomp(M: np.ndarray, epsilon: float, rank: Optional[int] = None) -> InterpolatoryFactor:
    """Row interpolatory decomposition by column-pivoted QR of M^T.

    Args:
        M: Matrix (m x n).
        epsilon: Relative tolerance on the pivoted diagonal of R.
        rank: Force this rank instead of choosing it from ``epsilon``.

    Returns:
        The factor; rank 0 for a zero matrix.
    """
    M = np.asarray(M)
    m, n = M.shape
    if m == 0 or n == 0:
        return InterpolatoryFactor(P=np.zeros((m, 0), dtype=M.dtype), J=np.arange(m), rank=0)
    _, R, J = sla.qr(M.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if rank is None:
        rank = 0 if diag[0] == 0 else int(np.count_nonzero(diag > epsilon * diag[0]))
    rank = int(min(rank, len(diag)))
    P = np.zeros((m, rank), dtype=np.result_type(M.dtype, float))
    P[J[:rank]] = np.eye(rank)
    if 0 < rank < m:
        T = sla.solve_triangular(R[:rank, :rank], R[:rank, rank:])
        P[J[rank:]] = T.T
    return InterpolatoryFactor(P=P, J=J, rank=rank)


# --- neighbor compression ------------------------------------------------------


@dataclass(frozen=True)
class ProxySurface:
    """Proxy points with outward normals and arc weight."""

    center: np.ndarray
    radius: float
    points: np.ndarray
    normals: np.ndarray
    weight: float


def proxy_circle(center: np.ndarray, radius: float, n: int, arc: Optional[str] = None) -> ProxySurface:
    """Equispaced proxy points on a circle, or on the half facing ``arc``.

    Args:
        center: Circle center.
        radius: Circle radius.
        n: Number of points.
        arc: None for the full circle, ``"left"`` or ``"right"`` for a half.
    """
    if arc is None:
        theta = 2 * np.pi * np.arange(n) / n
        weight = 2 * np.pi * radius / n
    else:
        start = {"left": 0.5 * np.pi, "right": -0.5 * np.pi}[arc]
        theta = start + np.pi * (np.arange(n) + 0.5) / n
        weight = np.pi * radius / n
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return ProxySurface(
        center=np.asarray(center, dtype=float),
        radius=radius,
        points=center + radius * normals,
        normals=normals,
        weight=weight,
    )


def _flux_proxy_columns(omega: float, targets, target_normals, proxy: ProxySurface) -> np.ndarray:
    """Normal derivative at targets of each proxy's combined field, arc-weighted."""
    grad = combined_field_gradient(
        omega, targets[:, None, :], proxy.points[None, :, :], proxy.normals[None, :, :]
    )
    return np.einsum("mk,mpk->mp", target_normals, grad) * proxy.weight


@dataclass(frozen=True)
class NeighborCompression:
    """A_side ~= L @ R with R = A_side[skeleton]."""

    L: np.ndarray
    R: np.ndarray
    skeleton: np.ndarray
    proxy: ProxySurface
    n_near: int

    @property
    def rank(self) -> int:
        return len(self.skeleton)


def compress_neighbor(
    A_side: np.ndarray,
    pan: Panelization,
    direction: str,
    proxy_kind: str,
    epsilon: float,
    omega: float,
    n_proxy: int = 100,
    scale: float = 1.75,
) -> NeighborCompression:
    """Low-rank factor of the interaction of a neighbor copy with Gamma_0.

    The proxy circle is concentric with Gamma_0 and ``scale`` times its
    enclosing radius. Neighbor nodes inside it are near and kept explicitly;
    the far part is represented by proxy sources. A row ID of
    [A_near | A_proxy] picks the skeleton rows.

    Args:
        A_side: A_-1 (``direction="left"``) or A_1 (``direction="right"``).
        pan: Panelization of Gamma_0.
        direction: Side of the neighbor copy.
        proxy_kind: ``"full_circle"`` or ``"half_circle"``.
        epsilon: ID tolerance.
        omega: Angular frequency.
        n_proxy: Number of proxy points.
        scale: Proxy radius over the enclosing radius of Gamma_0.

    Raises:
        ConfigError: If the proxy circle does not separate Gamma_0.
    """
    if direction not in ("left", "right"):
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    if proxy_kind not in ("full_circle", "half_circle"):
        raise ValueError(f"unknown proxy kind {proxy_kind!r}")
    if scale <= 1:
        raise ConfigError("solver.neighbor_proxy_scale", "proxy circle must enclose Gamma_0")

    lo, hi = pan.nodes.min(axis=0), pan.nodes.max(axis=0)
    center = 0.5 * (lo + hi)
    enclosing = float(np.max(np.hypot(*(pan.nodes - center).T)))
    radius = scale * enclosing
    proxy = proxy_circle(center, radius, n_proxy, None if proxy_kind == "full_circle" else direction)

    l = -1 if direction == "left" else 1
    neighbor = shifted_copy(pan, l)
    near = np.flatnonzero(np.hypot(*(neighbor.nodes - center).T) <= radius)

    proxy_cols = _flux_proxy_columns(omega, pan.nodes, pan.normals, proxy)
    factor = interp_decomp(np.hstack([A_side[:, near], proxy_cols]), epsilon)
    skeleton = factor.skeleton
    L = factor.P
    R = A_side[skeleton]
    logger.debug(
        f"Neighbor {direction} ({proxy_kind}): {len(near)} near nodes, rank {factor.rank}"
    )
    return NeighborCompression(L=L, R=R, skeleton=skeleton, proxy=proxy, n_near=len(near))


@dataclass(frozen=True)
class NeighborFactors:
    """Low-rank factors of both neighbor blocks, with A0^-1 L cached."""

    left: NeighborCompression
    right: NeighborCompression
    A0inv_L: np.ndarray
    proxy_kind: str

    @property
    def L(self) -> np.ndarray:
        return np.hstack([self.left.L, self.right.L])

    @property
    def ranks(self) -> tuple[int, int]:
        return self.left.rank, self.right.rank

    def scaled_R(self, alpha: complex) -> np.ndarray:
        """R(alpha) = [alpha^-1 R_-1; alpha R_1]."""
        return np.vstack([self.left.R / alpha, alpha * self.right.R])


def woodbury_apply(
    A0_solve: Solve,
    L: np.ndarray,
    R: np.ndarray,
    f: np.ndarray,
    A0inv_L: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Apply (A0 + L R)^-1 to f via the Woodbury identity.

    Args:
        A0_solve: Applies A0^-1 to a vector or block of columns.
        L: N x r left factor.
        R: r x N right factor (already scaled by the Bloch phase).
        f: Right-hand side(s).
        A0inv_L: Cached A0^-1 L; computed when omitted.

    Raises:
        NumericalError: If the capacitance matrix I + R A0^-1 L is singular.
    """
    if A0inv_L is None:
        A0inv_L = A0_solve(L)
    y = A0_solve(f)
    if L.shape[1] == 0:
        return y
    capacitance = np.eye(L.shape[1]) + R @ A0inv_L
    condition = float(np.linalg.cond(capacitance))
    logger.debug(f"Woodbury capacitance size {L.shape[1]}, condition {condition:.2e}")
    if not np.isfinite(condition) or condition > 1 / np.finfo(float).eps:
        raise NumericalError(
            f"Singular Woodbury capacitance matrix (condition {condition:.2e})",
            condition=condition,
        )
    lu = sla.lu_factor(capacitance)
    return y - A0inv_L @ sla.lu_solve(lu, R @ y)


# --- corner compression --------------------------------------------------------


def corner_split(
    pan: Panelization, refinement_cutoff: int = 0
) -> tuple[list[np.ndarray], np.ndarray]:
    """Partition node indices into per-corner sets and the smooth remainder.

    Args:
        pan: Panelization (corner sets come from its dyadic refinement).
        refinement_cutoff: Number of the largest refined panels per corner side
            handed back to the smooth set.

    Returns:
        (corner index sets, smooth index set), together a partition of 0..N-1.
    """
    lengths = np.repeat(pan.panel_lengths, pan.nodes_per_panel)
    corners = []
    for members in pan.corner_sets:
        if refinement_cutoff > 0 and len(members):
            limit = lengths[members].max() / 2 ** (refinement_cutoff - 1)
            members = members[lengths[members] < limit * (1 - 1e-9)]
        if len(members):
            corners.append(np.asarray(members))
    taken = np.concatenate(corners) if corners else np.zeros(0, dtype=int)
    smooth = np.setdiff1d(np.arange(pan.n), taken)
    return corners, smooth


@dataclass(frozen=True)
class CornerCompression:
    """Compressed solver for A0 with the refined corner unknowns eliminated.

    ``corner`` concatenates the corner sets; U (|c| x r) and V* (r x |c|) are
    block diagonal over corners.
    """

    corner: np.ndarray
    smooth: np.ndarray
    ranks: tuple[int, ...]
    U: np.ndarray
    Vstar: np.ndarray
    B_cs: np.ndarray
    B_sc: np.ndarray
    acc_solve: Solve
    Ainv_U: np.ndarray
    D: np.ndarray
    DV: np.ndarray
    compressed_lu: tuple

    @property
    def n_compress(self) -> int:
        return len(self.smooth) + int(sum(self.ranks))

    @property
    def n(self) -> int:
        return len(self.corner) + len(self.smooth)

    def solve(self, f: np.ndarray) -> np.ndarray:
        """Apply A0^-1 to a vector or block of columns."""
        f = np.asarray(f)
        q_c, q_s = corner_solve(self, f[self.corner], f[self.smooth])
        out = np.empty(f.shape, dtype=np.result_type(q_c, q_s))
        out[self.corner] = q_c
        out[self.smooth] = q_s
        return out


def corner_solve(cc: CornerCompression, f_c: np.ndarray, f_s: np.ndarray):
    """Solve the compressed system and reconstruct the corner unknowns.

    Returns:
        (q_c, q_s).
    """
    if len(cc.corner) == 0:
        return f_c.copy(), sla.lu_solve(cc.compressed_lu, f_s)
    y = cc.acc_solve(f_c)
    f_tilde = cc.DV @ y
    rhs = np.concatenate([f_tilde, f_s], axis=0)
    q = sla.lu_solve(cc.compressed_lu, rhs)
    r = len(f_tilde)
    q_tilde, q_s = q[:r], q[r:]
    q_c = y + cc.Ainv_U @ (cc.D @ q_tilde - f_tilde)
    return q_c, q_s


def _block_diag_solver(A: np.ndarray, groups: list[np.ndarray]) -> Solve:
    """Solver for the block-diagonal part of A over consecutive index groups."""
    offsets = np.cumsum([0] + [len(g) for g in groups])
    lus = [
        sla.lu_factor(A[start:stop, start:stop])
        for start, stop in zip(offsets[:-1], offsets[1:])
    ]

    def solve(f: np.ndarray) -> np.ndarray:
        out = np.empty(f.shape, dtype=np.result_type(f, A))
        for lu, start, stop in zip(lus, offsets[:-1], offsets[1:]):
            out[start:stop] = sla.lu_solve(lu, f[start:stop])
        return out

    return solve


def build_corner_compression(
    A0: np.ndarray,
    pan: Panelization,
    omega: float,
    epsilon: float,
    split: Optional[tuple[list[np.ndarray], np.ndarray]] = None,
    proxy_scale: float = 1.75,
    n_proxy: int = 100,
    block_diagonal: bool = False,
) -> CornerCompression:
    """Compress the corner rows and columns of A0 through per-corner proxy circles.

    Each corner gets a circle centered on the corner point with radius
    ``proxy_scale`` times the extent of its refined patch. A row ID of
    [A0[c, s_near] | proxy fluxes] gives U; a column ID of
    [A0[s_near, c]; proxy fields] gives V*. Both use the larger of the two
    ranks.

    Raises:
        ConfigError: If a corner's proxy circle reaches another corner's nodes.
        NumericalError: If V* A_cc^-1 U or the compressed system is singular.
    """
    corners, smooth = split if split is not None else corner_split(pan)
    if not corners:
        lu = sla.lu_factor(A0[np.ix_(smooth, smooth)])
        empty = np.zeros((0, 0))
        return CornerCompression(
            corner=np.zeros(0, dtype=int),
            smooth=smooth,
            ranks=(),
            U=empty,
            Vstar=empty,
            B_cs=np.zeros((0, len(smooth))),
            B_sc=np.zeros((len(smooth), 0)),
            acc_solve=lambda f: f,
            Ainv_U=empty,
            D=empty,
            DV=empty,
            compressed_lu=lu,
        )

    row_factors, col_factors = [], []
    for k, members in enumerate(corners):
        center = np.mean(pan.nodes[members], axis=0)
        if k < len(pan.corner_points):
            center = pan.corner_points[k]
        patch = float(np.max(np.hypot(*(pan.nodes[members] - center).T)))
        radius = proxy_scale * patch
        others = np.concatenate([c for j, c in enumerate(corners) if j != k] or [np.zeros(0, int)])
        if len(others) and np.min(np.hypot(*(pan.nodes[others] - center).T)) <= radius:
            raise ConfigError(
                "solver.corner_proxy_scale",
                f"proxy circle of corner {k} reaches another corner's refined nodes",
            )
        proxy = proxy_circle(center, radius, n_proxy)
        near = smooth[np.hypot(*(pan.nodes[smooth] - center).T) <= radius]

        rows = np.hstack(
            [
                A0[np.ix_(members, near)],
                _flux_proxy_columns(omega, pan.nodes[members], pan.normals[members], proxy),
            ]
        )
        field_rows = combined_field(
            omega,
            pan.nodes[members][None, :, :],
            proxy.points[:, None, :],
            proxy.normals[:, None, :],
        ) * (pan.weights[members] * proxy.weight)
        cols = np.vstack([A0[np.ix_(near, members)], field_rows])
        row_id = interp_decomp(rows, epsilon)
        col_id = interp_decomp(cols.T, epsilon)
        rank = max(row_id.rank, col_id.rank)
        if row_id.rank != rank:
            row_id = interp_decomp(rows, epsilon, rank=rank)
        if col_id.rank != rank:
            col_id = interp_decomp(cols.T, epsilon, rank=rank)
        logger.debug(
            f"Corner {k}: {len(members)} refined nodes, {len(near)} near smooth nodes, rank {rank}"
        )
        row_factors.append(row_id)
        col_factors.append(col_id)

    corner = np.concatenate(corners)
    ranks = tuple(f.rank for f in row_factors)
    U = sla.block_diag(*[f.P for f in row_factors])
    Vstar = sla.block_diag(*[f.P.T for f in col_factors])
    row_skel = np.concatenate([members[f.skeleton] for members, f in zip(corners, row_factors)])
    col_skel = np.concatenate([members[f.skeleton] for members, f in zip(corners, col_factors)])
    B_cs = A0[np.ix_(row_skel, smooth)]
    B_sc = A0[np.ix_(smooth, col_skel)]

    A_cc = A0[np.ix_(corner, corner)]
    if block_diagonal:
        acc_solve = _block_diag_solver(A_cc, corners)
    else:
        acc_lu = sla.lu_factor(A_cc)

        def acc_solve(f: np.ndarray) -> np.ndarray:
            return sla.lu_solve(acc_lu, f)

    Ainv_U = acc_solve(U)
    small = Vstar @ Ainv_U
    condition = float(np.linalg.cond(small))
    if not np.isfinite(condition) or condition > 1 / np.finfo(float).eps:
        raise NumericalError(
            f"V* A_cc^-1 U is singular (condition {condition:.2e})", condition=condition
        )
    D = np.linalg.inv(small)
    DV = D @ Vstar
    compressed = np.block([[D, B_cs], [B_sc, A0[np.ix_(smooth, smooth)]]])
    compressed_lu = sla.lu_factor(compressed)
    logger.info(
        f"Corner compression: {len(corner)} corner nodes -> ranks {list(ranks)}, "
        f"compressed size {len(smooth) + sum(ranks)}"
    )
    return CornerCompression(
        corner=corner,
        smooth=smooth,
        ranks=ranks,
        U=U,
        Vstar=Vstar,
        B_cs=B_cs,
        B_sc=B_sc,
        acc_solve=acc_solve,
        Ainv_U=Ainv_U,
        D=D,
        DV=DV,
        compressed_lu=compressed_lu,
    )
