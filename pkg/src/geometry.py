"""Periodic boundary curves, panel discretization and the unit-cell frame."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .config import CellConfig, GeometryConfig
from .errors import ConfigError
from .quadrature import composite_gauss, dyadic_breaks

logger = logging.getLogger(__name__)

PointFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoundaryCurve:
    """One period of an x-periodic curve, parameterized over [t_start, t_end].

    ``position_fn`` and ``velocity_fn`` only need to be valid on one parameter
    period; ``position`` extends them periodically with a shift of (d, 0) per
    period. Parameters listed in ``corner_params`` are tangent discontinuities
    and always become panel breakpoints.
    """

    kind: str
    period: float
    t_start: float
    t_end: float
    position_fn: PointFn
    velocity_fn: PointFn
    corner_params: tuple[float, ...] = ()
    shape: dict = field(default_factory=dict)

    @classmethod
    def from_callables(
        cls,
        position: PointFn,
        velocity: PointFn,
        period: float,
        t_start: float,
        t_end: float,
        corner_params: Sequence[float] = (),
    ) -> "BoundaryCurve":
        """User-defined parametric curve; x must increase along the parameter."""
        return cls(
            kind="user",
            period=period,
            t_start=t_start,
            t_end=t_end,
            position_fn=position,
            velocity_fn=velocity,
            corner_params=tuple(sorted(corner_params)),
        )

    @property
    def param_period(self) -> float:
        return self.t_end - self.t_start

    @property
    def x_left(self) -> float:
        return float(self.position_fn(np.array([self.t_start]))[0, 0])

    @property
    def is_smooth(self) -> bool:
        return not self.corner_params

    @property
    def segment_breaks(self) -> np.ndarray:
        """Parameter breakpoints splitting the period into smooth segments."""
        inner = [t for t in self.corner_params if self.t_start < t < self.t_end]
        return np.array([self.t_start, *inner, self.t_end])

    def _wrap(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        shift = np.floor((t - self.t_start) / self.param_period)
        # keep the closing endpoint on this period
        shift = np.where(np.isclose(t, self.t_end) & (shift == 1), 0.0, shift)
        return t - shift * self.param_period, shift

    def position(self, t) -> np.ndarray:
        local, shift = self._wrap(t)
        points = self.position_fn(np.atleast_1d(local)).reshape(local.shape + (2,))
        return points + np.stack([shift * self.period, np.zeros_like(shift)], axis=-1)

    def velocity(self, t) -> np.ndarray:
        local, _ = self._wrap(t)
        return self.velocity_fn(np.atleast_1d(local)).reshape(local.shape + (2,))

    def speed(self, t) -> np.ndarray:
        v = self.velocity(t)
        return np.hypot(v[..., 0], v[..., 1])

    def normal(self, t) -> np.ndarray:
        """Unit normal: the unit tangent rotated by +90 degrees (points up)."""
        v = self.velocity(t)
        s = np.hypot(v[..., 0], v[..., 1])
        return np.stack([-v[..., 1] / s, v[..., 0] / s], axis=-1)

    def height(self, x, samples_per_segment: int = 2048) -> np.ndarray:
        """Boundary ordinate above abscissa x (curve must be a graph in x)."""
        breaks = self.segment_breaks
        t = np.unique(
            np.concatenate(
                [np.linspace(a, b, samples_per_segment) for a, b in zip(breaks[:-1], breaks[1:])]
            )
        )
        pts = self.position(t)
        x = np.asarray(x, dtype=float)
        x0 = self.x_left
        local = x0 + np.mod(x - x0, self.period)
        return np.interp(local, pts[:, 0], pts[:, 1])


def cosine_curve(period: float = 1.0, amplitude: float = 0.25, x_left: Optional[float] = None):
    """y = A cos(2 pi x / d), parameterized by x over [x_left, x_left + d]."""
    x_left = -0.5 * period if x_left is None else x_left
    wave = 2 * np.pi / period

    def position(t):
        return np.stack([t, amplitude * np.cos(wave * t)], axis=-1)

    def velocity(t):
        return np.stack([np.ones_like(t), -amplitude * wave * np.sin(wave * t)], axis=-1)

    kind = "flat" if amplitude == 0 else "cosine"
    return BoundaryCurve(
        kind=kind,
        period=period,
        t_start=x_left,
        t_end=x_left + period,
        position_fn=position,
        velocity_fn=velocity,
        shape={"amplitude": amplitude},
    )


def flat_curve(period: float = 1.0, x_left: Optional[float] = None) -> BoundaryCurve:
    """The line y = 0."""
    return cosine_curve(period=period, amplitude=0.0, x_left=x_left)


def stair_curve(
    period: float = 1.0, step_height: Optional[float] = None, x_left: Optional[float] = None
) -> BoundaryCurve:
    """Triangular staircase: a rise then a fall, one corner inside the period.

    The parameter runs over [0, 2]: t in [0, 1] climbs from (x_left, 0) to the
    apex (x_left + d/2, h); t in [1, 2] descends to (x_left + d, 0). The period
    ends are the two half corners.
    """
    x_left = -0.5 * period if x_left is None else x_left
    h = 0.5 * period if step_height is None else step_height
    p0 = np.array([x_left, 0.0])
    p1 = np.array([x_left + 0.5 * period, h])
    p2 = np.array([x_left + period, 0.0])

    def position(t):
        t = t[..., None]
        return np.where(t <= 1.0, p0 + t * (p1 - p0), p1 + (t - 1.0) * (p2 - p1))

    def velocity(t):
        t = t[..., None]
        return np.where(t < 1.0, p1 - p0, p2 - p1) * np.ones_like(t)

    return BoundaryCurve(
        kind="stair",
        period=period,
        t_start=0.0,
        t_end=2.0,
        position_fn=position,
        velocity_fn=velocity,
        corner_params=(0.0, 1.0, 2.0),
        shape={"step_height": h},
    )


def curve_from_config(config: GeometryConfig) -> BoundaryCurve:
    """Build the configured boundary curve."""
    x_left = config.resolved_x_left
    if config.kind == "cosine":
        return cosine_curve(config.d, config.amplitude, x_left)
    if config.kind == "flat":
        return flat_curve(config.d, x_left)
    if config.kind == "stair":
        return stair_curve(config.d, config.step_height, x_left)
    raise ConfigError("geometry.kind", f"unknown geometry kind {config.kind!r}")


class NodeSource(Protocol):
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray


@dataclass(frozen=True)
class NodeSet:
    """Quadrature nodes with weights and normals."""

    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray


@dataclass(frozen=True)
class Panelization:
    """Composite Gauss-Legendre discretization of one period of a curve.

    Node ordering is contiguous per panel and panels follow the parameter.
    ``weights`` include the arclength speed.
    """

    curve: BoundaryCurve
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    params: np.ndarray
    panel_index: np.ndarray
    panel_bounds: np.ndarray
    corner_sets: tuple[np.ndarray, ...]
    corner_points: np.ndarray
    n_pan: int
    n_ref: int
    nodes_per_panel: int

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def n_panels(self) -> int:
        return len(self.panel_bounds)

    @property
    def period(self) -> float:
        return self.curve.period

    def panel_slice(self, p: int) -> slice:
        q = self.nodes_per_panel
        return slice(p * q, (p + 1) * q)

    @property
    def panel_lengths(self) -> np.ndarray:
        return self.weights.reshape(self.n_panels, self.nodes_per_panel).sum(axis=1)

    @property
    def arclength(self) -> float:
        return float(self.weights.sum())

    def as_node_set(self) -> NodeSet:
        return NodeSet(self.nodes, self.weights, self.normals)


def build_panelization(
    curve: BoundaryCurve, N_pan: int, N_ref: int = 0, nodes_per_panel: int = 16
) -> Panelization:
    """Split one period into panels, refining dyadically toward every corner.

    The N_pan base panels are shared evenly between the smooth segments. The
    panel touching a corner is halved N_ref times toward it, adding N_ref panels
    per corner-adjacent segment end.

    Args:
        curve: Boundary curve.
        N_pan: Number of base panels.
        N_ref: Dyadic refinement levels per corner.
        nodes_per_panel: Gauss-Legendre order on each panel.

    Returns:
        The panelization.

    Raises:
        ConfigError: For invalid panel/refinement combinations.
    """
    breaks = curve.segment_breaks
    n_seg = len(breaks) - 1
    if N_pan < 2:
        raise ConfigError("geometry.N_pan", "need at least 2 panels")
    if N_pan % n_seg:
        raise ConfigError(
            "geometry.N_pan", f"must be a multiple of the {n_seg} smooth segments"
        )
    if N_ref < 0:
        raise ConfigError("geometry.N_ref", "must be non-negative")
    if N_ref > 0 and curve.is_smooth:
        raise ConfigError("geometry.N_ref", "smooth curves take no corner refinement")
    per_seg = N_pan // n_seg
    if N_ref > 0 and per_seg < 2:
        raise ConfigError(
            "geometry.N_pan", "corner refinement needs at least 2 panels per segment"
        )
    corners = np.asarray(curve.corner_params, dtype=float)

    def is_corner(t: float) -> bool:
        return bool(corners.size) and bool(np.any(np.isclose(corners, t)))

    panel_breaks: list[float] = []
    # panel ranges (first, last) of the refined panels at each segment end
    refined: list[tuple[float, list[int]]] = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        base = np.linspace(a, b, per_seg + 1)
        seg = list(base[:-1])
        first = len(panel_breaks)
        if N_ref > 0 and is_corner(a):
            head = dyadic_breaks(base[0], base[1], N_ref, "left")
            seg = list(head[:-1]) + seg[1:]
            refined.append((a, list(range(first, first + N_ref))))
        if N_ref > 0 and is_corner(b):
            tail = dyadic_breaks(base[-2], base[-1], N_ref, "right")
            seg = seg[:-1] + list(tail[:-1])
            last = first + len(seg)
            refined.append((b, list(range(last - N_ref, last))))
        panel_breaks.extend(seg)
    panel_breaks.append(float(breaks[-1]))
    edges = np.asarray(panel_breaks)
    bounds = np.stack([edges[:-1], edges[1:]], axis=1)

    params, pweights = composite_gauss(edges, nodes_per_panel)
    nodes = curve.position(params)
    speed = curve.speed(params)
    normals = curve.normal(params)
    panel_index = np.repeat(np.arange(len(bounds)), nodes_per_panel)

    corner_sets, corner_points = _group_corners(curve, refined, nodes_per_panel)
    pan = Panelization(
        curve=curve,
        nodes=nodes,
        weights=pweights * speed,
        normals=normals,
        params=params,
        panel_index=panel_index,
        panel_bounds=bounds,
        corner_sets=corner_sets,
        corner_points=corner_points,
        n_pan=N_pan,
        n_ref=N_ref,
        nodes_per_panel=nodes_per_panel,
    )
    for arr in (pan.nodes, pan.weights, pan.normals, pan.params, pan.panel_index):
        arr.setflags(write=False)
    logger.debug(
        f"Panelized {curve.kind} curve: {pan.n_panels} panels, {pan.n} nodes, "
        f"{len(corner_sets)} corner sets"
    )
    return pan


def _group_corners(curve: BoundaryCurve, refined, q: int):
    """Collect node indices of refined panels per corner, in parameter order."""
    groups: dict[float, list[int]] = {}
    for t, panels in refined:
        groups.setdefault(float(t), []).extend(panels)
    sets = []
    points = []
    for t in sorted(groups):
        panels = sorted(groups[t])
        sets.append(np.concatenate([np.arange(p * q, (p + 1) * q) for p in panels]))
        points.append(curve.position(np.array([t]))[0])
    corner_points = np.array(points) if points else np.zeros((0, 2))
    return tuple(sets), corner_points


def shifted_copy(source: NodeSource, l: int, period: Optional[float] = None) -> NodeSet:
    """Nodes translated by l periods in x; weights and normals unchanged.

    Args:
        source: A Panelization or NodeSet.
        l: Copy index, -1, 0 or 1.
        period: Required when ``source`` is a bare NodeSet.
    """
    if l not in (-1, 0, 1):
        raise ValueError(f"copy index must be -1, 0 or 1, got {l}")
    d = period if period is not None else source.period
    nodes = source.nodes + np.array([l * d, 0.0])
    return NodeSet(nodes=nodes, weights=source.weights, normals=source.normals)


@dataclass(frozen=True)
class UnitCell:
    """Walls, top line and proxy circle of the periodized problem."""

    x_left: float
    x_right: float
    y_bottom: float
    y_top: float
    wall_y: np.ndarray
    wall_weights: np.ndarray
    top_x: np.ndarray
    proxy_center: np.ndarray
    proxy_radius: float
    proxy_points: np.ndarray
    proxy_normals: np.ndarray
    proxy_weight: float

    @property
    def period(self) -> float:
        return self.x_right - self.x_left

    @property
    def left_nodes(self) -> np.ndarray:
        return np.stack([np.full_like(self.wall_y, self.x_left), self.wall_y], axis=-1)

    @property
    def right_nodes(self) -> np.ndarray:
        return np.stack([np.full_like(self.wall_y, self.x_right), self.wall_y], axis=-1)

    @property
    def top_nodes(self) -> np.ndarray:
        return np.stack([self.top_x, np.full_like(self.top_x, self.y_top)], axis=-1)

    @property
    def M_w(self) -> int:
        return 2 * len(self.wall_y)

    @property
    def M(self) -> int:
        return len(self.top_x)

    @property
    def N_proxy(self) -> int:
        return len(self.proxy_points)


def build_unit_cell(
    curve: BoundaryCurve, config: CellConfig, R_proxy: Optional[float] = None
) -> UnitCell:
    """Frame one period of ``curve`` with walls, a top line and a proxy circle.

    Walls rise ``config.wall_height`` from the boundary point at x_left; both
    walls carry the same Gauss-Legendre ordinates. Top nodes are uniform
    midpoints. The proxy circle is centered on the cell.

    Raises:
        ConfigError: If the top is not above the boundary, or the proxy circle
            does not strictly enclose the three copies of one period.
    """
    d = curve.period
    x_left = curve.x_left
    x_right = x_left + d
    y_bottom = float(curve.position(np.array([curve.t_start]))[0, 1])
    y_top = y_bottom + config.wall_height
    per_wall = config.M_w // 2
    if config.M_w % 2 or per_wall < 1:
        raise ConfigError("cell.M_w", "must be a positive even number")
    if per_wall % config.wall_panels:
        raise ConfigError("cell.wall_panels", "must divide the per-wall node count")

    wall_breaks = np.linspace(y_bottom, y_top, config.wall_panels + 1)
    wall_y, wall_w = composite_gauss(wall_breaks, per_wall // config.wall_panels)
    top_x = x_left + (np.arange(config.M) + 0.5) * d / config.M

    samples = _curve_samples(curve)
    if np.max(samples[:, 1]) >= y_top:
        raise ConfigError("cell.wall_height", "top of the unit cell must lie above the boundary")

    radius = 2.0 * d if R_proxy is None else float(R_proxy)
    center = np.array([x_left + 0.5 * d, 0.5 * (y_bottom + y_top)])
    theta = 2 * np.pi * np.arange(config.N_proxy) / config.N_proxy
    directions = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    proxy_points = center + radius * directions

    copies = np.concatenate([samples + np.array([l * d, 0.0]) for l in (-1, 0, 1)])
    farthest = float(np.max(np.hypot(*(copies - center).T)))
    if farthest >= radius:
        raise ConfigError(
            "cell.R_proxy",
            f"proxy circle fails enclosure (radius {radius:.4g} <= boundary extent {farthest:.4g})",
        )
    if not 1.5 * d <= radius <= 2.0 * d:
        logger.warning(f"Proxy radius {radius:.4g} outside the recommended range [1.5d, 2d]")

    return UnitCell(
        x_left=x_left,
        x_right=x_right,
        y_bottom=y_bottom,
        y_top=y_top,
        wall_y=wall_y,
        wall_weights=wall_w,
        top_x=top_x,
        proxy_center=center,
        proxy_radius=radius,
        proxy_points=proxy_points,
        proxy_normals=directions,
        proxy_weight=2 * np.pi * radius / config.N_proxy,
    )


def _curve_samples(curve: BoundaryCurve, per_segment: int = 512) -> np.ndarray:
    breaks = curve.segment_breaks
    t = np.concatenate(
        [np.linspace(a, b, per_segment) for a, b in zip(breaks[:-1], breaks[1:])]
    )
    return curve.position(t)


def points_above_boundary(curve: BoundaryCurve, points) -> np.ndarray:
    """Boolean mask of points strictly above the boundary (inside the fluid)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return points[:, 1] > curve.height(points[:, 0])
