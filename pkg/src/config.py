"""Configuration loader for grating scattering runs."""

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError

# Accepted spellings for solver modes and gradings, mapped to canonical names.
MODE_ALIASES = {
    "dense": "dense",
    "id-full": "id_full_circle",
    "id_full_circle": "id_full_circle",
    "id-half": "id_half_circle",
    "id_half_circle": "id_half_circle",
    "corner": "corner_compression",
    "corner_compression": "corner_compression",
}
GRADING_ALIASES = {
    "none": "none",
    "zero": "zero",
    "pi": "pi_over_d",
    "pi_over_d": "pi_over_d",
}
GEOMETRY_KINDS = ("cosine", "flat", "stair")
NEAR_EVAL_POLICIES = ("warn", "refuse", "ignore")
PROXY_KINDS = ("full_circle", "half_circle")


@dataclass(frozen=True)
class GeometryConfig:
    """Boundary curve and its discretization."""

    kind: str = "cosine"
    d: float = 1.0
    amplitude: float = 0.25  # cosine only
    step_height: Optional[float] = None  # stair only, defaults to d/2
    x_left: Optional[float] = None  # defaults to -d/2
    N_pan: int = 8
    N_ref: int = 0
    nodes_per_panel: int = 16

    @property
    def resolved_x_left(self) -> float:
        return -0.5 * self.d if self.x_left is None else self.x_left


@dataclass(frozen=True)
class CellConfig:
    """Unit cell collocation and proxy circle."""

    M_w: int = 240
    M: int = 60
    K: int = 20
    N_proxy: int = 160
    R_proxy: Optional[float] = None  # defaults to 2d
    wall_height: float = 1.0
    wall_panels: int = 1


@dataclass(frozen=True)
class SolverConfig:
    """Direct solver and compression settings."""

    mode: str = "dense"
    eps: float = 1e-13
    pinv_tol: float = 1e-13
    schur_residual_tol: float = 1e-6
    neighbor_proxy: str = "half_circle"  # corner_compression only; ID modes fix it by name
    neighbor_proxy_scale: float = 1.75
    corner_proxy_scale: float = 1.75
    n_proxy: int = 100
    corner_acc_block_diagonal: bool = False
    self_levels: int = 6
    adjacent_levels: int = 10
    near_eval: str = "warn"
    near_eval_factor: float = 2.0


@dataclass(frozen=True)
class FloquetConfig:
    """Frequency and Floquet-Bloch contour quadrature."""

    omega: float = 1.2
    kappa: Optional[complex] = None  # quasiperiodic runs; defaults to omega*cos(pi/5)
    N_kappa: int = 60
    grading: str = "none"
    b: float = 5.0
    contour_amplitude: float = 1.0
    workers: int = 1

    @property
    def resolved_kappa(self) -> complex:
        if self.kappa is None:
            return complex(self.omega * math.cos(math.pi / 5))
        return complex(self.kappa)


@dataclass(frozen=True)
class GridSpec:
    """Uniform evaluation grid; each axis is (min, max, count)."""

    x: tuple[float, float, int]
    y: tuple[float, float, int]


@dataclass(frozen=True)
class ProblemConfig:
    """Source, targets and validation probes."""

    x0: tuple[float, float] = (-0.2, 0.35)
    targets: tuple[tuple[float, float], ...] = ((0.3, 0.25),)
    grid: Optional[GridSpec] = None
    n_probes: int = 200
    repetitions: int = 3


@dataclass(frozen=True)
class OutputConfig:
    """Where and what to write."""

    out_dir: Path = Path("results")
    write_field: bool = True
    write_table: bool = True
    write_report: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Main configuration container."""

    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    cell: CellConfig = field(default_factory=CellConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    floquet: FloquetConfig = field(default_factory=FloquetConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def R_proxy(self) -> float:
        return 2.0 * self.geometry.d if self.cell.R_proxy is None else self.cell.R_proxy

    def with_overrides(
        self,
        *,
        mode: Optional[str] = None,
        grading: Optional[str] = None,
        b: Optional[float] = None,
        n_kappa: Optional[int] = None,
        workers: Optional[int] = None,
        out_dir: Optional[Path] = None,
        N_pan: Optional[int] = None,
        N_ref: Optional[int] = None,
    ) -> "RunConfig":
        """Return a validated copy with command-line overrides applied."""
        solver = self.solver
        if mode is not None:
            solver = replace(solver, mode=_canonical(mode, MODE_ALIASES, "solver.mode"))
        floquet = self.floquet
        if grading is not None:
            floquet = replace(
                floquet, grading=_canonical(grading, GRADING_ALIASES, "floquet.grading")
            )
        if b is not None:
            floquet = replace(floquet, b=float(b))
        if n_kappa is not None:
            floquet = replace(floquet, N_kappa=int(n_kappa))
        if workers is not None:
            floquet = replace(floquet, workers=int(workers))
        geometry = self.geometry
        if N_pan is not None:
            geometry = replace(geometry, N_pan=int(N_pan))
        if N_ref is not None:
            geometry = replace(geometry, N_ref=int(N_ref))
        output = self.output if out_dir is None else replace(self.output, out_dir=Path(out_dir))
        updated = replace(
            self, solver=solver, floquet=floquet, geometry=geometry, output=output
        )
        updated.validate()
        return updated

    def validate(self) -> None:
        """Check ranges and combinations that do not need the geometry built.

        Raises:
            ConfigError: With the dotted path of the first offending field.
        """
        g = self.geometry
        _check(g.kind in GEOMETRY_KINDS, "geometry.kind", f"must be one of {GEOMETRY_KINDS}")
        _check(g.d > 0, "geometry.d", "period must be positive")
        _check(g.amplitude >= 0, "geometry.amplitude", "must be non-negative")
        _check(
            g.step_height is None or g.step_height > 0,
            "geometry.step_height",
            "must be positive",
        )
        _check(g.N_pan >= 2, "geometry.N_pan", "need at least 2 panels")
        _check(g.N_ref >= 0, "geometry.N_ref", "must be non-negative")
        _check(g.nodes_per_panel >= 2, "geometry.nodes_per_panel", "must be at least 2")
        if g.kind == "stair":
            _check(g.N_pan % 2 == 0, "geometry.N_pan", "must be even for the stair geometry")
            _check(
                g.N_ref == 0 or g.N_pan >= 4,
                "geometry.N_pan",
                "corner refinement needs at least 2 panels per segment",
            )
        else:
            _check(g.N_ref == 0, "geometry.N_ref", "smooth curves take no corner refinement")

        c = self.cell
        _check(c.M_w >= 2 and c.M_w % 2 == 0, "cell.M_w", "must be a positive even number")
        _check(c.M >= 1, "cell.M", "must be positive")
        _check(c.K >= 0, "cell.K", "must be non-negative")
        _check(c.N_proxy >= 1, "cell.N_proxy", "must be positive")
        _check(self.R_proxy > 0, "cell.R_proxy", "must be positive")
        _check(c.wall_height > 0, "cell.wall_height", "must be positive")
        _check(
            c.wall_panels >= 1 and (c.M_w // 2) % c.wall_panels == 0,
            "cell.wall_panels",
            "must divide the per-wall node count",
        )

        s = self.solver
        _check(s.mode in MODE_ALIASES.values(), "solver.mode", "unknown solver mode")
        _check(0 < s.eps < 1, "solver.eps", "must lie in (0, 1)")
        _check(0 < s.pinv_tol < 1, "solver.pinv_tol", "must lie in (0, 1)")
        _check(s.schur_residual_tol > 0, "solver.schur_residual_tol", "must be positive")
        _check(
            s.neighbor_proxy in PROXY_KINDS,
            "solver.neighbor_proxy",
            f"must be one of {PROXY_KINDS}",
        )
        _check(s.neighbor_proxy_scale > 1, "solver.neighbor_proxy_scale", "must exceed 1")
        _check(s.corner_proxy_scale > 1, "solver.corner_proxy_scale", "must exceed 1")
        _check(s.n_proxy >= 4, "solver.n_proxy", "must be at least 4")
        _check(s.self_levels >= 0, "solver.self_levels", "must be non-negative")
        _check(s.adjacent_levels >= 0, "solver.adjacent_levels", "must be non-negative")
        _check(
            s.near_eval in NEAR_EVAL_POLICIES,
            "solver.near_eval",
            f"must be one of {NEAR_EVAL_POLICIES}",
        )
        _check(s.near_eval_factor >= 0, "solver.near_eval_factor", "must be non-negative")

        f = self.floquet
        _check(f.omega > 0, "floquet.omega", "must be positive")
        _check(f.N_kappa >= 2, "floquet.N_kappa", "need at least 2 nodes")
        _check(f.grading in GRADING_ALIASES.values(), "floquet.grading", "unknown grading")
        _check(f.b >= 0, "floquet.b", "must be non-negative")
        _check(
            f.grading == "none" or f.N_kappa % 2 == 0,
            "floquet.N_kappa",
            "graded quadrature needs an even node count",
        )
        _check(f.contour_amplitude >= 0, "floquet.contour_amplitude", "must be non-negative")
        _check(f.workers >= 1, "floquet.workers", "must be at least 1")

        p = self.problem
        _check(len(p.targets) >= 1, "problem.targets", "need at least one target")
        _check(p.n_probes >= 1, "problem.n_probes", "must be positive")
        _check(p.repetitions >= 1, "problem.repetitions", "must be positive")
        if p.grid is not None:
            _check(p.grid.x[2] >= 1 and p.grid.y[2] >= 1, "problem.grid", "counts must be positive")

    def to_dict(self) -> dict[str, Any]:
        """Plain-data echo of the configuration (for reports)."""
        return _plain(asdict(self))


def load_config(config_path: Optional[Path] = None) -> RunConfig:
    """Load configuration from YAML file.

    Args:
        config_path: Path to config file. Defaults to config.yaml in project root.

    Returns:
        Parsed and validated configuration object.

    Raises:
        FileNotFoundError: If config file doesn't exist.
        ConfigError: If config is invalid.
    """
    if config_path is None:
        config_path = Path(__file__).parent.parent / "config.yaml"

    if not config_path.exists():
        raise FileNotFoundError(
            f"Config file not found: {config_path}\n"
            "Copy config.example.yaml to config.yaml and adjust it."
        )

    with open(config_path) as f:
        data = yaml.safe_load(f)

    return config_from_dict(data or {})


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    """Build and validate a RunConfig from parsed YAML data."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping of sections")
    sections = {"geometry", "cell", "solver", "floquet", "problem", "output"}
    for name in data:
        _check(name in sections, str(name), "unknown config section")

    geometry_data = _section(data, "geometry", GeometryConfig)
    geometry = GeometryConfig(
        kind=_get(geometry_data, "geometry", "kind", str, "cosine"),
        d=_get(geometry_data, "geometry", "d", float, 1.0),
        amplitude=_get(geometry_data, "geometry", "amplitude", float, 0.25),
        step_height=_get(geometry_data, "geometry", "step_height", float, None),
        x_left=_get(geometry_data, "geometry", "x_left", float, None),
        N_pan=_get(geometry_data, "geometry", "N_pan", int, 8),
        N_ref=_get(geometry_data, "geometry", "N_ref", int, 0),
        nodes_per_panel=_get(geometry_data, "geometry", "nodes_per_panel", int, 16),
    )

    cell_data = _section(data, "cell", CellConfig)
    cell = CellConfig(
        M_w=_get(cell_data, "cell", "M_w", int, 240),
        M=_get(cell_data, "cell", "M", int, 60),
        K=_get(cell_data, "cell", "K", int, 20),
        N_proxy=_get(cell_data, "cell", "N_proxy", int, 160),
        R_proxy=_get(cell_data, "cell", "R_proxy", float, None),
        wall_height=_get(cell_data, "cell", "wall_height", float, 1.0),
        wall_panels=_get(cell_data, "cell", "wall_panels", int, 1),
    )

    solver_data = _section(data, "solver", SolverConfig)
    defaults = SolverConfig()
    solver = SolverConfig(
        mode=_canonical(
            _get(solver_data, "solver", "mode", str, defaults.mode), MODE_ALIASES, "solver.mode"
        ),
        eps=_get(solver_data, "solver", "eps", float, defaults.eps),
        pinv_tol=_get(solver_data, "solver", "pinv_tol", float, defaults.pinv_tol),
        schur_residual_tol=_get(
            solver_data, "solver", "schur_residual_tol", float, defaults.schur_residual_tol
        ),
        neighbor_proxy=_get(
            solver_data, "solver", "neighbor_proxy", str, defaults.neighbor_proxy
        ),
        neighbor_proxy_scale=_get(
            solver_data, "solver", "neighbor_proxy_scale", float, defaults.neighbor_proxy_scale
        ),
        corner_proxy_scale=_get(
            solver_data, "solver", "corner_proxy_scale", float, defaults.corner_proxy_scale
        ),
        n_proxy=_get(solver_data, "solver", "n_proxy", int, defaults.n_proxy),
        corner_acc_block_diagonal=_get(
            solver_data, "solver", "corner_acc_block_diagonal", bool, False
        ),
        self_levels=_get(solver_data, "solver", "self_levels", int, defaults.self_levels),
        adjacent_levels=_get(
            solver_data, "solver", "adjacent_levels", int, defaults.adjacent_levels
        ),
        near_eval=_get(solver_data, "solver", "near_eval", str, defaults.near_eval),
        near_eval_factor=_get(
            solver_data, "solver", "near_eval_factor", float, defaults.near_eval_factor
        ),
    )

    floquet_data = _section(data, "floquet", FloquetConfig)
    floquet = FloquetConfig(
        omega=_get(floquet_data, "floquet", "omega", float, 1.2),
        kappa=_get(floquet_data, "floquet", "kappa", complex, None),
        N_kappa=_get(floquet_data, "floquet", "N_kappa", int, 60),
        grading=_canonical(
            _get(floquet_data, "floquet", "grading", str, "none"),
            GRADING_ALIASES,
            "floquet.grading",
        ),
        b=_get(floquet_data, "floquet", "b", float, 5.0),
        contour_amplitude=_get(floquet_data, "floquet", "contour_amplitude", float, 1.0),
        workers=_get(floquet_data, "floquet", "workers", int, 1),
    )

    problem_data = _section(data, "problem", ProblemConfig)
    problem = ProblemConfig(
        x0=_point(problem_data.get("x0", (-0.2, 0.35)), "problem.x0"),
        targets=tuple(
            _point(p, f"problem.targets[{i}]")
            for i, p in enumerate(problem_data.get("targets", [(0.3, 0.25)]))
        ),
        grid=_grid(problem_data.get("grid")),
        n_probes=_get(problem_data, "problem", "n_probes", int, 200),
        repetitions=_get(problem_data, "problem", "repetitions", int, 3),
    )

    output_data = _section(data, "output", OutputConfig)
    output = OutputConfig(
        out_dir=Path(_get(output_data, "output", "out_dir", str, "results")),
        write_field=_get(output_data, "output", "write_field", bool, True),
        write_table=_get(output_data, "output", "write_table", bool, True),
        write_report=_get(output_data, "output", "write_report", bool, True),
    )

    config = RunConfig(
        geometry=geometry,
        cell=cell,
        solver=solver,
        floquet=floquet,
        problem=problem,
        output=output,
    )
    config.validate()
    return config


def _check(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(path, message)


def _canonical(value: str, aliases: dict[str, str], path: str) -> str:
    try:
        return aliases[value]
    except KeyError:
        raise ConfigError(path, f"unknown value {value!r}; choose from {sorted(aliases)}")


def _section(data: dict, name: str, cls: type) -> dict:
    section = data.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(name, "section must be a mapping")
    known = set(cls.__dataclass_fields__)
    for key in section:
        _check(key in known, f"{name}.{key}", "unknown config key")
    return section


def _get(section: dict, name: str, key: str, kind: type, default: Any) -> Any:
    if key not in section or section[key] is None:
        return default
    value = section[key]
    path = f"{name}.{key}"
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            return int(value)
        if kind is complex and isinstance(value, str):
            return complex(value.replace(" ", ""))
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected {kind.__name__}, got {value!r}")


def _point(value: Any, path: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a point [x, y], got {value!r}")
    return (x, y)


def _grid(value: Any) -> Optional[GridSpec]:
    if value is None:
        return None
    if not isinstance(value, dict) or set(value) != {"x", "y"}:
        raise ConfigError("problem.grid", "expected a mapping with keys x and y")
    axes = []
    for axis in ("x", "y"):
        try:
            lo, hi, count = value[axis]
            axes.append((float(lo), float(hi), int(count)))
        except (TypeError, ValueError):
            raise ConfigError(f"problem.grid.{axis}", "expected [min, max, count]")
    return GridSpec(x=axes[0], y=axes[1])


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, Path):
        return str(value)
    return value
