"""Pipeline configuration: one INI-style file drives every subcommand."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import ClusteringParams
from .gp_model import FitParams
from .representative import RepresentativeScheme, Ring
from .synth import SynthConfig


class ConfigError(ValueError):
    """Invalid or missing configuration value; message names the field."""


@dataclass
class IoConfig:
    trajectories: Path = Path("trajectories.csv")
    airport: Path = Path("airport.txt")
    phase: str = "departure"  # departure | approach | both
    max_altitude_m: float = 500.0


@dataclass
class ModelConfig:
    n_rbf: int = 17
    fit: FitParams = field(default_factory=FitParams)


@dataclass
class RepresentativeConfig:
    schemes: list[str] = field(default_factory=lambda: ["round"])
    steps: int = 100
    d_tau: float = 1e-4
    custom: RepresentativeScheme | None = None


@dataclass
class FootprintConfig:
    nx: int = 100
    ny: int = 100
    range_m: float = 300.0
    origin_east: float | None = None
    origin_north: float | None = None
    cell: float | None = None

    def explicit_grid(self) -> bool:
        return self.cell is not None


@dataclass
class OutputConfig:
    directory: Path = Path("out")
    plots: bool = True


@dataclass
class PipelineConfig:
    io: IoConfig = field(default_factory=IoConfig)
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    representative: RepresentativeConfig = field(default_factory=RepresentativeConfig)
    footprint: FootprintConfig = field(default_factory=FootprintConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)


def _get(parser: configparser.ConfigParser, section: str, key: str, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from None


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _parse_custom_scheme(parser: configparser.ConfigParser) -> RepresentativeScheme:
    dof = _get(parser, "representative", "custom_dof", int, None)
    raw = _get(parser, "representative", "custom_rings", str, None)
    if dof is None or raw is None:
        raise ConfigError("representative.custom_dof and custom_rings are required for the custom scheme")
    rings = []
    for chunk in raw.split("|"):
        parts = [p.strip() for p in chunk.strip().split(":")]
        if len(parts) != 4:
            raise ConfigError(
                f"representative.custom_rings: ring {chunk.strip()!r} must be radius:lower:upper:angles"
            )
        try:
            radius, lower, upper = float(parts[0]), float(parts[1]), float(parts[2])
            angles = [float(a) for a in parts[3].split(";") if a.strip()]
            rings.append(Ring(radius, lower, upper, angles))
        except ValueError as exc:
            raise ConfigError(f"representative.custom_rings: {exc}") from None
    try:
        return RepresentativeScheme("custom", dof, rings)
    except ValueError as exc:
        raise ConfigError(f"representative.custom_rings: {exc}") from None


def load_config(path: Path | str) -> PipelineConfig:
    """Load and validate the configuration file.

    Parameter bounds are checked here; input-file existence is checked by
    the subcommands that read them.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    base = path.parent

    def resolve(raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    io_cfg = IoConfig(
        trajectories=_get(parser, "io", "trajectories", resolve, IoConfig.trajectories),
        airport=_get(parser, "io", "airport", resolve, IoConfig.airport),
        phase=_get(parser, "io", "phase", str, IoConfig.phase).strip().lower(),
        max_altitude_m=_get(parser, "io", "max_altitude_m", float, IoConfig.max_altitude_m),
    )
    if io_cfg.phase not in ("departure", "approach", "both"):
        raise ConfigError(f"io.phase: must be departure, approach or both, got {io_cfg.phase!r}")
    if io_cfg.max_altitude_m <= 0:
        raise ConfigError("io.max_altitude_m: must be positive")

    try:
        clustering = ClusteringParams(
            resample_steps=_get(parser, "clustering", "resample_steps", int, 30),
            variance_retained=_get(parser, "clustering", "variance_retained", float, 0.95),
            eps=_get(parser, "clustering", "eps", float, 0.20),
            min_pts=_get(parser, "clustering", "min_pts", int, 5),
            min_cluster_size=_get(parser, "clustering", "min_cluster_size", int, 25),
        )
    except ValueError as exc:
        raise ConfigError(f"clustering: {exc}") from None

    n_rbf = _get(parser, "model", "n_rbf", int, 17)
    if n_rbf < 1:
        raise ConfigError("model.n_rbf: must be >= 1")
    try:
        fit = FitParams(
            prior_scale=_get(parser, "model", "prior_scale", float, 1e3),
            beta_init=_get(parser, "model", "beta_init", float, 1e3),
            tol=_get(parser, "model", "tol", float, 1e-3),
            max_iterations=_get(parser, "model", "max_iterations", int, 500),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None

    schemes_raw = _get(parser, "representative", "schemes", str, "round")
    schemes = [s.strip().lower() for s in schemes_raw.split(",") if s.strip()]
    if not schemes:
        raise ConfigError("representative.schemes: must name at least one scheme")
    for name in schemes:
        if name not in ("flat", "round", "custom"):
            raise ConfigError(f"representative.schemes: unknown scheme {name!r}")
    custom = _parse_custom_scheme(parser) if "custom" in schemes else None
    rep = RepresentativeConfig(
        schemes=schemes,
        steps=_get(parser, "representative", "steps", int, 100),
        d_tau=_get(parser, "representative", "d_tau", float, 1e-4),
        custom=custom,
    )
    if rep.steps < 2:
        raise ConfigError("representative.steps: must be >= 2")
    if not 0.0 < rep.d_tau <= 0.1:
        raise ConfigError("representative.d_tau: must lie in (0, 0.1]")

    fp = FootprintConfig(
        nx=_get(parser, "footprint", "nx", int, 100),
        ny=_get(parser, "footprint", "ny", int, 100),
        range_m=_get(parser, "footprint", "range_m", float, 300.0),
        origin_east=_get(parser, "footprint", "origin_east", float, None),
        origin_north=_get(parser, "footprint", "origin_north", float, None),
        cell=_get(parser, "footprint", "cell", float, None),
    )
    if fp.nx < 1 or fp.ny < 1:
        raise ConfigError("footprint.nx/ny: must be >= 1")
    if fp.range_m <= 0:
        raise ConfigError("footprint.range_m: must be positive")
    explicit = [fp.origin_east, fp.origin_north, fp.cell]
    if any(v is not None for v in explicit) and any(v is None for v in explicit):
        raise ConfigError("footprint: origin_east, origin_north and cell must be set together")
    if fp.cell is not None and fp.cell <= 0:
        raise ConfigError("footprint.cell: must be positive")

    out = OutputConfig(
        directory=_get(parser, "output", "directory", resolve, Path("out")),
        plots=_get(parser, "output", "plots", _bool, True),
    )

    synth = SynthConfig(
        n_corridors=_get(parser, "synth", "n_corridors", int, 4),
        per_corridor=_get(parser, "synth", "per_corridor", int, 200),
        n_outliers=_get(parser, "synth", "n_outliers", int, 30),
        corridor_length=_get(parser, "synth", "corridor_length", float, 12000.0),
        climb_altitude=_get(parser, "synth", "climb_altitude", float, 1200.0),
        lateral_sigma=_get(parser, "synth", "lateral_sigma", float, 150.0),
        vertical_sigma=_get(parser, "synth", "vertical_sigma", float, 60.0),
        beta=_get(parser, "synth", "beta", float, 4.0e4),
        seed=_get(parser, "synth", "seed", int, 0),
    )
    if synth.n_corridors < 1 or synth.per_corridor < 1:
        raise ConfigError("synth: n_corridors and per_corridor must be >= 1")
    if synth.n_outliers < 0:
        raise ConfigError("synth.n_outliers: must be >= 0")

    return PipelineConfig(io_cfg, clustering, ModelConfig(n_rbf, fit), rep, fp, out, synth)


def scheme_by_name(config: PipelineConfig, name: str) -> RepresentativeScheme:
    if name == "flat":
        return RepresentativeScheme.flat()
    if name == "round":
        return RepresentativeScheme.round()
    if name == "custom":
        if config.representative.custom is None:
            raise ConfigError("representative: custom scheme requested but not defined")
        return config.representative.custom
    raise ConfigError(f"unknown scheme {name!r}")
