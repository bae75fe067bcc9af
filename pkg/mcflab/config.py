"""
Experiment configuration.

Files are INI-style text with the sections ``[scenario]``, ``[flow]`` and
``[checks]``. ``configparser`` reads them and the pydantic models below
validate every value, fill documented defaults and reject unknown keys.
"""
from __future__ import annotations

import configparser
import hashlib
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mcflab import geometry
from mcflab.mcflab_common import Backend, ConfigError, FlowMode, Method, ScenarioKind

SECTIONS = ("scenario", "flow", "checks")


def _enum_choice(enum_type, label: str):
    """Before-validator giving 'unknown <label>' errors that list the valid values."""
    def check(value):
        if isinstance(value, enum_type):
            return value
        valid = [member.value for member in enum_type]
        text = str(value).strip()
        if text not in valid:
            raise ValueError(f"unknown {label} '{text}' (valid: {', '.join(valid)})")
        return enum_type(text)
    return check


class ScenarioSpec(BaseModel):
    """Recipe for the initial surface."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ScenarioKind
    backend: Backend = Backend.AXI
    n: int = 2
    resolution: int = 512
    radius: float = 1.0
    mode: int = 2
    order: int = 0
    amplitude: float = 0.0
    noise: float = 0.0
    neck_radius: float = 0.2
    bulb_radius: float = 1.0
    bulb_separation: float = 3.0
    semi_axes: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    _check_kind = field_validator("kind", mode="before")(_enum_choice(ScenarioKind, "kind"))
    _check_backend = field_validator("backend", mode="before")(_enum_choice(Backend, "backend"))

    @field_validator("semi_axes", mode="before")
    @classmethod
    def _split_axes(cls, value):
        if isinstance(value, str):
            return tuple(float(part) for part in value.split(","))
        return value

    @model_validator(mode="after")
    def _check_constructor(self) -> ScenarioSpec:
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.backend == Backend.MESH and self.n != 2:
            raise ValueError("mesh backend requires n = 2")
        minimum = geometry.MESH_MIN_RESOLUTION if self.backend == Backend.MESH else geometry.AXI_MIN_RESOLUTION
        if self.resolution < minimum:
            raise ValueError(f"resolution {self.resolution} below the {self.backend.value} minimum {minimum}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.kind == ScenarioKind.PERTURBED_SPHERE:
            if abs(self.amplitude) >= 0.5:
                raise ValueError("amplitude out of (-0.5, 0.5)")
            if self.mode < 2:
                raise ValueError("mode must be an integer >= 2")
        if self.kind == ScenarioKind.DUMBBELL:
            if self.backend != Backend.AXI:
                raise ValueError("dumbbell requires the axi backend")
            if not 0 < self.neck_radius < self.bulb_radius:
                raise ValueError("dumbbell needs 0 < neck_radius < bulb_radius")
        if self.kind == ScenarioKind.ELLIPSOID:
            if self.backend != Backend.MESH:
                raise ValueError("ellipsoid requires the mesh backend")
            if min(self.semi_axes) <= 0:
                raise ValueError("semi_axes must be positive")
        return self

    def build_surface(self) -> geometry.Hypersurface:
        """Construct the initial surface this scenario describes."""
        if self.kind == ScenarioKind.SPHERE:
            return geometry.build_sphere(self.backend, self.n, self.radius, self.resolution)
        if self.kind == ScenarioKind.PERTURBED_SPHERE:
            return geometry.build_perturbed_sphere(self.backend, self.n, self.radius, self.mode, self.amplitude,
                                                   self.resolution, order=self.order, noise=self.noise,
                                                   seed=self.seed)
        if self.kind == ScenarioKind.DUMBBELL:
            return geometry.build_dumbbell(self.n, self.neck_radius, self.bulb_radius, self.bulb_separation,
                                           self.resolution)
        return geometry.build_ellipsoid(*self.semi_axes, self.resolution)


class RemeshPolicy(BaseModel):
    """When and how to redistribute nodes."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    every: int = Field(0, ge=0)
    spacing_ratio: float = Field(3.0, gt=1.0)
    density_gain: float = Field(16.0, ge=0.0)
    target_edge: float = Field(0.0, ge=0.0)
    max_turn: float = Field(0.25, gt=0.0)
    cooldown: int = Field(10, ge=1)
    max_passes: int = Field(5, ge=1)


class FlowConfig(BaseModel):
    """Solver, stopping and experiment parameters."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: FlowMode = FlowMode.UNNORMALIZED
    method: Method = Method.AUTO
    cfl: float = 0.1
    stability_factor: float = Field(0.4, gt=0.0)
    explicit_stability: bool = True
    dt_min: float = Field(1e-12, gt=0.0)
    dt_max: float = Field(1e-2, gt=0.0)
    max_steps: int = Field(200000, ge=0)
    max_abs_A_stop: Optional[float] = Field(None, gt=0.0)
    area_stop_fraction: float = Field(0.01, gt=0.0, lt=1.0)
    steady_tol: float = Field(1e-4, gt=0.0)
    steady_steps: int = Field(50, ge=1)
    m_max: Optional[int] = Field(None, ge=0, le=3)
    snapshot_every: int = Field(0, ge=0)
    diagnostics_every: int = Field(1, ge=1)
    diameter_every: int = Field(1, ge=1)
    remesh_enabled: bool = True
    remesh_every: int = Field(0, ge=0)
    remesh_spacing_ratio: float = Field(3.0, gt=1.0)
    remesh_density_gain: float = Field(16.0, ge=0.0)
    remesh_target_edge: float = Field(0.0, ge=0.0)
    remesh_max_turn: float = Field(0.25, gt=0.0)
    remesh_cooldown: int = Field(10, ge=1)
    epsilon_knob: float = Field(0.05, gt=0.0)
    lambda0_knob: float = Field(1e3, gt=0.0)
    c0_knob: float = Field(1e2, gt=0.0)

    _check_mode = field_validator("mode", mode="before")(_enum_choice(FlowMode, "mode"))
    _check_method = field_validator("method", mode="before")(_enum_choice(Method, "method"))

    @field_validator("cfl")
    @classmethod
    def _cfl_range(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError("cfl out of (0,1]")
        return value

    @model_validator(mode="after")
    def _dt_order(self) -> FlowConfig:
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        return self

    def resolved_m_max(self, backend: Backend) -> int:
        if self.m_max is None:
            return 2 if backend == Backend.AXI else 1
        return min(self.m_max, 3 if backend == Backend.AXI else 1)

    def resolved_method(self, backend: Backend) -> Method:
        if self.method != Method.AUTO:
            return self.method
        return Method.EXPLICIT if backend == Backend.AXI else Method.SEMI_IMPLICIT

    def remesh_policy(self) -> RemeshPolicy:
        return RemeshPolicy(every=self.remesh_every, spacing_ratio=self.remesh_spacing_ratio,
                            density_gain=self.remesh_density_gain, target_edge=self.remesh_target_edge,
                            max_turn=self.remesh_max_turn, cooldown=self.remesh_cooldown)


class SlackPolicy(BaseModel):
    """
    Allowed increase of a monitored functional between consecutive records:
    relative·|previous| + absolute, plus the remesh drift logged on the newer record.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    relative: float = Field(0.0, ge=0.0)
    absolute: float = Field(0.0, ge=0.0)
    include_remesh_drift: bool = True

    def slack(self, previous: float, drift: float = 0.0) -> float:
        extra = abs(drift) * abs(previous) if self.include_remesh_drift else 0.0
        return self.relative * abs(previous) + self.absolute + extra


class ChecksConfig(BaseModel):
    """Slack coefficients and thresholds of the monitors and the inequality suite."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kato_slack_coeff: float = Field(10.0, ge=0.0)
    kato_slack_power: float = Field(2.0, ge=0.0)
    pinch_slack: float = Field(0.1, ge=0.0)
    zero_threshold: float = Field(1e-8, gt=0.0)
    monotone_relative_slack: float = Field(1e-3, ge=0.0)
    area_derivative_tolerance: float = Field(0.05, gt=0.0)
    h_blowup_slope: float = Field(0.5, gt=0.0)
    h_bounded_slope: float = Field(0.1, ge=0.0)
    typeI_factor: float = Field(3.0, gt=1.0)
    typeII_growth: float = Field(10.0, gt=1.0)
    battery_resolution_axi: int = Field(512, ge=geometry.AXI_MIN_RESOLUTION)
    battery_resolution_mesh: int = Field(2562, ge=geometry.MESH_MIN_RESOLUTION)

    def slack_policy(self) -> SlackPolicy:
        return SlackPolicy(relative=self.monotone_relative_slack, absolute=self.zero_threshold)


def _format_errors(section: str, error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(loc) for loc in item["loc"]) or "value"
        message = item["msg"].removeprefix("Value error, ")
        parts.append(f"[{section}] {key}: {message}")
    return "; ".join(parts)


def _read_sections(text: str, source: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"{source}: parse error at line {e.lineno}: expected a [section] header") from e
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ConfigError(f"{source}: parse error at line {lineno}: {line.strip()}") from e
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"{source}: parse error at line {e.lineno}: duplicate key '{e.option}'") from e
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"{source}: parse error at line {e.lineno}: duplicate section '{e.section}'") from e
    unknown = [name for name in parser.sections() if name not in SECTIONS]
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {', '.join(unknown)} (valid: {', '.join(SECTIONS)})")
    if not parser.has_section("scenario"):
        raise ConfigError(f"{source}: missing [scenario] section")
    return {name: dict(parser.items(name)) if parser.has_section(name) else {} for name in SECTIONS}


def parse_config_text(text: str, source: str = "<config>") -> tuple[ScenarioSpec, FlowConfig, ChecksConfig]:
    """Parse configuration text. See ``parse_config``."""
    sections = _read_sections(text, source)
    models = (("scenario", ScenarioSpec), ("flow", FlowConfig), ("checks", ChecksConfig))
    parsed = []
    for name, model in models:
        try:
            parsed.append(model.model_validate(sections[name]))
        except ValidationError as e:
            raise ConfigError(f"{source}: {_format_errors(name, e)}") from e
    return parsed[0], parsed[1], parsed[2]


def parse_config(path: Path) -> tuple[ScenarioSpec, FlowConfig, ChecksConfig]:
    """
    Read a configuration file.

    Args:
        path: INI-style file with [scenario], [flow] and [checks] sections

    Returns:
        The validated scenario, flow and checks models with defaults filled in.

    Raises:
        ConfigError: parse errors (with line number), unknown keys or sections,
            and constraint violations (with the key name).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    return parse_config_text(text, source=str(path))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def serialize_config(scenario: ScenarioSpec, flow: Optional[FlowConfig] = None,
                     checks: Optional[ChecksConfig] = None) -> str:
    """Canonical text form; ``parse_config_text`` of the result gives back equal models."""
    lines = []
    for name, model in (("scenario", scenario), ("flow", flow or FlowConfig()), ("checks", checks or ChecksConfig())):
        lines.append(f"[{name}]")
        for key in type(model).model_fields:
            value = getattr(model, key)
            if value is None:
                continue
            lines.append(f"{key} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(scenario: ScenarioSpec, flow: Optional[FlowConfig] = None,
                checks: Optional[ChecksConfig] = None) -> str:
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(serialize_config(scenario, flow, checks).encode("utf-8")).hexdigest()


def battery(n: int = 2, checks: Optional[ChecksConfig] = None) -> list[tuple[str, ScenarioSpec]]:
    """
    The frozen surface battery of the inequality suite: spheres at three radii,
    perturbed spheres at three amplitudes, a dumbbell (profiles in dimension n)
    and an ellipsoid mesh.
    """
    checks = checks or ChecksConfig()
    axi = checks.battery_resolution_axi
    members = [(f"sphere_R{radius:g}", ScenarioSpec(kind=ScenarioKind.SPHERE, n=n, radius=radius, resolution=axi))
               for radius in (0.5, 1.0, 2.0)]
    members += [(f"perturbed_d{amplitude:g}",
                 ScenarioSpec(kind=ScenarioKind.PERTURBED_SPHERE, n=n, amplitude=amplitude, resolution=axi))
                for amplitude in (0.01, 0.05, 0.1)]
    members.append(("dumbbell", ScenarioSpec(kind=ScenarioKind.DUMBBELL, n=n, resolution=axi)))
    members.append(("ellipsoid", ScenarioSpec(kind=ScenarioKind.ELLIPSOID, backend=Backend.MESH,
                                              semi_axes=(2.0, 1.0, 1.0),
                                              resolution=checks.battery_resolution_mesh)))
    return members


def sweep_values(text: str) -> list[float]:
    """Comma separated list of finite numbers; empty text gives an empty list."""
    values = [float(part) for part in text.split(",") if part.strip()]
    if not all(np.isfinite(values)):
        raise ConfigError(f"Sweep values must be finite: {text}")
    return values
