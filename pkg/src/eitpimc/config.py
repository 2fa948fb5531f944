"""Run configurations in INI form.

Example::

    [domain]
    electrodes = 8
    cap_radius = 0.2
    contact_impedance = 0.5
    anomaly_radius = 0.0
    anomaly_center = 0, 0, 0

    [data]
    preset = cos4theta

    [solver]
    n_paths = 200000
    max_boundary_events = 2500
    epsilon = 0.01
    delta_x = 0.005
    seed = 12345
    robin_mode = survival
    workers = 0

    [bem]
    depth = 4

    [output]
    format = table

Presets for ``[data] preset``:

* ``cos4theta``: ``cos 4θ`` with ``θ`` the polar angle from +z;
* ``cos4theta-yz``: ``cos 4θ`` with ``θ = atan2(y, z)``;
* ``constant:V``: the constant ``V`` on every electrode;
* ``zero``: all data zero;
* oracle cases, which also replace the domain: ``dirichlet:<harmonic>``,
  ``robin-sphere:<degree>:<z>`` and ``annulus:<r0>:<g>``, with the
  shorthands ``dirichlet``, ``robin-sphere`` and ``annulus``.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .bem.mesh import MeshParams
from .bem.solver import QuadratureOptions
from .boundary_data import BoundaryData, Field
from .geometry import DomainSpec, default_electrodes
from .oracle import OracleCase, annulus_radial_case, dirichlet_polynomial_case, robin_sphere_case
from .stochastic import WalkParams

__all__ = [
    "BemConfig",
    "ConfigError",
    "DataConfig",
    "DomainConfig",
    "OutputConfig",
    "RunConfig",
    "SolverConfig",
    "ORACLE_SHORTHANDS",
]

ORACLE_SHORTHANDS = {
    "dirichlet": "dirichlet:x2-y2",
    "robin-sphere": "robin-sphere:1:0.5",
    "annulus": "annulus:0.5:1",
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending ``section.key``."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _vector(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class DomainConfig:
    electrodes: int = 8
    cap_radius: float = 0.2
    contact_impedance: float = 0.5
    anomaly_radius: float = 0.0
    anomaly_center: tuple[float, ...] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DataConfig:
    preset: str = "cos4theta"


@dataclass(frozen=True)
class SolverConfig:
    n_paths: int = 200_000
    max_boundary_events: int = 2500
    epsilon: float = 0.01
    delta_x: float = 0.005
    seed: int = 12345
    robin_mode: str = "survival"
    local_time_scale: float = 0.0
    point: tuple[float, ...] = (0.0, 0.0, 0.0)
    workers: int = 0


@dataclass(frozen=True)
class BemConfig:
    depth: int = 4
    r1: float = 0.12
    r2: float = 0.26
    r_ext: float = 0.3
    rings: tuple[int, ...] = (20, 16, 16, 9)
    alpha: float = 0.75
    sectors: int = 120


@dataclass(frozen=True)
class OutputConfig:
    format: str = "table"
    path: str = ""


_SECTIONS = (
    ("domain", DomainConfig),
    ("data", DataConfig),
    ("solver", SolverConfig),
    ("bem", BemConfig),
    ("output", OutputConfig),
)

# keys that change how a run executes but not what it computes
_RUNTIME_KEYS = {("solver", "workers"), ("output", "format"), ("output", "path")}


def _parse_value(section: str, name: str, text: str, default):
    where = f"{section}.{name}"
    try:
        if isinstance(default, tuple):
            vals = _vector(text)
            if isinstance(default[0], int):
                if any(v != int(v) for v in vals):
                    raise ValueError("expected integers")
                vals = tuple(int(v) for v in vals)
            return vals
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("must be finite")
            return v
        return text.strip()
    except ValueError as exc:
        raise ConfigError(where, f"cannot parse {text!r} ({exc})") from None


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, grouped in the five INI sections."""

    domain: DomainConfig = field(default_factory=DomainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    bem: BemConfig = field(default_factory=BemConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # -- text form ------------------------------------------------------------

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("file", str(exc).splitlines()[0]) from None
        known = dict(_SECTIONS)
        for section in parser.sections():
            if section not in known:
                raise ConfigError(section, "unknown section")
        parts = {}
        for section, klass in _SECTIONS:
            defaults = klass()
            names = {f.name for f in fields(klass)}
            values = {}
            if parser.has_section(section):
                for key, raw in parser.items(section):
                    if key not in names:
                        raise ConfigError(f"{section}.{key}", "unknown key")
                    values[key] = _parse_value(section, key, raw, getattr(defaults, key))
            parts[section] = klass(**values)
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("file", str(exc)) from None
        return cls.from_ini(text)

    def to_ini(self, runtime: bool = True) -> str:
        """INI text; ``runtime=False`` drops worker count and output settings."""
        buf = io.StringIO()
        for section, _ in _SECTIONS:
            block = getattr(self, section)
            lines = [
                f"{f.name} = {_fmt(getattr(block, f.name))}"
                for f in fields(block)
                if runtime or (section, f.name) not in _RUNTIME_KEYS
            ]
            if lines:
                buf.write(f"[{section}]\n" + "\n".join(lines) + "\n\n")
        return buf.getvalue()

    @property
    def hash(self) -> str:
        """SHA-256 of the configuration without runtime-only keys."""
        return hashlib.sha256(self.to_ini(runtime=False).encode()).hexdigest()

    def with_overrides(self, seed=None, workers=None, fmt=None, out=None) -> "RunConfig":
        solver, output = self.solver, self.output
        if seed is not None:
            solver = replace(solver, seed=int(seed))
        if workers is not None:
            solver = replace(solver, workers=int(workers))
        if fmt is not None:
            output = replace(output, format=fmt)
        if out is not None:
            output = replace(output, path=str(out))
        cfg = replace(self, solver=solver, output=output)
        cfg.validate()
        return cfg

    # -- validation and construction -----------------------------------------

    def validate(self) -> None:
        """Build every solver object once so bad values fail before a run."""
        s = self.solver
        if s.workers < 0:
            raise ConfigError("solver.workers", "must be >= 0 (0 means all cores)")
        if len(s.point) != 3:
            raise ConfigError("solver.point", "needs three coordinates")
        if len(self.domain.anomaly_center) != 3:
            raise ConfigError("domain.anomaly_center", "needs three coordinates")
        if self.output.format not in ("table", "json", "csv"):
            raise ConfigError("output.format", "must be table, json or csv")
        if self.domain.electrodes < 0:
            raise ConfigError("domain.electrodes", "must be >= 0")
        self.walk_params()
        self.mesh_params()
        self.build_domain()
        self.build_data()

    def walk_params(self) -> WalkParams:
        s = self.solver
        checks = [
            ("n_paths", s.n_paths >= 1, "must be >= 1"),
            ("max_boundary_events", s.max_boundary_events >= 1, "must be >= 1"),
            ("delta_x", 0 < s.delta_x, "must be positive"),
            ("epsilon", s.delta_x < s.epsilon < 0.5, "must satisfy delta_x < epsilon < 0.5"),
            ("seed", 0 <= s.seed < 2**64, "must be an unsigned 64-bit integer"),
            ("robin_mode", s.robin_mode in ("weighted", "survival"), "must be weighted or survival"),
            ("local_time_scale", s.local_time_scale >= 0, "must be >= 0 (0 means calibrated)"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"solver.{name}", msg)
        return WalkParams(
            epsilon=s.epsilon,
            delta_x=s.delta_x,
            max_boundary_events=s.max_boundary_events,
            n_paths=s.n_paths,
            seed=s.seed,
            robin_mode=s.robin_mode,
            local_time_scale=s.local_time_scale or None,
        )

    def mesh_params(self) -> MeshParams:
        b = self.bem
        try:
            return MeshParams(b.depth, b.r1, b.r2, b.r_ext, tuple(b.rings), b.alpha, b.sectors)
        except ValueError as exc:
            raise ConfigError("bem", str(exc)) from None

    def quadrature(self) -> QuadratureOptions:
        return QuadratureOptions()

    @property
    def oracle_name(self) -> str | None:
        p = ORACLE_SHORTHANDS.get(self.data.preset, self.data.preset)
        return p if p.split(":")[0] in ("dirichlet", "robin-sphere", "annulus") else None

    def oracle_case(self) -> OracleCase | None:
        name = self.oracle_name
        if name is None:
            return None
        kind, *args = name.split(":")
        try:
            if kind == "dirichlet":
                (harmonic,) = args
                return dirichlet_polynomial_case(harmonic)
            if kind == "robin-sphere":
                degree, z = args
                return robin_sphere_case(int(degree), 1.0 / float(z))
            r0, g = args
            return annulus_radial_case(float(r0), float(g))
        except (ValueError, KeyError) as exc:
            raise ConfigError("data.preset", f"bad oracle preset {name!r} ({exc})") from None

    def build_domain(self) -> DomainSpec:
        case = self.oracle_case()
        if case is not None:
            return case.domain
        d = self.domain
        try:
            es = default_electrodes(d.electrodes, d.cap_radius, d.contact_impedance) if d.electrodes else []
            return DomainSpec(tuple(es), tuple(d.anomaly_center), d.anomaly_radius)
        except ValueError as exc:
            raise ConfigError("domain", str(exc)) from None

    def build_data(self) -> BoundaryData:
        case = self.oracle_case()
        if case is not None:
            return case.data
        p = self.data.preset
        if p == "cos4theta":
            return BoundaryData(phi1=Field.cos4theta())
        if p == "cos4theta-yz":
            return BoundaryData(phi1=Field.cos4theta_yz())
        if p == "zero":
            return BoundaryData(phi1=Field.zero())
        if p.startswith("constant:"):
            try:
                v = float(p.split(":", 1)[1])
            except ValueError:
                raise ConfigError("data.preset", f"bad constant in {p!r}") from None
            return BoundaryData(phi1=Field.constant(v))
        raise ConfigError(
            "data.preset", f"unknown preset {p!r}; use cos4theta, cos4theta-yz, zero, constant:V or an oracle case"
        )

    @property
    def point(self) -> np.ndarray:
        return np.asarray(self.solver.point, dtype=float)
