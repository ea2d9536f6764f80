"""Experiment configuration: INI loading with invariant-naming validation.

Config files are standard INI text with the sections ``[experiment]``,
``[kernel]``, ``[velocity_grid]``, ``[spatial_grid]``, ``[registry]``,
``[initial]``, ``[solver]``.  Every value is validated through the owning
module's constructors so a bad entry is rejected with a message naming
the violated invariant, not a stack trace.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (ConstantsRegistry, InvariantError, KernelParams,
                   PhaseField, SpatialGrid, VelocityGrid, ball_indicator,
                   maxwellian)
from .solver import SolverConfig


class ConfigError(ValueError):
    """Configuration file is malformed or violates a module invariant."""


@dataclass
class InitialData:
    """Descriptor for initial fields: maxwellian, ball, or a sum of both."""

    kind: str
    delta: float = 1.0
    r: float = 0.5
    v0: tuple = (0.0, 0.0, 0.0)
    x0: float = 0.0
    x_r: float | None = None
    density: float = 1.0
    temperature: float = 1.0
    mean_velocity: tuple = (0.0, 0.0, 0.0)

    def build(self, x_grid: SpatialGrid, v_grid: VelocityGrid) -> PhaseField:
        if self.kind == "maxwellian":
            return maxwellian(x_grid, v_grid, self.density,
                              self.temperature, self.mean_velocity)
        if self.kind == "ball":
            return ball_indicator(x_grid, v_grid, self.delta, self.r,
                                  self.v0, self.x0, self.x_r)
        if self.kind == "maxwellian+ball":
            a = maxwellian(x_grid, v_grid, self.density, self.temperature,
                           self.mean_velocity)
            b = ball_indicator(x_grid, v_grid, self.delta, self.r,
                               self.v0, self.x0, self.x_r)
            return a.with_values(a.values + b.values)
        raise ConfigError(
            f"initial.kind must be maxwellian | ball | maxwellian+ball, "
            f"got {self.kind!r}")


@dataclass
class ExperimentConfig:
    command: str
    params: KernelParams
    v_grid: VelocityGrid
    x_grid: SpatialGrid
    registry: ConstantsRegistry
    initial: InitialData
    solver: SolverConfig | None
    out_dir: Path
    seed: int = 0
    workers: int = 1
    fast: bool = False
    tolerance_scale: float = 1.0
    extras: dict = field(default_factory=dict)


def _floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate an INI experiment file.

    ``overrides`` maps flat "section.key" strings to replacement values
    (the CLI flags use this).  Raises :class:`ConfigError` with the name
    of the offending section/key and the violated invariant.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # registry constant names are case-sensitive
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for key, val in (overrides or {}).items():
        sec, opt = key.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, opt, str(val))

    def section(name):
        return cp[name] if cp.has_section(name) else {}

    exp = section("experiment")
    command = exp.get("command", "theorem")

    try:
        k = section("kernel")
        params = KernelParams(gamma=float(k.get("gamma", -1.0)),
                              s=float(k.get("s", 0.5)))
    except (InvariantError, ValueError) as exc:
        raise ConfigError(f"[kernel]: {exc}") from exc

    try:
        vgs = section("velocity_grid")
        v_grid = VelocityGrid(extent=float(vgs.get("extent", 3.0)),
                              n=int(vgs.get("n", 24)))
    except (InvariantError, ValueError) as exc:
        raise ConfigError(f"[velocity_grid]: {exc}") from exc

    try:
        xgs = section("spatial_grid")
        homog = str(xgs.get("homogeneous", "true")).lower() in ("1", "true", "yes")
        x_grid = SpatialGrid(homogeneous=homog,
                             extent=float(xgs.get("extent", 1.0)),
                             n=1 if homog else int(xgs.get("n", 32)))
    except (InvariantError, ValueError) as exc:
        raise ConfigError(f"[spatial_grid]: {exc}") from exc

    registry = ConstantsRegistry.with_defaults()
    for name, raw in section("registry").items():
        try:
            registry.set(name, float(raw), provenance="configured")
        except (InvariantError, KeyError, ValueError) as exc:
            raise ConfigError(f"[registry] {name}: {exc}") from exc

    ini = section("initial")
    try:
        initial = InitialData(
            kind=ini.get("kind", "ball"),
            delta=float(ini.get("delta", 1.0)),
            r=float(ini.get("r", 0.5)),
            v0=_floats(ini.get("v0", "1 0 0")),
            x0=float(ini.get("x0", 0.0)),
            x_r=float(ini["x_r"]) if "x_r" in ini else None,
            density=float(ini.get("density", 1.0)),
            temperature=float(ini.get("temperature", 1.0)),
            mean_velocity=_floats(ini.get("mean_velocity", "0 0 0")),
        )
    except ValueError as exc:
        raise ConfigError(f"[initial]: {exc}") from exc

    solver_cfg = None
    if cp.has_section("solver"):
        sv = cp["solver"]
        try:
            solver_cfg = SolverConfig(
                dt=float(sv.get("dt", 0.125)),
                t_end=float(sv.get("t_end", 0.5)),
                splitting=sv.get("splitting", "lie"),
                integrator=sv.get("integrator", "euler"),
                n_theta=int(sv.get("n_theta", 4)),
                n_phi=int(sv.get("n_phi", 8)),
                theta_min=float(sv.get("theta_min", 0.3)),
                vstar_stride=int(sv.get("vstar_stride", 2)),
                substeps=int(sv.get("substeps", 4)),
                first_step_substeps=(int(sv["first_step_substeps"])
                                     if "first_step_substeps" in sv else None),
                k0_abort=(float(sv["k0_abort"])
                          if "k0_abort" in sv else None),
                output_every=int(sv.get("output_every", 1)),
            )
        except (InvariantError, ValueError) as exc:
            raise ConfigError(f"[solver]: {exc}") from exc

    extras = {f"{s}.{k}": v for s in cp.sections() for k, v in cp[s].items()}
    return ExperimentConfig(
        command=command,
        params=params,
        v_grid=v_grid,
        x_grid=x_grid,
        registry=registry,
        initial=initial,
        solver=solver_cfg,
        out_dir=Path(exp.get("out", "out")),
        seed=int(exp.get("seed", 0)),
        workers=int(exp.get("workers", 1)),
        fast=str(exp.get("fast", "false")).lower() in ("1", "true", "yes"),
        tolerance_scale=float(exp.get("tolerance_scale", 1.0)),
        extras=extras,
    )
