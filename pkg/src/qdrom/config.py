"""Run configuration: file format, validation and named presets.

Config files are plain `key = value` lines with `#` comments.  Boundary
sides take either a temperature in keV (isotropic blackbody inflow) or the
word `vacuum`.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .materials import A_RAD, C_LIGHT

FC_GROUP_BOUNDS = (0.0, 0.7075, 1.415, 2.123, 2.830, 3.538, 4.245, 5.129,
                   6.014, 6.898, 7.783, 8.667, 9.551, 10.44, 11.32, 12.20,
                   13.09, 1.0e7)
DESK_GROUP_BOUNDS = (0.0, 0.7075, 2.830, 6.898, 1.0e7)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    nx: int = 10
    ny: int = 10
    dx: float = 0.6
    dy: float = 0.6
    group_bounds: tuple = DESK_GROUP_BOUNDS
    quadrature: int = 4            # directions per quadrant
    dt: float = 0.02               # ns
    n_steps: int = 50
    t_initial: float = 0.001       # keV
    boundary_left: float | None = 1.0   # keV, None = vacuum
    boundary_bottom: float | None = None
    boundary_right: float | None = None
    boundary_top: float | None = None
    heat_capacity: float = 0.5917 * A_RAD * 1.0**3
    opacity_coeff: float = 27.0
    opacity_exponent: float = 3.0
    stimulated_correction: bool = True
    light_speed: float = C_LIGHT
    radiation_constant: float = A_RAD
    outer_tol: float = 1e-14
    outer_floor: float = 1e-15
    max_outer: int = 500
    inner_tol_rel: float = 1e-14
    inner_tol_abs: float = 1e-15
    max_inner: int = 500
    newton_tol: float = 1e-13
    max_newton: int = 100
    threads: int = 1
    seed: int | None = None
    xi_rel: tuple = ()             # compression targets for pipeline scripts
    method: str = "pod"

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("nx and ny must be positive")
        for name in ("dx", "dy", "dt", "t_initial", "heat_capacity"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        b = np.asarray(self.group_bounds, dtype=float)
        if b[0] != 0.0 or np.any(np.diff(b) <= 0.0):
            raise ConfigError("group_bounds must start at 0 and increase strictly")
        for xi in self.xi_rel:
            if not 0.0 < xi <= 1.0:
                raise ConfigError("xi_rel values must lie in (0, 1]")
        for side in ("left", "bottom", "right", "top"):
            val = getattr(self, f"boundary_{side}")
            if val is not None and val <= 0.0:
                raise ConfigError(f"boundary_{side} temperature must be positive")

    @property
    def n_groups(self) -> int:
        return len(self.group_bounds) - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["group_bounds"] = list(self.group_bounds)
        d["xi_rel"] = list(self.xi_rel)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d["group_bounds"] = tuple(d.get("group_bounds", DESK_GROUP_BOUNDS))
        d["xi_rel"] = tuple(d.get("xi_rel", ()))
        return cls(**d)


def preset(name: str) -> RunConfig:
    """Named configurations shipped with the package."""
    if name == "fleck-cummings-2d":
        return RunConfig(nx=20, ny=20, dx=0.3, dy=0.3, group_bounds=FC_GROUP_BOUNDS,
                         quadrature=36, dt=0.02, n_steps=300)
    if name == "fleck-cummings-desk":
        return RunConfig()
    if name == "equilibrium-2d":
        return RunConfig(nx=6, ny=6, dx=1.0, dy=1.0,
                         group_bounds=(0.0, 0.7075, 2.830, 1.0e7), quadrature=4,
                         dt=0.02, n_steps=10, t_initial=1.0,
                         boundary_left=1.0, boundary_bottom=1.0,
                         boundary_right=1.0, boundary_top=1.0)
    raise ConfigError(f"unknown preset '{name}'")


PRESETS = ("fleck-cummings-2d", "fleck-cummings-desk", "equilibrium-2d")

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}

_INT_KEYS = {"nx", "ny", "quadrature", "n_steps", "max_outer", "max_inner",
             "max_newton", "threads", "seed"}
_FLOAT_KEYS = {"dx", "dy", "dt", "t_initial", "heat_capacity", "opacity_coeff",
               "opacity_exponent", "light_speed", "radiation_constant",
               "outer_tol", "outer_floor", "inner_tol_rel", "inner_tol_abs",
               "newton_tol"}
_SIDE_KEYS = {"boundary_left", "boundary_bottom", "boundary_right", "boundary_top"}


def load_config(path) -> RunConfig:
    """Parse a key = value configuration file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "preset":
            base = preset(val)
            values = {**base.to_dict(), **values}
            continue
        if key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key in _SIDE_KEYS:
            values[key] = None if val.lower() in ("vacuum", "none") else float(val)
        elif key == "stimulated_correction":
            values[key] = _BOOL[val.lower()]
        elif key == "group_bounds":
            values[key] = tuple(float(v) for v in val.replace(",", " ").split())
        elif key == "xi_rel":
            values[key] = tuple(float(v) for v in val.replace(",", " ").split())
        elif key == "method":
            values[key] = val
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
    try:
        return RunConfig.from_dict(values)
    except TypeError as err:
        raise ConfigError(str(err)) from err
