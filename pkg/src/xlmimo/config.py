"""Scenario configuration: defaults, file parsing and validation.

All quantities are stored in linear units (mW, radians, meters). Config
files may give powers in dBm and angular spreads in degrees; those are
converted when the file is parsed.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


PA_METHODS = ("random", "greedy", "genie", "ga")


class ConfigError(ValueError):
    """Raised when a configuration value violates a scenario invariant."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class GAParams:
    """Genetic-algorithm hyperparameters.

    ``population`` and ``elite`` default to ``2K`` and ``max(2, ceil(A/2))``; they
    are left as ``None`` so they follow K when K is overridden or swept.
    """

    n_it: int = 15
    population: int | None = None
    p_mut: float = 0.02
    elite: int | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    # array
    L: int = 25
    N: int = 4
    array_length: float = 100.0
    sa_height: float = 10.0
    wavelength: float = 0.125
    antenna_spacing: float | None = None  # None -> wavelength / 2
    # users
    K: int = 6
    ue_height: float = 1.5
    ue_power: float = 10.0  # mW (10 dBm)
    cell_half_width: float = 100.0
    # propagation
    gamma: float = 4.0
    sigma_sf_los: float = 3.0  # dB
    sigma_sf_nlos: float = 4.0  # dB
    decorr_distance: float = 9.0
    sigma_phi: float = math.radians(10.0)
    sigma_theta: float = math.radians(10.0)
    beta0: float = 8.9125e-4
    noise_power: float = 10.0 ** (-9.6)  # mW (-96 dBm)
    quadrature_points: int = 200
    quadrature_tol: float = 1e-4
    # protocol
    tau_p: int = 4
    tau_c: int = 200
    tau_u: int | None = None  # None -> tau_c - tau_p
    # pilot assignment
    pa_method: str = "ga"
    ga: GAParams = field(default_factory=GAParams)
    exhaustive_budget: int = 10**6
    greedy_metric: str = "strongest"
    # Monte-Carlo
    mc_realizations: int = 1000  # statistics drops
    realizations_per_drop: int = 100
    master_seed: int = 0

    @property
    def M(self) -> int:
        return self.L * self.N

    @property
    def spacing(self) -> float:
        if self.antenna_spacing is None:
            return self.wavelength / 2.0
        return self.antenna_spacing

    @property
    def d_over_lambda(self) -> float:
        return self.spacing / self.wavelength

    @property
    def data_symbols(self) -> int:
        if self.tau_u is None:
            return self.tau_c - self.tau_p
        return self.tau_u

    @property
    def prelog(self) -> float:
        return self.data_symbols / self.tau_c

    @property
    def ga_population(self) -> int:
        if self.ga.population is None:
            return 2 * self.K
        return self.ga.population

    @property
    def ga_elite(self) -> int:
        if self.ga.elite is None:
            # parents must be distinct, so at least two
            return max(2, math.ceil(self.ga_population / 2))
        return self.ga.elite

    @property
    def ue_powers(self) -> np.ndarray:
        return np.full(self.K, self.ue_power)

    def with_overrides(self, **kwargs: Any) -> "ScenarioConfig":
        """Return a validated copy with the non-``None`` overrides applied."""
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return validate_config(replace(self, **kwargs))

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["antenna_spacing"] = self.spacing
        out["tau_u"] = self.data_symbols
        out["ga"] = {
            "n_it": self.ga.n_it,
            "population": self.ga_population,
            "p_mut": self.ga.p_mut,
            "elite": self.ga_elite,
        }
        return out


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """Check every scenario invariant and return ``cfg`` unchanged.

    Raises :class:`ConfigError` whose message names the offending field.
    """
    for name in ("L", "N", "K"):
        value = getattr(cfg, name)
        _require(isinstance(value, int) and value >= 1, f"{name} must be a positive integer")
    _require(cfg.tau_p >= 1, "tau_p must be ≥ 1")
    _require(cfg.tau_p <= cfg.tau_c, "tau_p must not exceed tau_c")
    _require(0 <= cfg.data_symbols <= cfg.tau_c - cfg.tau_p, "tau_u must satisfy 0 ≤ tau_u ≤ tau_c - tau_p")
    for name in (
        "array_length",
        "sa_height",
        "ue_height",
        "wavelength",
        "ue_power",
        "noise_power",
        "beta0",
        "cell_half_width",
        "decorr_distance",
        "gamma",
    ):
        _require(getattr(cfg, name) > 0, f"{name} must be strictly positive")
    _require(cfg.spacing > 0, "antenna_spacing must be strictly positive")
    for name in ("sigma_sf_los", "sigma_sf_nlos", "sigma_phi", "sigma_theta"):
        _require(getattr(cfg, name) >= 0, f"{name} must be non-negative")
    _require(cfg.sa_height != cfg.ue_height, "sa_height and ue_height must differ")
    _require(cfg.quadrature_points >= 2, "quadrature_points must be ≥ 2")
    _require(cfg.quadrature_tol > 0, "quadrature_tol must be strictly positive")
    _require(cfg.pa_method in PA_METHODS, f"pa_method must be one of {', '.join(PA_METHODS)}")
    _require(cfg.greedy_metric in ("strongest", "sum"), "greedy_metric must be 'strongest' or 'sum'")
    _require(cfg.exhaustive_budget >= 1, "exhaustive_budget must be ≥ 1")
    _require(cfg.mc_realizations >= 1, "mc_realizations must be ≥ 1")
    _require(cfg.realizations_per_drop >= 1, "realizations_per_drop must be ≥ 1")
    _require(0 <= cfg.master_seed < 2**64, "master_seed must be a 64-bit unsigned integer")
    _require(cfg.ga.n_it >= 1, "ga.n_it must be ≥ 1")
    _require(0.0 <= cfg.ga.p_mut <= 1.0, "ga.p_mut must lie in [0, 1]")
    _require(cfg.ga_population >= 2, "ga.population must be ≥ 2")
    _require(cfg.ga_elite <= cfg.ga_population, "elite count exceeds population")
    _require(cfg.ga_elite >= 2, "ga.elite must be ≥ 2")
    return cfg


# file keys that carry a unit conversion: file key -> (field, converter)
_CONVERTED = {
    "ue_power_dbm": ("ue_power", dbm_to_mw),
    "noise_power_dbm": ("noise_power", dbm_to_mw),
    "ue_power_mw": ("ue_power", float),
    "noise_power_mw": ("noise_power", float),
    "sigma_phi_deg": ("sigma_phi", math.radians),
    "sigma_theta_deg": ("sigma_theta", math.radians),
    "sigma_sf_los_db": ("sigma_sf_los", float),
    "sigma_sf_nlos_db": ("sigma_sf_nlos", float),
    "drops": ("mc_realizations", int),
}
_SECTIONS = ("array", "users", "propagation", "protocol", "simulation")
_FIELDS = {f.name for f in fields(ScenarioConfig)} - {"ga"}
_GA_FIELDS = {f.name for f in fields(GAParams)}


def config_from_mapping(raw: Mapping[str, Any]) -> ScenarioConfig:
    """Build a validated config from a nested mapping (e.g. parsed TOML).

    Sections ``array``, ``users``, ``propagation``, ``protocol`` and
    ``simulation`` are flattened; ``ga`` maps onto :class:`GAParams`.
    Keys may also appear at top level.
    """
    flat: dict[str, Any] = {}
    ga_raw: Mapping[str, Any] = {}
    for key, value in raw.items():
        if key == "ga":
            ga_raw = value
        elif key in _SECTIONS:
            if not isinstance(value, Mapping):
                raise ConfigError(f"[{key}] must be a table")
            flat.update(value)
        else:
            flat[key] = value

    kwargs: dict[str, Any] = {}
    for key, value in flat.items():
        if key in _CONVERTED:
            name, conv = _CONVERTED[key]
            kwargs[name] = conv(value)
        elif key in _FIELDS:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key: {key}")
    unknown = set(ga_raw) - _GA_FIELDS
    if unknown:
        raise ConfigError(f"unknown ga key: {sorted(unknown)[0]}")
    kwargs["ga"] = GAParams(**ga_raw)
    for name in ("L", "N", "K", "tau_p", "tau_c", "quadrature_points", "mc_realizations", "realizations_per_drop"):
        if name in kwargs and isinstance(kwargs[name], float) and kwargs[name].is_integer():
            kwargs[name] = int(kwargs[name])
    return validate_config(ScenarioConfig(**kwargs))


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_mapping(raw)
