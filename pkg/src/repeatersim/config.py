"""Experiment configuration: TOML loading, validation, canonical form.

A config is one TOML file with named sections mirroring the simulator's
parameter objects; keys are the parameter field names.  Loading
revalidates every invariant those objects enforce and reports the violated
one by name.  Canonical serialization fixes section order, key order and
float formatting so a config can be hashed into a stable inputs digest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .exact import StationParams
from .protocol import MemoryChannel
from .source import EnsembleParams
from .timing import TimingConfig

ENGINES = ("exact", "monte-carlo")

DEFAULT_CHSH_SETTINGS = ((0.0, 22.5), (0.0, -22.5), (45.0, 22.5), (45.0, -22.5))

_SITE_KEYS = ("chi", "phi1", "phi2", "eta_as", "eta_ret", "eta_s", "truncation",
              "chi_l", "chi_r", "depol_weight", "phase_jitter_std",
              "single_excitation_only")
_STATION_KEYS = ("det_eta", "dark_prob", "mode_overlap")
_MEMORY_KEYS = ("model", "tau", "v0")
_TIMING_KEYS = ("cycles_per_window", "cycle_us", "writes_per_cycle",
                "write_interval_us", "storage_time_us", "fiber_length_m",
                "mot_load_ms", "window_ms", "fiber_index")
_ENGINE_KEYS = ("engine", "n_trials", "master_seed")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    site_i: EnsembleParams
    site_ii: EnsembleParams
    station: StationParams
    memory: MemoryChannel
    timing: TimingConfig
    chsh_settings: tuple = DEFAULT_CHSH_SETTINGS
    engine: str = "exact"
    n_trials: int = 1_000_000
    master_seed: int = 1
    scan_times_us: tuple = ()

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if len(self.chsh_settings) != 4:
            raise ConfigError("chsh_settings needs exactly four (theta_1, theta_4) pairs")
        for pair in self.chsh_settings:
            if len(pair) != 2:
                raise ConfigError(f"malformed analyzer setting {pair!r}")
        if any(t < 0 for t in self.scan_times_us):
            raise ConfigError("scan times must be nonnegative")


def _take(section: dict, allowed, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in [{where}]")
    return dict(section)


def _build(cls, kwargs, where: str):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[{where}] {err}") from err


def config_from_dict(data: dict) -> ExperimentConfig:
    for required in ("site_i", "site_ii", "station", "memory", "timing"):
        if required not in data:
            raise ConfigError(f"missing required section [{required}]")
    known = {"site_i", "site_ii", "station", "memory", "timing", "analyzers",
             "engine", "scan"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    site_i = _build(EnsembleParams, _take(data["site_i"], _SITE_KEYS, "site_i"), "site_i")
    site_ii = _build(EnsembleParams, _take(data["site_ii"], _SITE_KEYS, "site_ii"), "site_ii")
    station = _build(StationParams, _take(data["station"], _STATION_KEYS, "station"), "station")
    memory = _build(MemoryChannel, _take(data["memory"], _MEMORY_KEYS, "memory"), "memory")
    timing = _build(TimingConfig, _take(data["timing"], _TIMING_KEYS, "timing"), "timing")
    analyzers = _take(data.get("analyzers", {}), ("chsh_settings",), "analyzers")
    settings = tuple(
        tuple(pair) for pair in analyzers.get("chsh_settings", DEFAULT_CHSH_SETTINGS)
    )
    engine_section = _take(data.get("engine", {}), _ENGINE_KEYS, "engine")
    scan = _take(data.get("scan", {}), ("t_us",), "scan")
    return ExperimentConfig(
        site_i=site_i, site_ii=site_ii, station=station, memory=memory,
        timing=timing, chsh_settings=settings,
        engine=engine_section.get("engine", "exact"),
        n_trials=int(engine_section.get("n_trials", 1_000_000)),
        master_seed=int(engine_section.get("master_seed", 1)),
        scan_times_us=tuple(float(t) for t in scan.get("t_us", ())),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"malformed TOML in {path}: {err}") from err
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# canonical serialization


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def to_canonical_toml(config: ExperimentConfig) -> str:
    """Stable text form: fixed section/key order, repr floats, no comments."""
    lines = []

    def emit(section: str, pairs):
        lines.append(f"[{section}]")
        for key, value in pairs:
            if value is None:
                continue
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")

    for name, params in (("site_i", config.site_i), ("site_ii", config.site_ii)):
        emit(name, [(k, getattr(params, k)) for k in _SITE_KEYS])
    emit("station", [(k, getattr(config.station, k)) for k in _STATION_KEYS])
    emit("memory", [(k, getattr(config.memory, k)) for k in _MEMORY_KEYS])
    emit("timing", [(k, getattr(config.timing, k)) for k in _TIMING_KEYS])
    emit("analyzers", [("chsh_settings", [list(p) for p in config.chsh_settings])])
    emit("engine", [("engine", config.engine), ("n_trials", config.n_trials),
                    ("master_seed", config.master_seed)])
    if config.scan_times_us:
        emit("scan", [("t_us", list(config.scan_times_us))])
    return "\n".join(lines)


def config_digest(config: ExperimentConfig) -> str:
    return hashlib.sha256(to_canonical_toml(config).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ResultRecord:
    scenario_id: str
    kind: str  # one of S, F, V, E, rate
    value: float
    stderr: float
    inputs_digest: str
    seed: int

    def __post_init__(self):
        if self.kind not in ("S", "F", "V", "E", "rate"):
            raise ValueError(f"unknown result kind {self.kind!r}")

    def as_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id, "kind": self.kind,
            "value": self.value, "stderr": self.stderr,
            "inputs_digest": self.inputs_digest, "seed": self.seed,
        }
