"""Scenario configuration: dataclasses, TOML I/O and validation.

Schema (all sections optional, unknown keys rejected)::

    trials = 100000            # trials per analyser setting
    seed = 2015                # 64-bit master seed
    analyzer_frame_sign = [1, -1]

    [source]
    state_kind = "two_photon"  # or "hybrid"
    theta1 = 0.0               # hybrid path/polarisation phase, rad
    theta2 = 0.0               # two-photon phase, rad
    pair_rate = 0.0            # uncorrelated extra pairs per second
    heralding_efficiency = 1.0 # heralded photon present per trial
    path_split = 0.5           # fraction of the photon routed into path U
    entangled_fraction = 1.0   # weight of the ideal state against white noise

    [source.pulse]             # expected trigger/photon delay histogram, per 1 ns bin
    y0 = 0.0
    amplitude = 0.0
    tc_ns = 0.0
    w_ns = 1.0

    [memory]
    efficiency = 1.0
    depolarizing = 0.0
    dephasing = 0.0
    storage_time_ns = 100.0
    delay_time_ns = 160.0
    bandwidth_mhz = 200.0           # optional, photon bandwidth must fit
    detuning_mhz = 200.0            # optional
    absorption_bandwidth_mhz = 5.8  # optional

    [losses]
    filter_transmission = 1.0
    fiber_coupling = 1.0

    [detectors]
    efficiency = 1.0
    dark_rate = 0.0            # counts/s per detector, includes noise photons
    coincidence_window_ns = 10.0
    gate_ns = 10.0             # live time per trial
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

#: Upper bound on forward-retrieval Raman memory efficiency.
FORWARD_RETRIEVAL_BOUND = 0.54
STATE_KINDS = ("hybrid", "two_photon")


class RetrievalBoundWarning(UserWarning):
    """Memory efficiency exceeds the forward-retrieval bound."""


@dataclass(frozen=True)
class Pulse:
    y0: float = 0.0
    amplitude: float = 0.0
    tc_ns: float = 0.0
    w_ns: float = 1.0

    @property
    def fwhm_ns(self) -> float:
        return self.w_ns * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class Source:
    state_kind: str = "two_photon"
    theta1: float = 0.0
    theta2: float = 0.0
    pair_rate: float = 0.0
    heralding_efficiency: float = 1.0
    path_split: float = 0.5
    entangled_fraction: float = 1.0
    pulse: Pulse = field(default_factory=Pulse)


@dataclass(frozen=True)
class Memory:
    efficiency: float = 1.0
    depolarizing: float = 0.0
    dephasing: float = 0.0
    storage_time_ns: float = 100.0
    delay_time_ns: float = 160.0
    bandwidth_mhz: float | None = None
    detuning_mhz: float | None = None
    absorption_bandwidth_mhz: float | None = None


@dataclass(frozen=True)
class Losses:
    filter_transmission: float = 1.0
    fiber_coupling: float = 1.0

    @property
    def transmission(self) -> float:
        return self.filter_transmission * self.fiber_coupling


@dataclass(frozen=True)
class Detectors:
    efficiency: float = 1.0
    dark_rate: float = 0.0
    coincidence_window_ns: float = 10.0
    gate_ns: float = 10.0


@dataclass(frozen=True)
class ScenarioConfig:
    source: Source = field(default_factory=Source)
    memory: Memory = field(default_factory=Memory)
    losses: Losses = field(default_factory=Losses)
    detectors: Detectors = field(default_factory=Detectors)
    analyzer_frame_sign: tuple[int, int] = (1, 1)
    trials: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "analyzer_frame_sign", tuple(self.analyzer_frame_sign))
        validate(self)

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with changes; nested fields use ``section__field`` keys."""
        top, nested = {}, {}
        for key, value in changes.items():
            if "__" in key:
                section, _, name = key.partition("__")
                nested.setdefault(section, {})[name] = value
            else:
                top[key] = value
        for section, values in nested.items():
            if section == "pulse":
                src = top.get("source", self.source)
                top["source"] = dataclasses.replace(src, pulse=dataclasses.replace(src.pulse, **values))
            else:
                top[section] = dataclasses.replace(top.get(section, getattr(self, section)), **values)
        return dataclasses.replace(self, **top)

    def bypass_memory(self) -> "ScenarioConfig":
        """The same set-up with the memory removed (input measurements)."""
        # a removed memory is not a memory beating the retrieval bound
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RetrievalBoundWarning)
            return self.replace(memory__efficiency=1.0, memory__depolarizing=0.0, memory__dephasing=0.0)


def _unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")


def _nonneg(name: str, value: float) -> None:
    if not (value >= 0.0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be finite and non-negative, got {value!r}")


def validate(cfg: ScenarioConfig) -> None:
    src, mem, det = cfg.source, cfg.memory, cfg.detectors
    if src.state_kind not in STATE_KINDS:
        raise ConfigError(f"unknown state_kind {src.state_kind!r}; expected one of {STATE_KINDS}")
    for name in ("heralding_efficiency", "path_split", "entangled_fraction"):
        _unit(f"source.{name}", getattr(src, name))
    _nonneg("source.pair_rate", src.pair_rate)
    if src.pulse.w_ns <= 0:
        raise ConfigError("source.pulse.w_ns must be positive")
    for name in ("efficiency", "depolarizing", "dephasing"):
        _unit(f"memory.{name}", getattr(mem, name))
    _unit("losses.filter_transmission", cfg.losses.filter_transmission)
    _unit("losses.fiber_coupling", cfg.losses.fiber_coupling)
    _unit("detectors.efficiency", det.efficiency)
    _nonneg("detectors.dark_rate", det.dark_rate)
    if det.coincidence_window_ns <= 0 or det.gate_ns <= 0:
        raise ConfigError("detector window and gate must be positive")
    if len(cfg.analyzer_frame_sign) != 2 or any(s not in (1, -1) for s in cfg.analyzer_frame_sign):
        raise ConfigError("analyzer_frame_sign must be two entries of +1 or -1")
    if not isinstance(cfg.trials, int) or cfg.trials < 0:
        raise ConfigError("trials must be a non-negative integer")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if src.state_kind == "two_photon" and not mem.storage_time_ns < mem.delay_time_ns:
        raise ConfigError(
            "memory.storage_time_ns must be shorter than memory.delay_time_ns: the stored photon "
            "has to be retrieved before the partner spin wave is read out"
        )
    if mem.bandwidth_mhz is not None:
        photon_bw = 1000.0 / src.pulse.fwhm_ns
        if photon_bw > mem.bandwidth_mhz:
            raise ConfigError(
                f"photon bandwidth {photon_bw:.1f} MHz exceeds memory bandwidth {mem.bandwidth_mhz} MHz"
            )
    if mem.absorption_bandwidth_mhz is not None and mem.absorption_bandwidth_mhz <= 0:
        raise ConfigError("memory.absorption_bandwidth_mhz must be positive")
    if mem.efficiency > FORWARD_RETRIEVAL_BOUND:
        warnings.warn(
            f"memory efficiency {mem.efficiency} exceeds the forward-retrieval bound {FORWARD_RETRIEVAL_BOUND}",
            RetrievalBoundWarning,
            stacklevel=3,
        )


_SECTIONS = {"source": Source, "memory": Memory, "losses": Losses, "detectors": Detectors}
_TOP_KEYS = {"analyzer_frame_sign", "trials", "seed"}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, value in data.items():
        if key == "pulse":
            kwargs[key] = _build(Pulse, value, f"{where}.pulse")
        elif key == "state_kind":
            kwargs[key] = str(value)
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}.{key} must be a number")
            kwargs[key] = float(value)
    return cls(**kwargs)


def config_from_dict(data: dict) -> ScenarioConfig:
    unknown = set(data) - _TOP_KEYS - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    kwargs = {name: _build(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    for key in ("trials", "seed"):
        if key in data:
            if isinstance(data[key], bool) or not isinstance(data[key], int):
                raise ConfigError(f"{key} must be an integer")
            kwargs[key] = data[key]
    if "analyzer_frame_sign" in data:
        kwargs["analyzer_frame_sign"] = tuple(data["analyzer_frame_sign"])
    return ScenarioConfig(**kwargs)


def loads_config(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_dict(data)


def load_config(path) -> ScenarioConfig:
    return loads_config(Path(path).read_text())


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out = {
        "trials": cfg.trials,
        "seed": cfg.seed,
        "analyzer_frame_sign": list(cfg.analyzer_frame_sign),
    }
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        out[name] = {k: v for k, v in section.items() if v is not None}
    return out


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dumps_config(cfg: ScenarioConfig) -> str:
    data = config_to_dict(cfg)
    lines = [f"{k} = {_toml_value(data[k])}" for k in ("trials", "seed", "analyzer_frame_sign")]

    def emit(name, table):
        lines.append("")
        lines.append(f"[{name}]")
        nested = []
        for k, v in table.items():
            if isinstance(v, dict):
                nested.append((k, v))
            else:
                lines.append(f"{k} = {_toml_value(v)}")
        for k, v in nested:
            emit(f"{name}.{k}", v)

    for name in _SECTIONS:
        emit(name, data[name])
    return "\n".join(lines) + "\n"


def config_hash(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
