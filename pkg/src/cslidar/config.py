"""``key = value`` run configuration and shipped presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .sensing import BackgroundConfig, DetectorConfig, IlluminationConfig
from .solver import SolverConfig

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config", "load_preset", "PRESETS"]

PRESETS = ("close-target", "distant-target")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything a simulate/reconstruct run needs, in file units (ns, Hz, m)."""

    masks: int = 512
    repeats: int = 10
    differential: bool = True
    basis_seed: int = 0
    photons_per_mask: Optional[float] = 2500.0
    photons_per_pulse_per_pixel: Optional[float] = None
    pulse_fwhm_ns: float = 0.5
    rep_rate_hz: float = 1000.0
    reference_range_m: float = 50.0
    n_microcells: Optional[int] = 3600
    pde: float = 1.0
    dark_rate_hz: float = 1.0e5
    response: tuple = (1.0,)
    bin_width_ns: float = 1.0
    trace_bins: int = 1000
    gate_delay_ns: float = 0.0
    background_per_ns: float = 0.0
    threshold_sigma: float = 5.0
    valley_ratio: float = 0.8
    window: Optional[int] = None
    objective: str = "tv"
    smoothing_mu: Optional[float] = None
    smoothing_ratio: float = 1e-3
    tolerance: float = 1e-7
    max_iters: int = 3000
    continuation_steps: int = 5
    data_fidelity_delta: Optional[float] = None
    occupancy_threshold: float = 0.5
    fov_mrad: float = 30.0

    def __post_init__(self):
        if self.masks < 1 or self.repeats < 1:
            raise ConfigError("masks and repeats must be >= 1")
        if self.photons_per_mask is None and self.photons_per_pulse_per_pixel is None:
            raise ConfigError("set photons_per_mask or photons_per_pulse_per_pixel")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be >= 1 (or 'auto')")
        # surface type errors early
        self.detector()
        self.background()
        self.solver()

    def illumination(self, photons_per_pulse_per_pixel: float = 1.0) -> IlluminationConfig:
        return IlluminationConfig(
            photons_per_pulse_per_pixel=photons_per_pulse_per_pixel,
            pulse_fwhm=self.pulse_fwhm_ns * 1e-9,
            rep_rate=self.rep_rate_hz,
            reference_range=self.reference_range_m,
        )

    def detector(self) -> DetectorConfig:
        return DetectorConfig(
            n_microcells=self.n_microcells,
            pde=self.pde,
            dark_rate=self.dark_rate_hz,
            response_curve=self.response,
            bin_width=self.bin_width_ns * 1e-9,
            trace_bins=self.trace_bins,
            gate_delay=self.gate_delay_ns * 1e-9,
        )

    def background(self) -> BackgroundConfig:
        return BackgroundConfig(self.background_per_ns)

    def solver(self) -> SolverConfig:
        return SolverConfig(
            objective=self.objective,
            smoothing_mu=self.smoothing_mu,
            smoothing_ratio=self.smoothing_ratio,
            tolerance=self.tolerance,
            max_iters=self.max_iters,
            continuation_steps=self.continuation_steps,
            data_fidelity_delta=self.data_fidelity_delta,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_mapping().items())


_OPTIONAL_AUTO = {"photons_per_mask", "photons_per_pulse_per_pixel", "window",
                  "smoothing_mu", "data_fidelity_delta", "n_microcells"}


def _format(v):
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_INT_KEYS = {"n_microcells", "window", "masks", "repeats", "basis_seed", "trace_bins",
             "max_iters", "continuation_steps"}
_TYPES = {
    f.name: (tuple if f.name == "response" else int if f.name in _INT_KEYS
             else bool if f.name == "differential" else str if f.name == "objective" else float)
    for f in dataclasses.fields(RunConfig)
}


def _convert(key, raw, lineno, source):
    typ = _TYPES[key]
    val = raw.strip()
    where = f"{source}: line {lineno}" if lineno else str(source)
    if key in _OPTIONAL_AUTO and val.lower() in ("auto", "none", "off"):
        return None
    try:
        if typ is bool:
            low = val.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if typ is int:
            return int(val)
        if typ is float:
            return float(val)
        if typ is tuple:
            return tuple(float(x) for x in val.split(",") if x.strip())
        return val
    except ValueError:
        raise ConfigError(f"{where}: bad value {raw.strip()!r} for {key}") from None


def parse_config_text(text: str, source="<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, raw, lineno, source)
    return out


def from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    unknown = set(values) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return base.replace(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("cslidar.presets").joinpath(f"{name}.cfg").read_text()
    return from_mapping(parse_config_text(text, f"preset {name}"))


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    p = Path(path)
    return from_mapping(parse_config_text(p.read_text(), p), base)
