"""Radar configuration, derived physical constants and shared data types."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact


class ConfigError(ValueError):
    """Raised when a configuration value violates its constraints."""


class GestureClass(enum.IntEnum):
    SWIPE_LEFT = 0
    SWIPE_RIGHT = 1
    SWIPE_UP = 2
    SWIPE_DOWN = 3
    PUSH = 4
    BACKGROUND = 5

    @property
    def label(self) -> str:
        return CLASS_NAMES[self]

    @classmethod
    def parse(cls, text: str | int) -> "GestureClass":
        """Accept an index, a display name (``SwipeLeft``) or a slug (``swipe_left``)."""
        if isinstance(text, (int, np.integer)):
            return cls(int(text))
        key = str(text).strip().lower().replace("_", "").replace("-", "")
        for member in cls:
            if key in (CLASS_NAMES[member].lower(), member.name.lower().replace("_", "")):
                return member
        if key.isdigit():
            return cls(int(key))
        raise ValueError(f"unknown gesture class {text!r}")


CLASS_NAMES = {
    GestureClass.SWIPE_LEFT: "SwipeLeft",
    GestureClass.SWIPE_RIGHT: "SwipeRight",
    GestureClass.SWIPE_UP: "SwipeUp",
    GestureClass.SWIPE_DOWN: "SwipeDown",
    GestureClass.PUSH: "Push",
    GestureClass.BACKGROUND: "Background",
}
NUM_CLASSES = len(GestureClass)
GESTURES = tuple(c for c in GestureClass if c != GestureClass.BACKGROUND)


@dataclass(frozen=True)
class DerivedConstants:
    bandwidth: float
    range_resolution: float
    max_range: float
    wavelength: float
    chirp_duration: float
    max_velocity: float
    velocity_resolution: float


@dataclass(frozen=True)
class RadarConfig:
    """Chirp and frame parameters of the sensor.

    Defaults describe a 58.5-62.5 GHz sweep sampled with 64 points at 2 MHz,
    32 chirps per burst spaced 300 us apart, three receivers.
    """

    f_low: float = 58.5e9
    f_high: float = 62.5e9
    num_samples: int = 64
    num_chirps: int = 32
    num_rx: int = 3
    adc_rate: float = 2e6
    t_prt: float = 300e-6
    frame_rate: float = 33.3
    antenna_spacing_wavelengths: float = 0.5

    def __post_init__(self):
        for name in ("num_samples", "num_chirps", "num_rx"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("f_low", "f_high", "adc_rate", "t_prt", "frame_rate", "antenna_spacing_wavelengths"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {value!r}")
        if self.f_high <= self.f_low:
            raise ConfigError(f"f_high must exceed f_low ({self.f_high} <= {self.f_low})")
        if self.num_samples % 2 or self.num_chirps % 2:
            raise ConfigError("num_samples and num_chirps must be even")
        if self.t_prt < self.num_samples / self.adc_rate:
            raise ConfigError(
                f"t_prt must be at least the chirp duration {self.num_samples / self.adc_rate:g} s"
            )

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return (self.num_rx, self.num_chirps, self.num_samples)

    @property
    def num_range_bins(self) -> int:
        return self.num_samples // 2

    # derived values are properties so they can never drift from the inputs
    @property
    def bandwidth(self) -> float:
        return self.f_high - self.f_low

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def max_range(self) -> float:
        return self.num_range_bins * self.range_resolution

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / (0.5 * (self.f_low + self.f_high))

    @property
    def chirp_duration(self) -> float:
        return self.num_samples / self.adc_rate

    @property
    def max_velocity(self) -> float:
        return self.wavelength / (4.0 * self.t_prt)

    @property
    def velocity_resolution(self) -> float:
        return self.wavelength / (2.0 * self.num_chirps * self.t_prt)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def derive_constants(config: RadarConfig) -> DerivedConstants:
    return DerivedConstants(
        bandwidth=config.bandwidth,
        range_resolution=config.range_resolution,
        max_range=config.max_range,
        wavelength=config.wavelength,
        chirp_duration=config.chirp_duration,
        max_velocity=config.max_velocity,
        velocity_resolution=config.velocity_resolution,
    )


def bin_to_range(bin: int, config: RadarConfig) -> float:
    if not 0 <= bin < config.num_range_bins:
        raise IndexError(f"range bin {bin} outside [0, {config.num_range_bins})")
    return bin * config.range_resolution


def doppler_bin_to_velocity(bin: int, config: RadarConfig) -> float:
    """Map a centre-shifted Doppler bin to radial velocity (approach positive)."""
    if not 0 <= bin < config.num_chirps:
        raise IndexError(f"Doppler bin {bin} outside [0, {config.num_chirps})")
    return (bin - config.num_chirps // 2) * config.velocity_resolution


@dataclass(frozen=True)
class FeatureVector:
    range: float
    velocity: float
    azimuth: float
    elevation: float
    magnitude: float

    def as_array(self) -> np.ndarray:
        return np.array([self.range, self.velocity, self.azimuth, self.elevation, self.magnitude])


FEATURE_NAMES = ("range", "velocity", "azimuth", "elevation", "magnitude")
NUM_FEATURES = len(FEATURE_NAMES)


def validate_frame(samples: np.ndarray, config: RadarConfig) -> np.ndarray:
    samples = np.asarray(samples)
    if samples.shape != config.frame_shape:
        raise ValueError(f"frame shape {samples.shape} does not match config {config.frame_shape}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("frame contains non-finite samples")
    return samples


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RadarConfig)}


def parse_config_text(text: str) -> RadarConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) into a RadarConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = int(value) if _FIELD_TYPES[key] == "int" else float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    return RadarConfig(**values)


def load_config(path: str | Path) -> RadarConfig:
    return parse_config_text(Path(path).read_text())


def format_config(config: RadarConfig) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in config.to_dict().items())
