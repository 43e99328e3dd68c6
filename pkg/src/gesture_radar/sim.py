"""Point-target FMCW simulator and parametric gesture trajectories.

The IF model is a real cosine per target, chirp and receiver. Range is held
constant within a burst (stop-and-hop); motion between chirps only enters
through the carrier phase ``4*pi*R/lambda``. Receiver 0 is the corner of the
L-shaped array, receiver 1 is offset horizontally, receiver 2 vertically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GestureClass, RadarConfig

DEFAULT_NOISE_SIGMA = 0.1
DEFAULT_SAMPLE_FRAMES = 100


@dataclass(frozen=True)
class PointTarget:
    range: float
    velocity: float = 0.0
    azimuth: float = 0.0
    elevation: float = 0.0
    amplitude: float = 1.0
    initial_phase: float = 0.0

    def check(self, config: RadarConfig, allow_aliasing: bool = False) -> None:
        if not 0.0 < self.range < config.max_range:
            raise ValueError(f"target range {self.range} m outside (0, {config.max_range:.4f})")
        if not allow_aliasing and abs(self.velocity) >= config.max_velocity:
            raise ValueError(f"target velocity {self.velocity} m/s aliases (|v| >= {config.max_velocity:.4f})")
        if abs(self.azimuth) > math.pi / 2 or abs(self.elevation) > math.pi / 2:
            raise ValueError("target angles must lie within [-pi/2, pi/2]")
        if self.amplitude < 0:
            raise ValueError("target amplitude must be non-negative")


def synthesize_frame(
    targets,
    config: RadarConfig,
    sigma_noise: float,
    rng: np.random.Generator,
    *,
    inverse_square: bool = False,
    allow_aliasing: bool = False,
) -> np.ndarray:
    """Return one raw burst of shape ``[R, C, S]`` for the given point targets."""
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    if sigma_noise < 0:
        raise ValueError("sigma_noise must be non-negative")
    R, C, S = config.frame_shape
    frame = np.zeros((R, C, S))
    s = np.arange(S)
    c = np.arange(C)
    lam = config.wavelength
    kd = 2.0 * math.pi * config.antenna_spacing_wavelengths
    for t in targets:
        t.check(config, allow_aliasing)
        amp = t.amplitude / t.range**2 if inverse_square else t.amplitude
        # f_b * t_s with f_b = 2*B*R/(T_c*c0) and t_s = s/adc_rate reduces to (R/dr)*(s/S)
        fast = 2.0 * math.pi * (t.range / config.range_resolution) * s / S
        slow = 4.0 * math.pi / lam * (t.range - t.velocity * c * config.t_prt)
        rx = np.zeros(R)
        if R > 1:
            rx[1] = kd * math.sin(t.azimuth)
        if R > 2:
            rx[2] = kd * math.sin(t.elevation)
        phase = fast[None, None, :] + slow[None, :, None] + rx[:, None, None] + t.initial_phase
        frame += amp * np.cos(phase)
    if sigma_noise > 0:
        frame += rng.normal(0.0, sigma_noise, size=frame.shape)
    return frame


@dataclass(frozen=True)
class GestureParams:
    """Randomisation ranges for gesture trajectories (uniform draws)."""

    start_distance: tuple[float, float] = (0.6, 1.0)
    min_distance: float = 0.3
    speed: tuple[float, float] = (1.8, 2.6)  # radial, m/s
    half_length: tuple[int, int] = (3, 5)  # frames per leg of the approach/retract V
    aspect_deg: tuple[float, float] = (-30.0, 30.0)
    elevation_offset_deg: tuple[float, float] = (-15.0, 15.0)
    sweep_deg: tuple[float, float] = (15.0, 30.0)  # half extent of a swipe
    amplitude: float = 1.0
    amplitude_jitter: float = 0.3


@dataclass
class GestureScript:
    gesture: GestureClass
    trajectory: list  # one PointTarget per active frame
    apex: int  # frame of minimum range within the trajectory
    draws: dict = field(default_factory=dict)

    @property
    def duration_frames(self) -> int:
        return len(self.trajectory)


def gesture_trajectory(
    gesture: GestureClass,
    params: GestureParams | None,
    rng: np.random.Generator,
    config: RadarConfig | None = None,
) -> GestureScript:
    """Draw one gesture: a radial V (approach, apex, retreat) plus an angle sweep.

    The random draws happen in the same order for every class, so mirrored
    classes (left/right, up/down) generated from the same seed are exact
    negations of each other in the swept angle.
    """
    gesture = GestureClass(gesture)
    if gesture == GestureClass.BACKGROUND:
        raise ValueError("background has no gesture trajectory; use background_sequence")
    params = params or GestureParams()
    config = config or RadarConfig()

    start = rng.uniform(*params.start_distance)
    speed = rng.uniform(*params.speed)
    half = int(rng.integers(params.half_length[0], params.half_length[1] + 1))
    aspect = math.radians(rng.uniform(*params.aspect_deg))
    el_offset = math.radians(rng.uniform(*params.elevation_offset_deg))
    sweep = math.radians(rng.uniform(*params.sweep_deg))
    amp = params.amplitude * (1.0 + params.amplitude_jitter * rng.uniform(-1.0, 1.0))
    phase0 = rng.uniform(0.0, 2.0 * math.pi)

    step = speed / config.frame_rate
    half = max(1, min(half, int((start - params.min_distance) / step)))
    n = 2 * half + 1
    t = np.arange(n)
    ranges = start - step * half + step * np.abs(t - half)
    # the apex is sampled on the inbound leg, so every frame keeps a Doppler shift
    velocities = np.where(t <= half, speed, -speed)
    sweep_series = np.linspace(-sweep, sweep, n)

    az = np.full(n, aspect)
    el = np.full(n, el_offset)
    if gesture in (GestureClass.SWIPE_RIGHT, GestureClass.SWIPE_LEFT):
        az = aspect + sweep_series
        if gesture == GestureClass.SWIPE_LEFT:
            az = -az
    elif gesture in (GestureClass.SWIPE_UP, GestureClass.SWIPE_DOWN):
        el = el_offset + sweep_series
        if gesture == GestureClass.SWIPE_DOWN:
            el = -el

    trajectory = [
        PointTarget(
            range=float(ranges[i]),
            velocity=float(velocities[i]),
            azimuth=float(az[i]),
            elevation=float(el[i]),
            amplitude=float(amp),
            initial_phase=float(phase0),
        )
        for i in range(n)
    ]
    for target in trajectory:
        target.check(config)
    draws = dict(start=start, speed=speed, half=half, aspect=aspect, elevation_offset=el_offset, sweep=sweep, amplitude=amp)
    return GestureScript(gesture, trajectory, apex=half, draws=draws)


@dataclass(frozen=True)
class BodyDrift:
    """Slowly wandering distant reflector (the torso of the person)."""

    range: tuple[float, float] = (0.9, 1.15)
    max_speed: float = 0.3
    speed_step: float = 0.05  # per-frame random-walk increment of the velocity
    amplitude: tuple[float, float] = (0.5, 1.0)


@dataclass
class SceneSequence:
    frames: list  # frames[i] is the list of PointTargets at frame i
    sigma_noise: float = DEFAULT_NOISE_SIGMA

    def __len__(self) -> int:
        return len(self.frames)


def background_sequence(
    duration_frames: int,
    body: BodyDrift | None,
    sigma_noise: float,
    rng: np.random.Generator,
    config: RadarConfig | None = None,
) -> SceneSequence:
    if duration_frames < 1:
        raise ValueError("duration_frames must be >= 1")
    config = config or RadarConfig()
    if body is None:
        return SceneSequence([[] for _ in range(duration_frames)], sigma_noise)
    lo, hi = body.range
    r = rng.uniform(lo, hi)
    v = rng.uniform(-body.max_speed, body.max_speed)
    amp = rng.uniform(*body.amplitude)
    phase0 = rng.uniform(0.0, 2.0 * math.pi)
    dt = 1.0 / config.frame_rate
    frames = []
    for _ in range(duration_frames):
        frames.append([PointTarget(range=r, velocity=v, amplitude=amp, initial_phase=phase0)])
        v = float(np.clip(v + rng.normal(0.0, body.speed_step), -body.max_speed, body.max_speed))
        r -= v * dt
        if r < lo or r > hi:  # reflect at the drift bounds
            r = min(max(r, lo), hi)
            v = -v
    return SceneSequence(frames, sigma_noise)


ANNOTATION_COLUMNS = ("frame_index", "class", "range", "velocity", "azimuth", "elevation")


@dataclass
class Annotations:
    """Per-frame ground truth of the gesture hand (NaN where no hand is present)."""

    classes: np.ndarray
    targets: np.ndarray  # [T, 4]: range, velocity, azimuth, elevation
    spans: list  # (start, stop, class, apex_frame)

    def __len__(self) -> int:
        return len(self.classes)


def render_sequence(
    placements,
    background: SceneSequence,
    config: RadarConfig,
    rng: np.random.Generator,
    **synth_kwargs,
):
    """Render ``[(start_frame, GestureScript), ...]`` over a background scene.

    Returns ``(frames [T, R, C, S], Annotations)``.
    """
    T = len(background)
    classes = np.full(T, int(GestureClass.BACKGROUND), dtype=np.int64)
    truth = np.full((T, 4), np.nan)
    scene = [list(targets) for targets in background.frames]
    spans = []
    for start, script in sorted(placements, key=lambda p: p[0]):
        stop = start + script.duration_frames
        if start < 0 or stop > T:
            raise ValueError(f"gesture span [{start}, {stop}) outside timeline of {T} frames")
        if spans and start < spans[-1][1]:
            raise ValueError(f"gesture span [{start}, {stop}) overlaps [{spans[-1][0]}, {spans[-1][1]})")
        for i, target in enumerate(script.trajectory):
            scene[start + i].append(target)
            classes[start + i] = int(script.gesture)
            truth[start + i] = (target.range, target.velocity, target.azimuth, target.elevation)
        spans.append((start, stop, GestureClass(script.gesture), start + script.apex))
    frames = np.empty((T,) + config.frame_shape)
    for i, targets in enumerate(scene):
        frames[i] = synthesize_frame(targets, config, background.sigma_noise, rng, **synth_kwargs)
    return frames, Annotations(classes, truth, spans)


@dataclass(frozen=True)
class SampleSpec:
    """How a single-gesture recording window is simulated."""

    frames: int = DEFAULT_SAMPLE_FRAMES
    sigma_noise: float = DEFAULT_NOISE_SIGMA
    body_probability: float = 0.5
    body: BodyDrift = BodyDrift()
    gesture: GestureParams = GestureParams()
    # active part of the gesture is kept inside this frame interval
    placement: tuple[int, int] = (30, 70)


def gesture_sample(gesture: GestureClass, config: RadarConfig, rng: np.random.Generator, spec: SampleSpec | None = None):
    """Simulate one recording window containing a single gesture."""
    spec = spec or SampleSpec()
    script = gesture_trajectory(gesture, spec.gesture, rng, config)
    lo, hi = spec.placement
    hi = min(hi, spec.frames) - script.duration_frames
    if hi < lo:
        raise ValueError("sample window too short for the gesture")
    start = int(rng.integers(lo, hi + 1))
    body = spec.body if rng.uniform() < spec.body_probability else None
    scene = background_sequence(spec.frames, body, spec.sigma_noise, rng, config)
    return render_sequence([(start, script)], scene, config, rng)


def background_sample(config: RadarConfig, rng: np.random.Generator, spec: SampleSpec | None = None, frames: int | None = None):
    spec = spec or SampleSpec()
    body = spec.body if rng.uniform() < spec.body_probability else None
    scene = background_sequence(frames or spec.frames, body, spec.sigma_noise, rng, config)
    return render_sequence([], scene, config, rng)
