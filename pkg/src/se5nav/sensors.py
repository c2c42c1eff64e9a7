"""Generic output channels and IMU corruption.

Four output kinds are supported, matching the measurement families the
observer can fuse:

    body_vector        y = R.T (xi - gamma p)   landmark (gamma=1) or
                                                known inertial direction
                                                such as a magnetometer
                                                (gamma=0)
    inertial_position  y = p + R b              e.g. GPS antenna with lever
                                                arm b
    inertial_velocity  y = v
    body_velocity      y = R.T v                e.g. Doppler / airspeed

Noise follows the Simulink "noise power" convention: the configured value
is a one-sided PSD and the per-sample standard deviation is
sqrt(power * rate). Every channel draws from its own child stream of the
master seed, so scenario runs are deterministic and replayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .trajectory import TruthState

MEASUREMENT_CSV_SCHEMA = "se5nav-measurements-v1"


class ChannelKind(Enum):
    BODY_VECTOR = "body_vector"
    INERTIAL_POSITION = "inertial_position"
    INERTIAL_VELOCITY = "inertial_velocity"
    BODY_VELOCITY = "body_velocity"


_KIND_ALIASES = {
    "body_vector": ChannelKind.BODY_VECTOR,
    "landmark": ChannelKind.BODY_VECTOR,
    "inertial_position": ChannelKind.INERTIAL_POSITION,
    "gps_position": ChannelKind.INERTIAL_POSITION,
    "inertial_velocity": ChannelKind.INERTIAL_VELOCITY,
    "body_velocity": ChannelKind.BODY_VELOCITY,
}


def parse_channel_kind(name: str) -> ChannelKind:
    try:
        return _KIND_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown channel kind {name!r}") from None


@dataclass(frozen=True)
class ChannelSpec:
    kind: ChannelKind
    xi: tuple[float, float, float] = (0.0, 0.0, 0.0)   # body_vector reference point / direction
    gamma: int = 1                                      # body_vector only, 0 or 1
    b: tuple[float, float, float] = (0.0, 0.0, 0.0)     # inertial_position lever arm
    noise_power: float = 0.0                            # one-sided PSD, unit^2 s
    rate: float | None = None                           # Hz; None means the simulation rate

    def __post_init__(self):
        if self.gamma not in (0, 1):
            raise ValueError("gamma must be 0 or 1")
        if self.noise_power < 0:
            raise ValueError("noise_power must be nonnegative")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("rate must be positive")

    @property
    def xi_vec(self) -> np.ndarray:
        return np.asarray(self.xi, dtype=float)

    @property
    def b_vec(self) -> np.ndarray:
        return np.asarray(self.b, dtype=float)


@dataclass(frozen=True)
class MeasurementSample:
    t: float
    channel: int
    y: np.ndarray


def value_from_pose(channel: ChannelSpec, r: np.ndarray, p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """The channel's defining identity evaluated at a pose (R, p, v)."""
    if channel.kind is ChannelKind.BODY_VECTOR:
        return r.T @ (channel.xi_vec - channel.gamma * p)
    if channel.kind is ChannelKind.INERTIAL_POSITION:
        return p + r @ channel.b_vec
    if channel.kind is ChannelKind.INERTIAL_VELOCITY:
        return v.copy()
    return r.T @ v


def noiseless_value(channel: ChannelSpec, state: TruthState) -> np.ndarray:
    """The defining identity of the channel, evaluated on truth."""
    return value_from_pose(channel, state.R, state.p, state.v)


def measure(
    channel: ChannelSpec,
    state: TruthState,
    rng: np.random.Generator | None = None,
    rate: float | None = None,
    channel_index: int = 0,
) -> MeasurementSample:
    """One sample: noiseless value plus white Gaussian noise per axis.

    `rate` overrides the channel rate for the noise scaling (used when the
    channel samples at the simulation rate).
    """
    y = noiseless_value(channel, state)
    if rng is not None and channel.noise_power > 0:
        r = rate if rate is not None else channel.rate
        if r is None:
            raise ValueError("sampling rate required to scale noise power")
        y = y + np.sqrt(channel.noise_power * r) * rng.standard_normal(3)
    return MeasurementSample(t=state.t, channel=channel_index, y=y)


@dataclass(frozen=True)
class ImuNoiseSpec:
    gyro_power: float = 0.0
    accel_power: float = 0.0
    rate: float = 1000.0

    def __post_init__(self):
        if self.gyro_power < 0 or self.accel_power < 0:
            raise ValueError("noise powers must be nonnegative")
        if self.rate <= 0:
            raise ValueError("rate must be positive")


def corrupt_imu(
    omega: np.ndarray,
    accel: np.ndarray,
    spec: ImuNoiseSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Additive white Gaussian noise, std = sqrt(power * rate) per axis.

    Accepts a single (3,) sample or a stack of stage samples (..., 3); one
    draw per call is applied to every stage row, which is the zero-order
    hold of the noise over the integration step.
    """
    omega = np.asarray(omega, dtype=float)
    accel = np.asarray(accel, dtype=float)
    wn = np.sqrt(spec.gyro_power * spec.rate) * rng.standard_normal(3)
    an = np.sqrt(spec.accel_power * spec.rate) * rng.standard_normal(3)
    return omega + wn, accel + an


@dataclass
class ChannelSampler:
    """Drives one channel at its own rate with zero-order hold in between.

    A channel sampling at the simulation rate delivers its value at the
    integrator's stage times (start, midpoint, end of each step) with one
    noise draw per step; a decimated channel delivers one sample per epoch,
    held across steps and stages.
    """

    spec: ChannelSpec
    index: int
    sim_dt: float
    rng: np.random.Generator | None
    _stride: int = field(init=False)
    _held: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        rate = self.spec.rate if self.spec.rate is not None else 1.0 / self.sim_dt
        self._stride = max(1, int(round(1.0 / (rate * self.sim_dt))))

    @property
    def stride(self) -> int:
        return self._stride

    @property
    def effective_rate(self) -> float:
        return 1.0 / (self._stride * self.sim_dt)

    def noise(self) -> np.ndarray | None:
        if self.rng is None or self.spec.noise_power <= 0:
            return None
        return np.sqrt(self.spec.noise_power * self.effective_rate) * self.rng.standard_normal(3)

    def poll_stages(self, k: int, truth) -> tuple[np.ndarray, bool]:
        """Stage-resolved values (3, 3) for step k. Returns (values, updated)."""
        if self._stride == 1:
            noise = self.noise()
            vals = np.empty((3, 3))
            for s in range(3):
                r, p, v = truth.stage_pose(k, s)
                vals[s] = value_from_pose(self.spec, r, p, v)
            if noise is not None:
                vals += noise
            self._held = vals[0]
            return vals, True
        updated = self._held is None or k % self._stride == 0
        if updated:
            r, p, v = truth.stage_pose(k, 0)
            held = value_from_pose(self.spec, r, p, v)
            noise = self.noise()
            self._held = held if noise is None else held + noise
        return np.repeat(self._held[None, :], 3, axis=0), updated


def spawn_channel_rngs(master_seed: int, n_channels: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    """Independent streams: one for the IMU, one per channel."""
    seq = np.random.SeedSequence(master_seed)
    children = seq.spawn(n_channels + 1)
    return np.random.default_rng(children[0]), [np.random.default_rng(c) for c in children[1:]]
