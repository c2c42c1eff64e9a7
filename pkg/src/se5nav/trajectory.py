"""Ground-truth rigid-body trajectories and ideal IMU synthesis.

The truth model is the strapdown kinematics

    dp/dt = v,   dv/dt = g + R a_B,   dR/dt = R hat(omega),

with analytic position profiles and a sinusoidal body-rate profile. The
accelerometer output is synthesized as a_B = R.T (dv/dt - g) so that the
velocity equation closes exactly at every sample.

Conventions: NED inertial frame, gravity g = [0, 0, +9.81] m/s^2 by default
(only the norm is physical; axis and sign are configurable).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .lie import so3_exp

GRAVITY_NED = np.array([0.0, 0.0, 9.81])

TRUTH_CSV_SCHEMA = "se5nav-truth-v1"


@dataclass(frozen=True)
class TrajectorySpec:
    """Analytic trajectory family plus body-rate profile.

    kind:
        ``eight``             p = [a1 cos(w1 t), a2 sin(w2 t), a3 sin(w3 t)]
        ``constant-velocity`` p = p0 + v0 t
        ``hover``             p = p0
    The body rate is three sinusoids, omega_i = amp_i sin(freq_i t + phase_i).
    """

    kind: str = "eight"
    amp: tuple[float, float, float] = (1.0, 0.25, -np.sqrt(3.0) / 4.0)
    freq: tuple[float, float, float] = (5.0, 10.0, 10.0)
    p0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    v0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    omega_amp: tuple[float, float, float] = (1.0, 0.7, 0.5)
    omega_freq: tuple[float, float, float] = (0.3, 0.2, 0.1)
    omega_phase: tuple[float, float, float] = (0.0, np.pi, np.pi / 3.0)
    r0_rotvec: tuple[float, float, float] = (0.0, np.pi / 2.0, 0.0)
    gravity: tuple[float, float, float] = tuple(GRAVITY_NED)

    def __post_init__(self):
        if self.kind not in ("eight", "constant-velocity", "hover"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if any(f < 0 for f in self.freq) or any(f < 0 for f in self.omega_freq):
            raise ValueError("frequencies must be nonnegative")

    @property
    def g(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)

    @property
    def r0(self) -> np.ndarray:
        return so3_exp(np.asarray(self.r0_rotvec, dtype=float))


@dataclass(frozen=True)
class TruthState:
    """Truth sample at time ``t`` with the IMU pair synthesized from it."""

    t: float
    p: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    aB: np.ndarray

    @property
    def z(self) -> np.ndarray:
        """Extended translation block [p, v, e1, e2, e3] (3 x 5)."""
        out = np.zeros((3, 5))
        out[:, 0] = self.p
        out[:, 1] = self.v
        out[:, 2:] = np.eye(3)
        return out


def eval_trajectory(spec: TrajectorySpec, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, velocity, and acceleration at time(s) t, all analytic.

    Accepts a scalar or an array of times; returns arrays shaped (3,) or
    (len(t), 3) accordingly.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    tt = np.atleast_1d(t)
    n = tt.size
    p = np.zeros((n, 3))
    v = np.zeros((n, 3))
    a = np.zeros((n, 3))
    if spec.kind == "eight":
        a1, a2, a3 = spec.amp
        w1, w2, w3 = spec.freq
        p[:, 0] = a1 * np.cos(w1 * tt)
        p[:, 1] = a2 * np.sin(w2 * tt)
        p[:, 2] = a3 * np.sin(w3 * tt)
        v[:, 0] = -a1 * w1 * np.sin(w1 * tt)
        v[:, 1] = a2 * w2 * np.cos(w2 * tt)
        v[:, 2] = a3 * w3 * np.cos(w3 * tt)
        a[:, 0] = -a1 * w1 * w1 * np.cos(w1 * tt)
        a[:, 1] = -a2 * w2 * w2 * np.sin(w2 * tt)
        a[:, 2] = -a3 * w3 * w3 * np.sin(w3 * tt)
    elif spec.kind == "constant-velocity":
        p0 = np.asarray(spec.p0, dtype=float)
        v0 = np.asarray(spec.v0, dtype=float)
        p[:] = p0[None, :] + tt[:, None] * v0[None, :]
        v[:] = v0[None, :]
    else:  # hover
        p[:] = np.asarray(spec.p0, dtype=float)[None, :]
    if scalar:
        return p[0], v[0], a[0]
    return p, v, a


def eval_omega(spec: TrajectorySpec, t) -> np.ndarray:
    """Body angular velocity at time(s) t."""
    t = np.asarray(t, dtype=float)
    amp = np.asarray(spec.omega_amp)
    frq = np.asarray(spec.omega_freq)
    phs = np.asarray(spec.omega_phase)
    if t.ndim == 0:
        return amp * np.sin(frq * float(t) + phs)
    return amp[None, :] * np.sin(t[:, None] * frq[None, :] + phs[None, :])


def propagate_attitude(r0: np.ndarray, spec: TrajectorySpec, t0: float, t1: float, dt: float) -> np.ndarray:
    """Piecewise-exponential attitude update R <- R exp(dt hat(omega)).

    The rate is sampled at the step midpoint, which is exact for constant
    omega and second-order accurate otherwise; each factor is a true
    rotation so the result stays on SO(3) to machine precision.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    r = np.array(r0, dtype=float)
    n_steps = int(round((t1 - t0) / dt))
    for k in range(n_steps):
        w = eval_omega(spec, t0 + (k + 0.5) * dt)
        r = r @ so3_exp(dt * w)
    return r


def synthesize_imu(p_ddot: np.ndarray, r: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Accelerometer output a_B = R.T (vdot - g)."""
    return r.T @ (np.asarray(p_ddot, dtype=float) - np.asarray(g, dtype=float))


@dataclass
class TruthRun:
    """A truth trajectory sampled on the uniform grid t_k = k dt.

    ``R[k]`` is the attitude at t_k; the ``*_mid`` arrays hold the state at
    the step midpoints t_k + dt/2 (the attitude there is the exact midpoint
    of the per-step rotation factor). ``imu_omega[k]`` / ``imu_accel[k]``
    hold the IMU signal at the RK4 stage times of step k (rows: start,
    midpoint, end), so the estimator can integrate with the same input
    resolution as the truth.
    """

    spec: TrajectorySpec
    dt: float
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    aB: np.ndarray
    p_mid: np.ndarray = field(repr=False, default=None)
    v_mid: np.ndarray = field(repr=False, default=None)
    R_mid: np.ndarray = field(repr=False, default=None)
    imu_omega: np.ndarray = field(repr=False, default=None)
    imu_accel: np.ndarray = field(repr=False, default=None)

    def __len__(self) -> int:
        return self.t.size

    def state(self, k: int) -> TruthState:
        return TruthState(
            t=float(self.t[k]), p=self.p[k], v=self.v[k], vdot=self.vdot[k],
            R=self.R[k], omega=self.omega[k], aB=self.aB[k],
        )

    def states(self) -> Iterator[TruthState]:
        for k in range(len(self)):
            yield self.state(k)

    def stage_pose(self, k: int, stage: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(R, p, v) at stage time 0/1/2 (start, midpoint, end) of step k."""
        if stage == 0:
            return self.R[k], self.p[k], self.v[k]
        if stage == 1:
            return self.R_mid[k], self.p_mid[k], self.v_mid[k]
        return self.R[k + 1], self.p[k + 1], self.v[k + 1]


def simulate_truth(spec: TrajectorySpec, duration: float, dt: float = 1e-3) -> TruthRun:
    """Generate truth samples over [0, duration] at fixed step dt."""
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    n = int(round(duration / dt))
    ts = np.arange(n + 1) * dt
    p, v, a = eval_trajectory(spec, ts)
    omega = eval_omega(spec, ts)
    g = spec.g

    rs = np.empty((n + 1, 3, 3))
    rs[0] = spec.r0
    mid_omega = eval_omega(spec, ts[:-1] + 0.5 * dt)
    half_steps = _batch_exp(0.5 * dt * mid_omega)
    r_mid = np.empty((n, 3, 3))
    for k in range(n):
        r_mid[k] = rs[k] @ half_steps[k]
        rs[k + 1] = r_mid[k] @ half_steps[k]

    ab = np.einsum("kji,kj->ki", rs, a - g[None, :])

    # Stage-time IMU signal for step k: samples at t_k, t_k + dt/2, t_k + dt.
    p_mid, v_mid, a_mid = eval_trajectory(spec, ts[:-1] + 0.5 * dt)
    ab_mid = np.einsum("kji,kj->ki", r_mid, a_mid - g[None, :])
    imu_omega = np.stack([omega[:-1], mid_omega, omega[1:]], axis=1)
    imu_accel = np.stack([ab[:-1], ab_mid, ab[1:]], axis=1)

    return TruthRun(
        spec=spec, dt=dt, t=ts, p=p, v=v, vdot=a, R=rs, omega=omega, aB=ab,
        p_mid=p_mid, v_mid=v_mid, R_mid=r_mid,
        imu_omega=imu_omega, imu_accel=imu_accel,
    )


def _batch_exp(vs: np.ndarray) -> np.ndarray:
    out = np.empty((vs.shape[0], 3, 3))
    for k in range(vs.shape[0]):
        out[k] = so3_exp(vs[k])
    return out


def write_truth_csv(run: TruthRun, path, stride: int = 1) -> None:
    """Truth trace export: t, p[3], v[3], R row-major[9], omega[3], aB[3]."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {TRUTH_CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(
            ["t", "px", "py", "pz", "vx", "vy", "vz"]
            + [f"R{i}{j}" for i in range(3) for j in range(3)]
            + ["wx", "wy", "wz", "ax", "ay", "az"]
        )
        for k in range(0, len(run), stride):
            row = [run.t[k], *run.p[k], *run.v[k], *run.R[k].reshape(-1), *run.omega[k], *run.aB[k]]
            w.writerow([f"{x:.17g}" for x in row])
