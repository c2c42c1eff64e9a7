"""Scenario orchestration: configs, runs, sweeps, observability checks.

A scenario is a flat INI file describing the trajectory, the output
channels, and the observer parameters; see the bundled ``stereo.cfg`` and
``gps.cfg`` for the two reference configurations. Runs are deterministic
given the seed: identical config and seed produce byte-identical trace
files.

Two run modes exist. :func:`run_observer` is the production pipeline:
truth generated up front, sensors sampled at their rates with zero-order
hold, IMU and full-rate channels delivered at the integrator stage times.
:func:`run_observer_coupled` co-integrates truth and observer in a single
RK4 flow with measurements evaluated on the truth stage values; it is the
faithful discretization of the continuous-time error system and backs the
linear-equivalence and decoupling oracles, where trajectories must track
each other over many decades of error decay.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .frontend import UnifiedLayout
from .lie import SEn, hat, project_rotation, so3_exp
from .observability import (
    DEFAULT_MU_THRESHOLD,
    ExcitationReport,
    GramianReport,
    gps_pe_condition,
    gramian,
)
from .observer import (
    ESTIMATE_CSV_SCHEMA,
    DivergenceError,
    ObserverConfig,
    ObserverState,
    StageInputs,
    _finalize_step,
    _fold_gain_innovation,
    _rk4_observer,
    build_a,
    delta_r,
    error_arrays,
)
from .sensors import (
    MEASUREMENT_CSV_SCHEMA,
    ChannelKind,
    ChannelSampler,
    ChannelSpec,
    ImuNoiseSpec,
    corrupt_imu,
    parse_channel_kind,
    spawn_channel_rngs,
)
from .trajectory import (
    TrajectorySpec,
    TruthRun,
    eval_omega,
    eval_trajectory,
    simulate_truth,
    write_truth_csv,
)

log = logging.getLogger("se5nav")

SWEEP_CSV_SCHEMA = "se5nav-sweep-v1"

ATT_THRESHOLD_RAD = 1e-2
POS_THRESHOLD_M = 1e-2
CONVERGENCE_DWELL_S = 0.5


class ConfigError(ValueError):
    """Scenario file rejected; collects every problem found."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid scenario config:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class ScenarioConfig:
    trajectory: TrajectorySpec
    channels: tuple[ChannelSpec, ...]
    observer: ObserverConfig
    duration: float
    seed: int
    imu_noise_power: float = 0.0
    noise: bool = True
    p0_scale: float = 1.0
    phat0: tuple[float, float, float] = (1.0, 1.0, 1.0)
    vhat0: tuple[float, float, float] = (1.0, 1.0, 1.0)
    rhat0_rotvec: tuple[float, float, float] = (0.0, 0.0, 0.0)
    trace_stride: int = 10
    settle_window: float = 20.0

    def initial_state(self) -> ObserverState:
        z = np.zeros((3, 5))
        z[:, 0] = self.phat0
        z[:, 1] = self.vhat0
        z[:, 2:] = np.eye(3)
        rhat0 = so3_exp(np.asarray(self.rhat0_rotvec, dtype=float))
        return ObserverState(xhat=SEn(rhat0, z), P=self.p0_scale * np.eye(15), t=0.0)

    def noiseless(self) -> "ScenarioConfig":
        return dataclasses.replace(self, noise=False)


def bundled_config_path(name: str) -> Path:
    """Path of a bundled scenario config (``stereo`` or ``gps``)."""
    ref = resources.files("se5nav").joinpath("configs", f"{name}.cfg")
    with resources.as_file(ref) as p:
        return Path(p)


# config parsing -----------------------------------------------------------

def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.replace(",", " ").split())


def parse_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file; every problem is reported."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    ini = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        ini.read(path)
    except configparser.Error as err:
        raise ConfigError([str(err)]) from None

    problems: list[str] = []

    def grab(section, key, conv, default=None, required=False):
        if not ini.has_option(section, key):
            if required:
                problems.append(f"[{section}] missing required key {key!r}")
            return default
        try:
            return conv(ini.get(section, key))
        except (ValueError, TypeError) as err:
            problems.append(f"[{section}] {key}: {err}")
            return default

    if not ini.has_section("trajectory"):
        problems.append("missing [trajectory] section")
    if not ini.has_section("observer"):
        problems.append("missing [observer] section")
    if problems:
        raise ConfigError(problems)

    traj_kwargs = {}
    traj_kwargs["kind"] = grab("trajectory", "kind", str, default="eight")
    for key in ("amp", "freq", "p0", "v0", "omega_amp", "omega_freq", "omega_phase",
                "r0_rotvec", "gravity"):
        val = grab("trajectory", key, _floats)
        if val is not None:
            traj_kwargs[key] = val

    channels: list[ChannelSpec] = []
    for section in sorted(s for s in ini.sections() if s.startswith("channel.")):
        kind = grab(section, "kind", parse_channel_kind, required=True)
        if kind is None:
            continue
        kwargs = {"kind": kind}
        for key, conv in (("xi", _floats), ("b", _floats), ("gamma", int),
                          ("noise_power", float), ("rate", float)):
            val = grab(section, key, conv)
            if val is not None:
                kwargs[key] = val
        try:
            channels.append(ChannelSpec(**kwargs))
        except ValueError as err:
            problems.append(f"[{section}]: {err}")

    rho = tuple(
        grab("observer", f"rho{i}", float, required=True) or 0.0 for i in (1, 2, 3)
    )
    q_scale = grab("observer", "q_scale", float, default=100.0)
    v_scale = grab("observer", "v_scale", float, default=10.0)
    dt = grab("observer", "dt", float, default=1e-3)
    duration = grab("observer", "duration", float, required=True)
    seed = grab("observer", "seed", int, default=0)
    p0_scale = grab("observer", "p0_scale", float, default=1.0)
    phat0 = grab("observer", "phat0", _floats, default=(1.0, 1.0, 1.0))
    vhat0 = grab("observer", "vhat0", _floats, default=(1.0, 1.0, 1.0))
    rhat0_rotvec = grab("observer", "rhat0_rotvec", _floats, default=(0.0, 0.0, 0.0))
    noise = grab("observer", "noise", lambda s: s.strip().lower() in ("on", "true", "1", "yes"),
                 default=True)
    trace_stride = grab("observer", "trace_stride", int, default=10)
    settle_window = grab("observer", "settle_window", float, default=20.0)
    imu_noise_power = grab("imu", "noise_power", float, default=0.0) if ini.has_section("imu") else 0.0

    if duration is not None and duration <= 0:
        problems.append("[observer] duration must be positive")
    if trace_stride is not None and trace_stride < 1:
        problems.append("[observer] trace_stride must be >= 1")

    if problems:
        raise ConfigError(problems)

    try:
        trajectory = TrajectorySpec(**traj_kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError([f"[trajectory]: {err}"]) from None
    try:
        observer = ObserverConfig(
            rho=rho, q=q_scale, v=v_scale, dt=dt,
            gravity=traj_kwargs.get("gravity", tuple(trajectory.gravity)),
        )
    except ValueError as err:
        raise ConfigError([f"[observer]: {err}"]) from None

    return ScenarioConfig(
        trajectory=trajectory,
        channels=tuple(channels),
        observer=observer,
        duration=duration,
        seed=seed,
        imu_noise_power=imu_noise_power,
        noise=noise,
        p0_scale=p0_scale,
        phat0=tuple(phat0),
        vhat0=tuple(vhat0),
        rhat0_rotvec=tuple(rhat0_rotvec),
        trace_stride=trace_stride,
        settle_window=settle_window,
    )


# estimate construction helpers --------------------------------------------

def estimate_from_errors(truth_r: np.ndarray, truth_z: np.ndarray,
                         rtilde: np.ndarray, ztilde: np.ndarray) -> SEn:
    """Estimate whose right-invariant errors against truth equal the given
    (rtilde, ztilde): Rhat = Rtilde^T R, zhat = Rtilde^T (z - ztilde)."""
    return SEn(rtilde.T @ truth_r, rtilde.T @ (truth_z - ztilde))


# observer run driver -------------------------------------------------------

@dataclass
class RunTrace:
    """Decimated trace of one observer run against its truth."""

    t: np.ndarray
    phat: np.ndarray
    vhat: np.ndarray
    rhat: np.ndarray
    ehat: np.ndarray
    att_err: np.ndarray
    col_norms: np.ndarray      # (N, 5): p, v, e1, e2, e3 error norms
    x_body: np.ndarray         # (N, 15)
    mineig_p: np.ndarray
    rot_defect: np.ndarray     # Frobenius orthonormality defect of Rhat
    measurements: list         # (t, channel, y) rows at update instants
    final_state: ObserverState
    stopped_at: float | None = None

    def _trim(self, n: int) -> None:
        for name in ("t", "phat", "vhat", "rhat", "ehat", "att_err",
                     "col_norms", "x_body", "mineig_p", "rot_defect"):
            setattr(self, name, getattr(self, name)[:n])


def run_observer(
    truth: TruthRun,
    channels: list[ChannelSpec],
    cfg: ObserverConfig,
    init: ObserverState,
    seed: int = 0,
    imu_noise: ImuNoiseSpec | None = None,
    noisy_channels: bool = True,
    trace_stride: int = 10,
    stop_when=None,
    record_measurements: bool = False,
) -> RunTrace:
    """Drive the observer over a pre-generated truth run.

    Measurements are produced step by step, each channel at its own rate
    with zero-order hold in between; full-rate channels and the IMU are
    delivered at the integrator's stage times. ``stop_when(t, att_err,
    col_norms)`` may end the run early (used by convergence sweeps).
    """
    n = len(truth) - 1
    dt = truth.dt
    if abs(cfg.dt - dt) > 1e-12:
        raise ValueError("observer dt must match the truth sampling step")

    imu_rng, ch_rngs = spawn_channel_rngs(seed, len(channels))
    if not noisy_channels:
        ch_rngs = [None] * len(channels)
    samplers = [
        ChannelSampler(spec=ch, index=i, sim_dt=dt, rng=ch_rngs[i])
        for i, ch in enumerate(channels)
    ]
    decimated = [s for s in samplers if s.stride > 1]
    layout = UnifiedLayout(channels)
    m = len(channels)
    if m == 0:
        log.warning("no output channels configured; observer runs open loop")
    g = cfg.g

    rec_idx = list(range(0, n + 1, trace_stride))
    if rec_idx[-1] != n:
        rec_idx.append(n)
    n_rec = len(rec_idx)
    out = RunTrace(
        t=np.empty(n_rec), phat=np.empty((n_rec, 3)), vhat=np.empty((n_rec, 3)),
        rhat=np.empty((n_rec, 3, 3)), ehat=np.empty((n_rec, 3, 3)),
        att_err=np.empty(n_rec), col_norms=np.empty((n_rec, 5)),
        x_body=np.empty((n_rec, 15)), mineig_p=np.empty(n_rec),
        rot_defect=np.empty(n_rec), measurements=[], final_state=init,
    )

    rhat, zhat, P = init.rhat.copy(), init.zhat.copy(), init.P.copy()
    rec = 0
    stopped_at = None
    last_good = init
    raw = np.empty((3, m, 3))  # (stage, channel, axis)

    def record(k: int) -> tuple[float, np.ndarray]:
        nonlocal rec
        rep = error_arrays(truth.R[k], _truth_z(truth, k), rhat, zhat)
        out.t[rec] = truth.t[k]
        out.phat[rec] = zhat[:, 0]
        out.vhat[rec] = zhat[:, 1]
        out.rhat[rec] = rhat
        out.ehat[rec] = zhat[:, 2:5]
        out.att_err[rec] = rep.angle
        out.col_norms[rec] = rep.column_norms
        out.x_body[rec] = rep.x_body
        out.mineig_p[rec] = np.linalg.eigvalsh(P)[0]
        out.rot_defect[rec] = np.linalg.norm(rhat.T @ rhat - np.eye(3))
        rec += 1
        return rep.angle, rep.column_norms

    for k in range(n + 1):
        if rec < n_rec and k == rec_idx[rec]:
            angle, norms = record(k)
            last_good = ObserverState(
                xhat=SEn(rhat, zhat, check=False), P=P.copy(), t=float(truth.t[k])
            )
            if stop_when is not None and stop_when(truth.t[k], angle, norms):
                stopped_at = truth.t[k]
                break
        if k == n:
            break

        if m:
            for s in range(3):
                raw[s] = layout.raw_from_pose(*truth.stage_pose(k, s))
            log_full_rate = record_measurements and k % trace_stride == 0
            for sampler in samplers:
                i = sampler.index
                if sampler.stride == 1:
                    noise = sampler.noise()
                    if noise is not None:
                        raw[:, i, :] += noise
                    if log_full_rate:
                        out.measurements.append((truth.t[k], i, raw[0, i].copy()))
            for sampler in decimated:
                vals, updated = sampler.poll_stages(k, truth)
                raw[:, sampler.index, :] = vals
                if updated and record_measurements:
                    out.measurements.append((truth.t[k], sampler.index, vals[0].copy()))

        w_st = truth.imu_omega[k]
        a_st = truth.imu_accel[k]
        if imu_noise is not None:
            w_st, a_st = corrupt_imu(w_st, a_st, imu_noise, imu_rng)

        stages = []
        for s in range(3):
            ys, rs = layout.stacks(raw[s])
            stages.append(StageInputs(
                w_hat=hat(w_st[s]), accel=a_st[s], a_mat=build_a(w_st[s], g),
                ys=ys, rs=rs, c_mat=layout.c_matrix(rs),
            ))
        rhat, zhat, P = _rk4_observer(rhat, zhat, P, stages, dt, cfg.q, cfg.v, cfg.rho, g)
        try:
            rhat, zhat, P = _finalize_step(rhat, zhat, P, truth.t[k])
        except DivergenceError as err:
            raise DivergenceError(str(err), last_good) from None

    out.final_state = ObserverState(
        xhat=SEn(rhat, zhat, check=False), P=P,
        t=float(truth.t[min(k, n)]),
    )
    out.stopped_at = stopped_at
    out._trim(rec)
    return out


def _truth_z(truth: TruthRun, k: int) -> np.ndarray:
    z = np.zeros((3, 5))
    z[:, 0] = truth.p[k]
    z[:, 1] = truth.v[k]
    z[:, 2:] = np.eye(3)
    return z


def run_observer_coupled(
    spec: TrajectorySpec,
    channels: list[ChannelSpec],
    cfg: ObserverConfig,
    init: ObserverState,
    duration: float,
    trace_stride: int = 100,
) -> RunTrace:
    """Noiseless oracle mode: truth and observer in one RK4 flow.

    Truth attitude, position, and velocity are advanced jointly with the
    estimate, and measurements are evaluated on the truth's own stage
    values, so the combined system is a single ODE discretized once. In
    this mode the extracted translational error follows the closed-loop
    linear system to integration accuracy over its whole decay, which is
    what the equivalence and decoupling oracles compare against.
    """
    n = int(round(duration / cfg.dt))
    dt = cfg.dt
    g = spec.g
    layout = UnifiedLayout(channels)
    q, v, rho = cfg.q, cfg.v, cfg.rho

    r_t = spec.r0.copy()
    p_t, v_t, _ = eval_trajectory(spec, 0.0)
    rhat, zhat, P = init.rhat.copy(), init.zhat.copy(), init.P.copy()

    def rhs(r, p, vv, rh, zh, pp, t):
        w = eval_omega(spec, t)
        vdot = eval_trajectory(spec, t)[2]
        w_hat = hat(w)
        accel = r.T @ (vdot - g)
        raw = layout.raw_from_pose(r, p, vv)
        ys, rs = layout.stacks(raw)
        c_mat = layout.c_matrix(rs)

        dz = -(ys @ rh.T + rs @ zh.T).reshape(-1)
        pct = pp @ c_mat.T
        kb = pct * q
        dzeta = _fold_gain_innovation(kb, dz, rh) if dz.size else 0.0
        hdr = hat(delta_r(zh[:, 2:5], rho))
        drhat = rh @ w_hat + hdr @ rh
        dzhat = hdr @ zh + dzeta
        dzhat[:, 0] += zh[:, 1]
        dzhat[:, 1] += zh[:, 2:5] @ g + rh @ accel
        a_mat = build_a(w, g)
        ap = a_mat @ pp
        dP = ap + ap.T - kb @ pct.T
        dP[np.diag_indices_from(dP)] += v
        return r @ w_hat, vv, vdot, drhat, dzhat, dP

    rec_idx = list(range(0, n + 1, trace_stride))
    if rec_idx[-1] != n:
        rec_idx.append(n)
    n_rec = len(rec_idx)
    out = RunTrace(
        t=np.empty(n_rec), phat=np.empty((n_rec, 3)), vhat=np.empty((n_rec, 3)),
        rhat=np.empty((n_rec, 3, 3)), ehat=np.empty((n_rec, 3, 3)),
        att_err=np.empty(n_rec), col_norms=np.empty((n_rec, 5)),
        x_body=np.empty((n_rec, 15)), mineig_p=np.empty(n_rec),
        rot_defect=np.empty(n_rec), measurements=[], final_state=init,
    )
    rec = 0
    for k in range(n + 1):
        t = k * dt
        if rec < n_rec and k == rec_idx[rec]:
            z_t = np.zeros((3, 5))
            z_t[:, 0] = p_t
            z_t[:, 1] = v_t
            z_t[:, 2:] = np.eye(3)
            rep = error_arrays(r_t, z_t, rhat, zhat)
            out.t[rec] = t
            out.phat[rec] = zhat[:, 0]
            out.vhat[rec] = zhat[:, 1]
            out.rhat[rec] = rhat
            out.ehat[rec] = zhat[:, 2:5]
            out.att_err[rec] = rep.angle
            out.col_norms[rec] = rep.column_norms
            out.x_body[rec] = rep.x_body
            out.mineig_p[rec] = np.linalg.eigvalsh(P)[0]
            out.rot_defect[rec] = np.linalg.norm(rhat.T @ rhat - np.eye(3))
            rec += 1
        if k == n:
            break

        h2 = 0.5 * dt
        k1 = rhs(r_t, p_t, v_t, rhat, zhat, P, t)
        k2 = rhs(r_t + h2 * k1[0], p_t + h2 * k1[1], v_t + h2 * k1[2],
                 rhat + h2 * k1[3], zhat + h2 * k1[4], P + h2 * k1[5], t + h2)
        k3 = rhs(r_t + h2 * k2[0], p_t + h2 * k2[1], v_t + h2 * k2[2],
                 rhat + h2 * k2[3], zhat + h2 * k2[4], P + h2 * k2[5], t + h2)
        k4 = rhs(r_t + dt * k3[0], p_t + dt * k3[1], v_t + dt * k3[2],
                 rhat + dt * k3[3], zhat + dt * k3[4], P + dt * k3[5], t + dt)
        c6 = dt / 6.0
        r_t = project_rotation(r_t + c6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]))
        p_t = p_t + c6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        v_t = v_t + c6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        rhat = project_rotation(rhat + c6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]))
        zhat = zhat + c6 * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        P = P + c6 * (k1[5] + 2 * k2[5] + 2 * k3[5] + k4[5])
        P = 0.5 * (P + P.T)

    out.final_state = ObserverState(
        xhat=SEn(project_rotation(rhat), zhat, check=False), P=P, t=float(n * dt)
    )
    out._trim(rec)
    return out


# summary + file outputs ----------------------------------------------------

@dataclass
class RunSummary:
    duration: float
    settle_window: float
    rmse_att: float
    rmse_p: float
    rmse_v: float
    time_to_att_threshold: float | None
    time_to_pos_threshold: float | None
    final_mineig_p: float
    min_mineig_p: float
    max_rot_defect: float
    runtime_s: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize(trace: RunTrace, duration: float, settle_window: float, runtime_s: float) -> RunSummary:
    t = trace.t
    settled = t >= max(0.0, duration - settle_window)
    if not settled.any():
        settled = np.ones_like(t, dtype=bool)

    def rms(x):
        return float(np.sqrt(np.mean(np.square(x[settled]))))

    def first_below(vals, thresh):
        idx = np.nonzero(vals < thresh)[0]
        return float(t[idx[0]]) if idx.size else None

    return RunSummary(
        duration=duration,
        settle_window=settle_window,
        rmse_att=rms(trace.att_err),
        rmse_p=rms(trace.col_norms[:, 0]),
        rmse_v=rms(trace.col_norms[:, 1]),
        time_to_att_threshold=first_below(trace.att_err, ATT_THRESHOLD_RAD),
        time_to_pos_threshold=first_below(trace.col_norms[:, 0], POS_THRESHOLD_M),
        final_mineig_p=float(trace.mineig_p[-1]),
        min_mineig_p=float(trace.mineig_p.min()),
        max_rot_defect=float(trace.rot_defect.max()),
        runtime_s=runtime_s,
    )


def write_measurement_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {MEASUREMENT_CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["t", "channel", "yx", "yy", "yz"])
        for t, ch, y in rows:
            w.writerow([f"{t:.17g}", ch, f"{y[0]:.17g}", f"{y[1]:.17g}", f"{y[2]:.17g}"])


def write_estimate_csv(trace: RunTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {ESTIMATE_CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(
            ["t", "phx", "phy", "phz", "vhx", "vhy", "vhz"]
            + [f"Rh{i}{j}" for i in range(3) for j in range(3)]
            + [f"eh{i}{j}" for i in range(3) for j in range(3)]
            + ["att_err_rad", "p_err", "v_err", "e1_err", "e2_err", "e3_err", "mineig_P"]
        )
        for i in range(trace.t.size):
            row = (
                [trace.t[i], *trace.phat[i], *trace.vhat[i],
                 *trace.rhat[i].reshape(-1), *trace.ehat[i].reshape(-1),
                 trace.att_err[i], *trace.col_norms[i], trace.mineig_p[i]]
            )
            w.writerow([f"{x:.17g}" for x in row])


def run_scenario(cfg: ScenarioConfig, out_dir: Path | str | None = None) -> RunSummary:
    """Full pipeline: truth, sensors, observer; optionally writes traces.

    Emits truth.csv, measurements.csv, estimate.csv, and summary.json into
    `out_dir` when given.
    """
    started = time.perf_counter()
    truth = simulate_truth(cfg.trajectory, cfg.duration, cfg.observer.dt)
    imu_noise = None
    if cfg.noise and cfg.imu_noise_power > 0:
        imu_noise = ImuNoiseSpec(
            gyro_power=cfg.imu_noise_power, accel_power=cfg.imu_noise_power,
            rate=1.0 / cfg.observer.dt,
        )
    trace = run_observer(
        truth, list(cfg.channels), cfg.observer, cfg.initial_state(),
        seed=cfg.seed, imu_noise=imu_noise, noisy_channels=cfg.noise,
        trace_stride=cfg.trace_stride, record_measurements=out_dir is not None,
    )
    summary = summarize(trace, cfg.duration, cfg.settle_window, time.perf_counter() - started)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_truth_csv(truth, out_dir / "truth.csv", stride=cfg.trace_stride)
        write_measurement_csv(trace.measurements, out_dir / "measurements.csv")
        write_estimate_csv(trace, out_dir / "estimate.csv")
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(summary.to_dict(), fh, indent=2)
    return summary


# AGAS sweep ----------------------------------------------------------------

@dataclass
class SweepRow:
    run: int
    seed: int
    init_angle_rad: float
    init_p_err: float
    init_v_err: float
    converged: bool
    settle_time_s: float | None


def sweep_agas(
    cfg: ScenarioConfig,
    n_runs: int,
    seed: int = 0,
    max_angle_rad: float = np.pi - np.deg2rad(10.0),
    translation_ball: float = 10.0,
) -> list[SweepRow]:
    """Randomized-initial-condition convergence sweep, noiseless.

    Attitude errors are uniform in angle up to `max_angle_rad` with a
    uniformly random axis; position and velocity errors are drawn in a
    ball of radius `translation_ball`. A run converges when the attitude
    error and geometric position error stay below the convergence
    thresholds for a short dwell.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    truth = simulate_truth(cfg.trajectory, cfg.duration, cfg.observer.dt)
    truth0 = truth.state(0)
    rows: list[SweepRow] = []
    children = np.random.SeedSequence(seed).spawn(n_runs)
    dwell_checks = max(1, int(round(CONVERGENCE_DWELL_S / (cfg.observer.dt * cfg.trace_stride))))

    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        angle = rng.uniform(0.0, max_angle_rad)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        rtilde = so3_exp(angle * axis)
        p_err = rng.uniform(-1.0, 1.0, 3)
        p_err *= translation_ball * rng.uniform() / max(np.linalg.norm(p_err), 1e-12)
        v_err = rng.uniform(-1.0, 1.0, 3)
        v_err *= translation_ball * rng.uniform() / max(np.linalg.norm(v_err), 1e-12)

        zhat = np.zeros((3, 5))
        zhat[:, 0] = rtilde.T @ (truth0.p - p_err)
        zhat[:, 1] = rtilde.T @ (truth0.v - v_err)
        zhat[:, 2:] = np.eye(3)
        init = ObserverState(
            xhat=SEn(rtilde.T @ truth0.R, zhat), P=cfg.p0_scale * np.eye(15), t=0.0
        )

        streak = 0
        settle = {"t": None}

        def stop_when(t, att, norms):
            nonlocal streak
            if att < ATT_THRESHOLD_RAD and norms[0] < POS_THRESHOLD_M:
                streak += 1
                if streak == 1:
                    settle["t"] = t
                return streak >= dwell_checks
            streak = 0
            settle["t"] = None
            return False

        trace = run_observer(
            truth, list(cfg.channels), cfg.observer, init,
            seed=cfg.seed, imu_noise=None, noisy_channels=False,
            trace_stride=cfg.trace_stride, stop_when=stop_when,
        )
        converged = trace.stopped_at is not None
        rows.append(
            SweepRow(
                run=i, seed=seed,
                init_angle_rad=angle,
                init_p_err=float(np.linalg.norm(p_err)),
                init_v_err=float(np.linalg.norm(v_err)),
                converged=converged,
                settle_time_s=settle["t"] if converged else None,
            )
        )
    return rows


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {SWEEP_CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["run", "init_angle_rad", "init_p_err", "init_v_err", "converged", "settle_time_s"])
        for r in rows:
            w.writerow([
                r.run, f"{r.init_angle_rad:.17g}", f"{r.init_p_err:.17g}",
                f"{r.init_v_err:.17g}", int(r.converged),
                "" if r.settle_time_s is None else f"{r.settle_time_s:.17g}",
            ])


# observability checks ------------------------------------------------------

def scenario_output_map(cfg: ScenarioConfig, horizon: float):
    """(A(t), C(t)) callables for the scenario on noiseless truth.

    Lever-arm position channels need the truth attitude, which only exists
    on the integration grid, so the truth run is precomputed out to
    `horizon`; C(t) snaps those channels to the nearest grid sample.
    """
    spec = cfg.trajectory
    g = spec.g
    dt = cfg.observer.dt
    channels = cfg.channels

    needs_attitude = any(
        ch.kind is ChannelKind.INERTIAL_POSITION and np.any(ch.b_vec) for ch in channels
    )
    truth = simulate_truth(spec, horizon + dt, dt) if needs_attitude else None

    def a_of_t(t: float) -> np.ndarray:
        return build_a(eval_omega(spec, t), g)

    def build_c(t: float) -> np.ndarray:
        p, v, _ = eval_trajectory(spec, t)
        rows = []
        for ch in channels:
            if ch.kind is ChannelKind.BODY_VECTOR:
                r = np.concatenate([[float(ch.gamma), 0.0], -ch.xi_vec])
            elif ch.kind is ChannelKind.INERTIAL_POSITION:
                if truth is not None:
                    rt = truth.R[int(round(t / dt))]
                    eta = p + rt @ ch.b_vec
                else:
                    eta = p
                r = np.concatenate([[1.0, 0.0], -eta])
            elif ch.kind is ChannelKind.INERTIAL_VELOCITY:
                r = np.concatenate([[0.0, 1.0], -v])
            else:
                r = np.array([0.0, -1.0, 0.0, 0.0, 0.0])
            rows.append(np.kron(r.reshape(1, 5), np.eye(3)))
        if not rows:
            return np.zeros((0, 15))
        return np.vstack(rows)

    time_varying = any(
        ch.kind in (ChannelKind.INERTIAL_POSITION, ChannelKind.INERTIAL_VELOCITY)
        for ch in channels
    )
    if time_varying:
        return a_of_t, build_c
    c_const = build_c(0.0)
    return a_of_t, lambda t: c_const


def check_observability(
    cfg: ScenarioConfig,
    delta: float,
    grid: list[float],
    threshold: float = DEFAULT_MU_THRESHOLD,
) -> list[GramianReport]:
    """Gramian smallest eigenvalue across a grid of window start times."""
    a_of_t, c_of_t = scenario_output_map(cfg, horizon=max(grid) + delta)
    return [
        gramian(a_of_t, c_of_t, t, delta, cfg.observer.dt, threshold=threshold)
        for t in grid
    ]


def check_gps_pe(
    cfg: ScenarioConfig, t: float, delta: float, threshold: float = DEFAULT_MU_THRESHOLD
) -> ExcitationReport:
    """Persistency-of-excitation check for a GPS-style configuration."""
    spec = cfg.trajectory
    mags = [c for c in cfg.channels if c.kind is ChannelKind.BODY_VECTOR and c.gamma == 0]
    has_vel = any(c.kind is ChannelKind.INERTIAL_VELOCITY for c in cfg.channels)

    def vdot_of_t(s):
        return eval_trajectory(spec, s)[2]

    def v_of_t(s):
        return eval_trajectory(spec, s)[1]

    return gps_pe_condition(
        vdot_of_t, v_of_t, spec.g,
        xi_mag=mags[0].xi_vec if mags else None,
        use_mag=bool(mags), use_vel=has_vel,
        t=t, delta=delta, dt=cfg.observer.dt, threshold=threshold,
    )


def write_observability_csv(reports: list[GramianReport], path) -> None:
    from .observability import OBSV_CSV_SCHEMA

    with open(path, "w", newline="") as fh:
        fh.write(f"# {OBSV_CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["t", "delta", "mu", "pass"])
        for r in reports:
            w.writerow([f"{r.t:.17g}", f"{r.delta:.17g}", f"{r.mu:.17g}", int(r.passed)])
