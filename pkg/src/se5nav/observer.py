"""Geometric navigation observer on SE_5(3) with Riccati-tuned gains.

The estimator carries Xhat = T_5(Rhat, [phat, vhat, ehat_1..3]) and a
15 x 15 Riccati matrix P. One fixed-step update integrates

    dXhat/dt = Xhat U + [Xhat, D] + Delta Xhat
    dP/dt    = A P + P A^T - P C^T Q C P + V

with RK4 (IMU inputs sampled at the stage times when available), then
re-projects the rotation block onto SO(3) and symmetrizes P. The
innovation Delta has rotation part hat(delta_r) built from the auxiliary
basis columns and translation part K_I dz folded back into a 3 x 5 block.

The translational error x_B = vec(R^T (z - Rtilde zhat)) of this observer
follows the linear time-varying closed loop

    dx_B/dt = (A(t) - K_B(t) C(t)) x_B,     K_B = P C^T Q,

independently of the attitude error; :func:`kalman_reference_run`
integrates that system directly and serves as the oracle for the full
observer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frontend import UnifiedOutput, output_matrix
from .lie import SEn, hat, kron, project_rotation, psi, rotation_angle, vec
from .trajectory import TruthState

_I3 = np.eye(3)
_E3 = np.eye(3)

ESTIMATE_CSV_SCHEMA = "se5nav-estimate-v1"


class DivergenceError(RuntimeError):
    """Numerical failure of a run; carries the last healthy state."""

    def __init__(self, message: str, state: "ObserverState | None" = None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class ObserverConfig:
    """Gains and weights. q and v scale identity weight matrices."""

    rho: tuple[float, float, float] = (10.0, 6.0, 4.0)
    q: float = 100.0
    v: float = 10.0
    dt: float = 1e-3
    gravity: tuple[float, float, float] = (0.0, 0.0, 9.81)

    def __post_init__(self):
        if any(r <= 0 for r in self.rho) or len(set(self.rho)) != 3:
            raise ValueError("rho must be three positive, pairwise distinct scalars")
        if self.q <= 0 or self.v <= 0:
            raise ValueError("q and v weights must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def g(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)


@dataclass(frozen=True)
class ObserverState:
    xhat: SEn
    P: np.ndarray
    t: float

    def __post_init__(self):
        if self.xhat.n != 5:
            raise ValueError("observer state lives on SE_5(3)")
        p = np.asarray(self.P, dtype=float)
        if p.shape != (15, 15):
            raise ValueError("P must be 15 x 15")
        if np.max(np.abs(p - p.T)) > 1e-9:
            raise ValueError("P must be symmetric")

    @property
    def rhat(self) -> np.ndarray:
        return self.xhat.rotation

    @property
    def zhat(self) -> np.ndarray:
        return self.xhat.translation

    @property
    def phat(self) -> np.ndarray:
        return self.xhat.translation[:, 0]

    @property
    def vhat(self) -> np.ndarray:
        return self.xhat.translation[:, 1]

    @property
    def ehat(self) -> np.ndarray:
        return self.xhat.translation[:, 2:5]


# system matrices ----------------------------------------------------------

def build_abar(g: np.ndarray) -> np.ndarray:
    """5 x 5 drift matrix of the extended translation block."""
    abar = np.zeros((5, 5))
    abar[0, 1] = 1.0
    abar[1, 2:] = np.asarray(g, dtype=float)
    return abar


def build_d(g: np.ndarray) -> np.ndarray:
    """Constant 8 x 8 commutator matrix (bottom-right Abar^T)."""
    d = np.zeros((8, 8))
    d[3:, 3:] = build_abar(g).T
    return d


def build_u(omega: np.ndarray, accel: np.ndarray) -> np.ndarray:
    """8 x 8 input matrix: hat(omega) block plus accel in column 4."""
    u = np.zeros((8, 8))
    u[:3, :3] = hat(omega)
    u[:3, 4] = np.asarray(accel, dtype=float)
    return u


_A_BASE_CACHE: dict[bytes, np.ndarray] = {}


def _a_base(g: np.ndarray) -> np.ndarray:
    key = g.tobytes()
    cached = _A_BASE_CACHE.get(key)
    if cached is None:
        cached = kron(build_abar(g), _I3)
        cached.setflags(write=False)
        _A_BASE_CACHE[key] = cached
    return cached


_BLOCK_DIAG_FLAT = np.concatenate(
    [[(3 * j + a) * 15 + 3 * j + b for a in range(3) for b in range(3)] for j in range(5)]
)


def build_a(omega: np.ndarray, g: np.ndarray) -> np.ndarray:
    """15 x 15 error-dynamics matrix Abar kron I_3 - I_5 kron hat(omega)."""
    a = _a_base(np.asarray(g, dtype=float)).copy()
    w = hat(omega)
    a.flat[_BLOCK_DIAG_FLAT] -= np.tile(w.reshape(-1), 5)
    return a


# innovation ---------------------------------------------------------------

def delta_r(ehat: np.ndarray, rho) -> np.ndarray:
    """Rotation innovation 0.5 sum_i rho_i (ehat_i x e_i)."""
    e1, e2, e3 = ehat[:, 0], ehat[:, 1], ehat[:, 2]
    r1, r2, r3 = rho
    return 0.5 * np.array([
        -r2 * e2[2] + r3 * e3[1],
        r1 * e1[2] - r3 * e3[0],
        -r1 * e1[1] + r2 * e2[0],
    ])


def delta_r_decomposition(rho, rhat: np.ndarray, rtilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split of delta_r into an attitude term and a translational-error term.

    Returns (psi(M Rtilde), Gamma) with M = diag(rho) and
    Gamma = 0.5 [0_{3x6}, rho_1 hat(e1) Rhat, rho_2 hat(e2) Rhat,
    rho_3 hat(e3) Rhat], so that delta_r = psi(M Rtilde) + Gamma x_B.
    """
    m = np.diag(rho)
    psi_term = psi(m @ rtilde)
    gamma = np.zeros((3, 15))
    for i in range(3):
        gamma[:, 6 + 3 * i: 9 + 3 * i] = 0.5 * rho[i] * (hat(_E3[:, i]) @ rhat)
    return psi_term, gamma


# gains --------------------------------------------------------------------

def gain(P: np.ndarray, C: np.ndarray, Q, rhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Riccati gain pair: body-frame K_B = P C^T Q and its inertial-frame
    conjugate K_I = (I_5 kron Rhat) K_B (I_m kron Rhat^T).

    The five 3 x 3m row blocks of K_I weight the innovation stack for the
    p, v, e1, e2, e3 columns of the estimate.
    """
    kb = P @ C.T * Q if np.isscalar(Q) else P @ C.T @ Q
    m = C.shape[0] // 3
    ki = kron(np.eye(5), rhat) @ kb @ kron(np.eye(m), rhat.T)
    return kb, ki


def _fold_gain_innovation(kb: np.ndarray, dz: np.ndarray, rhat: np.ndarray) -> np.ndarray:
    """3 x 5 translation correction vec_inv(K_I dz) without big Kroneckers."""
    u = (dz.reshape(-1, 3) @ rhat).reshape(-1)
    w = kb @ u
    return (w.reshape(5, 3) @ rhat.T).T


# integration core ----------------------------------------------------------

_DIAG15 = (np.arange(15), np.arange(15))


@dataclass
class StageInputs:
    """Everything the observer's vector field needs at one RK4 stage."""

    w_hat: np.ndarray   # hat(omega) at the stage time
    accel: np.ndarray   # accelerometer sample at the stage time
    a_mat: np.ndarray   # A(t) at the stage time (15 x 15)
    ys: np.ndarray      # processed outputs, (m, 3)
    rs: np.ndarray      # reference vectors, (m, 5)
    c_mat: np.ndarray   # output matrix for rs, (3m, 15)


def make_stage_inputs(omega, accel, ys, rs, c_mat, g) -> StageInputs:
    return StageInputs(
        w_hat=hat(omega), accel=np.asarray(accel, dtype=float),
        a_mat=build_a(omega, g), ys=ys, rs=rs, c_mat=c_mat,
    )


def _observer_rhs(rhat, zhat, P, st: StageInputs, q: float, v: float, rho, g):
    dz = -(st.ys @ rhat.T + st.rs @ zhat.T).reshape(-1)
    pct = P @ st.c_mat.T
    kb = pct * q
    dzeta = _fold_gain_innovation(kb, dz, rhat) if dz.size else 0.0
    hdr = hat(delta_r(zhat[:, 2:5], rho))
    drhat = rhat @ st.w_hat + hdr @ rhat
    dzhat = hdr @ zhat + dzeta
    dzhat[:, 0] += zhat[:, 1]
    dzhat[:, 1] += zhat[:, 2:5] @ g + rhat @ st.accel
    ap = st.a_mat @ P
    dP = ap + ap.T - kb @ pct.T
    dP[_DIAG15] += v
    return drhat, dzhat, dP


def _rk4_observer(rhat, zhat, P, stages, dt: float, q: float, v: float, rho, g):
    """One RK4 step over three StageInputs (start, midpoint, end).

    Returns raw (rhat, zhat, P); the caller projects and checks.
    """
    s0, s1, s2 = stages
    h2 = 0.5 * dt
    k1 = _observer_rhs(rhat, zhat, P, s0, q, v, rho, g)
    k2 = _observer_rhs(rhat + h2 * k1[0], zhat + h2 * k1[1], P + h2 * k1[2], s1, q, v, rho, g)
    k3 = _observer_rhs(rhat + h2 * k2[0], zhat + h2 * k2[1], P + h2 * k2[2], s1, q, v, rho, g)
    k4 = _observer_rhs(rhat + dt * k3[0], zhat + dt * k3[1], P + dt * k3[2], s2, q, v, rho, g)
    c6 = dt / 6.0
    rhat1 = rhat + c6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    zhat1 = zhat + c6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    p1 = P + c6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return rhat1, zhat1, p1


def _finalize_step(rhat, zhat, P, t):
    if not (np.isfinite(rhat).all() and np.isfinite(zhat).all() and np.isfinite(P).all()):
        raise DivergenceError(f"non-finite estimate at t={t:.4f}")
    rhat = project_rotation(rhat)
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        mineig = float(np.linalg.eigvalsh(P)[0])
        raise DivergenceError(
            f"Riccati matrix lost positive definiteness at t={t:.4f} "
            f"(min eig {mineig:.3e}); reduce dt or check observability"
        ) from None
    return rhat, zhat, P


# public operations ---------------------------------------------------------

def _riccati_rhs(P: np.ndarray, a: np.ndarray, c: np.ndarray, q, v) -> np.ndarray:
    ap = a @ P
    pct = P @ c.T
    kb = pct * q if np.isscalar(q) else pct @ q
    out = ap + ap.T - kb @ pct.T
    if np.isscalar(v):
        out[np.diag_indices_from(out)] += v
        return out
    return out + v


def riccati_step(P: np.ndarray, a: np.ndarray, c: np.ndarray, q, v, dt: float) -> np.ndarray:
    """One RK4 step of the Riccati flow with A, C held over the step.

    Symmetrizes the result and fails loudly if positive definiteness is
    lost (step too large, or the output map is not exciting enough).
    """
    k1 = _riccati_rhs(P, a, c, q, v)
    k2 = _riccati_rhs(P + 0.5 * dt * k1, a, c, q, v)
    k3 = _riccati_rhs(P + 0.5 * dt * k2, a, c, q, v)
    k4 = _riccati_rhs(P + dt * k3, a, c, q, v)
    out = P + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = 0.5 * (out + out.T)
    try:
        np.linalg.cholesky(out)
    except np.linalg.LinAlgError:
        mineig = float(np.linalg.eigvalsh(out)[0])
        raise DivergenceError(
            f"Riccati matrix lost positive definiteness (min eig {mineig:.3e}); "
            "reduce dt or check observability"
        ) from None
    return out


def observer_step(
    state: ObserverState,
    imu: tuple[np.ndarray, np.ndarray],
    unified: list[UnifiedOutput],
    cfg: ObserverConfig,
    C: np.ndarray | None = None,
) -> ObserverState:
    """Advance estimate and Riccati state by one fixed step.

    Parameters
    ----------
    state : ObserverState
    imu : (omega, accel)
        Either one (3,) sample per signal, held over the step, or (3, 3)
        stacks giving the samples at the step start, midpoint, and end.
    unified : list of UnifiedOutput
        Latest processed outputs, zero-order held over the step.
    cfg : ObserverConfig
    C : optional precomputed output matrix for `unified`.
    """
    omega = np.asarray(imu[0], dtype=float)
    accel = np.asarray(imu[1], dtype=float)
    if omega.ndim == 1:
        omega = np.repeat(omega[None, :], 3, axis=0)
        accel = np.repeat(accel[None, :], 3, axis=0)
    if C is None:
        C = output_matrix(unified) if unified else np.zeros((0, 15))
    if unified:
        ys = np.stack([u.y for u in unified])
        rs = np.stack([u.r for u in unified])
    else:  # open loop: pure prediction
        ys = np.zeros((0, 3))
        rs = np.zeros((0, 5))
    g = cfg.g
    stages = tuple(
        make_stage_inputs(omega[i], accel[i], ys, rs, C, g) for i in range(3)
    )
    rhat, zhat, P = _rk4_observer(
        state.rhat, state.zhat, state.P, stages, cfg.dt, cfg.q, cfg.v, cfg.rho, g
    )
    try:
        rhat, zhat, P = _finalize_step(rhat, zhat, P, state.t)
    except DivergenceError as err:
        raise DivergenceError(str(err), state) from None
    return ObserverState(xhat=SEn(rhat, zhat, check=False), P=P, t=state.t + cfg.dt)


# diagnostics --------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    """Right-invariant errors of an estimate against a truth sample."""

    rtilde: np.ndarray
    angle: float
    ztilde: np.ndarray
    x_body: np.ndarray
    column_norms: np.ndarray  # [p, v, e1, e2, e3] error norms


def error_arrays(truth_r, truth_z, rhat, zhat) -> ErrorReport:
    rtilde = truth_r @ rhat.T
    ztilde = truth_z - rtilde @ zhat
    x_body = vec(truth_r.T @ ztilde)
    return ErrorReport(
        rtilde=rtilde,
        angle=rotation_angle(rtilde),
        ztilde=ztilde,
        x_body=x_body,
        column_norms=np.linalg.norm(ztilde, axis=0),
    )


def error_report(state: ObserverState, truth: TruthState) -> ErrorReport:
    return error_arrays(truth.R, truth.z, state.rhat, state.zhat)


def geometric_error(state: ObserverState, truth: TruthState) -> SEn:
    """E = X Xhat^{-1} on SE_5(3), via group operations."""
    x = SEn(truth.R, truth.z, check=False)
    return x @ state.xhat.inverse()


def kalman_reference_run(
    a_of_t,
    c_of_t,
    q,
    v,
    p0: np.ndarray,
    x0: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Directly integrate the closed-loop translational error system.

    dx/dt = (A(t) - K_B(t) C(t)) x with K_B = P C^T Q and P from the same
    Riccati flow the full observer uses; RK4 with A and C evaluated at the
    stage times, matching the observer's staging. Returns (times, x
    trajectory) including the initial sample.
    """
    n = int(round((t1 - t0) / dt))
    ts = t0 + np.arange(n + 1) * dt
    xs = np.empty((n + 1, x0.size))
    xs[0] = x0
    x = np.array(x0, dtype=float)
    P = np.array(p0, dtype=float)

    def f(xx, pp, a, c):
        pct = pp @ c.T
        kb = pct * q if np.isscalar(q) else pct @ q
        dx = a @ xx - kb @ (c @ xx)
        ap = a @ pp
        dP = ap + ap.T - kb @ pct.T
        if np.isscalar(v):
            dP[np.diag_indices_from(dP)] += v
        else:
            dP = dP + v
        return dx, dP

    for k in range(n):
        t = ts[k]
        a0, a1, a2 = a_of_t(t), a_of_t(t + 0.5 * dt), a_of_t(t + dt)
        c0, c1, c2 = c_of_t(t), c_of_t(t + 0.5 * dt), c_of_t(t + dt)
        k1 = f(x, P, a0, c0)
        k2 = f(x + 0.5 * dt * k1[0], P + 0.5 * dt * k1[1], a1, c1)
        k3 = f(x + 0.5 * dt * k2[0], P + 0.5 * dt * k2[1], a1, c1)
        k4 = f(x + dt * k3[0], P + dt * k3[1], a2, c2)
        x = x + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        P = P + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        P = 0.5 * (P + P.T)
        xs[k + 1] = x
    return ts, xs
