"""Quantitative observability analysis for the translational error system.

Provides the state-transition matrix of the time-varying error dynamics,
the windowed observability Gramian

    W(t, t + delta) = (1/delta) int_t^{t+delta} phi^T C^T C phi ds,

whose smallest eigenvalue certifies uniform observability when bounded
away from zero, and the closed-form persistency-of-excitation check for
the GPS-aided configuration (position + optional magnetometer + optional
velocity channels), which only needs the trajectory's acceleration,
velocity, and the reference magnetic field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OBSV_CSV_SCHEMA = "se5nav-observability-v1"

DEFAULT_MU_THRESHOLD = 1e-6


def transition_matrix(a_of_t, t0: float, t1: float, dt: float) -> np.ndarray:
    """RK4 integration of d(phi)/dt = A(t) phi from phi(t0, t0) = I."""
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    n_dim = a_of_t(t0).shape[0]
    phi = np.eye(n_dim)
    n = int(round((t1 - t0) / dt))
    for k in range(n):
        t = t0 + k * dt
        a1 = a_of_t(t)
        a2 = a_of_t(t + 0.5 * dt)
        a4 = a_of_t(t + dt)
        k1 = a1 @ phi
        k2 = a2 @ (phi + 0.5 * dt * k1)
        k3 = a2 @ (phi + 0.5 * dt * k2)
        k4 = a4 @ (phi + dt * k3)
        phi = phi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


@dataclass(frozen=True)
class GramianReport:
    t: float
    delta: float
    W: np.ndarray
    mu: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.mu > self.threshold


def gramian(
    a_of_t,
    c_of_t,
    t: float,
    delta: float,
    dt: float,
    threshold: float = DEFAULT_MU_THRESHOLD,
) -> GramianReport:
    """Windowed observability Gramian by composite-trapezoid quadrature.

    The transition matrix is advanced incrementally across the quadrature
    nodes, so the cost is one RK4 sweep of the window.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = int(round(delta / dt))
    n_dim = a_of_t(t).shape[0]
    phi = np.eye(n_dim)
    w = np.zeros((n_dim, n_dim))

    def integrand(s, phi_s):
        cs = c_of_t(s) @ phi_s
        return cs.T @ cs

    prev = integrand(t, phi)
    for k in range(n):
        s = t + k * dt
        phi = _phi_step(a_of_t, phi, s, dt)
        cur = integrand(s + dt, phi)
        w += 0.5 * dt * (prev + cur)
        prev = cur
    w /= delta
    w = 0.5 * (w + w.T)
    mu = float(np.linalg.eigvalsh(w)[0])
    return GramianReport(t=t, delta=delta, W=w, mu=mu, threshold=threshold)


def _phi_step(a_of_t, phi: np.ndarray, t: float, dt: float) -> np.ndarray:
    a1 = a_of_t(t)
    a2 = a_of_t(t + 0.5 * dt)
    a4 = a_of_t(t + dt)
    k1 = a1 @ phi
    k2 = a2 @ (phi + 0.5 * dt * k1)
    k3 = a2 @ (phi + 0.5 * dt * k2)
    k4 = a4 @ (phi + dt * k3)
    return phi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True)
class ExcitationReport:
    t: float
    delta: float
    matrix: np.ndarray
    min_eig: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.min_eig >= self.threshold


def gps_pe_condition(
    vdot_of_t,
    v_of_t,
    g: np.ndarray,
    xi_mag: np.ndarray | None,
    use_mag: bool,
    use_vel: bool,
    t: float,
    delta: float,
    dt: float = 1e-3,
    threshold: float = DEFAULT_MU_THRESHOLD,
) -> ExcitationReport:
    """Persistency-of-excitation matrix for the GPS-aided configuration.

    Evaluates (1/delta) int (vdot - g)(vdot - g)^T ds, plus xi xi^T when a
    magnetometer channel is present, plus the windowed velocity outer
    product when a velocity channel is present. Full rank of the sum (min
    eigenvalue at or above the threshold) is sufficient for uniform
    observability of the corresponding error pair.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    g = np.asarray(g, dtype=float)
    n = int(round(delta / dt))
    ts = t + np.arange(n + 1) * dt

    acc = np.zeros((3, 3))
    vel = np.zeros((3, 3))
    weights = np.full(n + 1, dt)
    weights[0] = weights[-1] = 0.5 * dt
    for s, wq in zip(ts, weights):
        f = np.asarray(vdot_of_t(s), dtype=float) - g
        acc += wq * np.outer(f, f)
        if use_vel:
            vv = np.asarray(v_of_t(s), dtype=float)
            vel += wq * np.outer(vv, vv)
    m = acc / delta
    if use_mag:
        if xi_mag is None:
            raise ValueError("magnetometer direction required when use_mag is set")
        xi = np.asarray(xi_mag, dtype=float)
        m = m + np.outer(xi, xi)
    if use_vel:
        m = m + vel / delta
    m = 0.5 * (m + m.T)
    min_eig = float(np.linalg.eigvalsh(m)[0])
    return ExcitationReport(t=t, delta=delta, matrix=m, min_eig=min_eig, threshold=threshold)
