"""Reformulation of raw measurements into the unified right-invariant form.

Each channel's sample is mapped to a reference vector r in R^5 and a
processed 3-vector y such that, stacking y_bold = [y; r] and
r_bold = [0_3; r], the noiseless truth satisfies

    y_bold = X^{-1} r_bold

for the extended state X in SE_5(3). With that, the innovation
dy_i = r_bold_i - Xhat y_bold_i is computable from measured data alone,
and the stacked output matrix C(t) (rows r_i^T kron I_3) makes the
translational error dynamics linear.

Reference vectors per kind (xi, b known channel constants; eta the raw
sample):

    body_vector        y = eta            r = [gamma, 0, -xi^T]
    inertial_position  y = b              r = [1, 0, -eta^T]
    inertial_velocity  y = 0              r = [0, 1, -eta^T]
    body_velocity      y = eta            r = [0, -1, 0, 0, 0]

The position/velocity reference vectors are rebuilt from the latest sample
at every measurement epoch (time-varying r), noisy as measured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie import SEn
from .sensors import ChannelKind, ChannelSpec, MeasurementSample

_I3 = np.eye(3)
_G = np.hstack([np.eye(3), np.zeros((3, 5))])  # picks the top block of an 8-vector


@dataclass(frozen=True)
class UnifiedOutput:
    """One channel's processed output: y, r, and their stacked 8-vectors."""

    y: np.ndarray
    r: np.ndarray

    @property
    def y_bold(self) -> np.ndarray:
        return np.concatenate([self.y, self.r])

    @property
    def r_bold(self) -> np.ndarray:
        return np.concatenate([np.zeros(3), self.r])


def reference_vector(channel: ChannelSpec, sample: MeasurementSample) -> UnifiedOutput:
    """Build (y, r) for one channel from its latest raw sample."""
    kind = channel.kind
    if kind is ChannelKind.BODY_VECTOR:
        r = np.concatenate([[float(channel.gamma), 0.0], -channel.xi_vec])
        return UnifiedOutput(y=np.asarray(sample.y, dtype=float), r=r)
    if kind is ChannelKind.INERTIAL_POSITION:
        r = np.concatenate([[1.0, 0.0], -np.asarray(sample.y, dtype=float)])
        return UnifiedOutput(y=channel.b_vec, r=r)
    if kind is ChannelKind.INERTIAL_VELOCITY:
        r = np.concatenate([[0.0, 1.0], -np.asarray(sample.y, dtype=float)])
        return UnifiedOutput(y=np.zeros(3), r=r)
    # body velocity
    return UnifiedOutput(y=np.asarray(sample.y, dtype=float), r=np.array([0.0, -1.0, 0.0, 0.0, 0.0]))


def output_matrix(unified: list[UnifiedOutput]) -> np.ndarray:
    """C(t): stacked row blocks r_i^T kron I_3, shape (3m, 15)."""
    if not unified:
        raise ValueError("at least one output channel is required")
    return np.vstack([np.kron(u.r.reshape(1, 5), _I3) for u in unified])


def build_unified(
    channels: list[ChannelSpec], samples: list[MeasurementSample]
) -> tuple[list[UnifiedOutput], np.ndarray]:
    """Unified outputs plus the stacked output matrix, in channel order."""
    if len(channels) != len(samples):
        raise ValueError("one sample per channel required")
    unified = [reference_vector(c, s) for c, s in zip(channels, samples)]
    return unified, output_matrix(unified)


def innovation_inputs(
    unified: list[UnifiedOutput], xhat: SEn
) -> tuple[list[np.ndarray], np.ndarray]:
    """Innovations dy_i = r_bold_i - Xhat y_bold_i and their stack.

    Needs no truth access: y_bold is measured. Returns the list of
    8-vectors and the 3m-vector stacking G dy_i.
    """
    if xhat.n != 5:
        raise ValueError("innovations are defined on SE_5(3)")
    dys = [u.r_bold - xhat.apply(u.y_bold) for u in unified]
    dz = np.concatenate([dy[:3] for dy in dys])
    return dys, dz


def innovation_stack(unified: list[UnifiedOutput], rhat: np.ndarray, zhat: np.ndarray) -> np.ndarray:
    """Fast path for dz used in the integration loop.

    G dy_i = -(Rhat y_i + zhat r_i); every channel at once.
    """
    ys = np.stack([u.y for u in unified])
    rs = np.stack([u.r for u in unified])
    return -(ys @ rhat.T + rs @ zhat.T).reshape(-1)


def fast_output_matrix(rs: np.ndarray) -> np.ndarray:
    """Output matrix from stacked reference vectors; same values as
    :func:`output_matrix` without the per-channel Kronecker products."""
    m = rs.shape[0]
    return np.einsum("ij,ab->iajb", rs, _I3).reshape(3 * m, 15)


class UnifiedLayout:
    """Batch mapping from raw channel samples to (y, r) stacks.

    Precomputes the constant parts per channel so the integration loop can
    refresh the stacks from an (m, 3) array of raw samples in O(1) numpy
    calls. Matches :func:`reference_vector` channel by channel.
    """

    def __init__(self, channels: list[ChannelSpec]):
        m = len(channels)
        self.channels = list(channels)
        self.y_base = np.zeros((m, 3))
        self.r_base = np.zeros((m, 5))
        self.y_raw = np.zeros(m, dtype=bool)   # y copies the raw sample
        self.r_raw = np.zeros(m, dtype=bool)   # r carries -raw in its tail
        self.xi_mat = np.zeros((m, 3))
        self.gamma_vec = np.zeros(m)
        self.b_mat = np.zeros((m, 3))
        self.body_vec = np.zeros(m, dtype=bool)
        self.in_pos = np.zeros(m, dtype=bool)
        self.in_vel = np.zeros(m, dtype=bool)
        self.body_vel = np.zeros(m, dtype=bool)
        for i, ch in enumerate(channels):
            if ch.kind is ChannelKind.BODY_VECTOR:
                self.r_base[i] = np.concatenate([[float(ch.gamma), 0.0], -ch.xi_vec])
                self.y_raw[i] = True
                self.xi_mat[i] = ch.xi_vec
                self.gamma_vec[i] = ch.gamma
                self.body_vec[i] = True
            elif ch.kind is ChannelKind.INERTIAL_POSITION:
                self.y_base[i] = ch.b_vec
                self.r_base[i, 0] = 1.0
                self.r_raw[i] = True
                self.b_mat[i] = ch.b_vec
                self.in_pos[i] = True
            elif ch.kind is ChannelKind.INERTIAL_VELOCITY:
                self.r_base[i, 1] = 1.0
                self.r_raw[i] = True
                self.in_vel[i] = True
            else:
                self.r_base[i, 1] = -1.0
                self.y_raw[i] = True
                self.body_vel[i] = True
        self.constant_r = not self.r_raw.any()
        self._c_cache = fast_output_matrix(self.r_base) if self.constant_r else None
        self._y_raw_idx = np.nonzero(self.y_raw)[0]
        self._r_raw_idx = np.nonzero(self.r_raw)[0]
        self._bv_idx = np.nonzero(self.body_vec)[0]
        self._ip_idx = np.nonzero(self.in_pos)[0]
        self._iv_idx = np.nonzero(self.in_vel)[0]
        self._bvel_idx = np.nonzero(self.body_vel)[0]
        self._bv_xi = self.xi_mat[self._bv_idx]
        self._bv_gamma = self.gamma_vec[self._bv_idx, None]
        self._ip_b = self.b_mat[self._ip_idx]

    def stacks(self, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(ys, rs) for one stage given raw samples, shape (m, 3)."""
        ys = self.y_base.copy()
        if self._y_raw_idx.size:
            ys[self._y_raw_idx] = raw[self._y_raw_idx]
        rs = self.r_base.copy()
        if self._r_raw_idx.size:
            rs[self._r_raw_idx, 2:] = -raw[self._r_raw_idx]
        return ys, rs

    def c_matrix(self, rs: np.ndarray) -> np.ndarray:
        if self._c_cache is not None:
            return self._c_cache
        return fast_output_matrix(rs)

    def raw_from_pose(self, r: np.ndarray, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Noiseless raw samples for every channel at a pose, (m, 3)."""
        raw = np.empty((len(self.channels), 3))
        if self._bv_idx.size:
            raw[self._bv_idx] = (self._bv_xi - self._bv_gamma * p[None, :]) @ r
        if self._ip_idx.size:
            raw[self._ip_idx] = p[None, :] + self._ip_b @ r.T
        if self._iv_idx.size:
            raw[self._iv_idx] = v
        if self._bvel_idx.size:
            raw[self._bvel_idx] = v @ r
        return raw
