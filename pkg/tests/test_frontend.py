import numpy as np
import pytest

from se5nav.frontend import (
    UnifiedLayout,
    build_unified,
    fast_output_matrix,
    innovation_inputs,
    innovation_stack,
    output_matrix,
    reference_vector,
)
from se5nav.lie import SEn, kron, so3_exp, vec
from se5nav.sensors import ChannelKind, ChannelSpec, MeasurementSample, noiseless_value
from se5nav.trajectory import TruthState

RNG = np.random.default_rng(2024)

C = 1 / np.sqrt(2)

KINDS = [
    ChannelSpec(kind=ChannelKind.BODY_VECTOR, xi=(2.0, 0.0, 0.0), gamma=1),
    ChannelSpec(kind=ChannelKind.BODY_VECTOR, xi=(C, 0.0, C), gamma=0),
    ChannelSpec(kind=ChannelKind.INERTIAL_POSITION, b=(0.1, 0.2, -0.3)),
    ChannelSpec(kind=ChannelKind.INERTIAL_VELOCITY),
    ChannelSpec(kind=ChannelKind.BODY_VELOCITY),
]


def random_truth(rng):
    return TruthState(
        t=0.0,
        p=3 * rng.standard_normal(3),
        v=2 * rng.standard_normal(3),
        vdot=np.zeros(3),
        R=so3_exp(2 * rng.standard_normal(3)),
        omega=np.zeros(3),
        aB=np.zeros(3),
    )


def noiseless_sample(ch, truth, idx=0):
    return MeasurementSample(t=truth.t, channel=idx, y=noiseless_value(ch, truth))


class TestReferenceVectors:
    def test_direction_channel_row(self):
        ch = KINDS[1]
        s = MeasurementSample(0.0, 0, np.zeros(3))
        u = reference_vector(ch, s)
        assert np.allclose(u.r, [0, 0, -C, 0, -C])

    def test_body_velocity_row_ignores_sample(self):
        ch = KINDS[4]
        for _ in range(5):
            s = MeasurementSample(0.0, 0, RNG.standard_normal(3))
            u = reference_vector(ch, s)
            assert np.array_equal(u.r, [0, -1, 0, 0, 0])
            assert np.array_equal(u.y, s.y)

    def test_position_channel_carries_sample_in_tail(self):
        ch = KINDS[2]
        s = MeasurementSample(0.0, 0, np.array([1.0, 2.0, 3.0]))
        u = reference_vector(ch, s)
        assert np.array_equal(u.r, [1, 0, -1, -2, -3])
        assert np.array_equal(u.y, [0.1, 0.2, -0.3])  # lever arm

    def test_velocity_channel_has_zero_processed_output(self):
        ch = KINDS[3]
        s = MeasurementSample(0.0, 0, np.array([4.0, 5.0, 6.0]))
        u = reference_vector(ch, s)
        assert np.array_equal(u.r, [0, 1, -4, -5, -6])
        assert np.array_equal(u.y, np.zeros(3))

    def test_leading_components_in_unit_set(self):
        truth = random_truth(RNG)
        for ch in KINDS:
            u = reference_vector(ch, noiseless_sample(ch, truth))
            assert set(np.round(u.r[:2], 12)).issubset({-1.0, 0.0, 1.0})

    def test_unified_identity_all_kinds(self):
        """y_bold = X^{-1} r_bold for every output kind (four-case check)."""
        worst = 0.0
        for _ in range(200):
            truth = random_truth(RNG)
            x = SEn(truth.R, truth.z)
            xinv = np.linalg.inv(x.as_matrix())
            for ch in KINDS:
                u = reference_vector(ch, noiseless_sample(ch, truth))
                worst = max(worst, np.max(np.abs(xinv @ u.r_bold - u.y_bold)))
        assert worst < 1e-12

    def test_body_velocity_reference_is_forced(self):
        """Carrying the sample in the tail instead of the -1 marker breaks
        the identity for the body-velocity kind; the pinned row is the one
        that closes it."""
        ch = KINDS[4]
        truth = random_truth(RNG)
        x_inv = np.linalg.inv(SEn(truth.R, truth.z).as_matrix())
        y = noiseless_value(ch, truth)
        good = np.array([0.0, -1.0, 0.0, 0.0, 0.0])
        bad = np.concatenate([[0.0, 0.0], -y])
        for r, should_pass in ((good, True), (bad, False)):
            r_bold = np.concatenate([np.zeros(3), r])
            y_bold = np.concatenate([y, r])
            err = np.max(np.abs(x_inv @ r_bold - y_bold))
            assert (err < 1e-12) == should_pass


class TestOutputMatrix:
    def test_single_body_velocity_structure(self):
        u = reference_vector(KINDS[4], MeasurementSample(0.0, 0, np.zeros(3)))
        c = output_matrix([u])
        assert c.shape == (3, 15)
        expected = kron(np.array([[0.0, -1.0, 0.0, 0.0, 0.0]]), np.eye(3))
        assert np.array_equal(c, expected)
        assert np.array_equal(c[:, 3:6], -np.eye(3))

    def test_stereo_block_rows(self):
        landmarks = [(2, 0, 0), (0, 0.4, 0), (0, 0, 0.5), (1, 0, 0), (0, 1, 0)]
        chans = [ChannelSpec(kind=ChannelKind.BODY_VECTOR, xi=xi, gamma=1) for xi in landmarks]
        truth = random_truth(RNG)
        unified, c = build_unified(chans, [noiseless_sample(ch, truth) for ch in chans])
        assert c.shape == (15, 15)
        for i, xi in enumerate(landmarks):
            r = np.concatenate([[1.0, 0.0], -np.asarray(xi, dtype=float)])
            assert np.array_equal(c[3 * i: 3 * i + 3], kron(r.reshape(1, 5), np.eye(3)))

    def test_empty_channel_list_rejected(self):
        with pytest.raises(ValueError):
            output_matrix([])

    def test_fast_output_matrix_matches(self):
        rs = RNG.standard_normal((4, 5))
        ref = np.vstack([kron(r.reshape(1, 5), np.eye(3)) for r in rs])
        assert np.array_equal(fast_output_matrix(rs), ref)

    def test_omitting_channels_deletes_block_rows(self):
        truth = random_truth(RNG)
        samples = [noiseless_sample(ch, truth) for ch in KINDS]
        _, c_all = build_unified(KINDS, samples)
        keep = [0, 2, 4]
        _, c_sub = build_unified([KINDS[i] for i in keep], [samples[i] for i in keep])
        for j, i in enumerate(keep):
            assert np.array_equal(c_sub[3 * j: 3 * j + 3], c_all[3 * i: 3 * i + 3])


class TestInnovations:
    def test_zero_for_perfect_estimate(self):
        truth = random_truth(RNG)
        xhat = SEn(truth.R, truth.z)
        unified, _ = build_unified(KINDS, [noiseless_sample(ch, truth) for ch in KINDS])
        dys, dz = innovation_inputs(unified, xhat)
        assert np.max(np.abs(dz)) < 1e-12
        for dy in dys:
            assert np.max(np.abs(dy)) < 1e-12
            assert np.array_equal(dy[3:], np.zeros(5))  # structural zeros

    def test_matches_group_expression(self):
        """dy = (I8 - Xtilde^{-1}) r_bold with Xtilde = X Xhat^{-1}."""
        worst = 0.0
        for _ in range(100):
            truth = random_truth(RNG)
            x = SEn(truth.R, truth.z)
            xhat = SEn(so3_exp(2 * RNG.standard_normal(3)), RNG.standard_normal((3, 5)))
            unified, _ = build_unified(KINDS, [noiseless_sample(ch, truth) for ch in KINDS])
            dys, _ = innovation_inputs(unified, xhat)
            xt_inv = (xhat @ x.inverse()).as_matrix()
            for u, dy in zip(unified, dys):
                expect = (np.eye(8) - xt_inv) @ u.r_bold
                worst = max(worst, np.max(np.abs(dy - expect)))
        assert worst < 1e-12

    def test_position_offset_innovation(self):
        # Rhat = R = I, phat = p + delta, single position channel, b = 0
        ch = ChannelSpec(kind=ChannelKind.INERTIAL_POSITION, b=(0.0, 0.0, 0.0))
        p = np.array([1.0, -2.0, 0.5])
        delta = np.array([0.1, 0.2, -0.3])
        truth = TruthState(t=0.0, p=p, v=np.zeros(3), vdot=np.zeros(3),
                           R=np.eye(3), omega=np.zeros(3), aB=np.zeros(3))
        zhat = truth.z.copy()
        zhat[:, 0] = p + delta
        xhat = SEn(np.eye(3), zhat)
        unified, _ = build_unified([ch], [noiseless_sample(ch, truth)])
        dys, dz = innovation_inputs(unified, xhat)
        x = SEn(truth.R, truth.z)
        expect = ((np.eye(8) - (xhat @ x.inverse()).as_matrix()) @ unified[0].r_bold)[:3]
        assert np.allclose(dz, expect, atol=1e-13)
        assert np.allclose(dz, -delta, atol=1e-13)  # minus the position offset

    def test_linchpin_identity(self):
        """dz = (I_m kron Rhat) C(t) x_body for arbitrary estimate errors."""
        worst = 0.0
        m = len(KINDS)
        for _ in range(200):
            truth = random_truth(RNG)
            rhat = so3_exp(2 * RNG.standard_normal(3))
            zhat = RNG.standard_normal((3, 5))
            xhat = SEn(rhat, zhat)
            unified, c = build_unified(KINDS, [noiseless_sample(ch, truth) for ch in KINDS])
            _, dz = innovation_inputs(unified, xhat)
            rtilde = truth.R @ rhat.T
            x_body = vec(truth.R.T @ (truth.z - rtilde @ zhat))
            rhs = kron(np.eye(m), rhat) @ c @ x_body
            worst = max(worst, np.max(np.abs(dz - rhs)))
        assert worst < 1e-12

    def test_projected_identity(self):
        """(I_m kron Rhat)^T dz equals C x_body directly."""
        truth = random_truth(RNG)
        rhat = so3_exp(RNG.standard_normal(3))
        zhat = RNG.standard_normal((3, 5))
        unified, c = build_unified(KINDS, [noiseless_sample(ch, truth) for ch in KINDS])
        _, dz = innovation_inputs(unified, SEn(rhat, zhat))
        x_body = vec(truth.R.T @ (truth.z - truth.R @ rhat.T @ zhat))
        lhs = kron(np.eye(len(KINDS)), rhat).T @ dz
        assert np.max(np.abs(lhs - c @ x_body)) < 1e-12

    def test_innovation_stack_fast_path(self):
        truth = random_truth(RNG)
        rhat = so3_exp(RNG.standard_normal(3))
        zhat = RNG.standard_normal((3, 5))
        unified, _ = build_unified(KINDS, [noiseless_sample(ch, truth) for ch in KINDS])
        _, dz = innovation_inputs(unified, SEn(rhat, zhat))
        assert np.allclose(innovation_stack(unified, rhat, zhat), dz, atol=1e-13)

    def test_wrong_group_dimension_rejected(self):
        truth = random_truth(RNG)
        unified, _ = build_unified(KINDS, [noiseless_sample(ch, truth) for ch in KINDS])
        with pytest.raises(ValueError):
            innovation_inputs(unified, SEn.identity(2))


class TestUnifiedLayout:
    def test_matches_reference_vector_per_channel(self):
        layout = UnifiedLayout(KINDS)
        truth = random_truth(RNG)
        raw = np.stack([noiseless_value(ch, truth) for ch in KINDS])
        ys, rs = layout.stacks(raw)
        for i, ch in enumerate(KINDS):
            u = reference_vector(ch, MeasurementSample(0.0, i, raw[i]))
            assert np.array_equal(ys[i], u.y)
            assert np.array_equal(rs[i], u.r)
        assert np.array_equal(layout.c_matrix(rs), output_matrix(
            [reference_vector(ch, MeasurementSample(0.0, i, raw[i])) for i, ch in enumerate(KINDS)]
        ))

    def test_raw_from_pose_matches_noiseless_values(self):
        layout = UnifiedLayout(KINDS)
        truth = random_truth(RNG)
        raw = layout.raw_from_pose(truth.R, truth.p, truth.v)
        for i, ch in enumerate(KINDS):
            assert np.allclose(raw[i], noiseless_value(ch, truth), atol=1e-14)

    def test_constant_r_caching_for_body_channels(self):
        chans = [ChannelSpec(kind=ChannelKind.BODY_VECTOR, xi=(1, 2, 3), gamma=1),
                 ChannelSpec(kind=ChannelKind.BODY_VELOCITY)]
        layout = UnifiedLayout(chans)
        assert layout.constant_r
        raw = RNG.standard_normal((2, 3))
        _, rs = layout.stacks(raw)
        assert layout.c_matrix(rs) is layout.c_matrix(rs)
