import math

import numpy as np
import pytest

from poltrack.optics import (
    EpcState,
    LinkBudget,
    RandomWalkChannel,
    ScramblerChannel,
    SqueezerState,
    StaticChannel,
    channel_step,
    default_epc,
    drift_axes,
    epc_rotation,
    squeezer_rotation,
    transmittance,
)
from poltrack.poincare import (
    IDENTITY,
    StokesVector,
    apply_rotation,
    compose,
    inverse,
    rotation_from_axis_angle,
)

from conftest import random_unit, rodrigues_matrix

S1 = StokesVector(1.0, 0.0, 0.0)
S2 = StokesVector(0.0, 1.0, 0.0)
S3 = StokesVector(0.0, 0.0, 1.0)


def make_squeezer(voltage=75.0, gain=math.pi / 75, axis=S1):
    return SqueezerState(axis=axis, nominal_axis=axis, gain=gain, voltage=voltage)


class TestSqueezer:
    def test_zero_voltage_is_identity(self):
        sq = SqueezerState(axis=S1, nominal_axis=S1, gain=0.1, voltage=0.0)
        r = squeezer_rotation(sq)
        assert r.angle == 0.0

    def test_linear_voltage_map(self):
        sq = SqueezerState(axis=S1, nominal_axis=S1, gain=math.pi / 10, voltage=5.0, v_max=10.0)
        r = squeezer_rotation(sq)
        assert r.angle == pytest.approx(math.pi / 2, abs=1e-12)
        assert r.axis.as_tuple() == pytest.approx(S1.as_tuple())

    def test_coaxial_voltages_add(self):
        a = squeezer_rotation(make_squeezer(voltage=30.0))
        b = squeezer_rotation(make_squeezer(voltage=45.0))
        combined = compose(b, a)
        assert combined.angle == pytest.approx(math.pi / 75 * 75.0, abs=1e-9)

    def test_voltage_range_enforced(self):
        with pytest.raises(ValueError):
            make_squeezer(voltage=200.0)
        with pytest.raises(ValueError):
            make_squeezer(voltage=-1.0)

    def test_center(self):
        assert make_squeezer().center == 75.0


class TestEpc:
    def test_requires_paired_nominal_axes(self):
        good = default_epc()
        sqs = list(good.squeezers)
        sqs[2] = SqueezerState(axis=S2, nominal_axis=S2, gain=0.04, voltage=75.0)
        with pytest.raises(ValueError):
            EpcState(tuple(sqs))

    def test_all_zero_voltages_is_identity(self):
        epc = default_epc(v_min=-10.0, v_max=10.0)
        epc = EpcState(tuple(
            SqueezerState(sq.axis, sq.nominal_axis, sq.gain, 0.0, sq.v_min, sq.v_max)
            for sq in epc.squeezers
        ))
        assert epc_rotation(epc).angle == 0.0

    def test_single_energized_stage(self):
        epc = default_epc(v_min=-10.0, v_max=10.0)
        base = EpcState(tuple(
            SqueezerState(sq.axis, sq.nominal_axis, sq.gain, 0.0, sq.v_min, sq.v_max)
            for sq in epc.squeezers
        ))
        driven = base.with_voltage(0, 5.0)
        want = squeezer_rotation(driven.squeezers[0])
        got = epc_rotation(driven)
        assert (got.w, got.x, got.y, got.z) == pytest.approx((want.w, want.x, want.y, want.z))

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            epc = default_epc(rng, gain_jitter=0.1)
            for i in range(4):
                epc = epc.with_voltage(i, rng.uniform(0.0, 150.0))
            m = np.eye(3)
            for sq in epc.squeezers:
                m = rodrigues_matrix(sq.axis.as_tuple(), sq.gain * sq.voltage) @ m
            s = StokesVector(*random_unit(rng))
            got = apply_rotation(epc_rotation(epc), s)
            assert np.allclose(got.as_tuple(), m @ np.array(s.as_tuple()), atol=1e-9)

    def test_always_a_proper_rotation(self):
        rng = np.random.default_rng(22)
        for _ in range(300):
            epc = default_epc(rng, gain_jitter=0.1)
            for i in range(4):
                epc = epc.with_voltage(i, rng.uniform(0.0, 150.0))
            r = epc_rotation(epc)
            assert abs(math.sqrt(r.w**2 + r.x**2 + r.y**2 + r.z**2) - 1.0) <= 1e-9

    def test_voltage_perturbation_bounds_rotation_change(self):
        # changing one squeezer by delta volts changes the composite map by a
        # relative rotation of exactly gain * delta
        rng = np.random.default_rng(23)
        for _ in range(100):
            epc = default_epc(rng, gain_jitter=0.1)
            for i in range(4):
                epc = epc.with_voltage(i, rng.uniform(10.0, 140.0))
            i = int(rng.integers(0, 4))
            delta = float(rng.uniform(0.0, 5.0))
            before = epc_rotation(epc)
            after = epc_rotation(epc.with_voltage(i, epc.squeezers[i].voltage + delta))
            rel = compose(after, inverse(before))
            expected = epc.squeezers[i].gain * delta
            angle = rel.angle if rel.angle <= math.pi else 2 * math.pi - rel.angle
            assert angle <= expected + 1e-9


class TestDriftAxes:
    def test_zero_sigma_keeps_axes(self):
        rng = np.random.default_rng(31)
        epc = default_epc()
        assert drift_axes(epc, 1, rng, sigma=0.0) is epc

    def test_zero_dt_keeps_axes(self):
        rng = np.random.default_rng(32)
        epc = default_epc()
        assert drift_axes(epc, 0, rng) is epc

    def test_step_displacement_statistics(self):
        # per-step angular displacement is |N(0, sigma)|, so its rms is sigma
        rng = np.random.default_rng(33)
        epc = default_epc()
        sigma = 0.01
        sq_disp = []
        for _ in range(10_000):
            moved = drift_axes(epc, 1, rng, sigma=sigma, max_wander=math.pi)
            for a, b in zip(epc.squeezers, moved.squeezers):
                d = max(-1.0, min(1.0, a.axis.dot(b.axis)))
                sq_disp.append(math.acos(d) ** 2)
            epc = moved
        rms = math.sqrt(sum(sq_disp) / len(sq_disp))
        assert rms == pytest.approx(sigma, rel=0.10)

    def test_wander_cap_respected(self):
        rng = np.random.default_rng(34)
        epc = default_epc()
        cap = math.radians(10.0)
        for _ in range(2000):
            epc = drift_axes(epc, 1, rng, sigma=0.05, max_wander=cap)
            for sq in epc.squeezers:
                assert sq.axis.dot(sq.nominal_axis) >= math.cos(cap) - 1e-12

    def test_deterministic_given_seed(self):
        epc = default_epc()
        a = drift_axes(epc, 3, np.random.default_rng(99), sigma=0.01)
        b = drift_axes(epc, 3, np.random.default_rng(99), sigma=0.01)
        assert a == b


class TestChannels:
    def test_static_returns_same_rotation(self):
        rng = np.random.default_rng(41)
        rot = rotation_from_axis_angle(S2, 0.3)
        ch = StaticChannel(rot)
        for _ in range(5):
            ch, out = channel_step(ch, 1, rng)
            assert out is rot

    def test_scrambler_accumulates(self):
        rng = np.random.default_rng(42)
        ch = ScramblerChannel(axis=S3, rate=0.2)
        for _ in range(900):
            ch, rot = channel_step(ch, 1, rng)
        assert ch.accumulated == pytest.approx(180.0, abs=1e-9)
        assert rot.angle == pytest.approx(math.pi, abs=1e-9)

    def test_scrambler_full_period_wall_clock(self):
        # 0.2 deg per cycle completes 360 deg in 1800 cycles; at 12 s per
        # cycle that is a 6 h wall-clock equivalent
        cycles = 360.0 / 0.2
        assert cycles * 12.0 == pytest.approx(6 * 3600.0)

    def test_scrambler_periodicity(self):
        rng = np.random.default_rng(43)
        ch = ScramblerChannel(axis=S3, rate=0.2)
        for _ in range(1800):
            ch, _ = channel_step(ch, 1, rng)
        circular = min(ch.accumulated, 360.0 - ch.accumulated)
        assert circular <= 1e-9

    def test_scrambler_wraps_modulo_360(self):
        rng = np.random.default_rng(44)
        ch = ScramblerChannel(axis=S3, rate=100.0)
        for _ in range(10):
            ch, _ = channel_step(ch, 1, rng)
            assert 0.0 <= ch.accumulated < 360.0

    def test_random_walk_step_scale(self):
        rng = np.random.default_rng(45)
        ch = RandomWalkChannel(step_sigma=0.0)
        ch, rot = channel_step(ch, 10, rng)
        assert rot.angle == pytest.approx(0.0, abs=1e-12)

    def test_random_walk_deterministic(self):
        ch = RandomWalkChannel(step_sigma=0.01)
        a_ch, a_rot = channel_step(ch, 50, np.random.default_rng(7))
        b_ch, b_rot = channel_step(ch, 50, np.random.default_rng(7))
        assert a_rot == b_rot
        assert a_ch == b_ch

    def test_random_walk_diffuses(self):
        rng = np.random.default_rng(46)
        ch = RandomWalkChannel(step_sigma=0.02)
        ch, rot = channel_step(ch, 400, rng)
        assert rot.angle > 0.0


class TestLinkBudget:
    def test_reference_value(self):
        assert transmittance(LinkBudget(0.2, 50.0, 0.1)) == pytest.approx(0.01)

    def test_zero_length(self):
        assert transmittance(LinkBudget(0.2, 0.0, 0.37)) == 0.37

    def test_long_fiber(self):
        assert transmittance(LinkBudget(0.2, 100.0, 1.0)) == pytest.approx(0.01)

    def test_monotone_in_length_and_alpha(self):
        lengths = np.linspace(0.0, 200.0, 21)
        ts = [transmittance(LinkBudget(0.2, l, 0.5)) for l in lengths]
        assert all(b < a for a, b in zip(ts, ts[1:]))
        alphas = np.linspace(0.0, 1.0, 11)
        ts = [transmittance(LinkBudget(a, 50.0, 0.5)) for a in alphas]
        assert all(b < a for a, b in zip(ts, ts[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            LinkBudget(-0.1, 50.0, 0.1)
        with pytest.raises(ValueError):
            LinkBudget(0.2, 50.0, 0.0)
        with pytest.raises(ValueError):
            LinkBudget(0.2, 50.0, 1.5)
