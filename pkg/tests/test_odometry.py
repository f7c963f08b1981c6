import math

import numpy as np
import pytest

from fmcw_rio import ConfigError, DomainError, InitializationError, get_preset, lie
from fmcw_rio.estimator.config import EstimatorConfig, config_to_dict, load_estimator_config
from fmcw_rio.estimator.odometry import (RadarInertialOdometry, extrinsics_from, filter_scan, initialize_at_rest,
                                         propagate_high_rate, run_odometry, truth_whitened_doppler)
from fmcw_rio.estimator.preintegration import ImuBuffer
from fmcw_rio.estimator.state import NavState
from fmcw_rio.radar import AoaPhases, RadarPoint, RadarScan
from fmcw_rio.sim import Environment, RigSpec, TrajectorySpec, generate_dataset
from fmcw_rio.sim.synth import SimDataset, tunnel_environment
from oracles import small_dataset

RC1 = get_preset("rc1")
NOISE = load_estimator_config("noise")


def _static_imu(R=np.eye(3), seconds=2.0, rate=200.0, gyro=(0.0, 0.0, 0.0)):
    t = np.arange(0, seconds + 1e-9, 1 / rate)
    accel = np.tile(R.T @ [0, 0, 9.81], (t.size, 1))
    return ImuBuffer(t, np.tile(gyro, (t.size, 1)), accel)


def test_init_at_rest_level():
    state, cov = initialize_at_rest(_static_imu(gyro=(1e-3, -2e-3, 5e-4)), NOISE)
    np.testing.assert_allclose(state.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(state.bg, [1e-3, -2e-3, 5e-4], atol=1e-15)
    np.testing.assert_array_equal(state.p, 0.0)
    assert cov.shape == (16, 16)


def test_init_recovers_roll_and_pitch_not_yaw():
    R = lie.from_rpy(0.1, -0.2, 0.7)
    state, _ = initialize_at_rest(_static_imu(R), NOISE)
    roll, pitch, yaw = lie.to_rpy(state.R)
    assert roll == pytest.approx(0.1, abs=1e-12)
    assert pitch == pytest.approx(-0.2, abs=1e-12)
    assert yaw == 0.0


def test_init_rejects_motion_and_short_buffers():
    buf = _static_imu()
    moving = ImuBuffer(buf.t, buf.gyro, buf.accel + np.c_[np.sin(8 * buf.t), np.zeros((buf.t.size, 2))])
    with pytest.raises(InitializationError):
        initialize_at_rest(moving, NOISE)
    with pytest.raises(InitializationError):
        initialize_at_rest(_static_imu(seconds=0.5), NOISE)


def test_init_sets_baro_bias_to_initial_height():
    state, _ = initialize_at_rest(_static_imu(), NOISE, pressure=100000.0)
    assert state.bb == pytest.approx(111.0, abs=1.0)


def test_propagate_high_rate():
    buf = _static_imu()
    s = NavState(v=np.array([1.0, 0, 0]))
    assert propagate_high_rate(s, buf, buf.t[-1]) == []
    out = propagate_high_rate(s, buf, 0.0, 1.0, gravity=9.81)
    assert len(out) == 200
    t, R, p, v = out[-1]
    assert t == pytest.approx(1.0)
    np.testing.assert_allclose(p, [1.0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(v, [1.0, 0, 0], atol=1e-12)


def test_filter_scan_drops_invalid_points():
    pts = [RadarPoint(5.0, 0.0, AoaPhases(0.0, 0.0)),
           RadarPoint(0.1, 0.0, AoaPhases(0.0, 0.0)),
           RadarPoint(5.0, 0.0, AoaPhases(3.0, 1.5)),
           RadarPoint(5.0, 0.0, AoaPhases(math.pi * math.sin(math.radians(70)), 0.0))]
    kept = filter_scan(RadarScan(1.0, pts), NOISE, RC1.max_range)
    assert len(kept) == 1
    assert len(filter_scan(RadarScan(1.0, []), NOISE, RC1.max_range)) == 0


def _truth_at(ds, t):
    i = int(np.argmin([abs(s.t - t) for s in ds.truth]))
    s = ds.truth[i]
    return NavState(s.R, s.p, s.v), s.omega


def test_static_selection_at_truth():
    ds = small_dataset(duration=6.0)
    odo = RadarInertialOdometry(NOISE, RC1, extrinsics_from(NOISE, ds.meta))
    checked = 0
    for scan in ds.radar[30:40]:
        pts = filter_scan(scan, NOISE, RC1.max_range)
        state, omega = _truth_at(ds, scan.timestamp)
        assert odo.select_static_points(pts, state, omega, kappa=3.0).all()
        assert not odo.select_static_points(pts, state, omega, kappa=0.0).any()
        checked += len(pts)
    assert checked > 100


def test_aliased_points_rejected_at_truth():
    env = Environment(tunnel_environment(120, 6, 4, 1.0, seed=0))
    traj = TrajectorySpec(kind="line", duration=8, speed=6.0, ramp_time=3, rest_time=1, origin=(0, 0, 2))
    ds = generate_dataset(traj, env, RC1, RigSpec(imu_noise_on=False), seed=0)
    odo = RadarInertialOdometry(NOISE, RC1, extrinsics_from(NOISE, ds.meta))
    n_aliased = 0
    for scan in ds.radar:
        pts = filter_scan(scan, NOISE, RC1.max_range)
        if len(pts) != len(scan.points):
            continue  # keep measured and truth arrays aligned
        truth = np.array([p.truth_radial_speed for p in scan.points])
        # points just past the limit can be wrapped back onto the edge bin by quantization
        wrapped = np.abs(pts.v_meas - truth) > RC1.max_doppler
        if not wrapped.any():
            continue
        state, omega = _truth_at(ds, scan.timestamp)
        keep = odo.select_static_points(pts, state, omega)
        assert not keep[wrapped].any()
        assert keep[~pts.aliased].all()
        n_aliased += int(wrapped.sum())
    assert n_aliased > 0


def test_whitened_doppler_at_truth_is_unit_scale():
    ds = small_dataset(duration=10.0)
    r = truth_whitened_doppler(ds, NOISE, RC1)
    assert r.size > 500
    assert 0.5 < r.std() < 1.2
    assert abs(r.mean()) < 0.2


def test_zero_noise_static_run_stays_put():
    traj = TrajectorySpec(kind="static", duration=8.0)
    from fmcw_rio.sim.synth import sphere_environment

    env = Environment(sphere_environment(200, 15.0, center=(0.0, 3.0, 0.0), seed=0))
    ds = generate_dataset(traj, env, RC1, RigSpec(imu_noise_on=False, baro_noise_on=False), seed=0)
    res = run_odometry(ds, NOISE)
    t, R, p, v = res.low_rate[-1]
    assert np.linalg.norm(v) <= 1e-3
    assert np.linalg.norm(p) <= 0.05
    assert res.high_rate[-1][0] == pytest.approx(ds.imu[-1].t)


@pytest.mark.parametrize("preset", ["base", "noise", "noise+baro", "geometry"])
def test_short_helix_tracks_truth(preset):
    ds = small_dataset(duration=12.0, imu_noise=True)
    res = run_odometry(ds, load_estimator_config(preset))
    assert len(res.low_rate) == len(ds.radar) - 10
    t, R, p, v = res.low_rate[-1]
    truth, _ = _truth_at(ds, t)
    assert np.linalg.norm(p - truth.p) < 0.3
    assert np.linalg.norm(v - truth.v) < 0.1
    if preset == "geometry":
        assert len(res.map) > 0


def test_run_without_imu_fails():
    ds = SimDataset([], [], [], [], {"chirp": "rc1"})
    with pytest.raises(InitializationError):
        run_odometry(ds, NOISE)


def test_run_without_chirp_fails():
    ds = small_dataset(duration=2.0)
    ds.meta = {}
    with pytest.raises(DomainError):
        run_odometry(ds, EstimatorConfig())


def test_estimator_config_presets_and_errors(tmp_path):
    assert not load_estimator_config("base").angle_noise_on
    assert load_estimator_config("geometry").registration_on
    assert load_estimator_config("noise+baro").baro_on
    path = tmp_path / "est.yaml"
    path.write_text("estimator:\n  preset: noise\n  lag: 3.0\n")
    cfg = load_estimator_config(str(path))
    assert cfg.lag == 3.0 and cfg.angle_noise_on
    assert config_to_dict(cfg)["lag"] == 3.0
    path.write_text("lag: -1\n")
    with pytest.raises(ConfigError) as exc:
        load_estimator_config(str(path))
    assert exc.value.field == "lag"
    path.write_text("bogus: 1\n")
    with pytest.raises(ConfigError):
        load_estimator_config(str(path))
    with pytest.raises(ConfigError):
        load_estimator_config("no-such-preset")
