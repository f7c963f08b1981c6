"""Shared test helpers: finite-difference Jacobians, random states, small datasets."""

import numpy as np

from fmcw_rio import lie
from fmcw_rio.estimator.state import Extrinsics, NavState

# acceptance result lines, printed again in the terminal summary
ACCEPTANCE = []


def report(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def numerical_jacobian(f, x, h=1e-6):
    """Central differences of f over the tangent of x (a manifold value or array)."""
    if isinstance(x, np.ndarray):
        dim = x.size
        plus = lambda d: x + d  # noqa: E731
    else:
        dim = x.dim
        plus = x.retract
    f0 = np.asarray(f(x), dtype=float)
    J = np.zeros(f0.shape + (dim,))
    for k in range(dim):
        d = np.zeros(dim)
        d[k] = h
        J[..., k] = (np.asarray(f(plus(d))) - np.asarray(f(plus(-d)))) / (2 * h)
    return J


def relative_error(A, B):
    A, B = np.asarray(A), np.asarray(B)
    return float(np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-9))


def random_rotation(rng, scale=np.pi):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return lie.exp(axis * rng.uniform(0, scale))


def random_state(rng):
    return NavState(random_rotation(rng), rng.normal(0, 5, 3), rng.normal(0, 2, 3),
                    rng.normal(0, 0.05, 3), rng.normal(0, 0.01, 3), float(rng.normal(0, 1)))


def random_extrinsics(rng):
    return Extrinsics(random_rotation(rng, 0.5), rng.normal(0, 0.2, 3))


def interior_phases(rng, n, max_angle_deg=60.0):
    a = np.radians(max_angle_deg)
    az = rng.uniform(-a, a, n)
    el = rng.uniform(-a, a, n)
    return np.pi * np.sin(az) * np.cos(el), np.pi * np.sin(el)


def small_dataset(kind="helix", duration=10.0, speed=2.0, chirp="rc1", seed=0, imu_noise=False,
                  targets=200):
    from fmcw_rio import get_preset
    from fmcw_rio.sim import Environment, RigSpec, TrajectorySpec, generate_dataset
    from fmcw_rio.sim.synth import sphere_environment

    traj = TrajectorySpec(kind=kind, duration=duration, speed=speed,
                          yaw_mode="aligned" if kind not in ("static", "line") else "constant")
    env = Environment(sphere_environment(targets, 15.0, center=(0.0, 3.0, 0.0), seed=seed))
    rig = RigSpec(imu_noise_on=imu_noise, baro_noise_on=imu_noise)
    return generate_dataset(traj, env, get_preset(chirp), rig, seed=seed)


def _near_prediction(rng, si, pim):
    from fmcw_rio.estimator.preintegration import predict

    R, p, v = predict(si.R, si.p, si.v, pim, si.ba, si.bg)
    d = np.r_[rng.normal(0, 0.05, 9), rng.normal(0, 0.02, 6), rng.normal(0, 0.5, 1)]
    return type(si)(R, p, v, si.ba, si.bg, si.bb).retract(d)


def imu_jacobian_error(rng):
    from fmcw_rio.estimator.factors import imu_residual
    from fmcw_rio.estimator.preintegration import preintegrate

    n = int(rng.integers(5, 40))
    t = np.cumsum(np.r_[0.0, rng.uniform(0.003, 0.007, n - 1)])
    gyro = rng.normal(0, 0.5, 3) + rng.normal(0, 0.1, (n, 3))
    accel = np.array([0, 0, 9.81]) + rng.normal(0, 1.0, 3) + rng.normal(0, 0.3, (n, 3))
    si = random_state(rng)
    pim = preintegrate(t, gyro, accel, si.ba + rng.normal(0, 0.01, 3), si.bg + rng.normal(0, 0.002, 3))
    sj = _near_prediction(rng, si, pim)
    _, Ji, Jj = imu_residual(si, sj, pim)
    fi = numerical_jacobian(lambda s: imu_residual(s, sj, pim, jacobians=False)[0], si)
    fj = numerical_jacobian(lambda s: imu_residual(si, s, pim, jacobians=False)[0], sj)
    return max(relative_error(Ji, fi), relative_error(Jj, fj))


def doppler_jacobian_error(rng):
    from fmcw_rio.estimator.factors import doppler_residuals

    n = int(rng.integers(1, 20))
    mu = rng.normal(size=(n, 3))
    mu /= np.linalg.norm(mu, axis=1, keepdims=True)
    v = rng.normal(0, 2, n)
    state, ext, omega = random_state(rng), random_extrinsics(rng), rng.normal(0, 0.5, 3)
    _, Jx, Je, _ = doppler_residuals(mu, v, state, ext, omega)
    fx = numerical_jacobian(lambda s: doppler_residuals(mu, v, s, ext, omega, False)[0], state)
    fe = numerical_jacobian(lambda e: doppler_residuals(mu, v, state, e, omega, False)[0], ext)
    return max(relative_error(Jx, fx), relative_error(Je, fe))


def registration_jacobian_error(rng):
    from fmcw_rio.estimator.factors import registration_residuals

    n = int(rng.integers(1, 20))
    pts = rng.normal(0, 5, (n, 3))
    q = rng.normal(0, 10, (n, 3))
    state, ext = random_state(rng), random_extrinsics(rng)
    _, Jx, Je = registration_residuals(pts, q, state, ext)
    fx = numerical_jacobian(lambda s: registration_residuals(pts, q, s, ext)[0], state)
    fe = numerical_jacobian(lambda e: registration_residuals(pts, q, state, e)[0], ext)
    return max(relative_error(Jx, fx), relative_error(Je, fe))


def baro_jacobian_error(rng):
    from fmcw_rio.estimator.factors import baro_residual

    P = rng.uniform(80000, 105000)
    state = random_state(rng)
    _, J = baro_residual(P, state)
    fd = numerical_jacobian(lambda s: np.array([baro_residual(P, s)[0]]), state)
    return relative_error(J, fd)


def bearing_jacobian_error(rng):
    from fmcw_rio import noise, radar

    wy, wz = interior_phases(rng, 1, 75.0)
    w = np.array([wy[0], wz[0]])
    fd = numerical_jacobian(lambda x: radar.phases_to_bearing(x[0], x[1]), w, h=1e-7)
    return relative_error(noise.bearing_jacobian(w[0], w[1]), fd)


JACOBIAN_CHECKS = {
    "imu": imu_jacobian_error,
    "doppler": doppler_jacobian_error,
    "registration": registration_jacobian_error,
    "baro": baro_jacobian_error,
    "bearing": bearing_jacobian_error,
}


def linear_chain(rng, steps=30, dim=2):
    """Random linear-Gaussian chain: prior, transitions and measurements as LinearFactors."""
    from fmcw_rio.estimator.smoother import LinearFactor

    F = np.eye(dim) + rng.normal(0, 0.1, (dim, dim))
    H = rng.normal(0, 1, (1, dim))
    factors = {0: [LinearFactor([0], [np.eye(dim)], rng.normal(0, 1, dim), np.eye(dim) / 0.5)]}
    for k in range(steps):
        fs = factors.setdefault(k, [])
        if k > 0:
            fs.append(LinearFactor([k - 1, k], [-F, np.eye(dim)], rng.normal(0, 0.1, dim), np.eye(dim) / 0.2))
        fs.append(LinearFactor([k], [H], rng.normal(0, 1, 1), np.eye(1) / 0.3))
    return factors, dim


def linear_fixed_lag_vs_batch(seed, steps=30, lag=5):
    """Max |mean| and |cov| difference between a fixed-lag run and the dense batch solve."""
    from fmcw_rio.estimator.smoother import Smoother
    from fmcw_rio.estimator.state import VectorState

    factors, dim = linear_chain(np.random.default_rng(seed), steps)
    sm = Smoother(max_iterations=3)
    window = []
    worst = 0.0
    for k in range(steps):
        sm.add_variable(k, VectorState(np.zeros(dim)))
        for f in factors[k]:
            sm.add_factor(f)
        sm.optimize()
        window.append(k)
        while len(window) > lag:
            sm.marginalize([window.pop(0)])

        batch = Smoother()
        for j in range(k + 1):
            batch.add_variable(j, VectorState(np.zeros(dim)))
        for j in range(k + 1):
            for f in factors[j]:
                batch.add_factor(f)
        H, g, _ = batch.linear_system()
        x = np.linalg.solve(H, -g)
        P = np.linalg.inv(H)
        order, _ = batch.ordering()
        idx = np.concatenate([np.arange(order[j][0], order[j][0] + dim) for j in window])
        est = np.concatenate([sm.values[j].x for j in window])
        worst = max(worst, np.abs(est - x[idx]).max(), np.abs(sm.covariance(window) - P[np.ix_(idx, idx)]).max())
    return worst
