"""Toy mechanical plants: field oracles, spectra, and energy audits.

Frequency oracles are derived inline from the constants (small-angle
linearization), then measured on the nonlinear simulation by timing zero
crossings or FFT peaks — two independent routes to the same number.
"""

import numpy as np
import pytest
from scipy.integrate import simpson

from oscnet._util import ParameterError
from oscnet.integrators import IntegratorSpec, rollout
from oscnet.plants import (
    MASS_SPRING_DAMPING,
    MASS_SPRING_MASS,
    MASS_SPRING_STIFFNESS,
    PENDULUM_DAMPING,
    PENDULUM_GRAVITY,
    PENDULUM_LENGTH,
    PENDULUM_MASS,
    PLANT_KINDS,
    double_pendulum_energy,
    double_pendulum_field,
    make_plant,
    mass_spring_energy,
    mass_spring_field,
    pendulum_energy,
    pendulum_field,
)


def simulate(field, y0, t1, dt=1e-3, sample_dt=1e-2, u=0.0):
    spec = IntegratorSpec(method="rk4", dt=dt)
    return rollout(spec, field, np.asarray(y0, float), lambda t: u, 0.0, t1, sample_dt)


def measured_frequency(times, signal):
    """Angular frequency from linearly interpolated upward zero crossings."""
    s = np.asarray(signal)
    idx = np.nonzero((s[:-1] < 0.0) & (s[1:] >= 0.0))[0]
    assert idx.size >= 3, "need several periods to measure a frequency"
    frac = -s[idx] / (s[idx + 1] - s[idx])
    crossings = times[idx] + frac * (times[idx + 1] - times[idx])
    periods = np.diff(crossings)
    return 2.0 * np.pi / periods.mean()


# --- mass-spring ---


def test_mass_spring_field_oracle():
    # unit displacement at rest: acceleration = -k/m = -4 exactly
    dy = mass_spring_field(np.array([1.0, 0.0]))
    assert dy.tolist() == [0.0, -4.0]


def test_mass_spring_field_with_input():
    dy = mass_spring_field(np.array([0.5, -2.0]), u=1.0)
    k, d, m = MASS_SPRING_STIFFNESS, MASS_SPRING_DAMPING, MASS_SPRING_MASS
    assert dy[0] == -2.0
    assert dy[1] == pytest.approx((1.0 - k * 0.5 - d * (-2.0)) / m, rel=1e-15)


def test_mass_spring_damped_frequency():
    # x'' = -(k/m) x - (d/m) x': omega0^2 = 4, 2 zeta omega0 = 0.1
    omega_d = np.sqrt(4.0 - (0.1 / 2.0) ** 2)
    traj = simulate(mass_spring_field, [0.4, 0.0], 60.0)
    got = measured_frequency(traj.times, traj.states[:, 0])
    assert got == pytest.approx(omega_d, abs=2e-4)


def test_mass_spring_energy_dissipates():
    traj = simulate(mass_spring_field, [1.0, 0.0], 20.0)
    e = mass_spring_energy(traj.states)
    assert e[0] > e[-1]
    assert np.all(np.diff(e) <= 1e-12)


# --- pendulum ---


def test_pendulum_rest_is_equilibrium():
    assert pendulum_field(np.zeros(2)).tolist() == [0.0, 0.0]


def test_pendulum_field_oracle():
    theta, omega = 0.3, -0.2
    dy = pendulum_field(np.array([theta, omega]), u=0.05)
    m, length, g, d = PENDULUM_MASS, PENDULUM_LENGTH, PENDULUM_GRAVITY, PENDULUM_DAMPING
    torque = 0.05 - m * g * length * np.sin(theta) - d * omega
    assert dy[0] == omega
    assert dy[1] == pytest.approx(torque / (m * length**2), rel=1e-15)


def test_pendulum_small_angle_frequency():
    # linearized: theta'' = -(g/L) theta - (d/(m L^2)) theta'
    omega0_sq = PENDULUM_GRAVITY / PENDULUM_LENGTH
    zeta_omega = PENDULUM_DAMPING / (2 * PENDULUM_MASS * PENDULUM_LENGTH**2)
    omega_d = np.sqrt(omega0_sq - zeta_omega**2)
    traj = simulate(pendulum_field, [0.01, 0.0], 80.0)
    got = measured_frequency(traj.times, traj.states[:, 0])
    # 0.01 rad amplitude shifts the period by ~theta^2/16, invisible here
    assert got == pytest.approx(omega_d, abs=5e-4)


def test_pendulum_energy_audit():
    # unforced: E(T) - E(0) = -integral d * omega^2 dt
    traj = simulate(pendulum_field, [2.5, 0.0], 10.0, sample_dt=1e-3)
    e = pendulum_energy(traj.states)
    omega = traj.states[:, 1]
    dissipated = simpson(PENDULUM_DAMPING * omega**2, x=traj.times)
    assert e[0] - e[-1] == pytest.approx(dissipated, rel=1e-6)


# --- double pendulum (absolute angles) ---


def test_double_pendulum_rest_is_equilibrium():
    assert double_pendulum_field(np.zeros(4)).tolist() == [0.0, 0.0, 0.0, 0.0]


def test_double_pendulum_energy_audit():
    y0 = np.array([1.2, -0.6, 0.0, 0.8])
    traj = simulate(double_pendulum_field, y0, 10.0, sample_dt=1e-3, u=np.zeros(2))
    e = double_pendulum_energy(traj.states)
    rates = traj.states[:, 2:]
    dissipated = simpson(0.05 * np.sum(rates**2, axis=-1), x=traj.times)
    assert e[0] - e[-1] == pytest.approx(dissipated, rel=1e-5)


def test_double_pendulum_small_angle_modes():
    # with m1 = m2 = 0.5, L1 = L2 = 1, g = 3 (absolute angles):
    #   M = [[1, 1/2], [1/2, 1/2]],  K = diag(3, 3/2)
    # generalized eigenvalues of (K, M) are the squared mode frequencies
    m_mat = np.array([[1.0, 0.5], [0.5, 0.5]])
    k_mat = np.diag([3.0, 1.5])
    omega_sq = np.sort(np.linalg.eigvals(np.linalg.solve(m_mat, k_mat)).real)
    expected = np.sqrt(omega_sq)

    traj = simulate(
        double_pendulum_field, [0.02, -0.01, 0.0, 0.0], 300.0, dt=5e-3, u=np.zeros(2)
    )
    signal = traj.states[:, 0] - traj.states[:, 0].mean()
    spectrum = np.abs(np.fft.rfft(signal * np.hanning(signal.size)))
    freqs = 2.0 * np.pi * np.fft.rfftfreq(signal.size, d=traj.times[1] - traj.times[0])
    # the two tallest well-separated peaks
    peaks = []
    order = np.argsort(spectrum)[::-1]
    for i in order:
        if all(abs(freqs[i] - p) > 0.5 for p in peaks):
            peaks.append(freqs[i])
        if len(peaks) == 2:
            break
    assert sorted(peaks) == pytest.approx(expected.tolist(), abs=0.05)


def test_double_pendulum_batched_matches_loop():
    rng = np.random.default_rng(3)
    ys = rng.uniform(-1.0, 1.0, size=(6, 4))
    us = rng.uniform(-0.5, 0.5, size=(6, 2))
    batched = double_pendulum_field(ys, us)
    looped = np.stack([double_pendulum_field(y, u) for y, u in zip(ys, us)])
    assert np.array_equal(batched, looped)


# --- registry ---


def test_make_plant_kinds():
    for kind in PLANT_KINDS:
        plant = make_plant(kind)
        assert plant.kind == kind
        y = np.zeros(2 * plant.dof)
        dy = plant.field(y, np.zeros(plant.input_dim))
        assert dy.shape == y.shape
        assert plant.energy(y) == pytest.approx(0.0, abs=1e-15)


def test_make_plant_rejects_unknown():
    with pytest.raises(ParameterError):
        make_plant("triple_pendulum")


def test_make_plant_rejects_overrides_for_rigid_plants():
    with pytest.raises(ParameterError):
        make_plant("pendulum", n_b=3)


def test_make_plant_pcc_overrides():
    plant = make_plant("pcc", n_b=3, strain_mode="full_planar")
    assert plant.dof == 9
    assert plant.params.n_b == 3


def test_wrong_state_width_raises():
    with pytest.raises(ParameterError):
        mass_spring_field(np.zeros(3))
    with pytest.raises(ParameterError):
        double_pendulum_field(np.zeros(4), u=np.zeros(3))
