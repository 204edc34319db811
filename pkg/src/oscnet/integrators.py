"""Time steppers and rollout recording.

Fixed-step explicit methods (Euler, classical RK4, and the fifth-order
Dormand-Prince formula run at fixed step), plus the adaptive embedded 5(4)
Dormand-Prince pair with a PI step-size controller.  All steppers treat the
actuation as zero-order-held over each internal step: the input callable is
evaluated once at the step start and frozen for every stage.

Rollouts record on a uniform sample grid regardless of the internal step
sequence, so output files are directly comparable across methods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import DivergenceError, NumericalError, ParameterError, fmt17

__all__ = [
    "IntegratorSpec",
    "Trajectory",
    "FIXED_METHODS",
    "ADAPTIVE_METHODS",
    "CLOSED_FORM_METHODS",
    "euler_step",
    "rk4_step",
    "step_fixed",
    "step_dopri5",
    "rollout",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

FIXED_METHODS = ("euler", "rk4", "dopri5_fixed")
ADAPTIVE_METHODS = ("dopri5",)
CLOSED_FORM_METHODS = ("cfa", "cfa_underdamped")

#: below this step size the adaptive controller reports stiffness/divergence
DT_UNDERFLOW = 1e-14


@dataclass(frozen=True)
class IntegratorSpec:
    """How to advance a system in time.

    ``dt`` is the fixed step for fixed-step methods and the initial trial
    step for adaptive ones.  ``eps_lambda`` is the rate-splitting floor used
    by the closed-form methods (see the closed_form module); it rides along
    here so one spec object fully determines any supported rollout.
    """

    method: str = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-10
    eps_lambda: float = 1e-6
    max_steps: int = 50_000_000

    def __post_init__(self):
        known = FIXED_METHODS + ADAPTIVE_METHODS + CLOSED_FORM_METHODS
        if self.method not in known:
            raise ParameterError(f"unknown method {self.method!r}; choose from {known}")
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ParameterError("rtol and atol must be positive")
        if self.eps_lambda <= 0.0:
            raise ParameterError("eps_lambda must be positive")


@dataclass
class Trajectory:
    """Uniformly sampled rollout: times (N+1,), states (N+1, 2n).

    ``inputs`` (N+1, m), when present, holds the zero-order-held actuation in
    effect at each sample time.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.inputs is not None:
            self.inputs = np.asarray(self.inputs, dtype=float)
        if self.times.ndim != 1 or self.states.ndim != 2:
            raise ParameterError("trajectory arrays have wrong rank")
        if self.states.shape[0] != self.times.size:
            raise ParameterError("times and states disagree on sample count")
        if self.states.shape[1] % 2 != 0:
            raise ParameterError("state dimension must be even (positions, velocities)")
        if self.inputs is not None and self.inputs.shape[0] != self.times.size:
            raise ParameterError("times and inputs disagree on sample count")

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, : self.n]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, self.n :]

    @property
    def sample_dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def euler_step(field, y, u, dt):
    return y + dt * field(y, u)


def rk4_step(field, y, u, dt):
    k1 = field(y, u)
    k2 = field(y + 0.5 * dt * k1, u)
    k3 = field(y + 0.5 * dt * k2, u)
    k4 = field(y + dt * k3, u)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
# fifth-order-minus-fourth-order weights (seventh stage is the new-point eval)
_DP_ERR = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _dopri5_stages(field, y, u, dt):
    k = [field(y, u)]
    for row in _DP_A[1:]:
        yi = y
        for a, ki in zip(row, k):
            if a != 0.0:
                yi = yi + (dt * a) * ki
        k.append(field(yi, u))
    y5 = y
    for b, ki in zip(_DP_B5, k):
        if b != 0.0:
            y5 = y5 + (dt * b) * ki
    return y5, k


def dopri5_fixed_step(field, y, u, dt):
    """Fifth-order Dormand-Prince formula at a fixed step (no error control)."""
    y5, _ = _dopri5_stages(field, y, u, dt)
    return y5


_FIXED_STEPPERS = {
    "euler": euler_step,
    "rk4": rk4_step,
    "dopri5_fixed": dopri5_fixed_step,
}


def step_fixed(field, y, u, dt, method="rk4"):
    """One explicit fixed step of the chosen method."""
    try:
        stepper = _FIXED_STEPPERS[method]
    except KeyError:
        raise ParameterError(f"not a fixed-step method: {method!r}") from None
    return stepper(field, y, u, dt)


def step_dopri5(field, y, u, dt, rtol, atol, err_prev=1.0):
    """One accepted adaptive step.

    Retries with shrinking trial steps until the embedded error estimate
    passes, then proposes the next step from a PI controller (safety 0.9,
    growth clamped to [0.2, 5.0]).  Returns (y_new, dt_used, dt_next, err).
    Raises on step-size underflow or non-finite states.
    """
    while True:
        if dt < DT_UNDERFLOW:
            raise NumericalError(
                f"adaptive step underflow (dt={dt:.3e}): system too stiff or diverging"
            )
        y5, k = _dopri5_stages(field, y, u, dt)
        if not np.all(np.isfinite(y5)):
            dt *= 0.2
            continue
        k7 = field(y5, u)
        err_vec = np.zeros_like(y5)
        for e, ki in zip(_DP_ERR, k + [k7]):
            if e != 0.0:
                err_vec = err_vec + (dt * e) * ki
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            dt *= 0.2
            continue
        if err <= 1.0:
            if err == 0.0:
                factor = 5.0
            else:
                factor = 0.9 * err ** (-0.7 / 5.0) * err_prev ** (0.4 / 5.0)
            dt_next = dt * min(5.0, max(0.2, factor))
            return y5, dt, dt_next, max(err, 1e-10)
        dt *= min(1.0, max(0.2, 0.9 * err ** (-0.2)))


def _sample_grid(t0, t1, sample_dt):
    if sample_dt <= 0.0 or t1 <= t0:
        raise ParameterError("need t1 > t0 and sample_dt > 0")
    n_samples = int(round((t1 - t0) / sample_dt))
    if abs(n_samples * sample_dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ParameterError(
            f"sample_dt={sample_dt} does not divide the horizon [{t0}, {t1}]"
        )
    return t0 + sample_dt * np.arange(n_samples + 1)


def rollout(spec: IntegratorSpec, field, y0, u_fn=None, t0=0.0, t1=1.0, sample_dt=None):
    """Integrate ``field`` and record on a uniform grid.

    ``field(y, u)`` must return dy/dt; ``u_fn(t)`` (optional) supplies the
    actuation, zero-order-held over each internal step.  ``sample_dt``
    defaults to the fixed step (fixed methods).  Closed-form methods are not
    field-based; use the closed_form module for those.
    """
    if spec.method in CLOSED_FORM_METHODS:
        raise ParameterError(
            f"{spec.method!r} needs network parameters, not a field; "
            "use closed_form.cfa_con_rollout / cfa_udcon_rollout"
        )
    if sample_dt is None:
        sample_dt = spec.dt
    times = _sample_grid(t0, t1, sample_dt)
    y = np.array(y0, dtype=float)
    states = np.empty((times.size, y.size))
    states[0] = y
    inputs = None
    if u_fn is not None:
        u0 = np.atleast_1d(np.asarray(u_fn(t0), dtype=float))
        inputs = np.empty((times.size, u0.size))
        inputs[0] = u0

    if spec.method in FIXED_METHODS:
        stepper = _FIXED_STEPPERS[spec.method]
        per = int(round(sample_dt / spec.dt))
        if per < 1 or abs(per * spec.dt - sample_dt) > 1e-9 * sample_dt:
            raise ParameterError(
                f"dt={spec.dt} does not divide sample_dt={sample_dt}"
            )
        if (times.size - 1) * per > spec.max_steps:
            raise ParameterError("rollout exceeds max_steps")
        for i in range(1, times.size):
            t_base = times[i - 1]
            for j in range(per):
                t = t_base + j * spec.dt
                u = u_fn(t) if u_fn is not None else None
                y = stepper(field, y, u, spec.dt)
            if not np.all(np.isfinite(y)):
                raise DivergenceError(
                    f"state diverged near t={times[i]:.6g}", t=float(times[i]), last_state=states[i - 1]
                )
            states[i] = y
            if inputs is not None:
                inputs[i] = u_fn(times[i])
        return Trajectory(times, states, inputs)

    # adaptive: march sample window by sample window, carrying dt across
    dt = min(spec.dt, sample_dt)
    err_prev = 1.0
    n_steps = 0
    for i in range(1, times.size):
        t = times[i - 1]
        t_end = times[i]
        while t < t_end - 1e-12 * max(1.0, abs(t_end)):
            dt_try = min(dt, t_end - t)
            u = u_fn(t) if u_fn is not None else None
            y, dt_used, dt, err_prev = step_dopri5(
                field, y, u, dt_try, spec.rtol, spec.atol, err_prev
            )
            t += dt_used
            n_steps += 1
            if n_steps > spec.max_steps:
                raise NumericalError("adaptive rollout exceeded max_steps")
        if not np.all(np.isfinite(y)):
            raise DivergenceError(
                f"state diverged near t={t_end:.6g}", t=float(t_end), last_state=states[i - 1]
            )
        states[i] = y
        if inputs is not None:
            inputs[i] = u_fn(times[i])
    return Trajectory(times, states, inputs)


def _csv_header(n: int, m: int | None) -> str:
    cols = ["t"]
    cols += [f"x{i + 1}" for i in range(n)]
    cols += [f"xd{i + 1}" for i in range(n)]
    if m:
        cols += [f"u{i + 1}" for i in range(m)]
    return ",".join(cols)


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Delimited output: header t,x1..xn,xd1..xdn[,u1..um]; 17-digit floats; LF."""
    n = traj.n
    m = traj.inputs.shape[1] if traj.inputs is not None else None
    with open(path, "w", newline="\n") as fh:
        fh.write(_csv_header(n, m) + "\n")
        for i in range(traj.times.size):
            row = [fmt17(traj.times[i])]
            row += [fmt17(v) for v in traj.states[i]]
            if traj.inputs is not None:
                row += [fmt17(v) for v in traj.inputs[i]]
            fh.write(",".join(row) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = sum(1 for c in header if c.startswith("x") and not c.startswith("xd"))
    n_xd = sum(1 for c in header if c.startswith("xd"))
    m = sum(1 for c in header if c.startswith("u"))
    if header[0] != "t" or n != n_xd or len(header) != 1 + 2 * n + m:
        raise ParameterError(f"unrecognized trajectory header: {header}")
    times = data[:, 0]
    states = data[:, 1 : 1 + 2 * n]
    inputs = data[:, 1 + 2 * n :] if m else None
    return Trajectory(times, states, inputs)
