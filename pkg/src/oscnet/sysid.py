"""Fit oscillator networks to recorded trajectories by rollout matching.

The model state is identified with the plant state directly (mass-normalized
chart), so fitting means: roll the network out from each recorded initial
state under the recorded actuation and drive the mean squared state error to
zero.  Gradients are central finite differences over the flat parameter
vector -- every probe lives in the Cholesky parameterization, so every
iterate (and every checkpoint) is a certifiably stable network for free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._util import ParameterError, make_rng
from .integrators import IntegratorSpec, Trajectory, step_fixed
from .network import field_w
from .params import (
    ConParams,
    diag_positions,
    materialized,
    params_to_vector,
    random_con_params,
    tri_size,
    vector_to_params,
    DIAG_FLOOR,
    SOFTPLUS_SHIFT,
)
from .pcc import actuation_limit, strain_limits
from .plants import make_plant

__all__ = [
    "Dataset",
    "FitConfig",
    "FitResult",
    "generate_dataset",
    "generate_con_dataset",
    "rollout_loss",
    "rollout_rmse",
    "model_rollout",
    "fd_gradient",
    "fit",
    "warm_start_params",
]

DIVERGENCE_PENALTY = 1e6


@dataclass
class Dataset:
    """Recorded trajectories in train/val/test splits.

    All trajectories share one sample dt, state width, and horizon; inputs
    are either recorded everywhere or nowhere.
    """

    train: list[Trajectory]
    val: list[Trajectory]
    test: list[Trajectory]

    def __post_init__(self):
        everything = self.train + self.val + self.test
        if not everything:
            raise ParameterError("dataset has no trajectories")
        first = everything[0]
        for traj in everything:
            if traj.states.shape[1] != first.states.shape[1]:
                raise ParameterError("trajectories disagree on state width")
            if traj.times.size != first.times.size:
                raise ParameterError("trajectories disagree on horizon")
            if abs(traj.sample_dt - first.sample_dt) > 1e-12 * max(first.sample_dt, 1.0):
                raise ParameterError("trajectories disagree on sample dt")
            if (traj.inputs is None) != (first.inputs is None):
                raise ParameterError("inputs recorded for some trajectories but not all")
            if traj.inputs is not None and traj.inputs.shape[1] != first.inputs.shape[1]:
                raise ParameterError("trajectories disagree on input width")

    @property
    def state_dim(self) -> int:
        return self.train[0].states.shape[1] if self.train else self.val[0].states.shape[1]

    @property
    def input_dim(self) -> int:
        ref = (self.train or self.val or self.test)[0]
        return 0 if ref.inputs is None else ref.inputs.shape[1]

    @property
    def sample_dt(self) -> float:
        return (self.train or self.val or self.test)[0].sample_dt


def _stack(trajectories: Sequence[Trajectory]):
    """(B, N+1, 2n) states and (B, N+1, m) inputs (or None)."""
    states = np.stack([t.states for t in trajectories])
    if trajectories[0].inputs is None:
        return states, None
    return states, np.stack([t.inputs for t in trajectories])


@dataclass(frozen=True)
class FitConfig:
    """Optimizer and rollout settings for ``fit``."""

    lr: float = 0.07
    warmup_epochs: int = 5
    epochs: int = 200
    batch_size: int | None = None  # None: full-batch updates
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    fd_step: float = 1e-5
    patience: int = 20
    checkpoint_every: int = 25
    spec: IntegratorSpec = field(
        default_factory=lambda: IntegratorSpec(method="rk4", dt=0.025)
    )

    def __post_init__(self):
        if not (self.lr > 0.0 and np.isfinite(self.lr)):
            raise ParameterError("lr must be positive")
        if not (1e-7 <= self.fd_step <= 1e-4):
            raise ParameterError("fd_step must lie in [1e-7, 1e-4]")
        if self.epochs < 1 or self.warmup_epochs < 0:
            raise ParameterError("epochs must be >= 1 and warmup_epochs >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError("betas must lie in [0, 1)")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")


def model_rollout(p: ConParams, y0, inputs, sample_dt: float, spec: IntegratorSpec):
    """Roll the network from ``y0`` and sample on the data grid, batched.

    ``y0``: (..., 2n); ``inputs``: (..., N+1, m) zero-order-held actuation
    (the sample count is read off its second-to-last axis); returns
    (..., N+1, 2n) including the initial sample.  The integrator dt must
    divide the sample dt.
    """
    y0 = np.asarray(y0, dtype=float)
    ratio = sample_dt / spec.dt
    substeps = int(round(ratio))
    if substeps < 1 or abs(ratio - substeps) > 1e-9 * substeps:
        raise ParameterError(
            f"integrator dt {spec.dt} must divide the sample dt {sample_dt}"
        )
    mats = materialized(p)
    b_mat = p.input_matrix
    net = lambda y, tau: field_w(p, y, tau, mats)

    inputs = np.asarray(inputs, dtype=float)
    n_steps = inputs.shape[-2] - 1
    states = np.empty(y0.shape[:-1] + (n_steps + 1, y0.shape[-1]))
    states[..., 0, :] = y0
    y = y0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            tau = inputs[..., k, :] @ b_mat.T
            for _ in range(substeps):
                y = step_fixed(net, y, tau, spec.dt, spec.method)
            states[..., k + 1, :] = y
    return states


def _predictions(p: ConParams, states, inputs, sample_dt, spec):
    """Model rollout matched to a stacked data block."""
    if inputs is None:
        inputs = np.zeros(states.shape[:-1] + (max(p.m, 1),))
    return model_rollout(p, states[..., 0, :], inputs, sample_dt, spec)


def _stacked_loss(p: ConParams, states, inputs, sample_dt, spec) -> float:
    """Mean squared state error after the initial sample, penalty-guarded."""
    n_steps = states.shape[-2] - 1
    if n_steps == 0:
        return 0.0
    pred = _predictions(p, states, inputs, sample_dt, spec)
    with np.errstate(over="ignore", invalid="ignore"):
        err = pred[..., 1:, :] - states[..., 1:, :]
        sq = np.sum(err * err, axis=-1)  # (..., N) squared state-error norms
        per_traj = np.mean(sq, axis=-1)
    per_traj = np.where(np.isfinite(per_traj), per_traj, DIVERGENCE_PENALTY)
    return float(np.minimum(per_traj, DIVERGENCE_PENALTY).mean())


def rollout_loss(p: ConParams, trajectories: Sequence[Trajectory], spec: IntegratorSpec) -> float:
    """Mean over trajectories and post-initial steps of squared state error.

    Divergent rollouts contribute the finite penalty 1e6 per trajectory so
    optimizers always see a finite, comparable objective.
    """
    if len(trajectories) == 0:
        raise ParameterError("rollout_loss needs at least one trajectory")
    states, inputs = _stack(trajectories)
    return _stacked_loss(p, states, inputs, trajectories[0].sample_dt, spec)


def rollout_rmse(
    p: ConParams,
    trajectories: Sequence[Trajectory],
    spec: IntegratorSpec,
    positions_only: bool = True,
) -> float:
    """Root-mean-square rollout error, by default over position coordinates."""
    states, inputs = _stack(trajectories)
    pred = _predictions(p, states, inputs, trajectories[0].sample_dt, spec)
    n = states.shape[-1] // 2
    sl = slice(0, n) if positions_only else slice(None)
    err = pred[..., 1:, sl] - states[..., 1:, sl]
    return float(np.sqrt(np.mean(err * err)))


def fd_gradient(loss_fn: Callable[[np.ndarray], float], theta: np.ndarray, fd_step: float):
    """Central-difference gradient; non-finite probes take the penalty value."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        probe = theta.copy()
        probe[i] = theta[i] + fd_step
        hi = loss_fn(probe)
        probe[i] = theta[i] - fd_step
        lo = loss_fn(probe)
        if not np.isfinite(hi):
            hi = DIVERGENCE_PENALTY
        if not np.isfinite(lo):
            lo = DIVERGENCE_PENALTY
        grad[i] = (hi - lo) / (2.0 * fd_step)
    return grad


def _raw_for_diag(target):
    """Free-entry value whose softplus diagonal equals ``target``."""
    return np.log(np.expm1(np.maximum(target - DIAG_FLOOR, 1e-12))) - SOFTPLUS_SHIFT


def warm_start_params(dataset: Dataset, seed: int = 0) -> ConParams:
    """Scale-matched initial parameters from coarse statistics of the data.

    Fitting a network whose natural frequency starts orders of magnitude away
    from the data's (fast plants like the soft arm) strands the optimizer on
    a plateau, or worse, in the divergence-penalty region.  This estimates a
    dominant frequency from velocity zero crossings, a settle amplitude from
    trajectory tails, and an input coupling from the static balance, and
    builds diagonal parameters at those scales (tiny seeded jitter breaks
    symmetry between coordinates).
    """
    n = dataset.state_dim // 2
    m = max(dataset.input_dim, 1)
    horizon = None
    crossings = []
    tail_amp = []
    input_amp = []
    for traj in dataset.train:
        horizon = traj.times[-1] - traj.times[0]
        vel = traj.velocities
        flips = np.sum(np.diff(np.signbit(vel), axis=0), axis=0)
        crossings.extend(flips.tolist())
        tail = traj.positions[-max(traj.times.size // 4, 1) :]
        tail_amp.append(np.sqrt(np.mean(tail * tail)))
        if traj.inputs is not None:
            input_amp.append(np.mean(np.abs(traj.inputs)))
    # velocity sign flips per second ~ omega/pi; floor at one cycle per horizon
    omega = max(np.pi * np.median(crossings) / horizon, 2.0 * np.pi / horizon)
    amp = max(np.median(tail_amp), 1e-3)
    drive = np.median(input_amp) if input_amp else 0.0

    rng = make_rng(seed, stream=17)
    jitter = lambda size: 1.0 + 0.02 * rng.normal(size=size)

    def diag_chol(scale):
        flat = np.zeros(tri_size(n))
        flat[diag_positions(n)] = _raw_for_diag(np.sqrt(scale) * jitter(n))
        return flat

    # inv-mass and stiffness factors split omega evenly; damping targets a
    # lightly damped start (rate 0.2*omega)
    coupling = diag_chol(omega)
    stiffness = diag_chol(omega)
    damping = diag_chol(0.2)
    bias = 0.01 * rng.normal(size=n)
    if drive > 0.0:
        gain = omega * amp / drive
    else:
        gain = 1.0
    input_matrix = np.zeros((n, m))
    np.fill_diagonal(input_matrix, gain * jitter(min(n, m)))
    return ConParams(
        n=n,
        m=m,
        chol_inv_mass=coupling,
        chol_stiffness=stiffness,
        chol_damping=damping,
        bias=bias,
        input_matrix=input_matrix,
    )


def _lr_at(config: FitConfig, epoch: int) -> float:
    """Linear warmup to the peak rate, then cosine decay to zero."""
    if config.warmup_epochs > 0 and epoch < config.warmup_epochs:
        return config.lr * (epoch + 1) / config.warmup_epochs
    span = max(config.epochs - config.warmup_epochs, 1)
    progress = (epoch - config.warmup_epochs) / span
    return config.lr * 0.5 * (1.0 + np.cos(np.pi * progress))


@dataclass
class FitResult:
    params: ConParams
    history: list[dict]
    checkpoints: list[tuple[int, ConParams]]

    @property
    def best_val_loss(self) -> float:
        return min(h["val_loss"] for h in self.history)


def fit(
    dataset: Dataset,
    config: FitConfig | None = None,
    seed: int = 0,
    init: ConParams | None = None,
) -> FitResult:
    """Train a network on the dataset; returns the best-validation iterate.

    The model size is read off the data: n = half the state width, m = the
    input width (an unactuated dataset still gets one input channel, driven
    by zeros, so the forcing decoder stays well-defined).  ``init`` overrides
    the default random starting point (see ``warm_start_params`` for fast
    plants).  Deterministic for a fixed (dataset, config, seed, init).
    """
    config = config or FitConfig()
    if not dataset.train:
        raise ParameterError("fit needs a non-empty training split")
    n = dataset.state_dim // 2
    m = max(dataset.input_dim, 1)
    sample_dt = dataset.sample_dt

    train_states, train_inputs = _stack(dataset.train)
    val_split = dataset.val if dataset.val else dataset.train
    val_states, val_inputs = _stack(val_split)

    if init is not None and (init.n, init.m) != (n, m):
        raise ParameterError(
            f"init has n={init.n}, m={init.m}; the dataset needs n={n}, m={m}"
        )
    theta = params_to_vector(init if init is not None else random_con_params(seed, n=n, m=m))
    moment1 = np.zeros_like(theta)
    moment2 = np.zeros_like(theta)
    updates = 0

    def batch_loss(vec, idx):
        p = vector_to_params(vec, n, m)
        ins = None if train_inputs is None else train_inputs[idx]
        return _stacked_loss(p, train_states[idx], ins, sample_dt, config.spec)

    def split_loss(vec, states, inputs):
        return _stacked_loss(vector_to_params(vec, n, m), states, inputs, sample_dt, config.spec)

    n_train = len(dataset.train)
    rng = make_rng(seed, stream=7)
    history: list[dict] = []
    checkpoints: list[tuple[int, ConParams]] = []
    best_val = np.inf
    best_theta = theta.copy()
    best_epoch = 0
    stale = 0

    for epoch in range(config.epochs):
        lr = _lr_at(config, epoch)
        if config.batch_size is None or config.batch_size >= n_train:
            batches = [np.arange(n_train)]
        else:
            order = rng.permutation(n_train)
            batches = [
                order[i : i + config.batch_size]
                for i in range(0, n_train, config.batch_size)
            ]
        for idx in batches:
            grad = fd_gradient(lambda v: batch_loss(v, idx), theta, config.fd_step)
            updates += 1
            moment1 = config.beta1 * moment1 + (1.0 - config.beta1) * grad
            moment2 = config.beta2 * moment2 + (1.0 - config.beta2) * grad * grad
            m_hat = moment1 / (1.0 - config.beta1**updates)
            v_hat = moment2 / (1.0 - config.beta2**updates)
            theta = theta - lr * (
                m_hat / (np.sqrt(v_hat) + config.eps) + config.weight_decay * theta
            )

        train_loss = split_loss(theta, train_states, train_inputs)
        val_loss = split_loss(theta, val_states, val_inputs)
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
        )
        if val_loss < best_val:
            best_val = val_loss
            best_theta = theta.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
        if (epoch + 1) % config.checkpoint_every == 0:
            checkpoints.append((epoch, vector_to_params(theta, n, m)))
        if stale >= config.patience:
            break

    best_params = vector_to_params(best_theta, n, m)
    checkpoints.append((best_epoch, best_params))
    return FitResult(params=best_params, history=history, checkpoints=checkpoints)


def generate_dataset(
    kind: str,
    seed: int,
    n_train: int = 50,
    n_val: int = 10,
    n_test: int = 10,
    horizon: float = 3.0,
    sample_dt: float = 0.05,
    plant_dt: float | None = None,
    input_scale: float | None = 1.0,
    start_scale: float | None = None,
    **plant_kwargs,
) -> Dataset:
    """Simulate a plant into a dataset: random starts, constant random input.

    One batched fixed-step sweep covers every trajectory, so the expensive
    plants (the soft arm) cost about the same as one rollout.  Everything
    derives from ``seed``; ``input_scale=None`` records no actuation at all.
    ``start_scale`` shrinks or widens the initial-state box (default: half
    the strain limits for the soft arm, the unit box otherwise).
    """
    plant = make_plant(kind, **plant_kwargs)
    total = n_train + n_val + n_test
    if total < 1:
        raise ParameterError("dataset needs at least one trajectory")
    if plant_dt is None:
        plant_dt = 1e-4 if kind == "pcc" else 0.005
    rng = make_rng(seed, stream=11)
    dof, m = plant.dof, plant.input_dim

    if kind == "pcc":
        # release from rest inside the scaled strain box, driven by constant
        # actuation inside the scaled static-hold bound
        scale = 0.5 if start_scale is None else start_scale
        limits = scale * strain_limits(plant.params)
        starts = rng.uniform(-limits, limits, size=(total, dof))
        y0 = np.concatenate([starts, np.zeros((total, dof))], axis=1)
        inputs = None
        if input_scale is not None:
            bound = input_scale * actuation_limit(plant.params)
            inputs = rng.uniform(-bound, bound, size=(total, m))
    else:
        scale = 1.0 if start_scale is None else start_scale
        y0 = rng.uniform(-scale, scale, size=(total, 2 * dof))
        inputs = (
            input_scale * rng.uniform(-1.0, 1.0, size=(total, m))
            if input_scale is not None
            else None
        )

    n_steps = int(round(horizon / sample_dt))
    substeps = int(round(sample_dt / plant_dt))
    if abs(sample_dt / plant_dt - substeps) > 1e-9:
        raise ParameterError("plant_dt must divide sample_dt")
    states = np.empty((total, n_steps + 1, 2 * dof))
    states[:, 0] = y0
    y = y0
    u = inputs if inputs is not None else None
    for k in range(n_steps):
        for _ in range(substeps):
            y = step_fixed(plant.field, y, u, plant_dt, "rk4")
        states[:, k + 1] = y
    if not np.all(np.isfinite(states)):
        raise ParameterError("plant simulation diverged while generating data")

    times = sample_dt * np.arange(n_steps + 1)
    trajectories = []
    for i in range(total):
        held = (
            None
            if inputs is None
            else np.broadcast_to(inputs[i], (n_steps + 1, m)).copy()
        )
        trajectories.append(Trajectory(times=times.copy(), states=states[i], inputs=held))
    return Dataset(
        train=trajectories[:n_train],
        val=trajectories[n_train : n_train + n_val],
        test=trajectories[n_train + n_val :],
    )


def generate_con_dataset(
    p: ConParams,
    seed: int,
    n_train: int = 50,
    n_val: int = 10,
    n_test: int = 10,
    horizon: float = 3.0,
    sample_dt: float = 0.05,
    input_scale: float = 0.5,
) -> Dataset:
    """Dataset produced by a known network -- the self-identification oracle."""
    total = n_train + n_val + n_test
    rng = make_rng(seed, stream=13)
    y0 = rng.uniform(-1.0, 1.0, size=(total, 2 * p.n))
    const_u = input_scale * rng.uniform(-1.0, 1.0, size=(total, p.m))
    n_steps = int(round(horizon / sample_dt))
    inputs = np.broadcast_to(const_u[:, None, :], (total, n_steps + 1, p.m)).copy()
    fine = IntegratorSpec(method="rk4", dt=sample_dt / 10.0)
    states = model_rollout(p, y0, inputs, sample_dt, fine)
    times = sample_dt * np.arange(n_steps + 1)
    trajectories = [
        Trajectory(times=times.copy(), states=states[i], inputs=inputs[i])
        for i in range(total)
    ]
    return Dataset(
        train=trajectories[:n_train],
        val=trajectories[n_train : n_train + n_val],
        test=trajectories[n_train + n_val :],
    )
