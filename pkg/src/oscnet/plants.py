"""Ground-truth mechanical plants for data generation and closed-loop tests.

Each plant is a pure vector field ``f(y, u=None, t=0.0)`` on the stacked state
``y = (q, qd)`` together with a total-mechanical-energy function.  All fields
broadcast over leading batch axes.  The toy systems (falling-spring mass, one
and two pendulum links) use hard-coded textbook parameters; the soft arm lives
in :mod:`oscnet.pcc` and is wrapped here behind the same ``PlantModel`` face.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from ._util import NumericalError, ParameterError
from .pcc import PccParams, pcc_energy, pcc_field

__all__ = [
    "PlantModel",
    "make_plant",
    "mass_spring_field",
    "mass_spring_energy",
    "pendulum_field",
    "pendulum_energy",
    "double_pendulum_field",
    "double_pendulum_energy",
]

# Point mass on a linear spring with viscous friction.
MASS_SPRING_MASS = 0.5  # kg
MASS_SPRING_STIFFNESS = 2.0  # N/m
MASS_SPRING_DAMPING = 0.05  # N s/m

# Point-mass pendulum links.  Angles are measured from the hanging-down
# position, so (0, 0) is the stable rest state.
PENDULUM_MASS = 0.5  # kg per bob
PENDULUM_LENGTH = 1.0  # m per link
PENDULUM_GRAVITY = 3.0  # m/s^2
PENDULUM_DAMPING = 0.05  # N m s/rad, viscous, per angle coordinate


def _split_plant_state(y, dof):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != 2 * dof:
        raise ParameterError(
            f"state must have {2 * dof} entries (q then qd), got {y.shape[-1]}"
        )
    return y[..., :dof], y[..., dof:]


def _input_as(u, like, m):
    """Coerce ``u`` to an array shaped like the generalized-force vector."""
    if u is None:
        return None
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        if m != 1:
            raise ParameterError(f"scalar input given to a plant with {m} inputs")
        return np.broadcast_to(u, like.shape)
    if u.shape[-1] != m:
        raise ParameterError(f"input must have {m} entries, got {u.shape[-1]}")
    if m == 1 and like.ndim == u.ndim - 1:
        u = u[..., 0]
    return u


def mass_spring_field(y, u=None, t=0.0):
    """Damped spring-mass: ``m xdd = -k x - d xd + u``."""
    x, xd = _split_plant_state(y, 1)
    force = -MASS_SPRING_STIFFNESS * x - MASS_SPRING_DAMPING * xd
    uu = _input_as(u, x, 1)
    if uu is not None:
        force = force + uu.reshape(x.shape)
    return np.concatenate([xd, force / MASS_SPRING_MASS], axis=-1)


def mass_spring_energy(y):
    x, xd = _split_plant_state(y, 1)
    kinetic = 0.5 * MASS_SPRING_MASS * xd[..., 0] ** 2
    elastic = 0.5 * MASS_SPRING_STIFFNESS * x[..., 0] ** 2
    return kinetic + elastic


def pendulum_field(y, u=None, t=0.0):
    """Single point-mass link: ``m L^2 thdd = -m g L sin(th) - d thd + u``."""
    th, thd = _split_plant_state(y, 1)
    torque = (
        -PENDULUM_MASS * PENDULUM_GRAVITY * PENDULUM_LENGTH * np.sin(th)
        - PENDULUM_DAMPING * thd
    )
    uu = _input_as(u, th, 1)
    if uu is not None:
        torque = torque + uu.reshape(th.shape)
    inertia = PENDULUM_MASS * PENDULUM_LENGTH**2
    return np.concatenate([thd, torque / inertia], axis=-1)


def pendulum_energy(y):
    th, thd = _split_plant_state(y, 1)
    inertia = PENDULUM_MASS * PENDULUM_LENGTH**2
    kinetic = 0.5 * inertia * thd[..., 0] ** 2
    height = PENDULUM_LENGTH * (1.0 - np.cos(th[..., 0]))
    return kinetic + PENDULUM_MASS * PENDULUM_GRAVITY * height


def _double_pendulum_mass_matrix(q):
    """Inertia of two point-mass links in absolute angles, batched."""
    m1 = m2 = PENDULUM_MASS
    l1 = l2 = PENDULUM_LENGTH
    c12 = np.cos(q[..., 0] - q[..., 1])
    row0 = np.stack([np.full_like(c12, (m1 + m2) * l1**2), m2 * l1 * l2 * c12], -1)
    row1 = np.stack([m2 * l1 * l2 * c12, np.full_like(c12, m2 * l2**2)], -1)
    return np.stack([row0, row1], axis=-2)


def double_pendulum_field(y, u=None, t=0.0):
    """Planar double link, absolute angles, explicit inertia solve per call.

    Both angles are measured from the downward vertical; damping acts
    viscously on each angle rate.
    """
    q, qd = _split_plant_state(y, 2)
    m1 = m2 = PENDULUM_MASS
    l1 = l2 = PENDULUM_LENGTH
    g = PENDULUM_GRAVITY
    s12 = np.sin(q[..., 0] - q[..., 1])
    # Velocity-product terms from the Lagrangian of the absolute-angle chart.
    coriolis = np.stack(
        [m2 * l1 * l2 * s12 * qd[..., 1] ** 2, -m2 * l1 * l2 * s12 * qd[..., 0] ** 2],
        axis=-1,
    )
    gravity = np.stack(
        [(m1 + m2) * g * l1 * np.sin(q[..., 0]), m2 * g * l2 * np.sin(q[..., 1])],
        axis=-1,
    )
    rhs = -coriolis - gravity - PENDULUM_DAMPING * qd
    uu = _input_as(u, q, 2)
    if uu is not None:
        rhs = rhs + uu
    mass = _double_pendulum_mass_matrix(q)
    try:
        qdd = np.linalg.solve(mass, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:  # unreachable for these parameters
        raise NumericalError(f"inertia solve failed: {exc}") from exc
    return np.concatenate([qd, qdd], axis=-1)


def double_pendulum_energy(y):
    q, qd = _split_plant_state(y, 2)
    m1 = m2 = PENDULUM_MASS
    l1 = l2 = PENDULUM_LENGTH
    g = PENDULUM_GRAVITY
    mass = _double_pendulum_mass_matrix(q)
    kinetic = 0.5 * np.einsum("...i,...ij,...j->...", qd, mass, qd)
    height1 = l1 * (1.0 - np.cos(q[..., 0]))
    height2 = height1 + l2 * (1.0 - np.cos(q[..., 1]))
    return kinetic + m1 * g * height1 + m2 * g * height2


@dataclass(frozen=True)
class PlantModel:
    """A ground-truth plant: vector field plus bookkeeping.

    ``field(y, u=None, t=0.0)`` maps the stacked state ``(q, qd)`` to its time
    derivative; ``energy(y)`` is the total mechanical energy.  ``params`` holds
    the kind-specific parameter block (a dict for the toy systems, a
    :class:`~oscnet.pcc.PccParams` for the soft arm).
    """

    kind: str
    dof: int
    input_dim: int
    params: Any
    field: Callable[..., np.ndarray]
    energy: Callable[[np.ndarray], np.ndarray]


PLANT_KINDS = ("mass_spring", "pendulum", "double_pendulum", "pcc")


def make_plant(kind, **pcc_overrides) -> PlantModel:
    """Build one of the named plants; keyword overrides apply to ``pcc`` only."""
    if kind != "pcc" and pcc_overrides:
        raise ParameterError(f"parameter overrides are only supported for pcc, not {kind}")
    if kind == "mass_spring":
        params = {
            "mass": MASS_SPRING_MASS,
            "stiffness": MASS_SPRING_STIFFNESS,
            "damping": MASS_SPRING_DAMPING,
        }
        return PlantModel("mass_spring", 1, 1, params, mass_spring_field, mass_spring_energy)
    if kind == "pendulum":
        params = {
            "mass": PENDULUM_MASS,
            "length": PENDULUM_LENGTH,
            "gravity": PENDULUM_GRAVITY,
            "damping": PENDULUM_DAMPING,
        }
        return PlantModel("pendulum", 1, 1, params, pendulum_field, pendulum_energy)
    if kind == "double_pendulum":
        params = {
            "mass": PENDULUM_MASS,
            "length": PENDULUM_LENGTH,
            "gravity": PENDULUM_GRAVITY,
            "damping": PENDULUM_DAMPING,
        }
        return PlantModel(
            "double_pendulum", 2, 2, params, double_pendulum_field, double_pendulum_energy
        )
    if kind == "pcc":
        params = PccParams(**pcc_overrides)

        def field(y, u=None, t=0.0):
            return pcc_field(params, y, u)

        def energy(y):
            return pcc_energy(params, y)

        return PlantModel("pcc", params.dof, params.dof, params, field, energy)
    raise ParameterError(f"unknown plant kind {kind!r}; expected one of {PLANT_KINDS}")
