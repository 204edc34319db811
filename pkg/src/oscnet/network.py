"""Oscillator network vector fields, chart changes, equilibrium, and potential.

Two equivalent state charts are supported.  The original chart evolves

    xdd = forcing - K x - D xd - tanh(W x + b)

with symmetric positive definite coupling W.  Rescaling positions by W gives
the mass-normalized chart, where the network reads as unit-coupled oscillators
with inverse mass W:

    x_w = W x,      M_w = W^{-1}
    xdd_w = M_w^{-1} (forcing_w - K_w x_w - D_w xd_w - tanh(x_w + b))

with K_w = K M_w and D_w = D M_w, both SPD whenever K, D commute suitably;
the library stores the mass-normalized chart directly (``ConParams``) and
derives the original-chart view from it, so SPD-ness of all three blocks is
guaranteed by construction rather than checked after the fact.

States are stacked as y = (x, xd) of length 2n; every field accepts leading
batch dimensions.
"""

from __future__ import annotations

import numpy as np

from ._util import NumericalError, ParameterError
from .params import ConParams, Materialized, OriginalParams, materialized

__all__ = [
    "lcosh",
    "field_w",
    "field_original",
    "original_view",
    "to_w_coordinates",
    "from_w_coordinates",
    "solve_equilibrium",
    "potential_energy",
    "potential_force",
    "split_state",
    "join_state",
]

#: condition-number ceiling above which chart changes are refused
COND_LIMIT = 1e12


def lcosh(a):
    """log(cosh(a)) without overflow: |a| + log1p(e^{-2|a|}) - log 2."""
    a = np.abs(np.asarray(a, dtype=float))
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def split_state(y: np.ndarray):
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] // 2
    if y.shape[-1] != 2 * n:
        raise ParameterError(f"state length {y.shape[-1]} is odd")
    return y[..., :n], y[..., n:]


def join_state(x: np.ndarray, xd: np.ndarray) -> np.ndarray:
    return np.concatenate([x, xd], axis=-1)


def field_w(
    p: ConParams,
    y_w: np.ndarray,
    forcing: np.ndarray | None = None,
    mats: Materialized | None = None,
) -> np.ndarray:
    """Time derivative of y_w = (x_w, xd_w) in the mass-normalized chart.

    ``forcing`` is the generalized force tau (already mapped from actuation by
    the input matrix); omit it for the unforced network.  Batched states are
    supported through leading dimensions of ``y_w`` (and ``forcing``).  Pass a
    precomputed ``mats`` in hot loops to skip re-materialization.
    """
    if mats is None:
        mats = materialized(p)
    x, xd = split_state(y_w)
    residual = -(x @ mats.stiffness) - (xd @ mats.damping) - np.tanh(x + p.bias)
    if forcing is not None:
        residual = residual + forcing
    return join_state(xd, residual @ mats.inv_mass)


def field_original(
    op: OriginalParams,
    y: np.ndarray,
    u: np.ndarray | None = None,
) -> np.ndarray:
    """Time derivative of y = (x, xd) in the original chart.

    ``u`` is raw actuation; the forcing applied is input_matrix @ u.
    """
    x, xd = split_state(y)
    acc = -(x @ op.stiffness.T) - (xd @ op.damping.T) - np.tanh(x @ op.coupling.T + op.bias)
    if u is not None:
        acc = acc + np.asarray(u, dtype=float) @ op.input_matrix.T
    return join_state(xd, acc)


def original_view(p: ConParams) -> OriginalParams:
    """Original-chart matrices of a mass-normalized network.

    The coupling W is the materialized inverse mass itself; stiffness and
    damping are K_w W and D_w W.  Round trip: to_w_coordinates inverts the
    position scaling exactly up to solve precision.
    """
    mats = materialized(p)
    w = mats.inv_mass
    return OriginalParams(
        stiffness=mats.stiffness @ w,
        damping=mats.damping @ w,
        coupling=w,
        bias=p.bias.copy(),
        input_matrix=p.input_matrix.copy(),
    )


def _check_cond(matrix: np.ndarray, what: str) -> None:
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalError(f"{what} is numerically singular (cond={cond:.3e})")


def to_w_coordinates(op: OriginalParams, y: np.ndarray) -> np.ndarray:
    """Map original-chart states to the mass-normalized chart: (Wx, W xd)."""
    _check_cond(op.coupling, "coupling matrix")
    x, xd = split_state(y)
    return join_state(x @ op.coupling.T, xd @ op.coupling.T)


def from_w_coordinates(op: OriginalParams, y_w: np.ndarray) -> np.ndarray:
    _check_cond(op.coupling, "coupling matrix")
    x_w, xd_w = split_state(y_w)
    x = np.linalg.solve(op.coupling, x_w[..., None])[..., 0]
    xd = np.linalg.solve(op.coupling, xd_w[..., None])[..., 0]
    return join_state(x, xd)


def solve_equilibrium(
    stiffness: np.ndarray,
    bias: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> np.ndarray:
    """Unique rest position in the mass-normalized chart.

    Solves stiffness @ x + tanh(x + bias) = 0 by damped Newton iteration.  The
    residual is the gradient of a strictly convex function (SPD quadratic plus
    a sum of convex log-cosh wells), so the root is unique and independent of
    the starting point; ``x0`` only affects the iteration path.

    Supports a batch of starting points with leading dimensions; the batched
    Jacobian solve is one LAPACK call.
    """
    stiffness = np.asarray(stiffness, dtype=float)
    bias = np.asarray(bias, dtype=float)
    n = bias.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    batched = x.ndim > 1

    def residual(z):
        return z @ stiffness + np.tanh(z + bias)

    r = residual(x)
    merit = np.sum(r * r, axis=-1)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return x
        sech2 = 1.0 / np.cosh(x + bias) ** 2
        if batched:
            jac = stiffness + sech2[..., :, None] * np.eye(n)
            step = np.linalg.solve(jac, r[..., None])[..., 0]
        else:
            jac = stiffness + np.diag(sech2)
            step = np.linalg.solve(jac, r)
        # Backtracking keeps the sum-of-squares merit monotone; full steps are
        # accepted almost always because the problem is convex.
        t = np.ones(merit.shape) if batched else 1.0
        for _ in range(60):
            x_new = x - (t[..., None] * step if batched else t * step)
            r_new = residual(x_new)
            merit_new = np.sum(r_new * r_new, axis=-1)
            worse = merit_new > merit
            if not np.any(worse):
                break
            t = np.where(worse, 0.5 * t, t) if batched else 0.5 * t
        x, r, merit = x_new, r_new, merit_new
    raise NumericalError(
        f"equilibrium solve did not reach |r|_inf < {tol:g} in {max_iter} iterations"
    )


def potential_energy(
    stiffness: np.ndarray,
    bias: np.ndarray,
    equilibrium: np.ndarray,
    disp: np.ndarray,
) -> float:
    """Potential of the network about its rest position, zero at rest.

    ``disp`` is the position offset from ``equilibrium`` in the
    mass-normalized chart.  The value is the full elastic-plus-saturating
    potential shifted and tilted so that both the value and the gradient
    vanish at the rest position; its gradient is exactly
    ``potential_force(...) `` because the rest position balances the spring
    term against the saturating term.
    """
    stiffness = np.asarray(stiffness, dtype=float)
    bias = np.asarray(bias, dtype=float)
    equilibrium = np.asarray(equilibrium, dtype=float)
    disp = np.asarray(disp, dtype=float)
    a0 = equilibrium + bias
    a1 = a0 + disp
    wells = np.sum(lcosh(a1) - lcosh(a0) - np.tanh(a0) * disp, axis=-1)
    quad = 0.5 * np.sum((disp @ stiffness) * disp, axis=-1)
    out = wells + quad
    return float(out) if out.ndim == 0 else out


def potential_force(
    stiffness: np.ndarray,
    bias: np.ndarray,
    equilibrium: np.ndarray,
    disp: np.ndarray,
) -> np.ndarray:
    """Gradient of potential_energy with respect to ``disp``.

    Equals the total static restoring force stiffness @ (eq + disp)
    + tanh(eq + disp + bias); at disp = 0 it vanishes by definition of the
    rest position.
    """
    stiffness = np.asarray(stiffness, dtype=float)
    pos = np.asarray(equilibrium, dtype=float) + np.asarray(disp, dtype=float)
    return pos @ stiffness + np.tanh(pos + np.asarray(bias, dtype=float))
