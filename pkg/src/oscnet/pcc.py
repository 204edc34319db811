"""Planar constant-curvature soft arm: kinematics, dynamics, vector field.

The arm is a chain of ``n_b`` elastic segments.  Within a segment the strains
are constant along the arclength, so the backbone is a circular arc and both
the pose and its strain Jacobian have closed forms.  Conventions: the base is
clamped at the origin, a straight arm hangs along ``-y``, gravity pulls in
``-y``, the tangent angle ``theta`` is zero pointing down and grows
counterclockwise.

A point at local arclength ``sigma`` inside a segment with strains
``(kappa, shear, axial)`` and base pose ``(p0, theta0)`` sits at

    theta(sigma) = theta0 + kappa * sigma
    p(sigma)     = p0 + sigma * sinc(u/2) * [shear * n + (1 + axial) * t],

where ``u = kappa * sigma``, the tangent/normal pair ``t, n`` is evaluated at
the mid angle ``theta0 + u/2``, and ``sinc(x) = sin(x)/x``.  This is the exact
arc integral; it is smooth through ``kappa = 0``, so no curvature floor is
needed for poses (only the sinc *derivative* gets a series branch, for
cancellation rather than division by zero).  Planar positions are carried as
complex numbers ``x + iy`` internally -- the normal is ``e^{i theta}`` and the
tangent ``-i e^{i theta}`` -- which keeps the hot field evaluation lean.

Dynamics follow the standard mechanical form

    B(q) qdd + C(q, qd) qd + G(q) + K q + D qd = u

with the inertia ``B`` assembled by Gauss-Legendre quadrature of point-mass
position Jacobians along the backbone (slender-rod model: cross-section rotary
inertia neglected), gravity ``G`` as the exact gradient of the same quadrature
potential, Coriolis ``C`` from Christoffel symbols of a central-difference
``dB/dq``, and constant diagonal elastic/damping terms per segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from ._util import NumericalError, ParameterError, make_rng

__all__ = [
    "PccParams",
    "BENDING_ONLY",
    "FULL_PLANAR",
    "pcc_forward_kinematics",
    "pcc_backbone_jacobian",
    "pcc_mass_matrix",
    "pcc_dynamics",
    "pcc_field",
    "pcc_energy",
    "stiffness_diagonal",
    "damping_diagonal",
    "strain_limits",
    "actuation_limit",
    "sample_actuation",
]

BENDING_ONLY = "bending_only"
FULL_PLANAR = "full_planar"
_STRAIN_COUNTS = {BENDING_ONLY: 1, FULL_PLANAR: 3}

# Strain magnitudes the actuation sizing is anchored to: the static load of
# holding every segment at curvature 5*pi rad/m (and, with all strains active,
# 20% shear/stretch) defines the elementwise actuation bound.
MAX_BENDING_STRAIN = 5.0 * np.pi
MAX_SHEAR_STRAIN = 0.2
MAX_AXIAL_STRAIN = 0.2

CHRISTOFFEL_FD_STEP = 1e-6
_SINC_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class PccParams:
    """Geometry and material constants of the arm.

    Lengths in meters, moduli in pascals, density in kg/m^3; the damping
    entries are generalized viscous coefficients per strain type.
    """

    n_b: int = 2
    length: float = 0.1
    diameter: float = 0.02
    density: float = 600.0
    elastic_modulus: float = 20_000.0
    shear_modulus: float = 10_000.0
    bending_damping: float = 1e-5
    shear_damping: float = 0.01
    axial_damping: float = 0.01
    gravity: float = 9.81
    strain_mode: str = BENDING_ONLY
    quad_points: int = 10

    def __post_init__(self):
        if not isinstance(self.n_b, (int, np.integer)) or self.n_b < 1:
            raise ParameterError("n_b must be a positive integer")
        for name in (
            "length",
            "diameter",
            "density",
            "elastic_modulus",
            "shear_modulus",
            "bending_damping",
            "shear_damping",
            "axial_damping",
            "gravity",
        ):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ParameterError(f"{name} must be positive and finite")
        if self.strain_mode not in _STRAIN_COUNTS:
            raise ParameterError(
                f"strain_mode must be one of {sorted(_STRAIN_COUNTS)}, got {self.strain_mode!r}"
            )
        if not isinstance(self.quad_points, (int, np.integer)) or self.quad_points < 5:
            raise ParameterError("quad_points must be an integer >= 5")

    @property
    def strains_per_segment(self) -> int:
        return _STRAIN_COUNTS[self.strain_mode]

    @property
    def dof(self) -> int:
        return self.n_b * self.strains_per_segment

    @property
    def cross_section_area(self) -> float:
        return np.pi * (0.5 * self.diameter) ** 2

    @property
    def second_moment(self) -> float:
        return np.pi * self.diameter**4 / 64.0

    @property
    def linear_density(self) -> float:
        """Mass per unit backbone length (kg/m)."""
        return self.density * self.cross_section_area


def _sinc_pair(x):
    """``sin(x)/x`` and its derivative, sharing trig work.

    The derivative ``(x cos x - sin x) / x^2`` cancels catastrophically near
    zero, so both switch to series below a cutoff (the value itself only for
    consistency; it has no cancellation).
    """
    x = np.asarray(x, dtype=float)
    xx = x * x
    small = xx < _SINC_SERIES_CUTOFF**2
    safe = np.where(small, 1.0, x)
    sin_x = np.sin(safe)
    value = np.where(small, 1.0 - xx / 6.0, sin_x / safe)
    deriv = np.where(small, x * (xx / 30.0 - 1.0 / 3.0), (np.cos(safe) - value) / safe)
    return value, deriv


def stiffness_diagonal(params: PccParams) -> np.ndarray:
    """Constant elastic stiffness per strain coordinate."""
    area = params.cross_section_area
    bend = params.elastic_modulus * params.second_moment / params.length
    if params.strain_mode == BENDING_ONLY:
        return np.full(params.n_b, bend)
    shear = params.shear_modulus * area * params.length
    axial = params.elastic_modulus * area * params.length
    return np.tile([bend, shear, axial], params.n_b)


def damping_diagonal(params: PccParams) -> np.ndarray:
    """Constant viscous damping per strain coordinate."""
    if params.strain_mode == BENDING_ONLY:
        return np.full(params.n_b, params.bending_damping)
    return np.tile(
        [params.bending_damping, params.shear_damping, params.axial_damping], params.n_b
    )


class _Layout(NamedTuple):
    """Configuration-independent arrays for the quadrature hot path."""

    sigma_all: np.ndarray  # (Pq + n_b,) local arclength: quad points then ends
    seg_all: np.ndarray  # (Pq + n_b,) owning segment of each entry
    seg_q: np.ndarray  # (Pq,) owning segment of each quad point
    half_sq: np.ndarray  # (Pq + n_b,) 0.5 * sigma^2 for the kappa derivative
    weights: np.ndarray  # (Pq,) quadrature weights in meters
    grav_w: np.ndarray  # (Pq,) linear_density * gravity * weights
    sqrt_wlam: np.ndarray  # (Pq, 1) sqrt(linear_density * weights)
    straight_y: np.ndarray  # (Pq,) quad-point heights of the straight arm
    before: np.ndarray  # (Pq, n_b) 1.0 where the segment is upstream
    at: np.ndarray  # (Pq, n_b) 1.0 where the point lies in the segment
    theta_mat: np.ndarray  # (n_b, n_b) maps kappa -> segment base angles
    lower: np.ndarray  # (n_b, n_b) strictly-lower ones (exclusive cumsum)
    probe_offsets: np.ndarray  # (2*dof + 1, dof) FD stencil around q
    k_diag: np.ndarray
    d_diag: np.ndarray


@lru_cache(maxsize=None)
def _quad_rule(n_points):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (nodes + 1.0), 0.5 * weights


@lru_cache(maxsize=None)
def _layout(params: PccParams) -> _Layout:
    n_b, nq, length = params.n_b, params.quad_points, params.length
    nodes, wts = _quad_rule(nq)
    seg_q = np.repeat(np.arange(n_b), nq)
    seg_all = np.concatenate([seg_q, np.arange(n_b)])
    sigma_all = np.concatenate([np.tile(nodes * length, n_b), np.full(n_b, length)])
    weights = np.tile(wts * length, n_b)
    seg_axis = np.arange(n_b)
    lower = np.tril(np.ones((n_b, n_b)), -1)
    dof = params.dof
    h = CHRISTOFFEL_FD_STEP
    eye = np.eye(dof)
    probe_offsets = np.concatenate([np.zeros((1, dof)), h * eye, -h * eye], axis=0)
    return _Layout(
        sigma_all=sigma_all,
        seg_all=seg_all,
        seg_q=seg_q,
        half_sq=0.5 * sigma_all**2,
        weights=weights,
        grav_w=params.linear_density * params.gravity * weights,
        sqrt_wlam=np.sqrt(params.linear_density * weights)[:, None],
        straight_y=-(seg_q * length + sigma_all[: n_b * nq]),
        before=(seg_q[:, None] > seg_axis).astype(float),
        at=(seg_q[:, None] == seg_axis).astype(float),
        theta_mat=(length * lower).T,
        lower=lower,
        probe_offsets=probe_offsets,
        k_diag=stiffness_diagonal(params),
        d_diag=damping_diagonal(params),
    )


def _strains(params: PccParams, q):
    """Split ``q`` into per-segment (kappa, shear, axial), each ``(..., n_b)``.

    Bending-only mode returns ``None`` for the absent strain types.
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != params.dof:
        raise ParameterError(
            f"configuration must have {params.dof} entries for this arm, got {q.shape[-1]}"
        )
    if params.strain_mode == BENDING_ONLY:
        return q, None, None
    per_seg = q.reshape(q.shape[:-1] + (params.n_b, 3))
    return per_seg[..., 0], per_seg[..., 1], per_seg[..., 2]


def _arc_eval(theta0, kappa, shear, axial, sigma, half_sq=None, want_derivs=True):
    """Complex arc offset from the segment base and its strain derivatives.

    The kappa derivative is taken at fixed base pose; chaining across segments
    happens in the column assembly.  ``shear``/``axial`` may be ``None`` for
    pure bending.
    """
    u = kappa * sigma
    half = 0.5 * u
    s_h, ds_h = _sinc_pair(half)
    normal = np.exp(1j * (theta0 + half))  # unit normal at the mid angle
    tangent = -1j * normal  # unit tangent (down at theta = 0)
    if shear is None:
        direction = tangent
        turn = normal  # d(direction)/d(theta)
    else:
        direction = normal * (shear - 1j * (1.0 + axial))
        turn = 1j * direction
    stretch = sigma * s_h
    offset = stretch * direction
    if not want_derivs:
        return offset, None, None, None
    if half_sq is None:
        half_sq = 0.5 * sigma * sigma
    d_kappa = half_sq * (ds_h * direction + s_h * turn)
    if shear is None:
        return offset, d_kappa, None, None
    return offset, d_kappa, stretch * normal, stretch * tangent


def _columns(before, at, pos, d_k, d_sh, d_ax, p_end, e_k, e_sh, e_ax, length):
    """Strain-Jacobian columns (complex, trailing dof axis) at backbone points.

    A bending change upstream rotates everything after that segment's end
    about the end point (complex multiplication by ``i`` is the 90-degree
    lever arm); shear/axial changes upstream translate rigidly.
    """
    lever = pos[..., :, None] - p_end[..., None, :]
    k_cols = before * (e_k[..., None, :] + (1j * length) * lever) + at * d_k[..., :, None]
    if d_sh is None:
        return k_cols
    sh_cols = before * e_sh[..., None, :] + at * d_sh[..., :, None]
    ax_cols = before * e_ax[..., None, :] + at * d_ax[..., :, None]
    cols = np.stack([k_cols, sh_cols, ax_cols], axis=-1)  # (..., P, n_b, 3)
    return cols.reshape(cols.shape[:-2] + (-1,))


def _quad_cols(params: PccParams, q, lay: _Layout, want_pos=False):
    """Jacobian columns (and optionally positions) at all quadrature points."""
    kappa, shear, axial = _strains(params, q)
    theta0 = kappa @ lay.theta_mat
    kap_all = kappa[..., lay.seg_all]
    th0_all = theta0[..., lay.seg_all]
    sh_all = None if shear is None else shear[..., lay.seg_all]
    ax_all = None if axial is None else axial[..., lay.seg_all]
    off, d_k, d_sh, d_ax = _arc_eval(
        th0_all, kap_all, sh_all, ax_all, lay.sigma_all, lay.half_sq
    )
    n_quad = lay.seg_q.shape[0]
    off_end = off[..., n_quad:]
    p0 = off_end @ lay.lower.T
    p_end = p0 + off_end
    pos = p0[..., lay.seg_q] + off[..., :n_quad]
    cols = _columns(
        lay.before,
        lay.at,
        pos,
        d_k[..., :n_quad],
        None if d_sh is None else d_sh[..., :n_quad],
        None if d_ax is None else d_ax[..., :n_quad],
        p_end,
        d_k[..., n_quad:],
        None if d_sh is None else d_sh[..., n_quad:],
        None if d_ax is None else d_ax[..., n_quad:],
        params.length,
    )
    return cols, (pos if want_pos else None)


def _inertia(cols, lay: _Layout):
    # the xy components ride in the real/imaginary parts, so the point-mass
    # sum w * (Jx^T Jx + Jy^T Jy) is the real part of scaled^H scaled; the
    # explicit symmetrization is exact (0.5 * (a + b) commutes bitwise) and
    # guards against order-of-summation asymmetry inside blocked matmul
    scaled = cols * lay.sqrt_wlam
    raw = (np.conj(np.swapaxes(scaled, -1, -2)) @ scaled).real
    return 0.5 * (raw + np.swapaxes(raw, -1, -2))


def pcc_mass_matrix(params: PccParams, q):
    """Configuration-space inertia via point-mass quadrature, batched."""
    lay = _layout(params)
    cols, _ = _quad_cols(params, q, lay)
    return _inertia(cols, lay)


def _dynamics_core(params: PccParams, q):
    """Inertia, its FD strain derivatives, and gravity in one backbone pass."""
    lay = _layout(params)
    q = np.asarray(q, dtype=float)
    dof = params.dof
    probes = q[..., None, :] + lay.probe_offsets  # (..., 2*dof + 1, dof)
    cols, _ = _quad_cols(params, probes, lay)
    b_all = _inertia(cols, lay)
    b = b_all[..., 0, :, :]
    db = (b_all[..., 1 : dof + 1, :, :] - b_all[..., dof + 1 :, :, :]) * (
        0.5 / CHRISTOFFEL_FD_STEP
    )
    # potential per point is linear_density * g * height, so its gradient
    # only needs the y parts (imaginary components) of the base-probe columns
    gravity = lay.grav_w @ cols[..., 0, :, :].imag
    return b, db, gravity


def _coriolis_from(db, qd):
    """Christoffel-symbol Coriolis matrix from the dB/dq tensor."""
    t1 = np.einsum("...kij,...k->...ij", db, qd)
    t2 = np.einsum("...jik,...k->...ij", db, qd)
    t3 = np.einsum("...ijk,...k->...ij", db, qd)
    return 0.5 * (t1 + t2 - t3)


def pcc_dynamics(params: PccParams, q, qd):
    """EOM terms ``(B, C, G, K, D)`` with constant diagonal ``K`` and ``D``."""
    qd = np.asarray(qd, dtype=float)
    if qd.shape != np.shape(q):
        raise ParameterError("q and qd must have matching shapes")
    b, db, gravity = _dynamics_core(params, q)
    coriolis = _coriolis_from(db, qd)
    return b, coriolis, gravity, np.diag(stiffness_diagonal(params)), np.diag(
        damping_diagonal(params)
    )


def _solve_spd(b, rhs, dof):
    """Solve ``b x = rhs`` for symmetric positive-definite ``b``, batched."""
    if dof == 2:
        a = b[..., 0, 0]
        c = b[..., 1, 1]
        off = b[..., 0, 1]
        det = a * c - off * off
        if np.min(det) <= 0.0 or np.min(a) <= 0.0:
            raise NumericalError("inertia matrix is not positive definite")
        return np.stack(
            [(c * rhs[..., 0] - off * rhs[..., 1]) / det,
             (a * rhs[..., 1] - off * rhs[..., 0]) / det],
            axis=-1,
        )
    try:
        np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"inertia matrix is not positive definite: {exc}") from exc
    return np.linalg.solve(b, rhs[..., None])[..., 0]


def pcc_field(params: PccParams, y, u=None):
    """State derivative of ``y = (q, qd)`` under the arm dynamics, batched."""
    y = np.asarray(y, dtype=float)
    dof = params.dof
    if y.shape[-1] != 2 * dof:
        raise ParameterError(
            f"state must have {2 * dof} entries (q then qd), got {y.shape[-1]}"
        )
    q, qd = y[..., :dof], y[..., dof:]
    lay = _layout(params)
    b, db, gravity = _dynamics_core(params, q)
    # C(q, qd) qd contracted without materializing C: with the inner product
    # t1[k, i] = sum_j dB_kij qd_j, the two symmetric Christoffel terms both
    # reduce to qd^T t1 and the third to t1 qd (same array, axes in the other
    # roles)
    t1 = (db @ qd[..., None, :, None])[..., 0]
    c_qd = (qd[..., None, :] @ t1)[..., 0, :] - 0.5 * (t1 @ qd[..., None])[..., 0]
    rhs = -c_qd - gravity - lay.k_diag * q - lay.d_diag * qd
    if u is not None:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != dof:
            raise ParameterError(f"input must have {dof} entries, got {u.shape[-1]}")
        rhs = rhs + u
    qdd = _solve_spd(b, rhs, dof)
    return np.concatenate([qd, qdd], axis=-1)


def pcc_energy(params: PccParams, y):
    """Total mechanical energy, zeroed at the straight resting arm."""
    y = np.asarray(y, dtype=float)
    dof = params.dof
    if y.shape[-1] != 2 * dof:
        raise ParameterError(
            f"state must have {2 * dof} entries (q then qd), got {y.shape[-1]}"
        )
    q, qd = y[..., :dof], y[..., dof:]
    lay = _layout(params)
    cols, pos = _quad_cols(params, q, lay, want_pos=True)
    b = _inertia(cols, lay)
    kinetic = 0.5 * np.einsum("...i,...ij,...j->...", qd, b, qd)
    elastic = 0.5 * np.sum(lay.k_diag * q * q, axis=-1)
    # height relative to the straight configuration
    lifted = (pos.imag - lay.straight_y) @ lay.weights
    gravity = params.linear_density * params.gravity * lifted
    return kinetic + elastic + gravity


def _point_eval(params: PccParams, q, seg_idx, sigma, want_jacobian):
    """Pose (and Jacobian) at arbitrary backbone points, batched.

    ``seg_idx``/``sigma`` carry a trailing points axis broadcast against the
    batch shape of ``q``.
    """
    kappa, shear, axial = _strains(params, q)
    length = params.length
    lower = np.tril(np.ones((params.n_b, params.n_b)), -1)
    theta0 = (kappa * length) @ lower.T
    off_e, e_k, e_sh, e_ax = _arc_eval(
        theta0, kappa, shear, axial, length, want_derivs=want_jacobian
    )
    p0 = off_e @ lower.T
    p_end = p0 + off_e

    batch = kappa.shape[:-1]
    seg_idx = np.asarray(seg_idx)
    if seg_idx.ndim < len(batch) + 1:
        seg_idx = np.broadcast_to(seg_idx, batch + seg_idx.shape[-1:])
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), seg_idx.shape)
    kap_p = _gather(kappa, seg_idx)
    th0_p = _gather(theta0, seg_idx)
    p0_p = _gather(p0, seg_idx)
    sh_p = None if shear is None else _gather(shear, seg_idx)
    ax_p = None if axial is None else _gather(axial, seg_idx)

    off, d_k, d_sh, d_ax = _arc_eval(
        th0_p, kap_p, sh_p, ax_p, sigma, want_derivs=want_jacobian
    )
    pos = p0_p + off
    theta = th0_p + kap_p * sigma
    if not want_jacobian:
        return pos, theta, None, None

    seg_axis = np.arange(params.n_b)
    before = (seg_idx[..., :, None] > seg_axis).astype(float)
    at = (seg_idx[..., :, None] == seg_axis).astype(float)
    cols = _columns(before, at, pos, d_k, d_sh, d_ax, p_end, e_k, e_sh, e_ax, length)
    j_theta_k = before * length + at * sigma[..., :, None]
    if params.strain_mode == BENDING_ONLY:
        return pos, theta, cols, j_theta_k
    zeros = np.zeros_like(j_theta_k)
    j_theta = np.stack([j_theta_k, zeros, zeros], axis=-1)
    return pos, theta, cols, j_theta.reshape(j_theta.shape[:-2] + (-1,))


def _gather(arr, idx, axis=-1):
    """take_along_axis with the index array padded out to ``arr``'s ndim."""
    extra = arr.ndim - idx.ndim
    if extra > 0:
        idx = idx.reshape((1,) * extra + idx.shape)
    return np.take_along_axis(arr, idx, axis=axis)


def _resolve_arclength(params: PccParams, s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ParameterError("arclength fraction must lie in [0, 1]")
    total = s * (params.n_b * params.length)
    seg_idx = np.minimum((total / params.length).astype(int), params.n_b - 1)
    sigma = total - seg_idx * params.length
    return seg_idx, sigma


def _broadcast_query(params: PccParams, q, s):
    seg_idx, sigma = _resolve_arclength(params, s)
    batch = np.broadcast_shapes(np.shape(q)[:-1], seg_idx.shape)
    q_b = np.broadcast_to(np.asarray(q, dtype=float), batch + (np.shape(q)[-1],))
    seg_b = np.broadcast_to(seg_idx, batch)[..., None]
    sig_b = np.broadcast_to(sigma, batch)[..., None]
    return q_b, seg_b, sig_b


def pcc_forward_kinematics(params: PccParams, q, s):
    """Planar pose ``[x, y, theta]`` at arclength fraction ``s`` of the arm.

    ``s`` broadcasts against the batch shape of ``q`` (so a 1-D ``s`` with a
    single configuration traces the backbone).
    """
    q_b, seg_b, sig_b = _broadcast_query(params, q, s)
    pos, theta, _, _ = _point_eval(params, q_b, seg_b, sig_b, want_jacobian=False)
    return np.stack([pos[..., 0].real, pos[..., 0].imag, theta[..., 0]], axis=-1)


def pcc_backbone_jacobian(params: PccParams, q, s):
    """Pose and pose Jacobian ``(..., 3, dof)`` at arclength fraction ``s``."""
    q_b, seg_b, sig_b = _broadcast_query(params, q, s)
    pos, theta, cols, j_theta = _point_eval(params, q_b, seg_b, sig_b, want_jacobian=True)
    pose = np.stack([pos[..., 0].real, pos[..., 0].imag, theta[..., 0]], axis=-1)
    jac = np.stack(
        [cols[..., 0, :].real, cols[..., 0, :].imag, j_theta[..., 0, :]], axis=-2
    )
    return pose, jac


def strain_limits(params: PccParams) -> np.ndarray:
    """Per-coordinate strain magnitudes used to size the actuation bound."""
    if params.strain_mode == BENDING_ONLY:
        return np.full(params.n_b, MAX_BENDING_STRAIN)
    return np.tile([MAX_BENDING_STRAIN, MAX_SHEAR_STRAIN, MAX_AXIAL_STRAIN], params.n_b)


def actuation_limit(params: PccParams) -> np.ndarray:
    """Elementwise bound: static load of holding the arm at the strain limits."""
    lay = _layout(params)
    q_max = strain_limits(params)
    cols, _ = _quad_cols(params, q_max, lay)
    gravity = lay.grav_w @ cols.imag
    return np.abs(gravity + lay.k_diag * q_max)


def sample_actuation(params: PccParams, rng_seed) -> np.ndarray:
    """Uniform random constant actuation within the elementwise bound."""
    bound = actuation_limit(params)
    rng = make_rng(rng_seed)
    return rng.uniform(-bound, bound)
