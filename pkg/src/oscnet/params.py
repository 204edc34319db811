"""Network parameters and their positive-definite factorization.

A coupled oscillator network is stored in its mass-normalized chart as three
symmetric positive-definite matrices (inverse mass, stiffness, damping), an
offset vector for the saturating coupling, and a constant input matrix.  Each
SPD matrix is represented by the free entries of an upper-triangular factor
``U`` so that every parameter vector materializes to a valid network:

    A = U.T @ U,   U[i, i] = softplus(u[i, i] + SOFTPLUS_SHIFT) + DIAG_FLOOR

The softplus keeps diagonal entries positive for any real input and the floor
bounds the spectrum away from zero, so gradient-based fitting can move freely
through parameter space without ever leaving the certifiable set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._util import ParameterError, dumps17, loads_json, make_rng

__all__ = [
    "SOFTPLUS_SHIFT",
    "DIAG_FLOOR",
    "ConParams",
    "OriginalParams",
    "Materialized",
    "softplus",
    "tri_size",
    "tri_dim",
    "diag_positions",
    "flat_to_upper",
    "upper_to_flat",
    "materialize",
    "materialized",
    "validate_params",
    "params_to_vector",
    "vector_to_params",
    "random_con_params",
    "perturb",
    "params_to_json",
    "params_from_json",
    "save_params",
    "load_params",
]

SOFTPLUS_SHIFT = 1e-6
DIAG_FLOOR = 2e-6


def softplus(x):
    """log(1 + e^x), overflow-safe for large positive and negative x."""
    return np.logaddexp(0.0, x)


def tri_size(n: int) -> int:
    """Number of free entries in an n-by-n upper triangle."""
    return n * (n + 1) // 2


def tri_dim(size: int) -> int:
    """Inverse of tri_size; raises if size is not triangular."""
    n = int(round((np.sqrt(8 * size + 1) - 1) / 2))
    if tri_size(n) != size:
        raise ParameterError(f"{size} is not a triangular number")
    return n


def diag_positions(n: int) -> np.ndarray:
    """Flat row-major-upper-triangle indices of the diagonal entries."""
    i = np.arange(n)
    return i * n - (i * (i - 1)) // 2


def flat_to_upper(entries: np.ndarray, n: int | None = None) -> np.ndarray:
    """Unpack a flat row-major vector into an upper-triangular matrix."""
    entries = np.asarray(entries, dtype=float)
    if n is None:
        n = tri_dim(entries.size)
    if entries.size != tri_size(n):
        raise ParameterError(f"expected {tri_size(n)} entries for n={n}, got {entries.size}")
    upper = np.zeros((n, n))
    upper[np.triu_indices(n)] = entries
    return upper


def upper_to_flat(upper: np.ndarray) -> np.ndarray:
    upper = np.asarray(upper, dtype=float)
    n = upper.shape[0]
    return upper[np.triu_indices(n)].copy()


def materialize(chol_entries: np.ndarray, n: int | None = None) -> np.ndarray:
    """Map free factor entries to the SPD matrix they parameterize.

    The returned matrix is exactly symmetric (U.T @ U computes entry (i, j)
    and (j, i) as the identical dot product) and positive definite for any
    finite input.
    """
    entries = np.asarray(chol_entries, dtype=float)
    if not np.all(np.isfinite(entries)):
        raise ParameterError("non-finite factor entries")
    upper = flat_to_upper(entries, n)
    diag = np.diag_indices(upper.shape[0])
    upper[diag] = softplus(upper[diag] + SOFTPLUS_SHIFT) + DIAG_FLOOR
    return upper.T @ upper


@dataclass(frozen=True)
class ConParams:
    """Oscillator network in the mass-normalized chart.

    chol_inv_mass, chol_stiffness, chol_damping hold the free factor entries
    (flat, row-major upper triangle) of the inverse mass, stiffness and
    damping matrices.  ``bias`` shifts the saturating coupling, and
    ``input_matrix`` (n-by-m) maps actuation to forcing.
    """

    n: int
    m: int
    chol_inv_mass: np.ndarray
    chol_stiffness: np.ndarray
    chol_damping: np.ndarray
    bias: np.ndarray
    input_matrix: np.ndarray

    def __post_init__(self):
        for name in ("chol_inv_mass", "chol_stiffness", "chol_damping", "bias", "input_matrix"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        validate_params(self)

    def with_vector(self, theta: np.ndarray) -> "ConParams":
        """Rebuild from a flat parameter vector (the fitting representation)."""
        return vector_to_params(theta, self.n, self.m)


@dataclass(frozen=True)
class OriginalParams:
    """The same network in its original chart.

    Dynamics: xdd = forcing - stiffness @ x - damping @ xd - tanh(coupling @ x + bias),
    with forcing = input_matrix @ u.  ``coupling`` must be symmetric positive
    definite for the two charts to be diffeomorphic.
    """

    stiffness: np.ndarray
    damping: np.ndarray
    coupling: np.ndarray
    bias: np.ndarray
    input_matrix: np.ndarray

    def __post_init__(self):
        for name in ("stiffness", "damping", "coupling", "bias", "input_matrix"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def n(self) -> int:
        return self.bias.size

    @property
    def m(self) -> int:
        return self.input_matrix.shape[1]


class Materialized(NamedTuple):
    """Dense SPD matrices of a ConParams, all exactly symmetric."""

    inv_mass: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray


def materialized(p: ConParams) -> Materialized:
    return Materialized(
        inv_mass=materialize(p.chol_inv_mass, p.n),
        stiffness=materialize(p.chol_stiffness, p.n),
        damping=materialize(p.chol_damping, p.n),
    )


def validate_params(p: ConParams) -> None:
    if p.n < 1 or p.m < 0:
        raise ParameterError(f"invalid dimensions n={p.n}, m={p.m}")
    want = tri_size(p.n)
    for name in ("chol_inv_mass", "chol_stiffness", "chol_damping"):
        arr = getattr(p, name)
        if arr.shape != (want,):
            raise ParameterError(f"{name}: expected shape ({want},), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError(f"{name}: non-finite entries")
    if p.bias.shape != (p.n,):
        raise ParameterError(f"bias: expected shape ({p.n},), got {p.bias.shape}")
    if p.input_matrix.shape != (p.n, p.m):
        raise ParameterError(
            f"input_matrix: expected shape ({p.n}, {p.m}), got {p.input_matrix.shape}"
        )
    if not np.all(np.isfinite(p.bias)) or not np.all(np.isfinite(p.input_matrix)):
        raise ParameterError("non-finite bias or input_matrix")


def params_to_vector(p: ConParams) -> np.ndarray:
    """Flatten to the fitting vector: three factors, bias, input matrix."""
    return np.concatenate(
        [p.chol_inv_mass, p.chol_stiffness, p.chol_damping, p.bias, p.input_matrix.ravel()]
    )


def vector_to_params(theta: np.ndarray, n: int, m: int) -> ConParams:
    theta = np.asarray(theta, dtype=float)
    t = tri_size(n)
    want = 3 * t + n + n * m
    if theta.size != want:
        raise ParameterError(f"expected {want} parameters for n={n}, m={m}, got {theta.size}")
    parts = np.split(theta, [t, 2 * t, 3 * t, 3 * t + n])
    return ConParams(
        n=n,
        m=m,
        chol_inv_mass=parts[0],
        chol_stiffness=parts[1],
        chol_damping=parts[2],
        bias=parts[3],
        input_matrix=parts[4].reshape(n, m),
    )


def random_con_params(
    seed: int,
    n: int,
    m: int = 1,
    *,
    diag_loc: float = 0.4,
    diag_scale: float = 0.3,
    off_scale: float = 0.3,
    bias_scale: float = 0.5,
    stream: int = 0,
) -> ConParams:
    """Sample a well-conditioned random network.

    Factor diagonals are drawn near ``diag_loc`` so every materialized matrix
    has spectrum of order one; off-diagonal factor entries shrink with 1/sqrt(n)
    to keep conditioning roughly size-independent.
    """
    rng = make_rng(seed, stream)
    t = tri_size(n)
    diag_pos = diag_positions(n)
    chols = []
    for _ in range(3):
        flat = rng.normal(0.0, off_scale / np.sqrt(n), size=t)
        flat[diag_pos] = rng.normal(diag_loc, diag_scale, size=n)
        chols.append(flat)
    bias = rng.normal(0.0, bias_scale, size=n)
    input_matrix = rng.normal(0.0, 1.0 / np.sqrt(max(m, 1)), size=(n, m))
    return ConParams(
        n=n,
        m=m,
        chol_inv_mass=chols[0],
        chol_stiffness=chols[1],
        chol_damping=chols[2],
        bias=bias,
        input_matrix=input_matrix,
    )


# JSON field names are part of the on-disk interface; they keep the historical
# single-letter matrix names so files are interchangeable with other tools.
def params_to_json(p: ConParams) -> str:
    return dumps17(
        {
            "n": p.n,
            "m": p.m,
            "chol_M_inv": p.chol_inv_mass,
            "chol_K": p.chol_stiffness,
            "chol_D": p.chol_damping,
            "b": p.bias,
            "B": p.input_matrix,
        }
    )


def params_from_json(text: str) -> ConParams:
    try:
        obj = loads_json(text)
    except ValueError as exc:
        raise ParameterError(f"malformed parameter JSON: {exc}") from exc
    try:
        return ConParams(
            n=int(obj["n"]),
            m=int(obj["m"]),
            chol_inv_mass=np.asarray(obj["chol_M_inv"], dtype=float),
            chol_stiffness=np.asarray(obj["chol_K"], dtype=float),
            chol_damping=np.asarray(obj["chol_D"], dtype=float),
            bias=np.asarray(obj["b"], dtype=float),
            input_matrix=np.asarray(obj["B"], dtype=float),
        )
    except KeyError as exc:
        raise ParameterError(f"parameter JSON missing field {exc}") from exc


def save_params(path, p: ConParams) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(params_to_json(p))


def load_params(path) -> ConParams:
    with open(path) as fh:
        return params_from_json(fh.read())


def perturb(p: ConParams, seed: int, scale: float) -> ConParams:
    """Gaussian perturbation of every free parameter (useful for init studies)."""
    rng = make_rng(seed, stream=7)
    theta = params_to_vector(p)
    return vector_to_params(theta + rng.normal(0.0, scale, theta.shape), p.n, p.m)
