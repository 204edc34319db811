"""Shared plumbing: deterministic RNG construction, 17-digit serialization, errors."""

from __future__ import annotations

import json

import numpy as np

__all__ = [
    "ParameterError",
    "NumericalError",
    "DivergenceError",
    "make_rng",
    "fmt17",
    "dumps17",
    "loads_json",
]

_TWO64 = 1 << 64


class ParameterError(ValueError):
    """Invalid configuration or parameter input (CLI exit code 1)."""


class NumericalError(RuntimeError):
    """Numerical failure: divergence, singularity, failed solve (CLI exit code 2)."""


class DivergenceError(NumericalError):
    """A rollout produced a non-finite state.

    Carries the time stamp and the last finite state so callers can report
    partial results.
    """

    def __init__(self, message: str, t: float | None = None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator: Philox-4x64-10 keyed by (seed, stream).

    Philox is a pure counter-based keyed generator, so identical (seed, stream)
    pairs reproduce bit-identical draws on every platform.  The 128-bit key is
    ``seed`` in the low word and ``stream`` in the high word; distinct streams
    for one seed are statistically independent.
    """
    key = (int(seed) % _TWO64) + ((int(stream) % _TWO64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def fmt17(x: float) -> str:
    """Render a double with 17 significant digits (lossless round-trip)."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"non-finite value in serialized output: {x!r}")
    return format(x, ".17g")


def _render(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    closing_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}{json.dumps(str(k))}: {_render(v, indent, level + 1)}' for k, v in obj.items()
        )
        return "{\n" + items + "\n" + closing_pad + "}"
    if isinstance(obj, (list, tuple)) or isinstance(obj, np.ndarray):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_render(v, indent, level) for v in seq) + "]"
        items = ",\n".join(f"{pad}{_render(v, indent, level + 1)}" for v in seq)
        return "[\n" + items + "\n" + closing_pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt17(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps17(obj, indent: int = 2) -> str:
    """JSON text with every float printed at 17 significant digits.

    The stdlib encoder offers no hook for float formatting, hence this small
    renderer.  Output is plain JSON readable by ``json.loads``.
    """
    return _render(obj, indent, 0) + "\n"


def loads_json(text: str):
    return json.loads(text)
