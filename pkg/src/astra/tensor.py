"""Numeric substrate: log-space reductions, a portable RNG and JSON tensors.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and rank <= 2.
``NEG_INF`` stands for log 0 and is the only non-finite value allowed.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import FormatError, UsageError

NEG_INF = float("-inf")

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def log_sum_exp(values: Iterable[float]) -> float:
    """Stable ``log(sum(exp(values)))``.

    Returns ``NEG_INF`` exactly when every input is ``NEG_INF``.
    """
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if v.size == 0:
        raise UsageError("log_sum_exp of an empty sequence")
    m = float(np.max(v))
    if m == NEG_INF:
        return NEG_INF
    if m == math.inf:
        return math.inf
    return m + math.log(float(np.sum(np.exp(v - m))))


def log_add(a: float, b: float) -> float:
    """Two-argument log_sum_exp on Python floats (hot path of the lattice loops)."""
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def _splitmix_mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based splitmix64 generator.

    Draw ``i`` (0-based, counted over the lifetime of the instance) is
    ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` where ``mix`` is the
    splitmix64 finalizer (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9 and
    0x94D049BB133111EB). Because each draw depends only on the seed and its
    index, the stream is identical on every platform and can be produced in
    vectorized blocks.

    Derived floats: ``uniform`` takes the top 53 bits times 2**-53;
    ``normal`` is Box-Muller over pairs of uniforms (cosine branch only).
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _splitmix_mix(np.uint64(self.seed) + idx * _GAMMA)

    def uniform(self, size: int | tuple[int, ...] = ()) -> np.ndarray | float:
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return float(u[0]) if not shape else u.reshape(shape)

    def normal(self, size: int | tuple[int, ...] = (), scale: float = 1.0) -> np.ndarray | float:
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2) * scale
        return float(z[0]) if not shape else z.reshape(shape)

    def integers(self, low: int, high: int, size: int | tuple[int, ...] = ()) -> np.ndarray | int:
        """Uniform integers in ``[low, high)``."""
        if high <= low:
            raise UsageError(f"empty integer range [{low}, {high})")
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        k = np.floor(self.uniform(n) * (high - low)).astype(np.int64) + low
        return int(k[0]) if not shape else k.reshape(shape)

    def bernoulli(self, p: float, size: int) -> np.ndarray:
        return self.uniform(size) < p

    def spawn(self, key: int) -> "Rng":
        """Independent child stream; does not advance this generator."""
        base = np.array([(self.seed ^ ((key * 0xD1B54A32D192ED03) & _MASK64)) & _MASK64], dtype=np.uint64)
        with np.errstate(over="ignore"):
            child = int(_splitmix_mix(base + _GAMMA)[0])
        return Rng(child)


def _parse_entry(x: Any, key: str, row: int) -> float:
    if isinstance(x, bool):
        raise FormatError(f"{key}: non-numeric entry in row {row}")
    if isinstance(x, (int, float)):
        return float(x)
    if x == "-inf":
        return NEG_INF
    raise FormatError(f"{key}: non-numeric entry {x!r} in row {row}")


def parse_matrix(value: Any, key: str = "tensor") -> np.ndarray:
    """Convert a rectangular nested list (rank 1 or 2) into a float64 array."""
    if not isinstance(value, list):
        raise FormatError(f"{key}: expected a nested array")
    if not value or not isinstance(value[0], list):
        return np.array([_parse_entry(x, key, 0) for x in value], dtype=np.float64)
    width = len(value[0])
    rows = []
    for i, r in enumerate(value):
        if not isinstance(r, list) or len(r) != width:
            raise FormatError(f"{key}: ragged array at row {i}")
        rows.append([_parse_entry(x, key, i) for x in r])
    return np.array(rows, dtype=np.float64).reshape(len(rows), width)


def load_json(path: str | os.PathLike) -> dict:
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    return doc


def read_tensor_json(path: str | os.PathLike, key: str) -> np.ndarray:
    doc = load_json(path)
    if key not in doc:
        raise FormatError(f"{path}: missing key {key!r}")
    return parse_matrix(doc[key], key)


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        raise UsageError("refusing to serialize NaN")
    if x == NEG_INF:
        return '"-inf"'
    if x == math.inf:
        raise UsageError("refusing to serialize +inf")
    return format(x, ".17g")


def dumps(obj: Any, indent: int | None = None, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and ``"-inf"`` sentinels."""
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None or isinstance(obj, str):
        return json.dumps(obj)
    pad = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    if isinstance(obj, Mapping):
        sep = ": "
        items = [pad + json.dumps(str(k)) + sep + dumps(v, indent, _level + 1) for k, v in obj.items()]
        return "{" + ("," if indent is not None else ", ").join(items) + (end if items else "") + "}"
    if isinstance(obj, (list, tuple)):
        # rows of numbers stay on one line
        inner = [dumps(v, None if not isinstance(v, (list, tuple, np.ndarray, Mapping)) else indent, _level + 1) for v in obj]
        if all(not isinstance(v, (list, tuple, np.ndarray, Mapping)) for v in obj):
            return "[" + ", ".join(inner) + "]"
        return "[" + ",".join(pad + s for s in inner) + end + "]"
    raise UsageError(f"cannot serialize {type(obj).__name__}")


def write_tensor_json(path: str | os.PathLike, tensors: Mapping[str, Any]) -> None:
    with open(path, "w") as f:
        f.write(dumps(dict(tensors), indent=1))
        f.write("\n")
