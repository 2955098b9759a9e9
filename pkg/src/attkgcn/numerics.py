"""Float64 numeric primitives, the trainable-parameter store, Adam, and a
finite-difference gradient oracle.

Everything here operates on plain numpy arrays. Parameters are held in a
:class:`ParamStore` that keeps, per named tensor, the value together with its
gradient buffer and Adam moment estimates. All tensors are stored 2-D;
vectors live as a single row.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import DataError

Array = np.ndarray


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), stable for large |x|.

    Accepts scalars or arrays; returns the same kind.
    """
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if arr.ndim == 0:
        return float(out)
    return out


def softplus(x):
    """log(1 + exp(x)) without overflow; softplus(-m) == -log(sigmoid(m))."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.log1p(np.exp(-np.abs(arr))) + np.maximum(arr, 0.0)
    if arr.ndim == 0:
        return float(out)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits, axis: int = -1) -> Array:
    """Normalized exponentials along ``axis`` with max-subtraction.

    Raises ValueError on an empty input; output entries are positive and sum
    to 1 along the chosen axis.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("softmax of empty input")
    shifted = arr - arr.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> Array:
    """Uniform init on [-a, a] with a = sqrt(6 / (rows + cols))."""
    a = math.sqrt(6.0 / max(1, rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


class ParamStore:
    """Named float64 tensors with gradient and Adam moment buffers.

    Tensors are 2-D (vectors are one row). Value, gradient, and both moment
    buffers share a shape per name; the Adam step counter is shared across
    all parameters.
    """

    def __init__(self) -> None:
        self.values: dict[str, Array] = {}
        self.grads: dict[str, Array] = {}
        self.m: dict[str, Array] = {}
        self.v: dict[str, Array] = {}
        self.step_count: int = 0

    def add(self, name: str, value: Array) -> None:
        if name in self.values:
            raise ValueError(f"parameter {name!r} already present")
        arr = np.ascontiguousarray(value, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"parameter {name!r} must be 1-D or 2-D, got shape {arr.shape}")
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)

    def names(self) -> list[str]:
        return list(self.values.keys())

    def __getitem__(self, name: str) -> Array:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[:] = 0.0

    def grad_norm(self) -> float:
        total = 0.0
        for name in self.values:
            g = self.grads[name]
            total += float(np.dot(g.ravel(), g.ravel()))
        return math.sqrt(total)

    def copy_values(self) -> dict[str, Array]:
        return {name: arr.copy() for name, arr in self.values.items()}

    def snapshot(self) -> "ParamStore":
        """Fresh store with copied values and zeroed optimizer state."""
        out = ParamStore()
        for name, arr in self.values.items():
            out.add(name, arr.copy())
        return out

    def check_finite(self) -> None:
        """Checked-mode guard: raise if any value is NaN or infinite."""
        for name, arr in self.values.items():
            if not np.isfinite(arr).all():
                raise FloatingPointError(f"non-finite entries in parameter {name!r}")


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update over every tensor in ``store``.

    Gradients are consumed (zeroed) and the shared step counter advances.
    """
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name in store.values:
        g = store.grads[name]
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        store.values[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        g[:] = 0.0


def finite_diff_grad(
    f: Callable[[ParamStore], float],
    store: ParamStore,
    eps: float = 1e-5,
) -> dict[str, Array]:
    """Central-difference gradient of ``f`` with respect to every coordinate.

    ``f`` must be deterministic and must not mutate the store. Values are
    perturbed in place and restored exactly.
    """
    out: dict[str, Array] = {}
    for name in store.names():
        value = store.values[name]
        grad = np.zeros_like(value)
        flat = value.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(store)
            flat[i] = orig - eps
            fm = f(store)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
        out[name] = grad
    return out


def save_params(store: ParamStore, path) -> None:
    """Write all tensors as text: per tensor a "name rows cols" header line,
    then one line of space-separated floats per row. Floats use shortest
    round-trip formatting, so load_params restores values exactly.
    """
    lines: list[str] = []
    for name in store.names():
        tensor = store.values[name]
        rows, cols = tensor.shape
        lines.append(f"{name} {rows} {cols}")
        for row in tensor:
            lines.append(" ".join(repr(float(x)) for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path) -> ParamStore:
    """Inverse of :func:`save_params`."""
    store = ParamStore()
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    idx = 0
    while idx < len(lines):
        if not lines[idx].strip():
            idx += 1
            continue
        header = lines[idx].split()
        if len(header) != 3:
            raise DataError(f"{path}: bad tensor header at line {idx + 1}: {lines[idx]!r}")
        name = header[0]
        try:
            rows, cols = int(header[1]), int(header[2])
        except ValueError as exc:
            raise DataError(f"{path}: non-integer shape at line {idx + 1}") from exc
        idx += 1
        if idx + rows > len(lines):
            raise DataError(f"{path}: truncated tensor {name!r}")
        data = np.empty((rows, cols), dtype=np.float64)
        for r in range(rows):
            parts = lines[idx + r].split()
            if len(parts) != cols:
                raise DataError(
                    f"{path}: tensor {name!r} row {r} has {len(parts)} values, expected {cols}"
                )
            data[r] = [float(p) for p in parts]
        idx += rows
        store.add(name, data)
    return store
