"""Tensor conventions, trainable parameters, and the deterministic RNG.

Tensors throughout the toolkit are C-order (row-major) float32 numpy
arrays; ``tensor()`` is the checked constructor.  Gradients are held
alongside values in ``Param`` so the optimizer never has to look up a
separate gradient store.

Randomness comes exclusively from ``Rng``: a Philox4x64 counter-based
generator keyed by ``(seed, stream)``.  Philox is a fixed algorithm, so
an identical key yields an identical sequence on every platform.  All
non-uniform draws are built on top of its uniform doubles with
documented transforms, which keeps every random quantity in the toolkit
reproducible from a single 64-bit seed.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InputError

DTYPE = np.float32


def tensor(data, dtype=DTYPE) -> np.ndarray:
    """Coerce ``data`` to a contiguous row-major array of ``dtype``."""
    return np.ascontiguousarray(data, dtype=dtype)


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=DTYPE)


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Checked mode: raise if ``x`` contains NaN or Inf."""
    if not np.all(np.isfinite(x)):
        bad = int(np.argmax(~np.isfinite(np.ravel(x))))
        raise InputError(f"{name} contains a non-finite value at flat index {bad}")
    return x


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


class Param:
    """A trainable tensor with its gradient and momentum buffer.

    ``value``, ``grad`` and ``velocity`` always share one shape.  ``decay``
    marks whether the global L2 weight decay applies to this parameter
    (convolution and dense weights: yes; clipping scalars, batch-norm
    gamma/beta and biases: no).
    """

    __slots__ = ("name", "value", "grad", "velocity", "decay")

    def __init__(self, value, name: str = "param", decay: bool = False):
        self.name = name
        self.value = tensor(value)
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)
        self.decay = decay

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape}, decay={self.decay})"


# splitmix64 constants, used to derive well-separated child stream ids
_SM64_GAMMA = 0x9E3779B97F4A7C15
_SM64_M1 = 0xBF58476D1CE4E5B9
_SM64_M2 = 0x94D049BB133111EB
_U64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + _SM64_GAMMA) & _U64
    z = ((z ^ (z >> 30)) * _SM64_M1) & _U64
    z = ((z ^ (z >> 27)) * _SM64_M2) & _U64
    return z ^ (z >> 31)


class Rng:
    """Philox-backed generator with splittable streams.

    Identical ``(seed, stream)`` keys produce identical sequences.  Child
    streams are derived with a splitmix64 mix so sub-streams handed to
    different subsystems never collide in practice.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _U64
        self.stream = int(stream) & _U64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, k: int) -> "Rng":
        """Independent stream number ``k`` derived from this one."""
        return Rng(self.seed, _splitmix64(self.stream ^ ((k + 1) * _SM64_GAMMA & _U64)))

    def uniform(self, size=None) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None, dtype=DTYPE) -> np.ndarray:
        """Standard normal via the Box-Muller transform on uniform pairs."""
        n = int(np.prod(size)) if size is not None else 1
        half = (n + 1) // 2
        u1 = 1.0 - self.uniform(half)  # (0, 1]: keeps log() finite
        u2 = self.uniform(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        if size is None:
            return dtype(z[0])
        return z.reshape(size).astype(dtype)

    def integers(self, n: int, size=None) -> np.ndarray:
        """Integers in [0, n) as floor(n * uniform)."""
        return np.minimum((self.uniform(size) * n).astype(np.int64), n - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle driven by uniform draws."""
        idx = np.arange(n, dtype=np.int64)
        u = self.uniform(max(n - 1, 0))
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            j = min(j, i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
