"""Hilbert-space layouts and elementary operators.

Composite spaces use the Kronecker ordering of :func:`numpy.kron`: the first
listed subsystem is the slowest-varying index, so for dims ``[3, 4]`` the basis
state ``|i, n>`` sits at position ``4*i + n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

__all__ = [
    "SpaceLayout",
    "Operator",
    "space_compose",
    "transition_op",
    "annihilation_op",
    "number_op",
    "identity_op",
    "embed_operator",
    "tensor",
    "adjoint",
    "add",
    "matmul",
    "scale",
]


class LayoutError(ValueError):
    """Operators or states defined on incompatible spaces."""


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered list of subsystem dimensions."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise LayoutError("a layout needs at least one subsystem")
        if any(d < 1 for d in dims):
            raise LayoutError(f"subsystem dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.dims)


def space_compose(dims: Sequence[int]) -> SpaceLayout:
    """Build a layout from subsystem dimensions, e.g. ``[3, 4]`` -> 12 states."""
    for d in dims:
        if int(d) != d:
            raise ValueError(f"dimension {d!r} is not an integer")
    return SpaceLayout(tuple(dims))


class Operator:
    """Dense complex square matrix tied to a :class:`SpaceLayout`.

    The underlying array is copied on construction and marked read-only.
    Supports ``+``, ``-``, ``@``, scalar ``*`` and :meth:`dag`.
    """

    __slots__ = ("layout", "matrix")

    def __init__(self, matrix, layout: SpaceLayout | None = None):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator matrix must be square, got shape {m.shape}")
        if layout is None:
            layout = SpaceLayout((m.shape[0],))
        if m.shape[0] != layout.total_dim:
            raise LayoutError(
                f"matrix side {m.shape[0]} does not match layout {layout.dims}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.layout)

    def _check(self, other: "Operator"):
        if not isinstance(other, Operator):
            return NotImplemented
        if other.layout != self.layout:
            raise LayoutError(f"layout mismatch: {self.layout.dims} vs {other.layout.dims}")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Operator(self.matrix + other.matrix, self.layout)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Operator(self.matrix - other.matrix, self.layout)

    def __matmul__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Operator(self.matrix @ other.matrix, self.layout)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return Operator(c * self.matrix, self.layout)

    __rmul__ = __mul__

    def __neg__(self):
        return Operator(-self.matrix, self.layout)

    def __eq__(self, other):
        if not isinstance(other, Operator):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.matrix, other.matrix)

    __hash__ = None

    def __repr__(self):
        return f"Operator(dims={self.layout.dims})"

    def is_hermitian(self, rtol: float = 1e-10) -> bool:
        m = self.matrix
        norm = np.linalg.norm(m)
        return bool(np.linalg.norm(m - m.conj().T) <= rtol * max(norm, 1.0))


def transition_op(i: int, j: int, dim: int) -> Operator:
    """Return ``|i><j|`` on a single ``dim``-level subsystem."""
    if not (0 <= i < dim and 0 <= j < dim):
        raise IndexError(f"levels ({i}, {j}) out of range for dimension {dim}")
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return Operator(m)


def annihilation_op(n_max: int) -> Operator:
    """Bosonic lowering operator truncated at Fock level ``n_max``.

    The matrix has side ``n_max + 1``. ``[s, s^dag]`` equals the identity
    except in the top Fock level, where it is ``-n_max``.
    """
    if int(n_max) != n_max or n_max < 1:
        raise ValueError(f"Fock cutoff must be an integer >= 1, got {n_max!r}")
    n_max = int(n_max)
    return Operator(np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1))


def number_op(n_max: int) -> Operator:
    s = annihilation_op(n_max)
    return s.dag() @ s


def identity_op(layout: SpaceLayout | int) -> Operator:
    if not isinstance(layout, SpaceLayout):
        layout = SpaceLayout((layout,))
    return Operator(np.eye(layout.total_dim), layout)


def embed_operator(op: Operator, slot: int, layout: SpaceLayout) -> Operator:
    """Tensor ``op`` with identities on every subsystem except ``slot``."""
    if not 0 <= slot < len(layout):
        raise IndexError(f"slot {slot} out of range for layout {layout.dims}")
    if op.dim != layout.dims[slot]:
        raise LayoutError(
            f"operator dimension {op.dim} does not match subsystem {slot} "
            f"of dimension {layout.dims[slot]}"
        )
    left = math.prod(layout.dims[:slot])
    right = math.prod(layout.dims[slot + 1:])
    m = np.kron(np.kron(np.eye(left), op.matrix), np.eye(right))
    return Operator(m, layout)


def tensor(*ops: Operator) -> Operator:
    """Kronecker product, layout is the concatenation of the factor layouts."""
    dims = sum((o.layout.dims for o in ops), ())
    return Operator(reduce(np.kron, [o.matrix for o in ops]), SpaceLayout(dims))


def adjoint(op: Operator) -> Operator:
    return op.dag()


def add(a: Operator, b: Operator) -> Operator:
    return a + b


def matmul(a: Operator, b: Operator) -> Operator:
    return a @ b


def scale(c: complex, op: Operator) -> Operator:
    return op * c
