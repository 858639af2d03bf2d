"""Lindblad generators, steady states and time propagation.

Density matrices are vectorized by column stacking,
``vec(rho) = rho.reshape(-1, order="F")``, so that
``vec(A @ rho @ B) = kron(B.T, A) @ vec(rho)``. For a qubit::

    rho = [[a, b],      vec(rho) = [a, c, b, d]
           [c, d]]

and ``-i[H, .]`` with ``H = diag(h0, h1)`` becomes
``-i * diag(0, h1 - h0, h0 - h1, 0)`` acting on that vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .qops import LayoutError, Operator, SpaceLayout

__all__ = [
    "LindbladModel",
    "DensityMatrix",
    "Superoperator",
    "SteadyStateError",
    "lindblad_rhs",
    "build_liouvillian",
    "steady_state",
    "evolve",
    "Propagator",
    "vec",
    "unvec",
]

log = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-10
ZERO_EIG_TOL = 1e-10
KERNEL_GAP = 1e3


class SteadyStateError(RuntimeError):
    """No unique stationary state could be extracted from a generator."""


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus weighted collapse operators on a common layout.

    ``collapses`` holds ``(rate, operator)`` pairs; the generator is
    ``-i[H, rho] + sum_k rate_k * D[o_k] rho``.
    """

    hamiltonian: Operator
    collapses: tuple[tuple[float, Operator], ...] = ()
    labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        collapses = tuple((float(r), o) for r, o in self.collapses)
        object.__setattr__(self, "collapses", collapses)
        layout = self.hamiltonian.layout
        for rate, op in collapses:
            if op.layout != layout:
                raise LayoutError(
                    f"collapse operator layout {op.layout.dims} differs from "
                    f"Hamiltonian layout {layout.dims}"
                )
            if not np.isfinite(rate) or rate < 0:
                raise ValueError(f"collapse rates must be finite and >= 0, got {rate}")
        if not self.hamiltonian.is_hermitian(HERMITIAN_RTOL):
            raise ValueError("Hamiltonian is not Hermitian")

    @property
    def layout(self) -> SpaceLayout:
        return self.hamiltonian.layout

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    @cached_property
    def liouvillian(self) -> "Superoperator":
        return build_liouvillian(self)


class DensityMatrix:
    """Hermitian, unit-trace, numerically positive matrix on a layout."""

    __slots__ = ("layout", "matrix")

    def __init__(self, matrix, layout: SpaceLayout | None = None, check: bool = True):
        m = np.array(matrix, dtype=complex)
        if layout is None:
            layout = SpaceLayout((m.shape[0],))
        if m.shape != (layout.total_dim, layout.total_dim):
            raise LayoutError(f"state of shape {m.shape} does not fit layout {layout.dims}")
        if check:
            _check_density(m)
        m.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    @classmethod
    def pure(cls, index: int, layout: SpaceLayout | int) -> "DensityMatrix":
        if not isinstance(layout, SpaceLayout):
            layout = SpaceLayout((layout,))
        m = np.zeros((layout.total_dim,) * 2, dtype=complex)
        m[index, index] = 1.0
        return cls(m, layout)

    def expect(self, op: Operator) -> complex:
        if op.layout != self.layout:
            raise LayoutError("operator and state live on different layouts")
        return complex(np.trace(op.matrix @ self.matrix))

    def __getitem__(self, idx):
        return self.matrix[idx]

    def partial_trace(self, keep: int) -> np.ndarray:
        """Reduced matrix of subsystem ``keep``."""
        dims = self.layout.dims
        t = self.matrix.reshape(dims + dims)
        n = len(dims)
        for ax in reversed(range(n)):
            if ax == keep:
                continue
            t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
        return t

    def __repr__(self):
        return f"DensityMatrix(dims={self.layout.dims})"


def _check_density(m: np.ndarray, tol: float = 1e-10, pos_tol: float = 1e-8):
    if np.linalg.norm(m - m.conj().T) > tol * max(np.linalg.norm(m), 1.0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(m) - 1.0) > tol:
        raise ValueError(f"density matrix trace is {np.trace(m).real:.3g}, expected 1")
    lmin = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lmin < -pos_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lmin:.3g}")


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Matrix of side ``dim**2`` acting on column-stacked density matrices."""

    layout: SpaceLayout
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def apply(self, rho) -> np.ndarray:
        r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return unvec(self.matrix @ vec(r), self.dim)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


def _dissipator(rate: float, o: np.ndarray, rho: np.ndarray) -> np.ndarray:
    od = o.conj().T
    odo = od @ o
    return rate * (o @ rho @ od - 0.5 * (rho @ odo + odo @ rho))


def lindblad_rhs(model: LindbladModel, rho) -> np.ndarray:
    """Evaluate ``-i[H, rho] + sum_k rate_k D[o_k] rho`` directly."""
    if isinstance(rho, DensityMatrix):
        if rho.layout != model.layout:
            raise LayoutError("state and model live on different layouts")
        r = rho.matrix
    else:
        r = np.asarray(rho, dtype=complex)
        if r.shape != (model.dim, model.dim):
            raise LayoutError(f"state shape {r.shape} does not match model dimension {model.dim}")
    h = model.hamiltonian.matrix
    out = -1j * (h @ r - r @ h)
    for rate, op in model.collapses:
        if rate:
            out = out + _dissipator(rate, op.matrix, r)
    return out


def build_liouvillian(model: LindbladModel) -> Superoperator:
    d = model.dim
    eye = np.eye(d)
    h = model.hamiltonian.matrix
    lv = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for rate, op in model.collapses:
        if not rate:
            continue
        o = op.matrix
        odo = o.conj().T @ o
        lv += rate * (np.kron(o.conj(), o) - 0.5 * np.kron(eye, odo) - 0.5 * np.kron(odo.T, eye))
    lv.setflags(write=False)
    return Superoperator(model.layout, lv)


def _as_super(obj) -> Superoperator:
    if isinstance(obj, LindbladModel):
        return obj.liouvillian
    return obj


def check_unique_kernel(L: Superoperator) -> None:
    """Raise :class:`SteadyStateError` unless ``L`` has a single, isolated zero mode."""
    mags = np.sort(np.abs(L.eigenvalues))
    if mags[0] > ZERO_EIG_TOL:
        raise SteadyStateError(
            f"no stationary state: smallest |eigenvalue| is {mags[0]:.3e}"
        )
    if len(mags) > 1 and mags[1] <= KERNEL_GAP * mags[0]:
        ndeg = int(np.sum(mags <= max(KERNEL_GAP * mags[0], ZERO_EIG_TOL)))
        raise SteadyStateError(
            f"degenerate kernel: {ndeg} eigenvalues within "
            f"{max(KERNEL_GAP * mags[0], ZERO_EIG_TOL):.1e} of zero"
        )
    if np.max(L.eigenvalues.real) > ZERO_EIG_TOL:
        raise SteadyStateError("generator has an eigenvalue with positive real part")


def steady_state(L, scaling: np.ndarray | None = None, check_kernel: bool = True) -> DensityMatrix:
    """Unit-trace kernel vector of a Lindblad generator.

    One row of ``L`` is replaced by the trace functional and the resulting
    linear system is solved. ``L`` may also be a :class:`LindbladModel`.

    Parameters
    ----------
    L : Superoperator or LindbladModel
    scaling : array, optional
        Positive diagonal ``d`` of a similarity transform ``rho = D r D``.
        The solve is done for ``r``, which keeps tiny populations (for
        instance multi-photon detector states) at full relative precision.
    check_kernel : bool
        Verify with a full eigendecomposition that the kernel is
        one-dimensional before solving.
    """
    L = _as_super(L)
    d = L.dim
    if check_kernel:
        check_unique_kernel(L)
    m = np.array(L.matrix)
    trace_row = vec(np.eye(d)).astype(complex)
    if scaling is not None:
        dd = np.asarray(scaling, dtype=float)
        if dd.shape != (d,) or np.any(dd <= 0):
            raise ValueError("scaling must be a positive vector of length dim")
        s = vec(np.outer(dd, dd))
        m = (m * s[None, :]) / s[:, None]
        trace_row = trace_row * s
    # Replace the first row of the diagonal-populations equation set.
    a = m.copy()
    a[0, :] = trace_row
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SteadyStateError(f"steady-state system is singular: {exc}") from exc
    if scaling is not None:
        x = x * s
    rho = unvec(x, d)

    norm_l = np.linalg.norm(L.matrix)
    resid = np.linalg.norm(L.matrix @ vec(rho))
    if resid > 1e-10 * max(norm_l, 1.0):
        raise SteadyStateError(f"steady-state residual {resid:.3e} exceeds tolerance")

    herm = 0.5 * (rho + rho.conj().T)
    tr = np.trace(herm).real
    herm = herm / tr
    corr = np.linalg.norm(herm - rho)
    if corr > 1e-8:
        log.warning("steady state needed a correction of %.2e to be Hermitian/normalized", corr)
    return DensityMatrix(herm, L.layout)


class Propagator:
    """Cached ``expm(L * t)`` for a fixed generator.

    Exponentials are computed with scaling and squaring
    (:func:`scipy.linalg.expm`) and memoized per time step, so repeated
    uniform grids cost a single exponential.
    """

    def __init__(self, L):
        self.L = _as_super(L)
        self._cache: dict[float, np.ndarray] = {}

    def expm(self, t: float) -> np.ndarray:
        key = float(t)
        u = self._cache.get(key)
        if u is None:
            u = scipy.linalg.expm(self.L.matrix * key)
            if len(self._cache) < 64:
                self._cache[key] = u
        return u

    def trajectory(self, v0: np.ndarray, times: Sequence[float]) -> np.ndarray:
        """Vectors ``expm(L t_k) v0`` for a non-decreasing grid starting at >= 0.

        Consecutive steps reuse the exponential of their (rounded) spacing.
        """
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("times must be a non-empty 1-D grid")
        if times[0] < 0 or np.any(np.diff(times) < 0):
            raise ValueError("times must be non-negative and non-decreasing")
        out = np.empty((len(times), len(v0)), dtype=complex)
        v = np.asarray(v0, dtype=complex)
        t_prev = 0.0
        for k, t in enumerate(times):
            dt = t - t_prev
            if dt > 0:
                # snap to 12 significant digits so uniform grids hit the cache
                v = self.expm(float(f"{dt:.12g}")) @ v
            out[k] = v
            t_prev = t
        return out


def evolve(model, rho0, tau: float) -> DensityMatrix:
    """State at time ``tau`` under the Lindblad flow, ``unvec(expm(L tau) vec(rho0))``.

    ``rho0`` may also be a plain matrix such as a conditioned operator
    ``rho A``; such inputs are propagated without density-matrix checks.
    """
    if tau < 0:
        raise ValueError("evolution time must be >= 0")
    L = _as_super(model)
    r = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    if tau == 0:
        return rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(r, L.layout, check=False)
    v = scipy.linalg.expm(L.matrix * tau) @ vec(r)
    return DensityMatrix(unvec(v, L.dim), L.layout, check=False)
