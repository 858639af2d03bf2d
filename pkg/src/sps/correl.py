"""Stationary two-time correlations, emission spectra and photon statistics.

All correlations follow the quantum regression theorem with the generator of
the model: ``<A(t) B(t + tau)> -> Tr[B expm(L tau)(rho_ss A)]``.

Spectra use the one-sided transform ``S(w) = Re int_0^inf C(tau) e^{i w tau}``
without any further prefactor. The coherent part ``|<lowering>|^2 delta(w)``
is reported as a weight and removed from the correlation before transforming.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .liouville import (
    DensityMatrix,
    LindbladModel,
    Propagator,
    SteadyStateError,
    steady_state,
    unvec,
    vec,
)
from .qops import LayoutError, Operator, annihilation_op, embed_operator

log = logging.getLogger(__name__)

ONE_SIDED = "S(w) = Re int_0^inf dtau <L^dag(t) L(t+tau)>_inc e^{i w tau}; coherent part as delta weight"


class ConvergenceError(RuntimeError):
    """A numerical cross-check (Fock cutoff, passive-detector limit) failed."""


class GridTooNarrowError(ConvergenceError, ValueError):
    """The frequency grid does not hold the requested spectral mass."""


@dataclass(frozen=True, eq=False)
class CorrelationTrace:
    delays: np.ndarray
    values: np.ndarray
    normalized: bool = False
    normalization: float | None = None

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        if d.ndim != 1 or len(d) == 0 or d[0] != 0 or np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing and start at 0")
        object.__setattr__(self, "delays", d)


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    frequencies: np.ndarray
    incoherent: np.ndarray
    coherent_weight: float
    convention: str = ONE_SIDED
    total_incoherent: float | None = None
    """Exact integral of the incoherent part over all frequencies, if known."""


def _check_layout(model: LindbladModel, *ops: Operator):
    for op in ops:
        if op.layout != model.layout:
            raise LayoutError(f"operator layout {op.layout.dims} differs from model {model.layout.dims}")


def _stationary(model: LindbladModel, rho_ss: DensityMatrix | None) -> DensityMatrix:
    return steady_state(model) if rho_ss is None else rho_ss


def _trace_row(op: Operator) -> np.ndarray:
    # Tr(op @ X) == _trace_row(op) @ vec(X)
    return vec(op.matrix.T)


def two_time_correlation(
    model: LindbladModel,
    a: Operator,
    b: Operator,
    delays: Sequence[float],
    rho_ss: DensityMatrix | None = None,
) -> CorrelationTrace:
    """``lim_t <A(t) B(t + tau)>`` on a delay grid (raw, complex)."""
    _check_layout(model, a, b)
    rho = _stationary(model, rho_ss)
    v0 = vec(rho.matrix @ a.matrix)
    traj = Propagator(model).trajectory(v0, delays)
    return CorrelationTrace(np.asarray(delays, float), traj @ _trace_row(b))


def _incoherent_seed(rho: np.ndarray, lowering: np.ndarray):
    raising = lowering.conj().T
    mean_raise = np.trace(rho @ raising)
    return rho @ raising - mean_raise * rho, abs(mean_raise) ** 2


def emission_spectrum(
    model: LindbladModel,
    lowering: Operator,
    frequencies: Sequence[float],
    rho_ss: DensityMatrix | None = None,
    deflate: bool = True,
    chunk: int = 1024,
) -> SpectrumResult:
    """Incoherent emission spectrum from the deflated Liouvillian resolvent.

    For each frequency ``w`` solves ``(L + i w + P) x = -(rho L^dag - <L^dag> rho)``
    where ``P = |rho_ss>><<1|`` shifts the zero mode away from the origin, and
    returns ``Re Tr(lowering x)``. The seed is traceless, so ``P`` does not
    change the solution for ``w != 0`` and makes ``w = 0`` regular.
    """
    _check_layout(model, lowering)
    rho = _stationary(model, rho_ss).matrix
    d = model.dim
    L = model.liouvillian.matrix
    seed, coherent = _incoherent_seed(rho, lowering.matrix)
    rhs = -vec(seed)
    base = L + np.outer(vec(rho), vec(np.eye(d))) if deflate else L
    row = _trace_row(lowering)
    w = np.asarray(frequencies, dtype=float)
    eye = np.eye(d * d)
    out = np.empty(len(w))
    for start in range(0, len(w), chunk):
        ws = w[start:start + chunk]
        mats = base[None, :, :] + 1j * ws[:, None, None] * eye[None, :, :]
        try:
            x = np.linalg.solve(mats, np.broadcast_to(rhs[None, :, None], (len(ws), d * d, 1)))
        except np.linalg.LinAlgError:
            bad = ws[np.argmin(np.abs(ws))]
            raise np.linalg.LinAlgError(f"resolvent singular near w = {bad:g}") from None
        out[start:start + chunk] = (x[:, :, 0] @ row).real
    c0 = np.real(np.trace(lowering.matrix @ seed))
    return SpectrumResult(w, out, float(coherent), ONE_SIDED, float(math.pi * c0))


class SpectralModes(NamedTuple):
    """Incoherent correlation as ``C(tau) = sum_k weights[k] exp(rates[k] tau)``."""

    rates: np.ndarray
    weights: np.ndarray

    def spectrum(self, frequencies) -> np.ndarray:
        w = np.asarray(frequencies, dtype=float)[:, None]
        return np.real(-self.weights[None, :] / (self.rates[None, :] + 1j * w)).sum(axis=1)

    def integrated(self) -> np.ndarray:
        """Per-mode integral of the spectrum over all frequencies, ``pi Re(c_k)``."""
        return math.pi * self.weights.real

    def split(self, rate_threshold: float) -> tuple[float, float]:
        """Integrated (narrow, broad) intensities, split on ``|Re rate|``."""
        slow = np.abs(self.rates.real) < rate_threshold
        ints = self.integrated()
        return float(ints[slow].sum()), float(ints[~slow].sum())


def spectral_modes(
    model: LindbladModel, lowering: Operator, rho_ss: DensityMatrix | None = None
) -> SpectralModes:
    """Eigenmode expansion of the incoherent emission correlation."""
    _check_layout(model, lowering)
    rho = _stationary(model, rho_ss).matrix
    seed, _ = _incoherent_seed(rho, lowering.matrix)
    lam, vecs = np.linalg.eig(model.liouvillian.matrix)
    amps = np.linalg.solve(vecs, vec(seed))
    weights = (_trace_row(lowering) @ vecs) * amps
    keep = np.abs(lam) > 1e-12
    return SpectralModes(lam[keep], weights[keep])


def g2_emitter(
    model: LindbladModel,
    lowering: Operator,
    delays: Sequence[float],
    rho_ss: DensityMatrix | None = None,
) -> CorrelationTrace:
    """Normalized ``<L^dag(t) L^dag(t+tau) L(t+tau) L(t)> / <L^dag L>^2``."""
    _check_layout(model, lowering)
    rho = _stationary(model, rho_ss).matrix
    low = lowering.matrix
    n_op = low.conj().T @ low
    n_mean = np.trace(n_op @ rho).real
    if not n_mean > 1e-300:
        raise ZeroDivisionError("stationary emission rate <L^dag L> vanishes")
    cond = low @ rho @ low.conj().T
    traj = Propagator(model).trajectory(vec(cond), delays)
    raw = traj @ vec(n_op.T)
    scale = np.max(np.abs(raw)) if len(raw) else 1.0
    if np.max(np.abs(raw.imag)) > 1e-10 * max(scale, 1e-300):
        log.warning("g2 trace has a sizeable imaginary part")
    return CorrelationTrace(
        np.asarray(delays, float), raw.real / n_mean**2, normalized=True, normalization=n_mean**2
    )


def _mode_slot_ops(model: LindbladModel, slot: int):
    dims = model.layout.dims
    if not 0 <= slot < len(dims):
        raise IndexError(f"detector slot {slot} out of range for layout {dims}")
    n_max = dims[slot] - 1
    if n_max < 2:
        raise ValueError("detector Fock cutoff must be >= 2 for a two-photon correlation")
    return n_max, embed_operator(annihilation_op(n_max), slot, model.layout)


def _photon_scaling(layout, slot: int, s: float) -> np.ndarray:
    per_slot = [np.ones(d) for d in layout.dims]
    per_slot[slot] = s ** np.arange(layout.dims[slot], dtype=float)
    out = per_slot[0]
    for v in per_slot[1:]:
        out = np.kron(out, v)
    return out


def detector_steady_state(model: LindbladModel, detector_slot: int) -> DensityMatrix:
    """Steady state with Fock sectors rescaled for relative accuracy.

    Multi-photon detector populations can sit far below double-precision
    round-off of the vacuum population. The solve is done for
    ``rho_nm / s**(n+m)`` with ``s`` matched to the one-photon amplitude,
    first estimated from the coupling into the one-photon sector and then
    refined from ``sqrt(P1 / P0)``.
    """
    n_max, s_op = _mode_slot_ops(model, detector_slot)
    layout = model.layout
    h = model.hamiltonian.matrix
    # largest matrix element of H changing the photon number by one
    n_diag = np.real(np.diag((s_op.dag() @ s_op).matrix))
    jump = np.abs(h)[np.abs(n_diag[:, None] - n_diag[None, :] - 1) < 1e-9]
    s = float(jump.max()) if jump.size and jump.max() > 0 else 1.0
    s = min(s, 1.0)
    model.liouvillian  # build once, reused by both passes
    rho = None
    for _ in range(2):
        rho = steady_state(model, scaling=_photon_scaling(layout, detector_slot, s), check_kernel=rho is None)
        pops = np.real(np.diag(rho.matrix))
        p0 = pops[np.abs(n_diag) < 1e-9].sum()
        p1 = pops[np.abs(n_diag - 1) < 1e-9].sum()
        if not (p1 > 0 and p0 > 0):
            break
        s_new = min(math.sqrt(p1 / p0), 1.0)
        if abs(math.log(s_new / s)) < math.log(2):
            break
        s = s_new
    return rho


def detector_g2_zero(model: LindbladModel, detector_slot: int = -1) -> float:
    """Zero-delay ``<s^dag s^dag s s> / <s^dag s>^2`` of a detector mode in steady state."""
    if detector_slot < 0:
        detector_slot += len(model.layout)
    _, s_op = _mode_slot_ops(model, detector_slot)
    rho = detector_steady_state(model, detector_slot)
    s = s_op.matrix
    sd = s.conj().T
    n1 = np.trace(sd @ s @ rho.matrix).real
    n2 = np.trace(sd @ sd @ s @ s @ rho.matrix).real
    if not n1 > 0:
        raise ZeroDivisionError("detector occupation <s^dag s> vanishes")
    return float(n2 / n1**2)


def detector_g2_converged(
    build: Callable[[int], LindbladModel],
    n_max: int,
    detector_slot: int = -1,
    rtol: float = 5e-3,
) -> float:
    """``detector_g2_zero`` at ``n_max``, checked against cutoff ``n_max + 1``.

    ``build(n)`` must return the combined model with Fock cutoff ``n``.
    Raises :class:`ConvergenceError` if the relative change exceeds ``rtol``.
    """
    v = detector_g2_zero(build(n_max), detector_slot)
    v_up = detector_g2_zero(build(n_max + 1), detector_slot)
    if abs(v_up - v) > rtol * abs(v_up):
        raise ConvergenceError(
            f"g2(0) changes from {v:.6g} to {v_up:.6g} when the Fock cutoff goes "
            f"{n_max} -> {n_max + 1}"
        )
    return v


def spectrum_bandwidth(result: SpectrumResult, mass: float = 0.99) -> float:
    """Full width ``2W`` of the smallest ``[-W, W]`` holding ``mass`` of the incoherent spectrum.

    The reference total is ``result.total_incoherent`` when available, else
    the integral over the sampled grid. The grid is assumed to be symmetric
    enough to cover ``[-W, W]``.
    """
    if not 0 < mass < 1:
        raise ValueError("mass must lie in (0, 1)")
    w = np.asarray(result.frequencies, float)
    s = np.clip(np.asarray(result.incoherent, float), 0.0, None)
    order = np.argsort(w)
    w, s = w[order], s[order]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * np.diff(w))])
    total = result.total_incoherent if result.total_incoherent is not None else cum[-1]
    if not total > 0:
        raise ValueError("incoherent spectrum carries no weight")
    target = mass * total
    w_max = min(-w[0], w[-1])
    if w_max <= 0:
        raise ValueError("frequency grid must straddle w = 0")

    def inside(half):
        return np.interp(half, w, cum) - np.interp(-half, w, cum)

    if inside(w_max) < target:
        raise GridTooNarrowError(
            f"grid too narrow: [-{w_max:g}, {w_max:g}] holds only "
            f"{inside(w_max) / total:.4f} of the spectral weight"
        )
    lo, hi = 0.0, w_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if inside(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * w_max:
            break
    return 2 * hi


def spectrum_from_trace(trace: CorrelationTrace, pad: int = 4) -> SpectrumResult:
    """One-sided transform of a uniformly sampled correlation by FFT.

    Uses trapezoid weights, so ``S(w_k) = Re dt (sum_n C_n e^{i w_k t_n} - C_0/2)``
    on the FFT frequencies ``2 pi k / (N dt)``, zero padded ``pad``-fold.
    """
    t = trace.delays
    dt = np.diff(t)
    if len(t) < 2 or np.ptp(dt) > 1e-9 * dt.mean():
        raise ValueError("FFT backend needs a uniform delay grid")
    step = dt.mean()
    c = np.asarray(trace.values, dtype=complex)
    n = len(c) * pad
    spec = np.fft.ifft(c, n=n) * n
    spec = step * (spec - 0.5 * c[0])
    freqs = 2 * np.pi * np.fft.fftfreq(n, d=step)
    order = np.argsort(freqs)
    return SpectrumResult(freqs[order], spec.real[order], 0.0)


def incoherent_correlation(
    model: LindbladModel, lowering: Operator, delays, rho_ss: DensityMatrix | None = None
) -> CorrelationTrace:
    """``<L^dag(t) L(t+tau)> - |<L>|^2`` on a delay grid."""
    rho = _stationary(model, rho_ss)
    raw = two_time_correlation(model, lowering.dag(), lowering, delays, rho)
    mean = rho.expect(lowering)
    return CorrelationTrace(raw.delays, raw.values - abs(mean) ** 2)


def frequency_grid(
    half_width: float,
    n: int = 2001,
    centers: Sequence[float] = (0.0,),
    resolution: float | None = None,
    n_dense: int = 200,
) -> np.ndarray:
    """Symmetric grid with extra geometric refinement around ``centers``.

    ``resolution`` sets the smallest spacing next to each center (default
    ``half_width / (10 n)``).
    """
    if not half_width > 0 or n < 2:
        raise ValueError("need half_width > 0 and n >= 2")
    pts = [np.linspace(-half_width, half_width, n)]
    res = resolution or half_width / (10 * n)
    offsets = np.geomspace(res, half_width, n_dense)
    for c in centers:
        pts.append(c + offsets)
        pts.append(c - offsets)
        pts.append([c])
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= -half_width) & (grid <= half_width)]
