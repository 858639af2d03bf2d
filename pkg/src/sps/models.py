"""Lambda emitter, emitter + detector models, and closed-form results.

Levels are ordered ``(g, a, e) = (0, 1, 2)``. All rates are angular
frequencies in units chosen by the caller (typically the decay rate gamma).

The closed-form functions below are plain formula evaluations and do not use
the Liouvillian machinery, so they can serve as independent oracles for it.
The spectral formulas carry an overall factor gamma relative to the bare
one-sided transform returned by :func:`sps.correl.emission_spectrum`.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np

from .liouville import LindbladModel
from .qops import Operator, SpaceLayout, annihilation_op, embed_operator, transition_op

G, A, E = 0, 1, 2
LEVEL_NAMES = ("g", "a", "e")


@dataclass(frozen=True)
class LambdaParams:
    """Drive and decay parameters of the Lambda emitter."""

    omega: float
    omega_r: float
    gamma1: float = 1.0
    gamma2: float = 1.0
    delta_e: float = 0.0

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ValueError("gamma1 and gamma2 must be > 0")
        if self.omega < 0 or self.omega_r < 0:
            raise ValueError("Rabi frequencies must be >= 0")

    def scaled(self, factor: float) -> "LambdaParams":
        return LambdaParams(**{k: v * factor for k, v in asdict(self).items()})


@dataclass(frozen=True)
class DetectorParams:
    """Single damped detector mode with linewidth ``kappa``."""

    g: float
    kappa: float
    delta_s: float = 0.0
    n_max: int = 3

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")
        if self.g < 0:
            raise ValueError("g must be >= 0")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ValueError("detector Fock cutoff must be an integer >= 2")


def sigma(i: int, j: int) -> Operator:
    """Lambda-emitter transition operator ``|i><j|``."""
    return transition_op(i, j, 3)


def build_lambda_emitter(p: LambdaParams) -> LindbladModel:
    """``H = delta_e s_ee + (omega s_eg + omega_r s_ga + h.c.)``, decays e->g, e->a."""
    drive = p.omega * sigma(E, G) + p.omega_r * sigma(G, A)
    h = p.delta_e * sigma(E, E) + drive + drive.dag()
    return LindbladModel(h, ((p.gamma1, sigma(G, E)), (p.gamma2, sigma(A, E))))


def attach_mode(
    model: LindbladModel,
    lowering: Operator,
    g: float,
    kappa: float,
    delta_s: float = 0.0,
    n_max: int = 3,
) -> LindbladModel:
    """Couple a damped bosonic mode to the ``lowering`` transition of ``model``.

    The mode is appended as the last subsystem and adds
    ``delta_s s^dag s + g (lowering s^dag + h.c.)`` and a collapse ``(kappa, s)``.
    """
    if lowering.layout != model.layout:
        raise ValueError("lowering operator must live on the model layout")
    layout = SpaceLayout(model.layout.dims + (n_max + 1,))
    slot = len(layout) - 1

    def lift(op: Operator) -> Operator:
        return Operator(np.kron(op.matrix, np.eye(n_max + 1)), layout)

    s = embed_operator(annihilation_op(n_max), slot, layout)
    low = lift(lowering)
    coupling = g * (low @ s.dag())
    h = lift(model.hamiltonian) + delta_s * (s.dag() @ s) + coupling + coupling.dag()
    collapses = tuple((r, lift(o)) for r, o in model.collapses) + ((kappa, s),)
    return LindbladModel(h, collapses)


def build_emitter_detector(p: LambdaParams, d: DetectorParams) -> LindbladModel:
    """Lambda emitter with a detector mode on the e->a transition; layout ``[3, n_max+1]``."""
    return attach_mode(build_lambda_emitter(p), sigma(A, E), d.g, d.kappa, d.delta_s, d.n_max)


def _require_symmetric(p: LambdaParams):
    if not np.isclose(p.gamma1, p.gamma2, rtol=1e-12, atol=0):
        raise ValueError("closed form requires gamma1 == gamma2")
    if p.delta_e != 0:
        raise ValueError("closed form requires delta_e == 0")


class ClosedFormState(NamedTuple):
    rho_gg: float
    rho_aa: float
    rho_ee: float
    rho_ge: complex
    rho_ae: complex
    rho_ga: complex

    def matrix(self) -> np.ndarray:
        m = np.zeros((3, 3), dtype=complex)
        m[G, G], m[A, A], m[E, E] = self.rho_gg, self.rho_aa, self.rho_ee
        m[G, E], m[A, E], m[G, A] = self.rho_ge, self.rho_ae, self.rho_ga
        m[E, G], m[E, A], m[A, G] = np.conj([self.rho_ge, self.rho_ae, self.rho_ga])
        return m


def steady_state_closed_form(p: LambdaParams) -> ClosedFormState:
    """Analytic stationary density matrix for ``gamma1 == gamma2``, zero detuning."""
    _require_symmetric(p)
    w, wr, gam = p.omega, p.omega_r, p.gamma1
    m = w**4 + 2 * wr**2 * (2 * gam**2 + w**2 + 2 * wr**2)
    if m == 0:
        raise ValueError("closed form undefined for omega = omega_r = 0")
    return ClosedFormState(
        rho_gg=wr**2 * (2 * gam**2 + w**2 + 2 * wr**2) / m,
        rho_aa=(w**4 + wr**2 * (2 * gam**2 - w**2 + 2 * wr**2)) / m,
        rho_ee=2 * w**2 * wr**2 / m,
        rho_ge=2j * gam * w * wr**2 / m,
        rho_ae=complex((-(w**3) * wr + 2 * w * wr**3) / m),
        rho_ga=-1j * gam * w**2 * wr / m,
    )


def excited_population(p: LambdaParams) -> float:
    """Stationary ``<s_ee>`` as quoted for the main-text intensity."""
    w, wr, gam = p.omega, p.omega_r, p.gamma1
    return 2 * w**2 * wr**2 / (w**4 + 2 * wr**2 * (2 * gam**2 + w**2 + 2 * wr**2))


def equivalent_decay_rates(omega: float, gamma1: float, gamma2: float) -> tuple[float, float]:
    """Rates ``4 gamma_i |omega|^2 / (gamma1 + gamma2)^2`` of the adiabatically reduced ground pair."""
    tot = gamma1 + gamma2
    if not tot > 0:
        raise ValueError("gamma1 + gamma2 must be > 0")
    w2 = abs(omega) ** 2
    return 4 * gamma1 * w2 / tot**2, 4 * gamma2 * w2 / tot**2


def gamma_star(p: LambdaParams) -> float:
    """Ground-coherence decay rate ``(g1* + g2*) / 2``; equals ``omega**2 / gamma`` for equal decays."""
    return 0.5 * sum(equivalent_decay_rates(p.omega, p.gamma1, p.gamma2))


class ClosedFormSpectrum(NamedTuple):
    coherent_weight: float
    narrow: np.ndarray
    broad: np.ndarray
    valid: bool


def spectrum_weak_closed_form(omega_grid, p: LambdaParams) -> ClosedFormSpectrum:
    """Single-Lorentzian spectrum for ``omega_r << gamma*``.

    ``valid`` is False when ``omega_r > gamma*/3``.
    """
    _require_symmetric(p)
    if p.omega == 0:
        raise ValueError("weak-regime spectrum needs omega > 0")
    w = np.asarray(omega_grid, dtype=float)
    rho = steady_state_closed_form(p)
    gam, om, omr = p.gamma1, p.omega, p.omega_r
    gs = om**2 / gam
    narrow = (-1j * rho.rho_ge * om**2 + rho.rho_ae * gam * omr) / om * gs / (w**2 + gs**2)
    broad = rho.rho_ae * om * omr / (w**2 + gam**2) - 2j * rho.rho_ge * om**3 / gam * (
        gam**2 - w**2
    ) / (gam**2 + w**2) ** 2
    return ClosedFormSpectrum(
        gam * abs(rho.rho_ae) ** 2, np.real(narrow), np.real(broad), omr <= gs / 3
    )


def spectrum_strong_closed_form(omega_grid, p: LambdaParams) -> ClosedFormSpectrum:
    """Mollow-like triplet for ``omega_r >> gamma*``: central peak plus sidebands at ``+-2 omega_r``.

    ``valid`` is False when ``omega_r < 3 gamma*``.
    """
    _require_symmetric(p)
    if p.omega == 0:
        raise ValueError("strong-regime spectrum needs omega > 0")
    w = np.asarray(omega_grid, dtype=float)
    rho = steady_state_closed_form(p)
    gam, om, omr = p.gamma1, p.omega, p.omega_r
    gs = om**2 / gam

    def lor(center):
        return gs / ((w - center) ** 2 + gs**2)

    narrow = -0.25j * rho.rho_ge * om * (2 * lor(0.0) + lor(2 * omr) + lor(-2 * omr))
    broad = rho.rho_ae * om * omr / (w**2 + gam**2)
    return ClosedFormSpectrum(
        gam * abs(rho.rho_ae) ** 2, np.real(narrow), np.real(broad) * np.ones_like(w), omr >= 3 * gs
    )


def g2_literal_coefficient(p: LambdaParams) -> float:
    """Literal sine coefficient ``(omega^2 - 2 omega_r) / (2 gamma omega_r)``.

    The expression mixes a squared and a linear Rabi frequency; see
    :func:`fit_g2_sine_coefficient` for the data-driven alternative.
    """
    if p.omega_r == 0:
        raise ValueError("g2 closed form is singular at omega_r = 0")
    return (p.omega**2 - 2 * p.omega_r) / (2 * p.gamma1 * p.omega_r)


def g2_closed_form(tau, p: LambdaParams, sine_coefficient: float | None = None):
    """``1 - exp(-gamma* tau) (cos(2 omega_r tau) + c sin(2 omega_r tau))``.

    ``c`` defaults to the literal coefficient.
    """
    c = g2_literal_coefficient(p) if sine_coefficient is None else sine_coefficient
    t = np.asarray(tau, dtype=float)
    gs = p.omega**2 / p.gamma1
    env = np.exp(-gs * t)
    return 1 - env * (np.cos(2 * p.omega_r * t) + c * np.sin(2 * p.omega_r * t))


def fit_g2_sine_coefficient(tau, g2, p: LambdaParams) -> float:
    """Least-squares sine coefficient of :func:`g2_closed_form` for a sampled trace."""
    t = np.asarray(tau, dtype=float)
    gs = p.omega**2 / p.gamma1
    env = np.exp(-gs * t)
    basis = env * np.sin(2 * p.omega_r * t)
    target = 1 - np.asarray(g2, dtype=float) - env * np.cos(2 * p.omega_r * t)
    return float(np.dot(basis, target) / np.dot(basis, basis))


def g2_two_level_reference(tau, gamma_t: float):
    """Resonance-fluorescence reference ``(1 - exp(-gamma_t tau / 2))**2``."""
    if not gamma_t > 0:
        raise ValueError("gamma_t must be > 0")
    return (1 - np.exp(-0.5 * gamma_t * np.asarray(tau, dtype=float))) ** 2
