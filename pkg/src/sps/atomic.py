"""Angular-momentum algebra and Zeeman-resolved hyperfine emitter models.

Magnetic sublevels are always ordered by ascending ``m`` (``-F ... +F``).
A hyperfine model lists the ground manifold first, then the excited one.

The ground-state magnetic drive is ``H_B = omega_b * (F+ + F-) / sqrt(2)``,
i.e. the sum of the spherical components ``-F_{+1} + F_{-1}``. For ``F = 1``
adjacent sublevels are coupled with matrix element exactly ``omega_b`` and
the dressed ground energies are ``0, +-sqrt(2) omega_b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable

import numpy as np

from .liouville import LindbladModel
from .models import attach_mode
from .qops import Operator

__all__ = [
    "wigner_3j",
    "dipole_coupling",
    "spin_matrix",
    "HyperfineSpec",
    "DetectorAttachment",
    "build_rb87_model",
    "build_hyperfine_model",
    "attach_detector",
    "decay_channels",
    "level_index",
    "emission_operator",
    "coupling_for_rabi",
    "equivalent_ground_rates",
    "RB87_GAMMA_MHZ",
]

# D2-line natural linewidth, Gamma / 2 pi in MHz
RB87_GAMMA_MHZ = 6.0666
EXACT_J_MAX = 20


def _twice(x) -> int:
    """Return ``2 x`` as an int, rejecting non half-integers."""
    t = Fraction(x).limit_denominator(1000) * 2 if isinstance(x, float) else Fraction(x) * 2
    if t.denominator != 1 or (isinstance(x, float) and abs(float(t) - 2 * x) > 1e-9):
        raise ValueError(f"{x!r} is not an integer or half-integer")
    return int(t)


def wigner_3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3-j symbol ``(j1 j2 j3; m1 m2 m3)`` from the Racah sum.

    Arguments may be ints, floats or Fractions holding integers or
    half-integers. Selection-rule violations (triangle, ``sum m != 0``,
    ``|m| > j``) give 0; malformed numbers (negative ``j``, non
    half-integers, ``j - m`` not integral) raise ``ValueError``.
    """
    tj = tuple(_twice(x) for x in (j1, j2, j3, m1, m2, m3))
    return _w3j_twice(*tj)


@lru_cache(maxsize=65536)
def _w3j_twice(tj1, tj2, tj3, tm1, tm2, tm3) -> float:
    for tj, tm in ((tj1, tm1), (tj2, tm2), (tj3, tm3)):
        if tj < 0:
            raise ValueError("angular momenta must be >= 0")
        if (tj - tm) % 2:
            raise ValueError("j and m must be both integer or both half-integer")
    if tm1 + tm2 + tm3 != 0:
        return 0.0
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tm3) > tj3:
        return 0.0
    if tj3 > tj1 + tj2 or tj3 < abs(tj1 - tj2) or (tj1 + tj2 + tj3) % 2:
        return 0.0
    if tm1 == tm2 == tm3 == 0 and ((tj1 + tj2 + tj3) // 2) % 2:
        return 0.0
    # integer arguments of the Racah formula
    a = (tj1 + tj2 - tj3) // 2
    b = (tj1 - tj2 + tj3) // 2
    c = (-tj1 + tj2 + tj3) // 2
    big = (tj1 + tj2 + tj3) // 2 + 1
    p1, q1 = (tj1 + tm1) // 2, (tj1 - tm1) // 2
    p2, q2 = (tj2 + tm2) // 2, (tj2 - tm2) // 2
    p3, q3 = (tj3 + tm3) // 2, (tj3 - tm3) // 2
    t1 = (tj2 - tm1 - tj3) // 2  # j2 - m1 - j3
    t2 = (tj1 + tm2 - tj3) // 2  # j1 + m2 - j3
    kmin = max(0, t1, t2)
    kmax = min(a, q1, p2)
    phase = -1 if ((tj1 - tj2 - tm3) // 2) % 2 else 1
    if max(tj1, tj2, tj3) <= 2 * EXACT_J_MAX:
        f = math.factorial
        total = Fraction(0)
        for k in range(kmin, kmax + 1):
            den = f(k) * f(k - t1) * f(k - t2) * f(a - k) * f(q1 - k) * f(p2 - k)
            total += Fraction(-1 if k % 2 else 1, den)
        pref = Fraction(f(a) * f(b) * f(c), f(big)) * f(p1) * f(q1) * f(p2) * f(q2) * f(p3) * f(q3)
        # sqrt(pref) * total, evaluated as sign * sqrt(pref * total**2) to stay exact
        sq = pref * total * total
        val = math.sqrt(float(sq))
        return phase * (1 if total >= 0 else -1) * val
    # log-gamma terms; the alternating sum limits accuracy to ~1e-11 relative
    lg = math.lgamma
    log_pref = 0.5 * (
        lg(a + 1) + lg(b + 1) + lg(c + 1) - lg(big + 1)
        + sum(lg(x + 1) for x in (p1, q1, p2, q2, p3, q3))
    )
    total = 0.0
    for k in range(kmin, kmax + 1):
        lden = lg(k + 1) + lg(k - t1 + 1) + lg(k - t2 + 1) + lg(a - k + 1) + lg(q1 - k + 1) + lg(p2 - k + 1)
        total += (-1) ** k * math.exp(log_pref - lden)
    return phase * total


def m_values(F) -> list[Fraction]:
    """Magnetic quantum numbers of ``F`` in ascending order."""
    tf = _twice(F)
    if tf < 0:
        raise ValueError("F must be >= 0")
    return [Fraction(tm, 2) for tm in range(-tf, tf + 1, 2)]


def dipole_coupling(F_e, m_e, F_g, m_g, q: int, omega_l: float) -> float:
    """Laser coupling ``(-1)^(F_e - m_e + 1) (F_e 1 F_g; -m_e q m_g) omega_l``."""
    w = wigner_3j(F_e, 1, F_g, -Fraction(m_e), q, m_g)
    if w == 0.0:
        return 0.0
    expo = Fraction(F_e) - Fraction(m_e) + 1
    if expo.denominator != 1:
        raise ValueError("F_e - m_e must be an integer")
    return (-1) ** int(expo) * w * omega_l


def spin_matrix(F, axis: str) -> Operator:
    """Angular-momentum component ``F_x``, ``F_y`` or ``F_z`` in the ascending-``m`` basis.

    Built from the ladder operator ``<m+1|F+|m> = sqrt(F(F+1) - m(m+1))``.
    These matrix elements agree with the Wigner-Eckart form using the
    reduced element ``<F||F||F> = sqrt(F(F+1)(2F+1))``.
    """
    ms = m_values(F)
    f = float(Fraction(_twice(F), 2))
    n = len(ms)
    up = np.zeros((n, n))
    for i in range(n - 1):
        m = float(ms[i])
        up[i + 1, i] = math.sqrt(f * (f + 1) - m * (m + 1))
    if axis == "x":
        mat = 0.5 * (up + up.T)
    elif axis == "y":
        mat = -0.5j * (up - up.T)
    elif axis == "z":
        mat = np.diag([float(m) for m in ms])
    else:
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    return Operator(mat)


@dataclass(frozen=True)
class HyperfineSpec:
    """Driven ``F_g -> F_e`` manifold.

    ``omega_l`` is the reduced optical Rabi frequency; ``omega_b`` the
    ground-state magnetic coupling (see module docstring); ``gamma`` the total
    decay rate of every excited sublevel.
    """

    F_g: Fraction | float = 1
    F_e: Fraction | float = 0
    omega_l: float = 0.0
    omega_b: float = 0.0
    gamma: float = 1.0
    delta_e: float = 0.0
    q_l: int = 1

    def __post_init__(self):
        object.__setattr__(self, "F_g", Fraction(_twice(self.F_g), 2))
        object.__setattr__(self, "F_e", Fraction(_twice(self.F_e), 2))
        if self.F_g < 0 or self.F_e < 0:
            raise ValueError("angular momenta must be >= 0")
        if abs(self.F_g - self.F_e) > 1 or (self.F_g == 0 and self.F_e == 0):
            raise ValueError(f"F_g={self.F_g} -> F_e={self.F_e} is not dipole allowed")
        if self.q_l not in (-1, 0, 1):
            raise ValueError("laser polarization q_l must be -1, 0 or +1")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.omega_l < 0 or self.omega_b < 0:
            raise ValueError("omega_l and omega_b must be >= 0")

    @property
    def n_ground(self) -> int:
        return int(2 * self.F_g + 1)

    @property
    def n_excited(self) -> int:
        return int(2 * self.F_e + 1)

    @property
    def dim(self) -> int:
        return self.n_ground + self.n_excited


def level_index(spec: HyperfineSpec, manifold: str, m) -> int:
    """Basis position of ``|F, m>`` in ``manifold`` ``'g'`` or ``'e'``."""
    F = spec.F_g if manifold == "g" else spec.F_e
    if manifold not in ("g", "e"):
        raise ValueError("manifold must be 'g' or 'e'")
    m = Fraction(m)
    if abs(m) > F or (F - m).denominator != 1:
        raise ValueError(f"m={m} is not a sublevel of F={F}")
    offset = 0 if manifold == "g" else spec.n_ground
    return offset + int(m + F)


def decay_channels(spec: HyperfineSpec) -> list[tuple[Fraction, Fraction, int, float]]:
    """Spontaneous channels ``(m_e, m_g, q, rate)`` with ``q = m_e - m_g``.

    Rates are ``gamma`` times the squared 3-j coefficient normalized over all
    channels leaving the same excited sublevel.
    """
    out = []
    for m_e in m_values(spec.F_e):
        weights = []
        for m_g in m_values(spec.F_g):
            q = m_e - m_g
            if abs(q) > 1:
                continue
            w = wigner_3j(spec.F_e, 1, spec.F_g, -m_e, q, m_g) ** 2
            if w > 0:
                weights.append((m_g, int(q), w))
        tot = sum(w for _, _, w in weights)
        for m_g, q, w in weights:
            out.append((m_e, m_g, q, spec.gamma * w / tot))
    return out


def _ground_magnetic(spec: HyperfineSpec) -> np.ndarray:
    return math.sqrt(2.0) * spin_matrix(spec.F_g, "x").matrix.real


def build_hyperfine_model(spec: HyperfineSpec, coherent_decay: bool = False) -> LindbladModel:
    """Zeeman-resolved ``F_g -> F_e`` emitter under laser and transverse magnetic drive.

    By default there is one collapse operator per ``(m_e, q)`` channel. With
    ``coherent_decay=True`` channels sharing a polarization ``q`` are merged
    into a single operator, which keeps the radiative coherences between
    excited sublevels.
    """
    n = spec.dim
    h = np.zeros((n, n), dtype=complex)
    for m_e in m_values(spec.F_e):
        e = level_index(spec, "e", m_e)
        h[e, e] += spec.delta_e
        for m_g in m_values(spec.F_g):
            v = dipole_coupling(spec.F_e, m_e, spec.F_g, m_g, spec.q_l, spec.omega_l)
            if v:
                g = level_index(spec, "g", m_g)
                h[e, g] += v
                h[g, e] += np.conj(v)
    ng = spec.n_ground
    h[:ng, :ng] += spec.omega_b * _ground_magnetic(spec)

    collapses = []
    if coherent_decay:
        for q in (-1, 0, 1):
            op = np.zeros((n, n))
            for m_e, m_g, qq, rate in decay_channels(spec):
                if qq == q:
                    sign = 1 if wigner_3j(spec.F_e, 1, spec.F_g, -m_e, q, m_g) >= 0 else -1
                    op[level_index(spec, "g", m_g), level_index(spec, "e", m_e)] = sign * math.sqrt(rate / spec.gamma)
            if op.any():
                collapses.append((spec.gamma, Operator(op)))
    else:
        for m_e, m_g, q, rate in decay_channels(spec):
            op = np.zeros((n, n))
            op[level_index(spec, "g", m_g), level_index(spec, "e", m_e)] = 1.0
            collapses.append((rate, Operator(op)))
    return LindbladModel(Operator(h), tuple(collapses))


def build_rb87_model(spec: HyperfineSpec) -> LindbladModel:
    """Four-level ``F_g = 1 -> F_e = 0`` model, order ``|1,-1>, |1,0>, |1,1>, |0,0>``.

    Each ground sublevel receives ``gamma / 3`` of the excited-state decay.
    """
    if spec.F_g != 1 or spec.F_e != 0:
        raise ValueError("the Rb-87 model needs F_g = 1 and F_e = 0")
    ex = 3
    h = np.zeros((4, 4), dtype=complex)
    h[ex, ex] = spec.delta_e
    for i, m_g in enumerate((-1, 0, 1)):
        v = dipole_coupling(0, 0, 1, m_g, spec.q_l, spec.omega_l)
        h[ex, i] += v
        h[i, ex] += v
    # (F+ + F-)/sqrt(2) for F = 1: unit couplings between neighbouring m
    h[0, 1] = h[1, 0] = h[1, 2] = h[2, 1] = spec.omega_b
    collapses = []
    for i in range(3):
        op = np.zeros((4, 4))
        op[i, ex] = 1.0
        collapses.append((spec.gamma / 3.0, Operator(op)))
    return LindbladModel(Operator(h), tuple(collapses))


def emission_operator(spec: HyperfineSpec, d=None, q: int | None = None, m_e=None) -> Operator:
    """Lowering operator of a detected transition.

    ``d`` selects the final ground sublevel ``|F_g, d>`` (``A_d = |F_g,d><F_e,m_e|``,
    with ``m_e`` defaulting to the only sublevel when ``F_e = 0``). Alternatively
    ``q`` selects all decays emitting polarization ``q``, weighted by their
    amplitude ``sqrt(rate / gamma)``.
    """
    n = spec.dim
    op = np.zeros((n, n))
    if d is not None:
        if m_e is None:
            if spec.F_e != 0:
                raise ValueError("m_e must be given when F_e > 0")
            m_e = 0
        if abs(Fraction(m_e) - Fraction(d)) > 1 or abs(Fraction(d)) > spec.F_g:
            raise ValueError(f"no dipole transition |{spec.F_e},{m_e}> -> |{spec.F_g},{d}>")
        op[level_index(spec, "g", d), level_index(spec, "e", m_e)] = 1.0
    elif q is not None:
        for mm_e, m_g, qq, rate in decay_channels(spec):
            if qq == q:
                op[level_index(spec, "g", m_g), level_index(spec, "e", mm_e)] = math.sqrt(rate / spec.gamma)
        if not op.any():
            raise ValueError(f"no decay channel with polarization q={q}")
    else:
        raise ValueError("give either d or q")
    return Operator(op)


@dataclass(frozen=True)
class DetectorAttachment:
    """Detector mode on the transition ``|F_e, m_e> -> |F_g, d>``."""

    d: int
    g: float
    kappa: float
    delta_s: float = 0.0
    n_max: int = 3
    m_e: int | None = None

    def __post_init__(self):
        if not self.kappa > 0 or self.g < 0:
            raise ValueError("need kappa > 0 and g >= 0")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ValueError("detector Fock cutoff must be an integer >= 2")


def attach_detector(model: LindbladModel, spec: HyperfineSpec, a: DetectorAttachment) -> LindbladModel:
    """Append the detector mode coupled through ``g (A_d s^dag + h.c.)``."""
    if model.dim != spec.dim:
        raise ValueError("model does not match the hyperfine spec")
    low = emission_operator(spec, d=a.d, m_e=a.m_e)
    return attach_mode(model, low, a.g, a.kappa, a.delta_s, a.n_max)


def coupling_for_rabi(spec: HyperfineSpec, m_g, v: float, m_e=None) -> float:
    """Reduced ``omega_l`` giving laser coupling magnitude ``v`` on ``|F_g, m_g>``."""
    if m_e is None:
        m_e = Fraction(m_g) + spec.q_l
    w = wigner_3j(spec.F_e, 1, spec.F_g, -Fraction(m_e), spec.q_l, m_g)
    if w == 0:
        raise ValueError(f"|F_g,{m_g}> is not laser coupled for q_l={spec.q_l}")
    return abs(v / w)


def equivalent_ground_rates(spec: HyperfineSpec, v: float, m_g=-1) -> dict:
    """Adiabatic rates ``4 Gamma_i |v|^2 / Gamma^2`` out of the driven ground sublevel.

    Keys are the final ground sublevels ``m``; only meaningful for
    ``F_e = 0`` where a single excited sublevel is involved.
    """
    out = {}
    for m_e, mg, q, rate in decay_channels(spec):
        out[mg] = out.get(mg, 0.0) + 4 * rate * abs(v) ** 2 / spec.gamma**2
    return out
