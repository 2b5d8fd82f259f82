"""Coherent Raman Rabi frequencies, incoherent pumping and the coherence ratio.

Frequencies in this module are ordinary frequencies in MHz. Ground states
are ``BasisLabel("ground", m_S, m_I)``; a Raman channel runs from
``a = |0, m_a>`` to ``b = |+1, m_b>``.

Laser convention: tone 1 (frequency ``omega1``) addresses the m_S = 0 side,
tone 2 (``omega1 - delta_L``) the m_S = +1 side. The one-photon detuning from
excited eigenstate j is ``Delta_j = (E_j - E_a) - omega1``, so positive values
mean the laser sits below the transition.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ELECTRONIC_STATES,
    LOWER_BRANCH,
    SPIN_VALUES,
    BasisLabel,
    ExcitedStates,
    GroundStates,
    excited_eigensystem,
    ground_eigensystem,
    maze_to_product,
)
from .params import TWO_PI, ModelParams


class ResonanceError(ValueError):
    """A one-photon detuning is exactly zero."""


class ResonanceWarning(UserWarning):
    """A one-photon detuning lies inside a transition linewidth."""


# --- toy model -------------------------------------------------------------


@dataclass(frozen=True)
class DressedPair:
    """Dressed states |+> = alpha|A> + beta|B>, |-> = beta|A> - alpha|B>.

    ``energies`` is ``(E_plus, E_minus)`` with ``E_plus >= E_minus``;
    ``splitting_delta = E_plus - E_minus``.
    """

    alpha: float
    beta: float
    splitting_delta: float
    energies: tuple
    coupling: float = 0.0


def dressed_states(E_A: float, E_B: float, lam: float) -> DressedPair:
    """Diagonalise [[E_A, lam], [lam, E_B]] (MHz)."""
    mean = 0.5 * (E_A + E_B)
    half = 0.5 * (E_B - E_A)
    root = math.hypot(half, lam)
    if root == 0.0:
        return DressedPair(0.0, 1.0, 0.0, (mean, mean), lam)
    # upper eigenvector (lam, root + half) up to normalisation; beta >= 0
    a = lam
    b = root + half
    if half < 0:
        # better conditioned form when E_B < E_A
        a = root - half
        b = lam
        if b < 0:
            a, b = -a, -b
    n = math.hypot(a, b)
    return DressedPair(a / n, b / n, 2.0 * root, (mean + root, mean - root), lam)


def _toy_detunings(delta_minus: float, pair: DressedPair):
    d_plus = delta_minus + pair.splitting_delta
    if delta_minus == 0.0 or d_plus == 0.0:
        raise ResonanceError("laser resonant with a dressed state")
    return d_plus, delta_minus


def toy_raman_rabi(omega: float, delta_minus: float, pair: DressedPair) -> complex:
    """Two-path Raman Rabi frequency through |+> and |->.

    ``delta_minus`` is the detuning from |->; the detuning from |+> is
    ``delta_minus + splitting_delta``.
    """
    d_plus, d_minus = _toy_detunings(delta_minus, pair)
    w = abs(omega) ** 2
    # <B|+><+|A> = beta*alpha ; <B|-><-|A> = -alpha*beta
    return complex(w * pair.alpha * pair.beta / d_plus - w * pair.alpha * pair.beta / d_minus)


def toy_pumping_rate(omega: float, delta_minus: float, pair: DressedPair,
                     gamma: float) -> float:
    """Average off-resonant pumping rate out of |a> and |b> (far-detuned form)."""
    d_plus, d_minus = _toy_detunings(delta_minus, pair)
    w = abs(omega) ** 2
    a2, b2 = pair.alpha ** 2, pair.beta ** 2
    gamma_a = w * a2 * gamma / d_plus ** 2 + w * b2 * gamma / d_minus ** 2
    gamma_b = w * b2 * gamma / d_plus ** 2 + w * a2 * gamma / d_minus ** 2
    return 0.5 * (gamma_a + gamma_b)


def toy_figure_of_merit(pair: DressedPair, gamma: float) -> float:
    """Far-detuned coherence ratio alpha * beta * delta / gamma."""
    return abs(pair.alpha * pair.beta) * pair.splitting_delta / gamma


# --- strengths and rates in the full model -----------------------------------


def ground_label(m_S: int, m_I: int) -> BasisLabel:
    return BasisLabel("ground", m_S, m_I)


def channel_labels():
    """The nine |0, m_a> -> |+1, m_b> channels in (m_a, m_b) order."""
    return [(ground_label(0, ma), ground_label(1, mb))
            for ma in SPIN_VALUES for mb in SPIN_VALUES]


def channel_name(a: BasisLabel, b: BasisLabel) -> str:
    def n(m):
        return {1: "p1", 0: "0", -1: "m1"}[m]
    return f"{n(a.m_I)}N_to_{n(b.m_I)}N"


def _ey_components(excited: ExcitedStates, m_S: int, m_I: int) -> np.ndarray:
    v = excited.eig.vectors.reshape(2, 3, 3, -1)
    return v[1, SPIN_VALUES.index(m_S), SPIN_VALUES.index(m_I), :]


def transition_strengths(excited: ExcitedStates, a: BasisLabel, b: BasisLabel) -> np.ndarray:
    """C_ab^(j) = c_(Ey',m_S(b),m_I(b))^(j) * conj(c_(Ey',m_S(a),m_I(a))^(j)).

    One complex value per eigenstate of the 18-level Hamiltonian. For a
    Raman channel ``a`` must have m_S = 0 and ``b`` m_S = +1; ``a == b``
    gives the real single-transition weights C_aa.
    """
    for lab in (a, b):
        if lab.m_S not in SPIN_VALUES or lab.m_I not in SPIN_VALUES:
            raise ValueError(f"invalid ground label {lab!r}")
    if a != b and not (a.m_S == 0 and b.m_S == 1):
        raise ValueError("Raman channel needs a with m_S=0 and b with m_S=+1")
    return _ey_components(excited, b.m_S, b.m_I) * np.conj(
        _ey_components(excited, a.m_S, a.m_I))


def grouped_strengths(excited: ExcitedStates, a: BasisLabel, b: BasisLabel) -> dict:
    """Sum of C_ab^(j) over each electronic triplet."""
    c = transition_strengths(excited, a, b)
    return {name: complex(c[excited.indices(name)].sum()) for name in ELECTRONIC_STATES}


def strength_ratio(excited: ExcitedStates, via: str = "E1") -> float:
    """Mean |sum C| of Delta m_I = 0 channels over Delta m_I = -1 channels."""
    same = []
    flip = []
    for a, b in channel_labels():
        s = abs(grouped_strengths(excited, a, b)[via])
        if b.m_I == a.m_I:
            same.append(s)
        elif b.m_I == a.m_I - 1:
            flip.append(s)
    return float(np.mean(same) / np.mean(flip))


def maze_weights(excited: ExcitedStates) -> np.ndarray:
    """|<X^(0)|Psi_j>|^2 summed over m_I, shape (6, 18) in A1..E2 order."""
    u = maze_to_product()
    v = excited.eig.vectors.reshape(6, 3, -1)
    proj = np.einsum("ai,anj->inj", u.conj(), v)
    return np.sum(np.abs(proj) ** 2, axis=1)


def effective_isc_rates(excited: ExcitedStates, isc_A1: float, isc_E12: float) -> np.ndarray:
    """Per-eigenstate ISC rate (MHz), contributions added incoherently."""
    if isc_A1 < 0 or isc_E12 < 0:
        raise ValueError("ISC rates must be non-negative")
    w = maze_weights(excited)
    return w[0] * isc_A1 + (w[4] + w[5]) * isc_E12


def linewidths(p: ModelParams, excited: ExcitedStates) -> np.ndarray:
    """gamma_j = gamma_rad + gamma_phonon + Gamma_ISC,j (MHz)."""
    return p.gamma_rad + p.gamma_phonon + effective_isc_rates(excited, p.isc_A1, p.isc_E12)


def isc_contributions(p: ModelParams, excited: ExcitedStates | None = None) -> dict:
    """Mean ISC rate (MHz) of each electronic triplet."""
    excited = excited if excited is not None else excited_eigensystem(p)
    isc = effective_isc_rates(excited, p.isc_A1, p.isc_E12)
    return {n: float(np.mean(isc[excited.indices(n)])) for n in ELECTRONIC_STATES}


@dataclass(frozen=True)
class RamanChannel:
    """Everything needed to evaluate one Raman channel at fixed tones (MHz)."""

    ground_a: BasisLabel
    ground_b: BasisLabel
    C_ab_j: np.ndarray
    Delta_j: np.ndarray
    gamma_j: np.ndarray
    members: tuple = field(default=())

    def __post_init__(self):
        if np.any(np.abs(self.C_ab_j) > 1 + 1e-12):
            raise ValueError("|C_ab| must not exceed 1")


@dataclass(frozen=True)
class RamanRabi:
    value: complex
    near_resonance: bool


def _states(p: ModelParams, excited, ground):
    excited = excited if excited is not None else excited_eigensystem(p)
    ground = ground if ground is not None else ground_eigensystem(p)
    return excited, ground


def _branch(excited: ExcitedStates, include_upper: bool):
    if include_upper:
        return list(range(len(excited.names)))
    return excited.lower_branch


def make_channel(p: ModelParams, a: BasisLabel, b: BasisLabel, omega1: float,
                 excited: ExcitedStates | None = None,
                 ground: GroundStates | None = None,
                 include_upper: bool = False) -> RamanChannel:
    """Raman channel with tone 1 at absolute frequency ``omega1`` (MHz)."""
    excited, ground = _states(p, excited, ground)
    idx = _branch(excited, include_upper)
    ea = ground.energy(a.m_S, a.m_I) / TWO_PI
    e = excited.eig.values[idx] / TWO_PI
    return RamanChannel(
        ground_a=a, ground_b=b,
        C_ab_j=transition_strengths(excited, a, b)[idx],
        Delta_j=(e - ea) - omega1,
        gamma_j=linewidths(p, excited)[idx],
        members=tuple(idx),
    )


def raman_rabi(channel: RamanChannel, omega: float) -> RamanRabi:
    """Coherent sum over eigenstates of C_ab^(j) |Omega|^2 / Delta_j (MHz)."""
    d = channel.Delta_j
    if np.any(d == 0.0):
        raise ResonanceError("one-photon detuning is zero")
    near = bool(np.any(np.abs(d) < channel.gamma_j / 2))
    if near:
        warnings.warn("one-photon detuning inside a linewidth", ResonanceWarning,
                      stacklevel=2)
    return RamanRabi(complex(np.sum(channel.C_ab_j * abs(omega) ** 2 / d)), near)


def pumping_rate(p: ModelParams, a: BasisLabel, omega: float, laser_frequencies,
                 excited: ExcitedStates | None = None,
                 ground: GroundStates | None = None,
                 include_upper: bool = False) -> float:
    """Incoherent pumping rate out of ground state ``a`` (MHz).

    Sums Lorentzian excitation over every applied tone in
    ``laser_frequencies`` (absolute MHz) and every eigenstate of the branch.
    """
    excited, ground = _states(p, excited, ground)
    idx = _branch(excited, include_upper)
    caa = transition_strengths(excited, a, a).real[idx]
    g = linewidths(p, excited)[idx]
    e = excited.eig.values[idx] / TWO_PI - ground.energy(a.m_S, a.m_I) / TWO_PI
    w = abs(omega) ** 2
    total = 0.0
    for f in np.atleast_1d(laser_frequencies):
        d = e - f
        total += float(np.sum(w * caa * g / ((g / 2) ** 2 + d ** 2)))
    return total


def anchor_frequency(p: ModelParams, excited: ExcitedStates, ground: GroundStates,
                     reference: str = "mid") -> float:
    """Tone-1 frequency (MHz) at zero sweep detuning.

    ``"mid"``: midway between the mean |0> -> Ey and |0> -> E1 transitions;
    ``"E1"``: on the mean |0> -> E1 transition.
    """
    e0 = np.mean([ground.energy(0, m) for m in SPIN_VALUES]) / TWO_PI
    ey = np.mean(excited.eig.values[excited.indices("Ey")]) / TWO_PI
    e1 = np.mean(excited.eig.values[excited.indices("E1")]) / TWO_PI
    if reference == "mid":
        return 0.5 * (ey + e1) - e0
    if reference == "E1":
        return e1 - e0
    raise ValueError(f"unknown reference {reference!r}")


@dataclass(frozen=True)
class FomPoint:
    Delta: float
    rabi: complex
    gamma_a: float
    gamma_b: float

    @property
    def gamma_ab(self) -> float:
        return 0.5 * (self.gamma_a + self.gamma_b)

    @property
    def ratio(self) -> float:
        return abs(self.rabi) / self.gamma_ab


def evaluate_channel(p: ModelParams, a: BasisLabel, b: BasisLabel, Delta: float,
                     omega: float = 1.0, reference: str = "mid",
                     excited: ExcitedStates | None = None,
                     ground: GroundStates | None = None,
                     include_upper: bool = False) -> FomPoint:
    """Raman Rabi frequency and pumping rates at sweep detuning ``Delta``.

    The two-photon detuning is set on resonance with the bare channel
    splitting E_b - E_a.
    """
    excited, ground = _states(p, excited, ground)
    omega1 = anchor_frequency(p, excited, ground, reference) + Delta
    delta_l = (ground.energy(b.m_S, b.m_I) - ground.energy(a.m_S, a.m_I)) / TWO_PI
    tones = (omega1, omega1 - delta_l)
    ch = make_channel(p, a, b, omega1, excited, ground, include_upper)
    d = ch.Delta_j
    rabi = complex(np.sum(ch.C_ab_j * abs(omega) ** 2 / d)) if np.all(d != 0) else complex(np.inf)
    ga = pumping_rate(p, a, omega, tones, excited, ground, include_upper)
    gb = pumping_rate(p, b, omega, tones, excited, ground, include_upper)
    return FomPoint(float(Delta), rabi, ga, gb)


def figure_of_merit_sweep(p: ModelParams, channel, delta_grid, omega: float = 1.0,
                          reference: str = "mid", include_upper: bool = False,
                          workers: int = 1) -> list:
    """|Omega_ab| / Gamma_ab across one-photon detunings (MHz).

    ``channel`` is an ``(a, b)`` pair of ground labels. The sweep detuning is
    measured from the midpoint of the |0> -> Ey and |0> -> E1 lines by
    default. Points are returned in grid order regardless of ``workers``.
    """
    a, b = channel
    excited = excited_eigensystem(p)
    ground = ground_eigensystem(p)
    grid = np.asarray(delta_grid, dtype=float)

    def one(d):
        return evaluate_channel(p, a, b, d, omega, reference, excited, ground, include_upper)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, grid))
    return [one(d) for d in grid]


def far_detuned_ratio(p: ModelParams, a: BasisLabel, b: BasisLabel, reference: str = "mid",
                      excited: ExcitedStates | None = None,
                      ground: GroundStates | None = None) -> float:
    """Large-|Delta| limit of |Omega_ab| / Gamma_ab for the lower branch.

    Expanding 1/Delta_j about the anchor, the leading Raman term that
    survives the interference between eigenstates is sum_j C_j x_j / Delta^2,
    with x_j the line position relative to the anchor; each ground state is
    pumped by its own tone at sum_j C_jj gamma_j / Delta^2. This is the
    multi-level form of the toy-model limit alpha beta delta / gamma.
    """
    excited, ground = _states(p, excited, ground)
    idx = excited.lower_branch
    c_ab = transition_strengths(excited, a, b)[idx]
    c_aa = transition_strengths(excited, a, a).real[idx]
    c_bb = transition_strengths(excited, b, b).real[idx]
    g = linewidths(p, excited)[idx]
    x = (excited.eig.values[idx] - ground.energy(a.m_S, a.m_I)) / TWO_PI \
        - anchor_frequency(p, excited, ground, reference)
    return float(abs(np.sum(c_ab * x)) / (0.5 * np.sum((c_aa + c_bb) * g)))


def misalignment_sweep(p: ModelParams, theta_grid, phi_grid, Delta: float = -870.0,
                       reference: str = "E1", channels=None, omega: float = 1.0) -> dict:
    """Raman Rabi frequency and coherence ratio versus field direction.

    The field magnitude is kept at |B| of ``p``; ``theta`` is the polar
    angle from the NV axis. By default the detuning is measured from the
    |0> -> E1 line. Returns arrays of shape (len(theta), len(phi)) for the
    spin-conserving |+1_N> -> |+1_N> and flip-flop |+1_N> -> |0_N> channels.
    """
    if channels is None:
        channels = {
            "conserving": (ground_label(0, 1), ground_label(1, 1)),
            "flipflop": (ground_label(0, 1), ground_label(1, 0)),
        }
    bmag = math.hypot(p.B_z, p.B_perp)
    thetas = np.asarray(theta_grid, dtype=float)
    phis = np.asarray(phi_grid, dtype=float)
    out = {k: {"rabi": np.empty((thetas.size, phis.size), dtype=complex),
               "ratio": np.empty((thetas.size, phis.size))} for k in channels}
    for i, th in enumerate(thetas):
        for j, ph in enumerate(phis):
            q = p.replace(B_z=bmag * math.cos(th), B_perp=bmag * math.sin(th), phi=float(ph),
                          lambda_Z=None)
            ex = excited_eigensystem(q)
            gr = ground_eigensystem(q)
            for key, (a, b) in channels.items():
                pt = evaluate_channel(q, a, b, Delta, omega, reference, ex, gr)
                out[key]["rabi"][i, j] = pt.rabi
                out[key]["ratio"][i, j] = pt.ratio
    out["theta"] = thetas
    out["phi"] = phis
    return out


def modulation_depth(values) -> float:
    """Half peak-to-peak variation relative to the midpoint: (max-min)/(max+min)."""
    v = np.abs(np.asarray(values))
    return float((v.max() - v.min()) / (v.max() + v.min()))


# --- CSV ---------------------------------------------------------------------


FOM_HEADER = ("Delta_MHz", "re_rabi_MHz", "im_rabi_MHz", "gamma_a_MHz", "gamma_b_MHz", "ratio")


def _fmt(x: float) -> str:
    return repr(float(x))


def fom_csv(points, variable: str = "Delta_MHz") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((variable,) + FOM_HEADER[1:])
    for pt in points:
        w.writerow([_fmt(pt.Delta), _fmt(pt.rabi.real), _fmt(pt.rabi.imag),
                    _fmt(pt.gamma_a), _fmt(pt.gamma_b), _fmt(pt.ratio)])
    return buf.getvalue()


__all__ = [
    "DressedPair", "RamanChannel", "RamanRabi", "FomPoint", "ResonanceError",
    "ResonanceWarning", "dressed_states", "toy_raman_rabi", "toy_pumping_rate",
    "toy_figure_of_merit", "transition_strengths", "grouped_strengths",
    "strength_ratio", "effective_isc_rates", "isc_contributions", "linewidths",
    "make_channel", "raman_rabi", "pumping_rate", "evaluate_channel",
    "figure_of_merit_sweep", "far_detuned_ratio", "misalignment_sweep", "modulation_depth",
    "channel_labels", "channel_name", "ground_label", "fom_csv", "LOWER_BRANCH",
]
