"""Driven, dissipative dynamics of the 18-level ground + lower-branch system.

The simulation basis consists of the nine ground states |m_S, m_I> and nine
lower-branch excited states (Ey, E1, E2 triplets) taken as eigenstates of the
excited-state Hamiltonian with its Ey-E1 couplings removed, so that every
basis state carries definite m_S and m_I. The removed couplings are re-added
as explicit matrix elements.

Index layout: ground states 0..8 ordered m_S (+1, 0, -1) x m_I (+1, 0, -1),
excited states 9..17 ordered Ey, E1, E2 x m_I (+1, 0, -1).

Hamiltonians are in rad/us, times in us; drive and detuning inputs in MHz.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .linalg import eigh
from .model import (
    SPIN_VALUES,
    excited_eigensystem,
    excited_terms,
    ground_eigensystem,
    lambda_z_operator,
    maze_to_product,
    orbital_overlap,
)
from .params import TWO_PI, ConfigError, ModelParams
from .raman import ground_label, pumping_rate

N_LEVELS = 18
EXCITED_NAMES = ("Ey", "E1", "E2")
EXCITED_SPIN = {"Ey": 0, "E1": 1, "E2": -1}
ISC_BRANCHING = {0: 0.5, 1: 0.25, -1: 0.25}
SPIN_PURITY_MIN = 0.995
COUPLING_TERMS = ("ss_flip", "zeeman_perp", "hf_perp", "nuclear_zeeman_perp")


class IntegrationError(RuntimeError):
    """The integrator failed (step-size underflow or non-finite state)."""


def ground_index(m_S: int, m_I: int) -> int:
    return 3 * SPIN_VALUES.index(m_S) + SPIN_VALUES.index(m_I)


def excited_index(name: str, m_I: int) -> int:
    return 9 + 3 * EXCITED_NAMES.index(name) + SPIN_VALUES.index(m_I)


def level_labels():
    g = [("ground", s, m) for s in SPIN_VALUES for m in SPIN_VALUES]
    e = [(n, EXCITED_SPIN[n], m) for n in EXCITED_NAMES for m in SPIN_VALUES]
    return tuple(g + e)


@dataclass(frozen=True)
class DriveConfig:
    """Two-tone Raman drive.

    ``omega_Ey`` is the Rabi coupling (MHz) of each |0, m_I> <-> Ey(m_I)
    leg; ``omega_E1`` that of |+1, m_I> <-> E1(m_I), derived from the
    Ey' orbital overlaps when ``None``. ``Delta`` (MHz) places tone 1 at
    ``nu(|0> -> E1) + Delta``; negative values are below the line. Tone 2 is
    ``delta_L`` (MHz) lower. ``lambda_Z`` (MHz) replaces the geometric
    transverse Zeeman coupling when set.
    """

    omega_Ey: float = 10.0
    omega_E1: Optional[float] = None
    Delta: float = -870.0
    delta_L: Optional[float] = None
    lambda_Z: Optional[float] = None
    duration: float = 40.0

    def __post_init__(self):
        for name in ("omega_Ey", "Delta", "duration"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite")
        if self.omega_Ey < 0 or (self.omega_E1 is not None and self.omega_E1 < 0):
            raise ConfigError("Rabi amplitudes must be non-negative")
        if self.duration < 0:
            raise ConfigError("duration must be non-negative")

    def replace(self, **kw) -> "DriveConfig":
        import dataclasses

        return dataclasses.replace(self, **kw)


def drive_ratio(p: ModelParams) -> float:
    """Omega_E1 / Omega_Ey = sqrt(|<Ey'|E1>|^2 / |<Ey'|Ey>|^2)."""
    ex = excited_eigensystem(p)
    return math.sqrt(orbital_overlap(p, "E1", ex) / orbital_overlap(p, "Ey", ex))


@dataclass(frozen=True)
class SimulationBasis:
    """Unperturbed excited states and the couplings to re-add (rad/us).

    ``energies[k]`` and ``vectors[:, k]`` (product basis) belong to excited
    level ``9 + k``. ``couplings[name]`` is a 9x9 Hermitian matrix holding only
    the Ey <-> E1 elements of that term. ``ground_energies`` are indexed like
    ground levels 0..8.
    """

    energies: np.ndarray
    vectors: np.ndarray
    couplings: dict
    ground_energies: np.ndarray
    spin_purity: np.ndarray
    lambda_unit: np.ndarray

    def coupling_total(self, names=COUPLING_TERMS) -> np.ndarray:
        return sum(self.couplings[n] for n in names)


def simulation_basis(p: ModelParams) -> SimulationBasis:
    """Diagonalise H_tot without its Ey-E1 couplings and label by (m_S, m_I).

    Raises
    ------
    ConfigError
        If any E1/E2 basis state has less than 99.5% of its expected m_S.
    """
    terms = excited_terms(p)
    h0 = sum(v for k, v in terms.items() if k not in COUPLING_TERMS)
    eig = eigh(TWO_PI * h0)
    w = np.abs(eig.vectors) ** 2
    w_s = w.reshape(2, 3, 3, -1).sum(axis=(0, 2))
    w_i = w.reshape(2, 3, 3, -1).sum(axis=(0, 1))
    ms = [SPIN_VALUES[k] for k in np.argmax(w_s, axis=0)]
    mi = [SPIN_VALUES[k] for k in np.argmax(w_i, axis=0)]
    chosen = {}
    for name, s in EXCITED_SPIN.items():
        for m in SPIN_VALUES:
            cands = [j for j in range(18) if ms[j] == s and mi[j] == m]
            if not cands:
                raise ConfigError(f"no basis state with m_S={s}, m_I={m}")
            # the lower-branch member of each (m_S, m_I) sector is the lowest
            chosen[(name, m)] = min(cands, key=lambda j: eig.values[j])
    order = [chosen[(n, m)] for n in EXCITED_NAMES for m in SPIN_VALUES]
    vecs = eig.vectors[:, order]
    energies = eig.values[order]
    purity = np.array([w_s[SPIN_VALUES.index(EXCITED_SPIN[n]), chosen[(n, m)]]
                       for n in EXCITED_NAMES for m in SPIN_VALUES])
    if np.any(purity[3:] < SPIN_PURITY_MIN):
        raise ConfigError(
            f"E1/E2 spin purity {purity[3:].min():.4f} below {SPIN_PURITY_MIN}; "
            "axial field too low for the fixed-m_S basis"
        )
    def ey_e1_block(op):
        m = vecs.conj().T @ (TWO_PI * op) @ vecs
        c = np.zeros((9, 9), dtype=complex)
        c[3:6, 0:3] = m[3:6, 0:3]
        c[0:3, 3:6] = m[0:3, 3:6]
        return c

    couplings = {name: ey_e1_block(terms[name]) for name in COUPLING_TERMS}
    unit = ey_e1_block(np.kron(lambda_z_operator(1.0), np.eye(3)))
    ground = ground_eigensystem(p)
    ge = np.array([ground.energy(s, m) for s in SPIN_VALUES for m in SPIN_VALUES])
    return SimulationBasis(energies, vecs, couplings, ge, purity, unit)


def excited_coupling(basis: SimulationBasis, lambda_z: Optional[float]) -> np.ndarray:
    """Re-added Ey <-> E1 couplings (rad/us); ``lambda_z`` (MHz) replaces the
    transverse Zeeman term of the basis parameters when given."""
    if lambda_z is None:
        return basis.coupling_total()
    return basis.coupling_total(("ss_flip", "hf_perp")) + lambda_z * basis.lambda_unit


def isc_rates(p: ModelParams, basis: SimulationBasis) -> np.ndarray:
    """Effective ISC rate (MHz) of each excited simulation level."""
    u = np.kron(maze_to_product(), np.eye(3))
    proj = (u.conj().T @ basis.vectors).reshape(6, 3, 9)
    w = np.sum(np.abs(proj) ** 2, axis=1)
    return w[0] * p.isc_A1 + (w[4] + w[5]) * p.isc_E12


def _optical_phase(basis: SimulationBasis, k: int) -> complex:
    name = EXCITED_NAMES[k // 3]
    m = SPIN_VALUES[k % 3]
    s = EXCITED_SPIN[name]
    c = basis.vectors[9 + 3 * SPIN_VALUES.index(s) + SPIN_VALUES.index(m), k]
    return c / abs(c) if abs(c) > 0 else 1.0


def tone_frequency(basis: SimulationBasis, d: DriveConfig) -> float:
    """Absolute tone-1 frequency in MHz."""
    e1 = np.mean(basis.energies[3:6])
    g0 = np.mean(basis.ground_energies[3:6])
    return (e1 - g0) / TWO_PI + d.Delta


@dataclass(frozen=True)
class Generator:
    hamiltonian: np.ndarray
    collapse: tuple
    labels: tuple = field(default_factory=level_labels)


def build_rotating_frame_generator(p: ModelParams, d: DriveConfig,
                                   basis: SimulationBasis | None = None,
                                   delta_L: float | None = None,
                                   include_drive: bool = True) -> Generator:
    """Time-independent Hamiltonian (rad/us) and collapse operators.

    In the rotating frame excited levels sit at E - omega1, |+1> ground
    levels at E - delta_L and the other ground levels at their bare
    energies. Decay: radiative at ``gamma_rad`` to the ground level with the
    same (m_S, m_I); ISC at the effective rate with branching
    (0.5, 0.25, 0.25) to m_S = (0, +1, -1) at fixed m_I.
    """
    basis = basis if basis is not None else simulation_basis(p)
    dl = d.delta_L if delta_L is None else delta_L
    if dl is None:
        raise ConfigError("delta_L must be set (see resonant_delta_L)")
    w1 = TWO_PI * tone_frequency(basis, d)
    h = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    e0 = basis.ground_energies[3:6].mean()
    for s in SPIN_VALUES:
        for m in SPIN_VALUES:
            i = ground_index(s, m)
            shift = TWO_PI * dl if s == 1 else 0.0
            h[i, i] = basis.ground_energies[i] - e0 - shift
    h[9:, 9:] = np.diag(basis.energies - e0 - w1) + excited_coupling(basis, d.lambda_Z)
    if include_drive:
        om_y = TWO_PI * d.omega_Ey
        om_1 = TWO_PI * (d.omega_E1 if d.omega_E1 is not None
                         else d.omega_Ey * drive_ratio(p))
        for m in SPIN_VALUES:
            for name, s, om in (("Ey", 0, om_y), ("E1", 1, om_1)):
                k = excited_index(name, m)
                g = ground_index(s, m)
                h[k, g] = om * _optical_phase(basis, k - 9)
                h[g, k] = np.conj(h[k, g])
    isc = isc_rates(p, basis)
    ops = []
    for k in range(9):
        name = EXCITED_NAMES[k // 3]
        m = SPIN_VALUES[k % 3]
        e = 9 + k
        op = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
        op[ground_index(EXCITED_SPIN[name], m), e] = math.sqrt(TWO_PI * p.gamma_rad)
        ops.append(op)
        for s, frac in ISC_BRANCHING.items():
            rate = TWO_PI * isc[k] * frac
            if rate > 0:
                op = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
                op[ground_index(s, m), e] = math.sqrt(rate)
                ops.append(op)
    return Generator(h, tuple(ops))


# --- evolution ----------------------------------------------------------------


def liouvillian(h: np.ndarray, collapse) -> np.ndarray:
    """Superoperator acting on row-major vec(rho)."""
    n = h.shape[0]
    eye = np.eye(n)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in collapse:
        cdc = c.conj().T @ c
        lv += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return lv


def lindblad_rhs(h: np.ndarray, collapse):
    """Right-hand side d rho/dt as a function of the flattened state."""
    n = h.shape[0]
    heff = h - 0.5j * sum((c.conj().T @ c for c in collapse), np.zeros_like(h))

    def rhs(_t, y):
        rho = y.reshape(n, n)
        out = -1j * (heff @ rho - rho @ heff.conj().T)
        for c in collapse:
            out += c @ rho @ c.conj().T
        return out.reshape(-1)

    return rhs


@dataclass(frozen=True)
class EvolutionResult:
    """Populations sampled on ``times`` (us).

    ``pop_by_mS`` holds ground-state populations for m_S (+1, 0, -1);
    ``pop_by_mI`` holds populations of m_I (+1, 0, -1) summed over every
    level, ground and excited; ``excited_total`` the excited-state
    population. ``states`` keeps the density matrices when requested.
    """

    times: np.ndarray
    pop_by_mS: np.ndarray
    pop_by_mI: np.ndarray
    excited_total: np.ndarray
    trace_error: np.ndarray
    min_eigenvalue: float
    hermiticity_error: float
    populations: np.ndarray
    states: Optional[np.ndarray] = None

    @property
    def max_trace_error(self) -> float:
        return float(np.max(self.trace_error))


def _summarise(times, rhos, labels, keep_states):
    n = rhos.shape[1]
    pops = np.real(np.einsum("tii->ti", rhos))
    tr = np.abs(np.einsum("tii->t", rhos) - 1.0)
    herm = float(np.max(np.abs(rhos - np.conj(np.transpose(rhos, (0, 2, 1))))))
    mins = min(float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()) for r in rhos)
    if labels is None or n != N_LEVELS:
        by_ms = np.zeros((3, len(times)))
        by_mi = np.zeros((3, len(times)))
        exc = np.zeros(len(times))
    else:
        by_ms = np.array([pops[:, [ground_index(s, m) for m in SPIN_VALUES]].sum(axis=1)
                          for s in SPIN_VALUES])
        by_mi = np.array([pops[:, [j for j, lab in enumerate(labels) if lab[2] == m]].sum(axis=1)
                          for m in SPIN_VALUES])
        exc = pops[:, 9:].sum(axis=1)
    return EvolutionResult(np.asarray(times, dtype=float), by_ms, by_mi, exc, tr, mins, herm,
                           pops, rhos if keep_states else None)


def evolve(rho0, h, collapse, t_grid, method: str = "expm", rtol: float = 1e-8,
           atol: float = 1e-10, labels=None, keep_states: bool = False) -> EvolutionResult:
    """Lindblad evolution of ``rho0`` sampled at ``t_grid`` (us).

    ``method="expm"`` propagates with the exact matrix exponential of the
    Liouvillian between samples; ``method="rk45"`` uses an adaptive
    Dormand-Prince integrator with dense output.

    Raises
    ------
    IntegrationError
        If the adaptive integrator fails or the state becomes non-finite.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = rho0.shape[0]
    if rho0.shape != (n, n) or h.shape != (n, n):
        raise ValueError("rho0 and h must be square matrices of equal size")
    if abs(np.trace(rho0) - 1) > 1e-8 or np.max(np.abs(rho0 - rho0.conj().T)) > 1e-10:
        raise ValueError("rho0 must be a unit-trace Hermitian matrix")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be a non-empty nondecreasing array")
    if labels is None and n == N_LEVELS:
        labels = level_labels()
    if method == "expm":
        lv = liouvillian(h, collapse)
        cache = {}
        out = np.empty((t.size, n, n), dtype=complex)
        y = rho0.reshape(-1)
        prev = t[0]
        for k, tk in enumerate(t):
            dt = float(tk - prev)
            if dt > 0:
                key = round(dt, 12)
                if key not in cache:
                    cache[key] = expm(lv * dt)
                y = cache[key] @ y
            out[k] = y.reshape(n, n)
            prev = tk
    elif method == "rk45":
        if t[-1] == t[0]:
            out = np.repeat(rho0[None], t.size, axis=0)
        else:
            sol = solve_ivp(lindblad_rhs(h, collapse), (t[0], t[-1]), rho0.reshape(-1),
                            method="RK45", t_eval=t, rtol=rtol, atol=atol)
            if not sol.success:
                raise IntegrationError(f"integration failed: {sol.message}")
            out = sol.y.T.reshape(t.size, n, n)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite density matrix")
    return _summarise(t, out, labels, keep_states)


# --- experiment-level helpers ----------------------------------------------------


TRANSITIONS = {
    "conserving": ((0, 1), (1, 1)),
    "flipflop": ((0, 1), (1, 0)),
}


def _transition(transition):
    if isinstance(transition, str):
        try:
            return TRANSITIONS[transition]
        except KeyError:
            raise ConfigError(f"unknown transition {transition!r}") from None
    return transition


@dataclass(frozen=True)
class DeltaLResult:
    delta_L: float
    bare: float
    flagged: bool
    overlap: float


def resonant_delta_L(p: ModelParams, d: DriveConfig, transition="conserving",
                     basis: SimulationBasis | None = None, offset: float = 50.0,
                     iterations: int = 4) -> DeltaLResult:
    """Stark-corrected two-photon detuning (MHz) for ``transition``.

    The dressed rotating-frame Hamiltonian is diagonalised at
    ``delta_L +/- offset``; the light shifts of the two ground levels are
    averaged over both points, which cancels the level repulsion caused by
    the Raman coupling itself. The estimate is iterated to self-consistency.
    ``flagged`` is set when a dressed level cannot be identified with more
    than 50% overlap.
    """
    (sa, ma), (sb, mb) = _transition(transition)
    basis = basis if basis is not None else simulation_basis(p)
    ia, ib = ground_index(sa, ma), ground_index(sb, mb)
    bare = (basis.ground_energies[ib] - basis.ground_energies[ia]) / TWO_PI
    est = bare
    worst = 1.0
    for _ in range(iterations):
        shifts = []
        for sign in (1.0, -1.0):
            dl = est + sign * offset
            g = build_rotating_frame_generator(p, d, basis, delta_L=dl)
            vals, vecs = np.linalg.eigh(g.hamiltonian)
            h0 = np.real(np.diag(g.hamiltonian))
            s = []
            for i in (ia, ib):
                w = np.abs(vecs[i, :]) ** 2
                k = int(np.argmax(w))
                worst = min(worst, float(w[k]))
                s.append(vals[k] - h0[i])
            shifts.append(s)
        sa_mean = np.mean([s[0] for s in shifts])
        sb_mean = np.mean([s[1] for s in shifts])
        est = bare + (sb_mean - sa_mean) / TWO_PI
    return DeltaLResult(float(est), float(bare), worst < 0.5, worst)


def initial_state(nuclear=(0.66, 0.26, 0.08)) -> np.ndarray:
    """Electronic |0> with diagonal nuclear populations (m_I = +1, 0, -1)."""
    w = np.asarray(nuclear, dtype=float)
    if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ConfigError("initial nuclear populations must be 3 non-negative weights summing to 1")
    rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    for m, x in zip(SPIN_VALUES, w):
        rho[ground_index(0, m), ground_index(0, m)] = x
    return rho


@dataclass(frozen=True)
class ExperimentTraces:
    times: np.ndarray
    traces: dict
    result: EvolutionResult
    delta_L: DeltaLResult


def simulate_experiment(p: ModelParams, d: DriveConfig, transition, durations,
                        initial_nuclear=(0.66, 0.26, 0.08), method: str = "expm",
                        basis: SimulationBasis | None = None) -> ExperimentTraces:
    """Simulate one Raman pulse-length sweep.

    For ``"flipflop"`` the traces are the m_I = +1 and m_I = 0 populations
    summed over all electronic states; for ``"conserving"`` the trace is the
    population transferred out of |0>, i.e. ground |+1> plus |-1>.
    """
    basis = basis if basis is not None else simulation_basis(p)
    pair = _transition(transition)
    if d.delta_L is None:
        dl = resonant_delta_L(p, d, pair, basis)
    else:
        dl = DeltaLResult(d.delta_L, d.delta_L, False, 1.0)
    g = build_rotating_frame_generator(p, d, basis, delta_L=dl.delta_L)
    res = evolve(initial_state(initial_nuclear), g.hamiltonian, g.collapse, durations,
                 method=method)
    if transition == "flipflop" or pair == TRANSITIONS["flipflop"]:
        traces = {"mI_plus1": res.pop_by_mI[0], "mI_0": res.pop_by_mI[1]}
    else:
        traces = {"transferred": res.pop_by_mS[0] + res.pop_by_mS[2]}
    return ExperimentTraces(res.times, traces, res, dl)


def effective_raman_coupling(p: ModelParams, d: DriveConfig, transition="conserving",
                             basis: SimulationBasis | None = None) -> complex:
    """Adiabatically eliminated ground-ground coupling (MHz) of a channel."""
    basis = basis if basis is not None else simulation_basis(p)
    (sa, ma), (sb, mb) = _transition(transition)
    dl = resonant_delta_L(p, d, (( sa, ma), (sb, mb)), basis).delta_L
    g = build_rotating_frame_generator(p, d, basis, delta_L=dl)
    h = g.hamiltonian
    hee = h[9:, 9:]
    hge = h[:9, 9:]
    eff = -hge @ np.linalg.solve(hee, hge.conj().T)
    return complex(eff[ground_index(sb, mb), ground_index(sa, ma)]) / TWO_PI


def calibrate_omega(p: ModelParams, d: DriveConfig, pi_time: float,
                    transition="conserving") -> float:
    """omega_Ey (MHz) giving a Raman pi-time ``pi_time`` (us) for ``transition``.

    Uses the effective coupling g: populations follow sin^2(2 pi g t), so the
    pi-time is 1 / (4 g). The coupling scales as omega^2.
    """
    if pi_time <= 0:
        raise ConfigError("pi_time must be positive")
    basis = simulation_basis(p)
    ref = d.replace(delta_L=None)
    for _ in range(3):
        g = abs(effective_raman_coupling(p, ref, transition, basis))
        target = 1.0 / (4.0 * pi_time)
        ref = ref.replace(omega_Ey=ref.omega_Ey * math.sqrt(target / g))
    return ref.omega_Ey


TRACE_HEADER = ("t_us", "pop_mI_plus1", "pop_mI_0", "pop_mI_minus1", "pop_mS_0",
                "pop_mS_plus1", "pop_mS_minus1", "excited_total", "trace_err")


def trace_csv(res: EvolutionResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for k, t in enumerate(res.times):
        row = [t, res.pop_by_mI[0, k], res.pop_by_mI[1, k], res.pop_by_mI[2, k],
               res.pop_by_mS[1, k], res.pop_by_mS[0, k], res.pop_by_mS[2, k],
               res.excited_total[k], res.trace_error[k]]
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def read_trace_csv(text: str) -> dict:
    """Parse a trace CSV into a dict of float arrays keyed by column name."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty trace file")
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        raise ValueError("trace file has no data rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def pumping_rate_ab(p: ModelParams, d: DriveConfig, transition="conserving",
                    basis: SimulationBasis | None = None,
                    delta_L: float | None = None) -> float:
    """Mean incoherent pumping rate (MHz) out of the two ground levels.

    Evaluated with the frequency-domain model of the raman module at the two
    tones used by the simulation; the matching decay rate of populations and
    coherences in 1/us is ``TWO_PI`` times this value.
    """
    basis = basis if basis is not None else simulation_basis(p)
    q = p.replace(lambda_Z=d.lambda_Z)
    (sa, ma), (sb, mb) = _transition(transition)
    if delta_L is None:
        delta_L = d.delta_L if d.delta_L is not None else \
            resonant_delta_L(p, d, transition, basis).delta_L
    w1 = tone_frequency(basis, d)
    tones = (w1, w1 - delta_L)
    ga = pumping_rate(q, ground_label(sa, ma), d.omega_Ey, tones)
    gb = pumping_rate(q, ground_label(sb, mb), d.omega_Ey, tones)
    return 0.5 * (ga + gb)
