"""NV centre Hamiltonians, eigenstate labelling and optical transition tables.

Excited-state operators are assembled in the product basis
``orbital (Ex', Ey') x electron spin (+1, 0, -1) [x nuclear spin (+1, 0, -1)]``
and rotated into the spin-orbit eigenbasis (A1, A2, Ex, Ey, E1, E2) by
:func:`maze_to_product`. Builders return angular frequencies in rad/us.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .linalg import EigenSystem, eigh, kron, pauli, spin1_operators
from .params import MU_B, TWO_PI, ModelParams

ELECTRONIC_STATES = ("A1", "A2", "Ex", "Ey", "E1", "E2")
LOWER_BRANCH = ("Ey", "E1", "E2")
UPPER_BRANCH = ("Ex", "A1", "A2")
SPIN_VALUES = (1, 0, -1)
ORBITALS = ("Ex'", "Ey'")


class BasisLabel(NamedTuple):
    orbital: str
    m_S: int
    m_I: int


@dataclass(frozen=True)
class TransitionLine:
    ground_index: int
    excited_index: int
    ground_label: str
    excited_label: str
    frequency: float
    strength: float
    strength_total: float


def excited_product_labels(nuclear: bool = True):
    nuc = SPIN_VALUES if nuclear else (0,)
    return tuple(
        BasisLabel(o, ms, mi) for o in ORBITALS for ms in SPIN_VALUES for mi in nuc
    )


def ground_labels():
    return tuple(BasisLabel("ground", ms, mi) for ms in SPIN_VALUES for mi in SPIN_VALUES)


@lru_cache(maxsize=1)
def maze_to_product() -> np.ndarray:
    """Unitary whose columns are A1, A2, Ex, Ey, E1, E2 in orbital x spin."""
    r = 1 / math.sqrt(2)
    ex = np.array([1, 0], dtype=complex)
    ey = np.array([0, 1], dtype=complex)
    e_plus = -r * (ex + 1j * ey)
    e_minus = r * (ex - 1j * ey)
    up, zero, down = np.eye(3, dtype=complex)
    k = np.kron
    cols = [
        r * (k(e_minus, up) + k(e_plus, down)),
        -1j * r * (k(e_minus, up) - k(e_plus, down)),
        k(ex, zero),
        k(ey, zero),
        1j * r * (k(e_plus, up) - k(e_minus, down)),
        r * (k(e_plus, up) + k(e_minus, down)),
    ]
    u = np.array(cols).T
    u.setflags(write=False)
    return u


def _field(p: ModelParams):
    return p.B_perp * math.cos(p.phi), p.B_perp * math.sin(p.phi), p.B_z


def electronic_terms(p: ModelParams, bx=None, by=None) -> dict:
    """Named excited-state electronic terms, 6x6 product basis, in MHz.

    ``zeeman_perp`` is the transverse spin Zeeman term for the geometric field
    (or for ``bx``/``by`` when given).
    """
    sx, sy, sz, _, _ = spin1_operators()
    px, py, pz = pauli()
    i2 = np.eye(2)
    i3 = np.eye(3)
    fx, fy, bz = _field(p)
    bx = fx if bx is None else bx
    by = fy if by is None else by
    ge = p.g_par_es * MU_B
    ac = lambda a, b: a @ b + b @ a  # noqa: E731
    return {
        "spin_orbit": -p.lambda_so * kron(py, sz),
        "ss_axial": p.ss_axial * kron(i2, sz @ sz - 2.0 / 3.0 * i3),
        "ss_perp": 0.5 * p.ss_perp
        * (kron(pz, sx @ sx - sy @ sy) + kron(px, ac(sx, sy))),
        "ss_flip": p.lambda_ss / math.sqrt(2)
        * (kron(pz, ac(sx, sz)) - kron(px, ac(sy, sz))),
        "strain": 0.5 * p.strain_delta * kron(pz, i3),
        "zeeman_axial": ge * bz * kron(i2, sz),
        "zeeman_perp": ge * (bx * kron(i2, sx) + by * kron(i2, sy)),
        "orbital_zeeman": 0.5 * MU_B * p.g_orb * bz * kron(py, i3),
    }


def _to_maze(op6: np.ndarray) -> np.ndarray:
    u = maze_to_product()
    return u.conj().T @ op6 @ u


def build_electronic_hamiltonian(p: ModelParams, basis: str = "maze") -> np.ndarray:
    """6x6 excited-state electronic Hamiltonian in rad/us.

    ``basis`` is ``"maze"`` (A1, A2, Ex, Ey, E1, E2) or ``"product"``.
    """
    h = sum(excited_electronic_terms(p).values())
    if basis == "maze":
        h = _to_maze(h)
    elif basis != "product":
        raise ValueError(f"unknown basis {basis!r}")
    return TWO_PI * h


def nuclear_terms(p: ModelParams) -> dict:
    """Excited-state electron-nuclear terms, 18x18 product basis, MHz."""
    sx, sy, sz, sp, sm = spin1_operators()
    i2 = np.eye(2)
    i3 = np.eye(3)
    bx, by, bz = _field(p)
    gn = p.gamma_n * 1e-3
    return {
        "hf_axial": p.A_par_es * kron(i2, sz, sz),
        "hf_perp": 0.5 * p.A_perp_es * (kron(i2, sp, sm) + kron(i2, sm, sp)),
        "quadrupole": p.P_quad * kron(i2, i3, sz @ sz),
        "nuclear_zeeman_axial": -gn * bz * kron(i2, i3, sz),
        "nuclear_zeeman_perp": -gn * (bx * kron(i2, i3, sx) + by * kron(i2, i3, sy)),
    }


def maze_element(op6: np.ndarray, bra: str, ket: str) -> complex:
    """<bra|op|ket> between zero-field basis states (A1, ..., E2)."""
    m = _to_maze(op6)
    return complex(m[ELECTRONIC_STATES.index(bra), ELECTRONIC_STATES.index(ket)])


def lambda_z_operator(lambda_z: float) -> np.ndarray:
    """Phenomenological Ey <-> E1 coupling (6x6 product basis, MHz).

    The element <E1|H|Ey> equals ``lambda_z`` in the zero-field basis, where
    the spin-spin element is ``-lambda_ss``: negative values reinforce the
    spin-spin coupling, positive values oppose it. A geometric transverse
    field cannot do this, since its Ey-E1 element is in quadrature with the
    spin-spin one.
    """
    u = maze_to_product()
    e1 = u[:, ELECTRONIC_STATES.index("E1")]
    ey = u[:, ELECTRONIC_STATES.index("Ey")]
    m = np.outer(e1, ey.conj())
    return lambda_z * (m + m.conj().T)


def excited_electronic_terms(p: ModelParams) -> dict:
    """Electronic terms of the excited state; ``lambda_Z`` overrides the
    geometric transverse Zeeman term when set."""
    terms = electronic_terms(p)
    if p.lambda_Z is not None:
        terms["zeeman_perp"] = lambda_z_operator(p.lambda_Z)
    return terms


def excited_terms(p: ModelParams) -> dict:
    """All 18x18 product-basis terms in MHz (electronic terms embedded)."""
    i3 = np.eye(3)
    terms = {k: np.kron(v, i3) for k, v in excited_electronic_terms(p).items()}
    terms.update(nuclear_terms(p))
    return terms


def build_total_hamiltonian(p: ModelParams, basis: str = "maze") -> np.ndarray:
    """18x18 excited-state Hamiltonian (electronic + nuclear) in rad/us.

    In the ``"maze"`` basis the index is ``6 * 0 + ...``: electronic state
    (A1, A2, Ex, Ey, E1, E2) slowest, nuclear m_I (+1, 0, -1) fastest.
    """
    h = sum(excited_terms(p).values())
    if basis == "maze":
        u = np.kron(maze_to_product(), np.eye(3))
        h = u.conj().T @ h @ u
    elif basis != "product":
        raise ValueError(f"unknown basis {basis!r}")
    return TWO_PI * h


def build_ground_hamiltonian(p: ModelParams) -> np.ndarray:
    """9x9 ground-state (3A2) Hamiltonian in rad/us, basis m_S x m_I."""
    sx, sy, sz, _, _ = spin1_operators()
    i3 = np.eye(3)
    bx, by, bz = _field(p)
    gg = p.g_par_gs * MU_B
    gn = p.gamma_n * 1e-3
    h = (
        p.D_gs * kron(sz @ sz, i3)
        + gg * (bz * kron(sz, i3) + bx * kron(sx, i3) + by * kron(sy, i3))
        + p.A_par_gs * kron(sz, sz)
        + p.A_perp_gs * (kron(sx, sx) + kron(sy, sy))
        + p.P_quad * kron(i3, sz @ sz)
        - gn * (bz * kron(i3, sz) + bx * kron(i3, sx) + by * kron(i3, sy))
    )
    return TWO_PI * h


def transverse_zeeman_strength(p: ModelParams, theta: float, B: float | None = None):
    """Transverse electron Zeeman energy g_es * mu_B * B * sin(theta), MHz."""
    B = math.hypot(p.B_z, p.B_perp) if B is None else B
    return p.g_par_es * MU_B * B * math.sin(theta)


# --- eigen-decompositions and labelling -------------------------------------


@dataclass(frozen=True)
class ExcitedStates:
    """Labelled eigenstates of the 18-level excited-state Hamiltonian.

    ``eig.vectors`` are in the orbital x spin x nuclear product basis,
    energies in rad/us. ``names[j]`` is the electronic parent (e.g. "E1") of
    eigenstate ``j`` and ``m_I[j]`` its dominant nuclear projection.
    """

    eig: EigenSystem
    names: tuple
    m_I: tuple
    electronic: EigenSystem
    electronic_names: tuple

    def indices(self, name: str):
        return [j for j, n in enumerate(self.names) if n == name]

    def index(self, name: str, m_I: int) -> int:
        for j, (n, m) in enumerate(zip(self.names, self.m_I)):
            if n == name and m == m_I:
                return j
        raise KeyError((name, m_I))

    @property
    def lower_branch(self):
        return [j for j, n in enumerate(self.names) if n in LOWER_BRANCH]

    def coefficient(self, j: int, orbital: str, m_S: int, m_I: int) -> complex:
        o = ORBITALS.index(orbital)
        s = SPIN_VALUES.index(m_S)
        n = SPIN_VALUES.index(m_I)
        return self.eig.vectors[o * 9 + s * 3 + n, j]


def spin_weights(vectors: np.ndarray, nuclear: bool) -> np.ndarray:
    """|<m_S|psi>|^2 per state, shape (3, n) ordered (+1, 0, -1)."""
    w = np.abs(vectors) ** 2
    if nuclear:
        w = w.reshape(2, 3, 3, -1).sum(axis=(0, 2))
    else:
        w = w.reshape(2, 3, -1).sum(axis=0)
    return w


def orbital_weights(vectors: np.ndarray, nuclear: bool) -> np.ndarray:
    """|<O|psi>|^2 per state, shape (2, n) ordered (Ex', Ey')."""
    w = np.abs(vectors) ** 2
    return w.reshape(2, -1, w.shape[-1]).sum(axis=1)


def label_electronic(eig6: EigenSystem) -> tuple:
    """Name the six electronic eigenstates (product-basis vectors).

    Ex/Ey are the two states with dominant m_S = 0 character (Ey lower).
    The two lowest remaining states form the lower branch: E1 has more
    m_S = +1 than m_S = -1 weight. The upper two are A1 (lower) and A2.
    """
    ws = spin_weights(eig6.vectors, nuclear=False)
    n = len(eig6.values)
    zero_like = sorted(np.argsort(-ws[1])[:2], key=lambda k: eig6.values[k])
    rest = sorted((k for k in range(n) if k not in zero_like), key=lambda k: eig6.values[k])
    names = [None] * n
    names[zero_like[0]] = "Ey"
    names[zero_like[1]] = "Ex"
    low, high = rest[:2], rest[2:]
    pol = [ws[0, k] - ws[2, k] for k in low]
    if abs(pol[0] - pol[1]) < 1e-9:
        u = maze_to_product()
        ov = [abs(np.vdot(u[:, 4], eig6.vectors[:, k])) for k in low]
        e1 = low[int(np.argmax(ov))]
    else:
        e1 = low[int(np.argmax(pol))]
    names[e1] = "E1"
    names[low[0] if e1 == low[1] else low[1]] = "E2"
    names[high[0]] = "A1"
    names[high[1]] = "A2"
    return tuple(names)


def electronic_eigensystem(p: ModelParams, h: np.ndarray | None = None) -> tuple:
    """Eigenstates of the electronic Hamiltonian in the product basis.

    ``h`` optionally supplies the 6x6 product-basis Hamiltonian in MHz.
    """
    h = build_electronic_hamiltonian(p, basis="product") if h is None else TWO_PI * h
    eig = eigh(h, basis_labels=excited_product_labels(nuclear=False))
    return eig, label_electronic(eig)


def _group_hyperfine(eig18: EigenSystem, eig6: EigenSystem, names6):
    v6 = eig6.vectors
    v = eig18.vectors.reshape(6, 3, -1)
    # weight of each 18-level state on electronic eigenstate i (summed over m_I)
    proj = np.einsum("ai,anj->inj", v6.conj(), v)
    w_el = np.sum(np.abs(proj) ** 2, axis=1)
    cost = -np.repeat(w_el, 3, axis=0)
    rows, cols = linear_sum_assignment(cost)
    names = [None] * eig18.values.size
    for r, c in zip(rows, cols):
        names[c] = names6[r // 3]
    w_n = np.sum(np.abs(v) ** 2, axis=0)
    m_I = [None] * len(names)
    for name in set(names):
        members = [j for j, nm in enumerate(names) if nm == name]
        r, c = linear_sum_assignment(-w_n[:, members])
        for ni, k in zip(r, c):
            m_I[members[k]] = SPIN_VALUES[ni]
    return tuple(names), tuple(m_I)


def excited_eigensystem(p: ModelParams) -> ExcitedStates:
    """Diagonalise the 18-level excited-state Hamiltonian and label states."""
    h = build_total_hamiltonian(p, basis="product")
    eig = eigh(h, basis_labels=excited_product_labels())
    eig6, names6 = electronic_eigensystem(p)
    names, m_i = _group_hyperfine(eig, eig6, names6)
    return ExcitedStates(eig, names, m_i, eig6, names6)


@dataclass(frozen=True)
class GroundStates:
    eig: EigenSystem
    m_S: tuple
    m_I: tuple

    def index(self, m_S: int, m_I: int) -> int:
        for j, (s, n) in enumerate(zip(self.m_S, self.m_I)):
            if s == m_S and n == m_I:
                return j
        raise KeyError((m_S, m_I))

    def energy(self, m_S: int, m_I: int) -> float:
        return self.eig.values[self.index(m_S, m_I)]


def ground_eigensystem(p: ModelParams) -> GroundStates:
    """Diagonalise the ground Hamiltonian; label states by dominant (m_S, m_I)."""
    eig = eigh(build_ground_hamiltonian(p), basis_labels=ground_labels())
    r, c = linear_sum_assignment(-np.abs(eig.vectors) ** 2)
    m_s = [None] * 9
    m_i = [None] * 9
    for basis, state in zip(r, c):
        m_s[state] = SPIN_VALUES[basis // 3]
        m_i[state] = SPIN_VALUES[basis % 3]
    return GroundStates(eig, tuple(m_s), tuple(m_i))


def raman_line_positions(p: ModelParams) -> dict:
    """Frequencies (MHz) of |0, m_a> -> |+1, m_b> ground transitions, |dm_I| <= 1."""
    g = ground_eigensystem(p)
    out = {}
    for ma in SPIN_VALUES:
        for mb in SPIN_VALUES:
            if abs(ma - mb) <= 1:
                out[(ma, mb)] = (g.energy(1, mb) - g.energy(0, ma)) / TWO_PI
    return out


def hyperfine_constants_from_lines(lines: dict) -> dict:
    """Least-squares (A, P, nuclear Zeeman, centre) from the five observed lines.

    Uses the secular line model f = f0 + A*m_b + P*(m_b^2 - m_a^2)
    + z*(m_b - m_a) for the three nuclear-spin-conserving and two flip-flop
    lines (m_a = m_b + 1).
    """
    keys = [(1, 1), (0, 0), (-1, -1), (1, 0), (0, -1)]
    rows = [[1.0, mb, mb * mb - ma * ma, mb - ma] for ma, mb in keys]
    y = [lines[k] for k in keys]
    f0, a, pq, z = np.linalg.lstsq(np.array(rows), np.array(y), rcond=None)[0]
    return {"center": f0, "A": a, "P": pq, "nuclear_zeeman": z}


# --- scans and tables -------------------------------------------------------


def eslac_scan(p: ModelParams, bz_grid) -> dict:
    """Electronic eigenvalues (MHz) and m_S admixtures along a B_z grid.

    Returns arrays ``energies[k, name]`` ordered as :data:`ELECTRONIC_STATES`,
    ``ms_weights[k, name, (+1, 0, -1)]``, and the field of minimum Ey-E1 gap.
    """
    bz_grid = np.asarray(bz_grid, dtype=float)
    if bz_grid.size == 0:
        raise ValueError("bz_grid must be non-empty")
    energies = np.empty((bz_grid.size, 6))
    weights = np.empty((bz_grid.size, 6, 3))
    for k, bz in enumerate(bz_grid):
        eig, names = electronic_eigensystem(p.replace(B_z=float(bz)))
        ws = spin_weights(eig.vectors, nuclear=False)
        for j, name in enumerate(names):
            i = ELECTRONIC_STATES.index(name)
            energies[k, i] = eig.values[j] / TWO_PI
            weights[k, i] = ws[:, j]
    gap = np.abs(energies[:, 3] - energies[:, 4])
    k_min = int(np.argmin(gap))
    return {
        "bz": bz_grid,
        "energies": energies,
        "ms_weights": weights,
        "ey_e1_gap": gap,
        "anticrossing_bz": float(bz_grid[k_min]),
        "min_gap": float(gap[k_min]),
    }


def transition_table(p: ModelParams, excited: ExcitedStates | None = None,
                     ground: GroundStates | None = None) -> list:
    """Optical lines from each ground m_S to each electronic excited state.

    The nuclear structure is not resolved: each line groups the three
    hyperfine eigenstates of one electronic parent. ``strength`` is the
    Ey'-polarised dipole weight sum_j |<Ey', m_S, m_I|j>|^2 averaged over the
    ground nuclear projection m_I; ``strength_total`` includes both orbital
    polarisations. ``frequency`` (MHz) is the strength-weighted mean line
    position, with the mean excited-state energy as zero.
    """
    excited = excited if excited is not None else excited_eigensystem(p)
    ground = ground if ground is not None else ground_eigensystem(p)
    v = excited.eig.vectors.reshape(2, 3, 3, -1)
    e = excited.eig.values
    mean = np.mean(e)
    lines = []
    for gi, ms in enumerate(SPIN_VALUES):
        for ei, name in enumerate(ELECTRONIC_STATES):
            members = excited.indices(name)
            s = gi
            sy = np.zeros(3)
            st = np.zeros(3)
            freq = np.zeros(3)
            for ni, mi in enumerate(SPIN_VALUES):
                wy = np.abs(v[1, s, ni, members]) ** 2
                wt = wy + np.abs(v[0, s, ni, members]) ** 2
                sy[ni] = wy.sum()
                st[ni] = wt.sum()
                eg = ground.energy(ms, mi)
                freq[ni] = np.sum(wt * (e[members] - mean - eg)) / max(wt.sum(), 1e-300)
            weight = st if st.sum() > 0 else np.ones(3)
            lines.append(TransitionLine(
                ground_index=gi, excited_index=ei,
                ground_label=f"{ms:+d}" if ms else "0", excited_label=name,
                frequency=float(np.sum(weight * freq) / weight.sum()) / TWO_PI,
                strength=float(sy.mean()), strength_total=float(st.mean()),
            ))
    return lines


def electronic_transition_frequencies(p: ModelParams, h: np.ndarray | None = None) -> dict:
    """Electronic-only line positions (MHz), keyed by (ground m_S, excited name).

    Ground energies are D m_S^2 + g mu_B B_z m_S; the zero is the mean
    excited-state energy. This is the model used for strain fitting. ``h``
    optionally overrides the excited Hamiltonian (6x6 product basis, MHz).
    """
    eig, names = electronic_eigensystem(p, h)
    e = eig.values / TWO_PI
    mean = e.mean()
    out = {}
    for ms in SPIN_VALUES:
        eg = p.D_gs * ms * ms + p.g_par_gs * MU_B * p.B_z * ms
        for j, name in enumerate(names):
            out[(ms, name)] = e[j] - mean - eg
    return out


def orbital_overlap(p: ModelParams, name: str, excited: ExcitedStates | None = None):
    """|<Ey'|name>|^2 averaged over the nuclear triplet of ``name``."""
    excited = excited if excited is not None else excited_eigensystem(p)
    w = orbital_weights(excited.eig.vectors, nuclear=True)
    return float(np.mean([w[1, j] for j in excited.indices(name)]))
