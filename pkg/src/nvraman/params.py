"""Physical constants and the :class:`ModelParams` container.

All frequencies in a parameter file are ordinary frequencies in MHz, fields in
gauss, angles in radians. Hamiltonian builders convert to angular frequency
(rad/us) at a single place, :data:`TWO_PI`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

TWO_PI = 2.0 * math.pi

# Bohr magneton / h in MHz per gauss
MU_B = 1.39962449361


class ConfigError(ValueError):
    """Invalid or malformed configuration."""


@dataclass(frozen=True)
class ModelParams:
    """Model parameters for the NV centre ground and excited states.

    Units: g-factors dimensionless; fields in G; ``phi`` in rad;
    ``gamma_n`` in kHz/G; everything else in MHz (ordinary frequency).

    The spin-spin interaction is split into its axial part ``ss_axial``
    (m_S = 0 vs |m_S| = 1), the A1/A2 splitting term ``ss_perp`` and the
    Delta m_S = 1 term ``lambda_ss`` that couples Ey with E1 and Ex with E2.
    ``lambda_so`` multiplies ``-L_z S_z``. ``lambda_Z``, when set, replaces
    the geometric transverse field by an E_y-E_1 transverse Zeeman coupling
    of that (signed) strength.
    """

    g_par_gs: float = 2.0028
    g_par_es: float = 2.15
    g_orb: float = 0.10
    B_z: float = 383.5
    B_perp: float = 0.0
    phi: float = 0.0
    strain_delta: float = 5500.0
    lambda_so: float = 5330.0
    ss_axial: float = 1460.0
    ss_perp: float = 1550.0
    lambda_ss: float = 154.0
    A_par_es: float = 40.0
    A_perp_es: float = 23.0
    A_par_gs: float = -2.151
    A_perp_gs: float = 0.0
    P_quad: float = -4.942
    gamma_n: float = 0.3077
    D_gs: float = 2870.0
    gamma_rad: float = 13.0
    gamma_phonon: float = 4.1
    isc_A1: float = 16.0
    isc_E12: float = 7.2
    lambda_Z: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None and f.name == "lambda_Z":
                continue
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{f.name} must be a finite number, got {value!r}")
        if min(self.g_par_gs, self.g_par_es, self.g_orb) <= 0:
            raise ConfigError("g-factors must be positive")
        if self.gamma_rad <= 0:
            raise ConfigError("gamma_rad must be positive")
        if abs(self.A_perp_es) > abs(self.A_par_es):
            raise ConfigError("|A_perp_es| must not exceed |A_par_es|")
        if self.B_z < 0:
            raise ConfigError("B_z must be non-negative")
        if self.strain_delta < 0:
            raise ConfigError("strain_delta must be non-negative")
        if min(self.gamma_phonon, self.isc_A1, self.isc_E12, self.B_perp) < 0:
            raise ConfigError("rates and B_perp must be non-negative")

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_angles(cls, B: float, theta: float, phi: float, **kw) -> "ModelParams":
        """Field of magnitude ``B`` at polar angle ``theta`` from the NV axis."""
        return cls(B_z=B * math.cos(theta), B_perp=B * math.sin(theta), phi=phi, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "lambda_Z" and raw.lower() in ("", "none"):
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as a number") from None


def parse_params(text: str) -> ModelParams:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(ModelParams)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return ModelParams(**values)


def load_params(path) -> ModelParams:
    return parse_params(Path(path).read_text())


def dump_params(p: ModelParams) -> str:
    lines = []
    for key, value in p.to_dict().items():
        lines.append(f"{key} = {'none' if value is None else repr(float(value))}")
    return "\n".join(lines) + "\n"
