"""Physical parameter set for a driven optical cavity with a damped movable mirror.

All rates are angular frequencies in a common (caller-chosen) unit system.
The drive amplitude is a time-independent complex number; its phase fixes
the global phase of every steady state downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace, fields


def _require_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the cavity-mirror model.

    Attributes
    ----------
    omega_c : float
        Cavity mode angular frequency (> 0).
    omega_m : float
        Mirror angular frequency (> 0).
    g : float
        Optomechanical coupling rate (>= 0; sign conventions are absorbed
        into the phase of the drive).
    gamma1 : float
        Cavity field decay rate (> 0).
    gamma2 : float
        Mirror damping coefficient (> 0).
    drive : complex
        External drive amplitude.
    """

    omega_c: float
    omega_m: float
    g: float
    gamma1: float
    gamma2: float
    drive: complex

    def __post_init__(self):
        _require_positive("omega_c", self.omega_c)
        _require_positive("omega_m", self.omega_m)
        _require_positive("gamma1", self.gamma1)
        _require_positive("gamma2", self.gamma2)
        if not (isinstance(self.g, (int, float)) and math.isfinite(self.g) and self.g >= 0):
            raise ValueError(f"g must be a finite non-negative number, got {self.g!r}")
        d = complex(self.drive)
        if not (math.isfinite(d.real) and math.isfinite(d.imag)):
            raise ValueError(f"drive must be finite, got {self.drive!r}")
        object.__setattr__(self, "drive", d)

    def with_drive_magnitude(self, magnitude: float) -> "ModelParams":
        """Return a copy with |drive| = magnitude, keeping the current phase."""
        if magnitude < 0:
            raise ValueError(f"drive magnitude must be >= 0, got {magnitude}")
        if abs(self.drive) == 0.0:
            new_drive = complex(magnitude, 0.0)
        else:
            new_drive = self.drive / abs(self.drive) * magnitude
        return replace(self, drive=new_drive)


@dataclass(frozen=True)
class GeometryParams:
    """Cavity geometry from which the optomechanical coupling is derived.

    hbar is an explicit field (default 1, natural units) so the unit system
    stays the caller's choice.
    """

    cavity_length: float
    mirror_mass: float
    omega_c: float
    omega_m: float
    hbar: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            _require_positive(f.name, getattr(self, f.name))


def coupling_from_geometry(geo: GeometryParams, use_sqrt: bool = False) -> float:
    """Optomechanical coupling rate from cavity geometry.

    The default form is g = (omega_c / L) * (hbar / (2 m omega_m)).  With
    ``use_sqrt=True`` the zero-point-length form
    g = (omega_c / L) * sqrt(hbar / (2 m omega_m)) is returned instead;
    both are exposed because the two differ only by the square root and the
    literature uses the latter.
    """
    x = geo.hbar / (2.0 * geo.mirror_mass * geo.omega_m)
    if use_sqrt:
        x = math.sqrt(x)
    return (geo.omega_c / geo.cavity_length) * x


@dataclass(frozen=True)
class AdiabaticReport:
    """Advisory check that the mirror decays much faster than the cavity."""

    ratio: float
    threshold: float
    adiabatic_ok: bool


def validate_adiabatic(params: ModelParams, ratio_threshold: float = 10.0) -> AdiabaticReport:
    """Report whether gamma2/gamma1 >= ratio_threshold (boundary inclusive).

    Never rejects: the elimination formulas remain well defined for any
    positive rates, so the flag is advisory only.
    """
    _require_positive("ratio_threshold", ratio_threshold)
    ratio = params.gamma2 / params.gamma1
    return AdiabaticReport(ratio=ratio, threshold=ratio_threshold,
                           adiabatic_ok=ratio >= ratio_threshold)


# --- flat key/value configuration files -------------------------------------

CONFIG_KEYS = ("omega_c", "omega_m", "g", "gamma1", "gamma2", "drive_re", "drive_im")


def parse_config_text(text: str) -> dict:
    """Parse a flat ``key = value`` config (TOML-style keys, numeric values).

    Lines starting with ``#`` and blank lines are ignored; inline comments
    after the value are allowed.  Unknown keys raise ValueError so typos are
    caught rather than silently dropped.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r} "
                             f"(expected one of {', '.join(CONFIG_KEYS)})")
        try:
            out[key] = float(value)
        except ValueError:
            raise ValueError(f"config line {lineno}: value for {key!r} is not a number: {value!r}")
    return out


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def params_from_mapping(mapping: dict) -> ModelParams:
    """Build ModelParams from a flat mapping with drive_re/drive_im keys.

    Raises ValueError naming the first missing required field.
    """
    for key in ("omega_c", "omega_m", "g", "gamma1", "gamma2"):
        if key not in mapping:
            raise ValueError(f"missing required parameter: {key}")
    drive = complex(mapping.get("drive_re", 0.0), mapping.get("drive_im", 0.0))
    return ModelParams(
        omega_c=float(mapping["omega_c"]),
        omega_m=float(mapping["omega_m"]),
        g=float(mapping["g"]),
        gamma1=float(mapping["gamma1"]),
        gamma2=float(mapping["gamma2"]),
        drive=drive,
    )
