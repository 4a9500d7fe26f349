"""Linear stability of the cavity fixed points and stability maps over grids.

With the e^{-lambda t} ansatz for d(delta)/dt = -A delta, a fixed point is
stable exactly when both eigenvalues of A have positive real part.  Marginal
eigenvalues (Re lambda = 0) are classified unstable because the stationary
covariance diverges there.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelParams
from .reduced import SteadyState, cavity_steady_states, drift_matrix, effective_coupling

SWEEPABLE_FIELDS = ("omega_c", "omega_m", "g", "gamma1", "gamma2",
                    "drive_re", "drive_im", "drive_abs")


def _ordered(l1: complex, l2: complex) -> tuple[complex, complex]:
    """Descending real part; near-ties (conjugate pairs up to rounding) are
    ordered by descending imaginary part instead."""
    scale = max(abs(l1), abs(l2), 1e-300)
    if abs(l1.real - l2.real) <= 1e-9 * scale:
        return (l1, l2) if l1.imag >= l2.imag else (l2, l1)
    return (l1, l2) if l1.real > l2.real else (l2, l1)


def eigenvalues(A: np.ndarray) -> tuple[complex, complex]:
    """Both roots of det(A - lambda I) = 0, ordered by descending real part.

    Uses the quadratic formula with the larger root computed first and the
    smaller recovered from the product, which avoids cancellation.
    """
    A = np.asarray(A, dtype=complex)
    tr = complex(A[0, 0] + A[1, 1])
    det = complex(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    sq = cmath.sqrt(tr * tr - 4.0 * det)
    if abs(tr + sq) >= abs(tr - sq):
        l1 = 0.5 * (tr + sq)
    else:
        l1 = 0.5 * (tr - sq)
    if l1 == 0:
        l2 = tr  # both roots vanish only when tr = det = 0
    else:
        l2 = det / l1
    return _ordered(l1, l2)


def discriminant_derived(params: ModelParams, n: float) -> float:
    """(3 G n - omega_c)(omega_c - G n): eigenvalues are gamma1 +/- sqrt of this."""
    G = effective_coupling(params)
    return (3.0 * G * n - params.omega_c) * (params.omega_c - G * n)


def discriminant_printed(params: ModelParams, n: float) -> float:
    """(omega_c - 3 G n)(omega_c - G n): the sign-flipped variant, kept as a diagnostic."""
    G = effective_coupling(params)
    return (params.omega_c - 3.0 * G * n) * (params.omega_c - G * n)


def eigenvalues_closed_form(params: ModelParams, n: float,
                            printed_variant: bool = False) -> tuple[complex, complex]:
    """gamma1 +/- sqrt(discriminant) for a conjugation-symmetric drift matrix.

    Classification never uses this form; the numeric spectrum of A is the
    authority.  The printed variant differs by the sign inside the radical
    and is exposed only so the disagreement can be reported.
    """
    disc = discriminant_printed(params, n) if printed_variant else discriminant_derived(params, n)
    sq = cmath.sqrt(complex(disc))
    return _ordered(params.gamma1 + sq, params.gamma1 - sq)


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of the relaxation matrix and the resulting stability verdict."""

    lambda1: complex
    lambda2: complex
    stable: bool
    margin: float


def classify(steady: SteadyState, params: ModelParams) -> SpectrumReport:
    """Classify a fixed point from the numeric spectrum of its drift matrix."""
    A = drift_matrix(steady, params)
    l1, l2 = eigenvalues(A)
    margin = min(l1.real, l2.real)
    return SpectrumReport(lambda1=l1, lambda2=l2, stable=margin > 0.0, margin=margin)


@dataclass(frozen=True)
class AxisSpec:
    """A finite monotone grid over one sweepable parameter.

    ``field`` is a ModelParams field name, or ``drive_abs`` for the drive
    magnitude (phase preserved), or drive_re/drive_im for its components.
    """

    field: str
    values: np.ndarray

    def __post_init__(self):
        if self.field not in SWEEPABLE_FIELDS:
            raise ValueError(f"cannot sweep over {self.field!r}; "
                             f"choose one of {', '.join(SWEEPABLE_FIELDS)}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("axis values must be a non-empty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"axis over {self.field!r} contains non-finite values")
        if values.size > 1:
            diffs = np.diff(values)
            if not (np.all(diffs > 0) or np.all(diffs < 0)):
                raise ValueError(f"axis over {self.field!r} must be strictly monotone")
        object.__setattr__(self, "values", values)

    @classmethod
    def linspace(cls, field: str, start: float, stop: float, num: int) -> "AxisSpec":
        if num < 1:
            raise ValueError("axis needs at least one point")
        return cls(field=field, values=np.linspace(start, stop, num))


def apply_axis_value(params: ModelParams, field: str, value: float) -> ModelParams:
    if field == "drive_abs":
        return params.with_drive_magnitude(value)
    if field == "drive_re":
        return replace(params, drive=complex(value, params.drive.imag))
    if field == "drive_im":
        return replace(params, drive=complex(params.drive.real, value))
    return replace(params, **{field: value})


@dataclass(frozen=True)
class StabilityMapRow:
    """One classified branch at one grid point of a stability map."""

    axis1_value: float
    axis2_value: float
    branch_id: int
    n: float
    report: SpectrumReport
    n_branches: int


def stability_map(params_base: ModelParams, axis1: AxisSpec,
                  axis2: AxisSpec) -> list[StabilityMapRow]:
    """Classify every steady branch over a 2-d parameter grid, row-major order."""
    rows: list[StabilityMapRow] = []
    for v1 in axis1.values:
        p1 = apply_axis_value(params_base, axis1.field, float(v1))
        for v2 in axis2.values:
            p = apply_axis_value(p1, axis2.field, float(v2))
            branches = cavity_steady_states(p)
            for st in branches:
                rows.append(StabilityMapRow(
                    axis1_value=float(v1), axis2_value=float(v2),
                    branch_id=st.branch_id, n=st.n,
                    report=classify(st, p), n_branches=len(branches)))
    return rows


STABILITY_MAP_COLUMNS = ("axis1", "axis2", "branch_id", "n",
                         "re_l1", "im_l1", "re_l2", "im_l2", "stable")


def stability_map_record(row: StabilityMapRow) -> tuple:
    r = row.report
    return (row.axis1_value, row.axis2_value, row.branch_id, row.n,
            r.lambda1.real, r.lambda1.imag, r.lambda2.real, r.lambda2.imag,
            int(r.stable))
