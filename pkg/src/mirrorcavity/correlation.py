"""Zero-delay second-order correlation g2(0) and antibunching classification.

Two analytic routes are computed side by side:

* the covariance route, a second-order expansion of
  <a+ a+ a a> / <a+ a>^2 in the fluctuations, with a selectable coefficient
  on the mixed moment ("paper" keeps the literal coefficient 4, "corrected"
  uses the coefficient 2 that a consistent expansion of numerator and
  denominator yields);
* an explicit closed-form expression in the model parameters, reproduced
  literally and reported alongside, never used for the antibunching flag.

The Monte Carlo engine makes no expansion at all and arbitrates between the
two in the verification report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fluctuations import CovarianceMatrix, covariance_for_branch, MarginalStabilityError
from .model import ModelParams
from .reduced import SteadyState, cavity_steady_states, effective_coupling
from .stability import AxisSpec, SpectrumReport, apply_axis_value, classify

MODES = ("paper", "corrected")
VACUUM_N_TOL = 1e-12


class SingularDenominatorError(ArithmeticError):
    """The closed-form g2 denominator vanishes at these parameters."""


def g2_from_covariance(C: CovarianceMatrix, steady: SteadyState,
                       mode: str = "paper") -> float:
    """g2(0) from the stationary covariance around a stable fixed point.

    mode "paper":      1 + Re[C11/a0^2 + C22/(a0+)^2 + 4 C21 / n]
    mode "corrected":  same with coefficient 2 on the mixed moment.

    The bracket must come out real on the physical manifold; a significant
    imaginary residue indicates an off-manifold covariance and raises.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    n = steady.n
    if n <= VACUUM_N_TOL:
        raise ValueError(f"g2 is undefined at vacuum occupation (n = {n})")
    coeff = 4.0 if mode == "paper" else 2.0
    a0sq = steady.alpha0 ** 2
    a0psq = steady.alpha0_plus ** 2
    bracket = C.c11 / a0sq + C.c22 / a0psq + coeff * C.c21 / n
    if abs(bracket.imag) > 1e-9 * max(1.0, abs(bracket.real)):
        raise ValueError(
            f"covariance bracket has imaginary residue {bracket.imag:.3e}; "
            "the covariance is off the physical manifold")
    return 1.0 + bracket.real


@dataclass(frozen=True)
class G2ClosedForm:
    g2: float
    excess_term: float


def g2_closed_form(params: ModelParams, steady: SteadyState) -> G2ClosedForm:
    """g2(0) by the explicit closed-form expression in (G, n, rates).

    g2 = 1 + G [ (wc - 2nG)(2 n g2 wc - n^2 g2 G - g1 wm)
                 + n (g1^2 g2 + n^2 G^2 g2 - 2 g1 wm G n) ]
           / { n g1 wm [ g1^2 - (wc + 5nG)(wc - nG) ] }

    Reproduced literally; its deviation from the covariance route is a
    reported quantity, not reconciled here.
    """
    n = steady.n
    if n <= VACUUM_N_TOL:
        raise ValueError(f"closed-form g2 is undefined at vacuum occupation (n = {n})")
    G = effective_coupling(params)
    wc, wm = params.omega_c, params.omega_m
    g1, g2r = params.gamma1, params.gamma2
    bracket = g1**2 - (wc + 5.0 * n * G) * (wc - n * G)
    den = n * g1 * wm * bracket
    num = G * ((wc - 2.0 * n * G) * (2.0 * n * g2r * wc - n**2 * g2r * G - g1 * wm)
               + n * (g1**2 * g2r + n**2 * G**2 * g2r - 2.0 * g1 * wm * G * n))
    scale = n * g1 * wm * max(g1**2, abs(wc + 5.0 * n * G) * abs(wc - n * G), 1e-300)
    if abs(den) <= 1e-13 * scale:
        raise SingularDenominatorError(
            f"closed-form denominator vanishes: n*gamma1*omega_m*[{bracket:.6e}] = {den:.3e}")
    excess = num / den
    return G2ClosedForm(g2=1.0 + excess, excess_term=excess)


def closed_form_numerator(params: ModelParams, n: float) -> float:
    """Numerator of the closed-form excess term as a polynomial in n (for audits)."""
    G = effective_coupling(params)
    wc, wm = params.omega_c, params.omega_m
    g1, g2r = params.gamma1, params.gamma2
    return G * ((wc - 2.0 * n * G) * (2.0 * n * g2r * wc - n**2 * g2r * G - g1 * wm)
                + n * (g1**2 * g2r + n**2 * G**2 * g2r - 2.0 * g1 * wm * G * n))


@dataclass(frozen=True)
class G2Report:
    """Photon statistics of one steady branch.

    ``status`` is "ok" for a stable driven branch, "unstable" when the
    branch fails linear stability (g2 fields are NaN), and "vacuum" when
    n = 0 so that g2 is undefined.  The antibunching flag always comes from
    the covariance route at the report's mode.
    """

    branch_id: int
    n: float
    stable: bool
    status: str
    spectrum: SpectrumReport
    mode: str
    g2_cov_paper: float
    g2_cov_corrected: float
    g2_eq_closed: float
    excess_term: float
    antibunched: bool

    @property
    def g2_covariance(self) -> float:
        return self.g2_cov_paper if self.mode == "paper" else self.g2_cov_corrected

    @property
    def g2_closed_form(self) -> float:
        return self.g2_eq_closed


def classify_antibunching(params: ModelParams, mode: str = "paper") -> list[G2Report]:
    """Full pipeline for every steady branch: stability, covariance, both g2 routes.

    Unstable branches are listed with status "unstable" rather than dropped;
    the vacuum branch (n = 0) is marked "vacuum" with undefined g2.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    reports = []
    nan = float("nan")
    for steady in cavity_steady_states(params):
        spec = classify(steady, params)
        if steady.n <= VACUUM_N_TOL:
            reports.append(G2Report(
                branch_id=steady.branch_id, n=steady.n, stable=spec.stable,
                status="vacuum", spectrum=spec, mode=mode,
                g2_cov_paper=nan, g2_cov_corrected=nan, g2_eq_closed=nan,
                excess_term=nan, antibunched=False))
            continue
        if not spec.stable:
            reports.append(G2Report(
                branch_id=steady.branch_id, n=steady.n, stable=False,
                status="unstable", spectrum=spec, mode=mode,
                g2_cov_paper=nan, g2_cov_corrected=nan, g2_eq_closed=nan,
                excess_term=nan, antibunched=False))
            continue
        C = covariance_for_branch(steady, params)
        paper = g2_from_covariance(C, steady, mode="paper")
        corrected = g2_from_covariance(C, steady, mode="corrected")
        try:
            closed = g2_closed_form(params, steady)
            g2_cf, excess = closed.g2, closed.excess_term
        except SingularDenominatorError:
            g2_cf, excess = nan, nan
        selected = paper if mode == "paper" else corrected
        reports.append(G2Report(
            branch_id=steady.branch_id, n=steady.n, stable=True, status="ok",
            spectrum=spec, mode=mode,
            g2_cov_paper=paper, g2_cov_corrected=corrected,
            g2_eq_closed=g2_cf, excess_term=excess,
            antibunched=selected < 1.0))
    return reports


@dataclass(frozen=True)
class G2SweepRow:
    axis_value: float
    report: G2Report


def g2_sweep(params_base: ModelParams, axis: AxisSpec,
             mode: str = "paper") -> list[G2SweepRow]:
    """classify_antibunching along one parameter axis, one row per branch."""
    rows = []
    for v in axis.values:
        p = apply_axis_value(params_base, axis.field, float(v))
        for rep in classify_antibunching(p, mode=mode):
            rows.append(G2SweepRow(axis_value=float(v), report=rep))
    return rows


G2_SWEEP_COLUMNS = ("axis_value", "branch_id", "n", "stable", "g2_cov_paper",
                    "g2_cov_corrected", "g2_eq26", "excess_term", "antibunched")


def g2_sweep_record(row: G2SweepRow) -> tuple:
    r = row.report
    return (row.axis_value, r.branch_id, r.n, int(r.stable), r.g2_cov_paper,
            r.g2_cov_corrected, r.g2_eq_closed, r.excess_term, int(r.antibunched))
