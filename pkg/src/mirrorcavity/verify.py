"""Cross-validation report: every analytic formula against an independent route.

The report compares, on a given parameter point:

* the closed-form stationary covariance against the Lyapunov solver on an
  ensemble of random stable matrices (tolerance 1e-9, pass/fail),
* the explicit covariance element formulas against the Lyapunov-validated
  covariance (reported, no tolerance: they are a reproduction under audit),
* the closed-form g2 against both covariance-route variants (reported),
* the Monte Carlo g2 against the covariance route (z-score against the
  corrected variant, 3 standard errors),
* both signs of the stability radical against the numeric spectrum.

Deviations are data: only the covariance closed form carries an assertion,
because only it has an independent oracle with a sharp tolerance.
"""

from __future__ import annotations

import math

import numpy as np

from .correlation import g2_closed_form, g2_from_covariance
from .fluctuations import (MarginalStabilityError, _random_stable_pair,
                           covariance_for_branch, lyapunov_residual, lyapunov_solve,
                           _closed_form_raw)
from .model import ModelParams
from .reduced import cavity_steady_states
from .sde import IntegratorConfig, simulate
from .stability import classify, discriminant_derived, discriminant_printed, eigenvalues_closed_form

SCHEMA_VERSION = 1
CLOSED_FORM_TOL = 1e-9
MC_TOL_SE = 3.0


def closed_form_vs_lyapunov(n_pairs: int = 1000, seed: int = 0x51AB) -> dict:
    """Max elementwise relative deviation of the closed form from the solver,
    and the worst Lyapunov residual, over random stable pairs."""
    rng = np.random.default_rng(seed)
    max_dev = 0.0
    max_resid = 0.0
    for _ in range(n_pairs):
        A, D = _random_stable_pair(rng)
        fast = _closed_form_raw(A, D).as_matrix()
        slow = lyapunov_solve(A, D).as_matrix()
        scale = max(float(np.max(np.abs(slow))), 1e-300)
        max_dev = max(max_dev, float(np.max(np.abs(fast - slow))) / scale)
        dnorm = float(np.linalg.norm(D))
        max_resid = max(max_resid, lyapunov_residual(A, slow, D) / max(dnorm, 1e-300))
    return {
        "n_pairs": n_pairs,
        "max_rel_dev": max_dev,
        "max_lyapunov_residual_rel": max_resid,
        "tolerance": CLOSED_FORM_TOL,
        "pass": max_dev <= CLOSED_FORM_TOL,
    }


def _pick_branch(params: ModelParams, branch_id: int | None):
    states = cavity_steady_states(params)
    if branch_id is not None:
        matches = [s for s in states if s.branch_id == branch_id]
        if not matches:
            raise ValueError(f"branch_id {branch_id} does not exist")
        return matches[0]
    stable = [s for s in states if classify(s, params).stable and s.n > 0]
    return stable[0] if stable else states[0]


def verification_report(params: ModelParams, *, n_pairs: int = 1000,
                        pair_seed: int = 0x51AB, branch_id: int | None = None,
                        mc_config: IntegratorConfig | None = None,
                        include_mc: bool = True) -> dict:
    """Assemble the full cross-validation report for one parameter point."""
    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "parameters": {
            "omega_c": params.omega_c, "omega_m": params.omega_m, "g": params.g,
            "gamma1": params.gamma1, "gamma2": params.gamma2,
            "drive_re": params.drive.real, "drive_im": params.drive.imag,
        },
        "closed_form_vs_lyapunov": closed_form_vs_lyapunov(n_pairs, pair_seed),
    }

    steady = _pick_branch(params, branch_id)
    spectrum = classify(steady, params)
    report["branch"] = {"branch_id": steady.branch_id, "n": steady.n,
                        "stable": spectrum.stable, "margin": spectrum.margin}

    # stability radical, both signs, against the numeric spectrum
    l_derived = eigenvalues_closed_form(params, steady.n, printed_variant=False)
    l_printed = eigenvalues_closed_form(params, steady.n, printed_variant=True)
    l_numeric = (spectrum.lambda1, spectrum.lambda2)

    def _pairdev(pair):
        return max(abs(pair[0] - l_numeric[0]), abs(pair[1] - l_numeric[1]))

    scale = max(abs(l_numeric[0]), abs(l_numeric[1]), 1e-300)
    report["stability_radical"] = {
        "discriminant_derived": discriminant_derived(params, steady.n),
        "discriminant_printed": discriminant_printed(params, steady.n),
        "derived_matches_spectrum": bool(_pairdev(l_derived) <= 1e-9 * scale),
        "printed_matches_spectrum": bool(_pairdev(l_printed) <= 1e-9 * scale),
    }

    if steady.n > 0 and spectrum.stable:
        from .fluctuations import covariance_paper_elements

        try:
            pe = covariance_paper_elements(params, steady)
            report["eq24_vs_lyapunov"] = {
                "dev_c11": pe.dev_c11, "dev_c12": pe.dev_c12,
                "max_rel_dev": max(pe.dev_c11, pe.dev_c12),
                "tolerance": None, "pass": None,
            }
        except MarginalStabilityError as exc:
            report["eq24_vs_lyapunov"] = {"error": str(exc)}

        C = covariance_for_branch(steady, params)
        g2_paper = g2_from_covariance(C, steady, "paper")
        g2_corr = g2_from_covariance(C, steady, "corrected")
        entry = {"g2_cov_paper": g2_paper, "g2_cov_corrected": g2_corr,
                 "tolerance": None, "pass": None}
        try:
            cf = g2_closed_form(params, steady)
            entry.update({
                "g2_eq26": cf.g2, "excess_term": cf.excess_term,
                "dev_vs_paper": abs(cf.g2 - g2_paper),
                "dev_vs_corrected": abs(cf.g2 - g2_corr),
            })
        except ArithmeticError as exc:
            entry["error"] = str(exc)
        report["eq26_vs_eq21"] = entry

        if include_mc:
            cfg = mc_config or IntegratorConfig(dt=1e-4, t_end=6.0, n_traj=4000,
                                                seed=0xAC, branch_id=steady.branch_id)
            stats = simulate(params, cfg, system="reduced")
            dev = abs(stats.g2_estimate - g2_corr)
            z = dev / stats.g2_se if stats.g2_se > 0 else (0.0 if dev == 0.0 else math.inf)
            report["mc_vs_analytic"] = {
                "g2_mc": stats.g2_estimate, "g2_mc_se": stats.g2_se,
                "g2_cov_corrected": g2_corr,
                "dev": dev, "z_score": z,
                "discard_fraction": stats.discard_fraction,
                "tolerance_se": MC_TOL_SE,
                "pass": bool(z <= MC_TOL_SE),
                "config": cfg.to_dict(),
            }
    else:
        report["eq24_vs_lyapunov"] = {"skipped": "branch is unstable or vacuum"}
        report["eq26_vs_eq21"] = {"skipped": "branch is unstable or vacuum"}

    return report
