import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import random_params, strong_family
from mirrorcavity.model import ModelParams
from mirrorcavity.reduced import cavity_steady_states, drift_matrix, drive_for_occupation
from mirrorcavity.stability import (AxisSpec,apply_axis_value, classify,
                                    discriminant_derived, eigenvalues,
                                    eigenvalues_closed_form, stability_map,
                                    stability_map_record)


def conj_symmetric_drift(gamma1, b, z):
    """Drift matrix with the conjugation-symmetric structure."""
    return np.array([[gamma1 + 1j * b, -1j * z], [np.conj(-1j * z), gamma1 - 1j * b]])


class TestEigenvalues:
    def test_diagonal(self):
        l1, l2 = eigenvalues(np.diag([0.5 + 1.2j, 0.5 - 1.2j]))
        assert l1 == pytest.approx(0.5 + 1.2j, rel=1e-14)
        assert l2 == pytest.approx(0.5 - 1.2j, rel=1e-14)

    def test_identity_double_root(self):
        l1, l2 = eigenvalues(np.eye(2))
        assert l1 == 1.0 and l2 == 1.0

    def test_characteristic_residual(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            norm = np.linalg.norm(A)
            for lam in eigenvalues(A):
                resid = abs(np.linalg.det(A - lam * np.eye(2)))
                assert resid <= 1e-10 * max(norm, 1.0) ** 2

    def test_conj_symmetric_real_or_conjugate_pair(self):
        rng = np.random.default_rng(37)
        for _ in range(200):
            A = conj_symmetric_drift(rng.uniform(0.05, 2.0), rng.uniform(-3, 3),
                                     rng.normal() + 1j * rng.normal())
            l1, l2 = eigenvalues(A)
            both_real = abs(l1.imag) <= 1e-12 and abs(l2.imag) <= 1e-12
            conj_pair = abs(l1 - np.conj(l2)) <= 1e-12 * max(1.0, abs(l1))
            assert both_real or conj_pair

    def test_closed_form_cross_check(self):
        # gamma1 +/- sqrt((3Gn - wc)(wc - Gn)) against the numeric spectrum
        rng = np.random.default_rng(41)
        for _ in range(200):
            p = random_params(rng)
            n = rng.uniform(0.0, 10.0)
            phase = np.exp(2j * rng.uniform(0, np.pi))
            from mirrorcavity.reduced import effective_coupling
            G = effective_coupling(p)
            b = p.omega_c - 2 * G * n
            A = conj_symmetric_drift(p.gamma1, b, G * n * phase)
            lam_num = eigenvalues(A)
            lam_cf = eigenvalues_closed_form(p, n)
            scale = max(abs(lam_num[0]), 1.0)
            assert abs(lam_num[0] - lam_cf[0]) <= 1e-12 * scale
            assert abs(lam_num[1] - lam_cf[1]) <= 1e-12 * scale


class TestClassify:
    def test_linear_cavity_stable_with_gamma_margin(self):
        p = ModelParams(1.0, 1.0, 0.0, 0.7, 5.0, 1.0)
        st = cavity_steady_states(p)[0]
        rep = classify(st, p)
        assert rep.stable and rep.margin == pytest.approx(0.7, rel=1e-13)

    def test_real_discriminant_unstable(self):
        # inside the band Gn < wc < 3Gn with gamma1 < sqrt((3Gn-wc)(wc-Gn))
        base = strong_family(1.0)
        n_mid = 2.0 * base.omega_c / (3 * 0.009)  # discriminant maximum
        p = strong_family(drive_for_occupation(base, n_mid))
        st = [s for s in cavity_steady_states(p)
              if abs(s.n - n_mid) < 1e-6 * n_mid][0]
        disc = discriminant_derived(p, st.n)
        assert disc > p.gamma1**2
        rep = classify(st, p)
        assert not rep.stable
        assert rep.margin == pytest.approx(p.gamma1 - np.sqrt(disc), rel=1e-10)

    def test_imaginary_discriminant_stable_margin_gamma(self):
        base = strong_family(1.0)
        n_low = 0.2 * base.omega_c / (3 * 0.009)  # below the band
        p = strong_family(drive_for_occupation(base, n_low))
        st = [s for s in cavity_steady_states(p)
              if abs(s.n - n_low) < 1e-6 * n_low][0]
        assert discriminant_derived(p, st.n) < 0
        rep = classify(st, p)
        assert rep.stable and rep.margin == pytest.approx(p.gamma1, rel=1e-12)

    def test_stable_iff_linearized_dynamics_decay(self):
        # direct noiseless integration of d(delta)/dt = -A delta over T = 10/|margin|
        rng = np.random.default_rng(43)
        checked = 0
        while checked < 200:
            p = random_params(rng)
            for st in cavity_steady_states(p):
                rep = classify(st, p)
                if abs(rep.margin) < 2e-2:
                    continue  # nearly marginal: both verdicts ill-conditioned
                A = drift_matrix(st, p)
                T = min(10.0 / abs(rep.margin), 500.0)
                v0 = rng.normal(size=2) + 1j * rng.normal(size=2)

                def rhs(t, y):
                    v = y[:2] + 1j * y[2:]
                    dv = -A @ v
                    return np.concatenate([dv.real, dv.imag])

                sol = solve_ivp(rhs, (0.0, T), np.concatenate([v0.real, v0.imag]),
                                rtol=1e-9, atol=1e-12)
                vT = sol.y[:2, -1] + 1j * sol.y[2:, -1]
                decayed = np.linalg.norm(vT) <= np.linalg.norm(v0)
                assert rep.stable == decayed, (p, st.n, rep, np.linalg.norm(vT))
                checked += 1


class TestAxisSpec:
    def test_rejects_unknown_field(self):
        with pytest.raises(ValueError, match="cannot sweep"):
            AxisSpec.linspace("hbar", 0, 1, 3)

    def test_rejects_non_monotone(self):
        with pytest.raises(ValueError, match="monotone"):
            AxisSpec(field="g", values=np.array([0.0, 1.0, 0.5]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            AxisSpec(field="g", values=np.array([0.0, np.inf]))

    def test_apply_drive_abs_keeps_phase(self):
        p = ModelParams(1.0, 1.0, 0.1, 0.5, 5.0, 1.0 + 1.0j)
        q = apply_axis_value(p, "drive_abs", 2.0)
        assert abs(q.drive) == pytest.approx(2.0, rel=1e-14)
        assert np.angle(q.drive) == pytest.approx(np.pi / 4, rel=1e-12)


class TestStabilityMap:
    def test_degenerate_grid_matches_classify(self):
        p = strong_family(0.7)
        rows = stability_map(p, AxisSpec.linspace("drive_abs", 0.7, 0.7, 1),
                             AxisSpec.linspace("g", 0.3, 0.3, 1))
        states = cavity_steady_states(p)
        assert len(rows) == len(states)
        for row, st in zip(rows, states):
            direct = classify(st, p)
            assert row.report.lambda1 == direct.lambda1
            assert row.report.stable == direct.stable

    def test_zero_coupling_sweep_uniformly_stable(self):
        p = ModelParams(1.0, 1.0, 0.0, 0.5, 5.0, 1.0)
        rows = stability_map(p, AxisSpec.linspace("drive_abs", 0.1, 3.0, 7),
                             AxisSpec.linspace("omega_c", 0.5, 2.0, 5))
        assert len(rows) == 35
        assert all(r.report.stable for r in rows)

    def test_bistable_sweep_contiguous_with_unstable_middle(self):
        p = strong_family(1.0)
        axis1 = AxisSpec.linspace("drive_abs", 0.5, 4.5, 33)
        rows = stability_map(p, axis1, AxisSpec.linspace("g", 0.3, 0.3, 1))
        by_value: dict = {}
        for r in rows:
            by_value.setdefault(r.axis1_value, []).append(r)
        multiplicities = [len(by_value[v]) for v in axis1.values]
        tri = [m == 3 for m in multiplicities]
        assert any(tri)
        first, last = tri.index(True), len(tri) - 1 - tri[::-1].index(True)
        assert all(tri[first:last + 1]), "three-branch region is not contiguous"
        for v in axis1.values[first:last + 1]:
            middle = sorted(by_value[v], key=lambda r: r.n)[1]
            assert not middle.report.stable

    def test_record_layout(self):
        p = strong_family(0.7)
        rows = stability_map(p, AxisSpec.linspace("drive_abs", 0.7, 0.7, 1),
                             AxisSpec.linspace("g", 0.3, 0.3, 1))
        rec = stability_map_record(rows[0])
        assert len(rec) == 9 and rec[8] in (0, 1)
