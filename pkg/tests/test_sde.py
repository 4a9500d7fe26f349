import math

import numpy as np
import pytest

from conftest import mc_benchmark, strong_family, strong_family_at
from mirrorcavity._engine import normals_for_trajectory
from mirrorcavity.fluctuations import covariance_for_branch
from mirrorcavity.model import ModelParams
from mirrorcavity.reduced import (cavity_steady_states, mirror_steady_amplitudes,
                                  reduced_drift)
from mirrorcavity.sde import (EnsembleStats, FullState, IntegratorConfig,
                              SimulationQualityError, UndefinedEstimateError,
                              estimate_g2, full_diffusion_matrix, full_drift,
                              full_noise_factor, integrate_paths,
                              linearized_real_covariance, read_trace_file,
                              reduced_diffusion_matrix, reduced_drift_and_noise,
                              simulate, write_trace_file)


def linear_cavity(drive=0.8 + 0.3j):
    return ModelParams(omega_c=1.0, omega_m=10.0, g=0.0, gamma1=0.5, gamma2=10.0,
                       drive=drive)


class TestFullDrift:
    def test_vacuum_without_drive_is_fixed(self):
        p = strong_family(0.0)
        assert not np.any(full_drift(np.zeros(4, dtype=complex), p))

    def test_vacuum_with_drive_only_feeds_the_field(self):
        p = strong_family(0.7j)
        d = full_drift(np.zeros(4, dtype=complex), p)
        assert d[0] == 0.7j and d[1] == -0.7j
        assert d[2] == 0 and d[3] == 0

    def test_mirror_pair_vanishes_at_slaved_amplitudes(self):
        rng = np.random.default_rng(71)
        p = strong_family(0.5)
        for _ in range(20):
            a1 = rng.normal() + 1j * rng.normal()
            a1p = rng.normal() + 1j * rng.normal()
            a2, a2p = mirror_steady_amplitudes(a1, a1p, p)
            d = full_drift(np.array([a1, a1p, a2, a2p]), p)
            assert abs(d[2]) <= 1e-13 * max(1.0, abs(a1 * a1p))
            assert abs(d[3]) <= 1e-13 * max(1.0, abs(a1 * a1p))

    def test_reduced_fixed_point_is_exact_full_fixed_point(self):
        # the eliminated drift is exact for fixed points at any damping ratio
        for n in (0.05, 0.5, 4.0):
            p = strong_family_at(n)
            st = [s for s in cavity_steady_states(p) if abs(s.n - n) < 1e-6 * n][0]
            a2, a2p = mirror_steady_amplitudes(st.alpha0, st.alpha0_plus, p)
            state = FullState(st.alpha0, st.alpha0_plus, a2, a2p)
            d = full_drift(state, p)
            assert np.max(np.abs(d)) <= 1e-12 * max(1.0, abs(p.drive))


class TestFullNoiseFactor:
    def test_vacuum_gives_zero(self):
        p = strong_family(0.5)
        assert not np.any(full_noise_factor(np.zeros(4, dtype=complex), p))

    def test_unit_block_reconstruction(self):
        p = ModelParams(1.0, 1.0, 1.0, 0.5, 1.0, 0.0)
        state = np.array([1.0 + 0j, 0j, 0j, 0j])
        B = full_noise_factor(state, p)
        R = B @ B.T
        assert R[0, 2] == pytest.approx(1j, rel=1e-14)
        assert R[2, 0] == pytest.approx(1j, rel=1e-14)
        R[0, 2] = R[2, 0] = 0
        assert np.max(np.abs(R)) <= 1e-14

    def test_reconstruction_residual_random_states(self):
        rng = np.random.default_rng(73)
        p = strong_family(0.5)
        for _ in range(100):
            state = rng.normal(size=4) + 1j * rng.normal(size=4)
            B = full_noise_factor(state, p)
            D = full_diffusion_matrix(state, p)
            scale = 1.0 + np.max(np.abs(D))
            assert np.max(np.abs(B @ B.T - D)) <= 1e-12 * scale

    def test_diffusion_sparsity(self):
        p = strong_family(0.5)
        state = np.array([0.3 + 0.1j, 0.2 - 0.4j, 0.5j, 1.0 + 0j])
        D = full_diffusion_matrix(state, p)
        assert D[0, 2] == pytest.approx(1j * p.g * state[0], rel=1e-14)
        assert D[1, 3] == pytest.approx(-1j * p.g * state[1], rel=1e-14)
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 2] = mask[2, 0] = mask[1, 3] = mask[3, 1] = False
        assert not np.any(D[mask])


class TestReducedNoise:
    def test_zero_coupling_deterministic(self):
        p = linear_cavity()
        drift, B = reduced_drift_and_noise((0.4 + 0.1j, 0.4 - 0.1j), p)
        assert not np.any(B)
        d1, d2 = reduced_drift(0.4 + 0.1j, 0.4 - 0.1j, p)
        assert drift[0] == d1 and drift[1] == d2

    def test_manifold_structure(self):
        p = strong_family(0.5)
        a = 0.3 - 0.7j
        D = reduced_diffusion_matrix((a, np.conj(a)), p)
        assert D[1, 1] == pytest.approx(np.conj(D[0, 0]), rel=1e-14)
        assert D[0, 1].imag == pytest.approx(0.0, abs=1e-16)
        assert D[0, 1].real >= 0

    def test_reconstruction_random_states(self):
        rng = np.random.default_rng(79)
        p = strong_family(0.5)
        for _ in range(200):
            state = rng.normal(size=2) + 1j * rng.normal(size=2)
            D = reduced_diffusion_matrix(state, p)
            _, B = reduced_drift_and_noise(state, p)
            scale = 1.0 + np.max(np.abs(D))
            assert np.max(np.abs(B @ B.T - D)) <= 1e-12 * scale

    def test_near_cancellation_state_still_factors(self):
        # state engineered so tr D + 2 s nearly vanishes for one sign choice
        p = strong_family(0.5)
        from mirrorcavity.reduced import (effective_coupling, noise_coefficient_m)
        M = noise_coefficient_m(p)
        G = effective_coupling(p)
        roots = np.roots([np.conj(M), 2 * G, M])  # tr D + 2 s = 0 at ap = root * a
        state = np.array([1.0 + 0j, roots[0]])
        D = reduced_diffusion_matrix(state, p)
        _, B = reduced_drift_and_noise(state, p)
        assert np.max(np.abs(B @ B.T - D)) <= 1e-12 * (1.0 + np.max(np.abs(D)))


class TestCounterRng:
    def test_streams_depend_only_on_seed_and_trajectory(self):
        z1 = normals_for_trajectory(5, 42, 0, 16, 2)
        z2 = normals_for_trajectory(5, 42, 0, 16, 2)
        z3 = normals_for_trajectory(6, 42, 0, 16, 2)
        z4 = normals_for_trajectory(5, 43, 0, 16, 2)
        assert np.array_equal(z1, z2)
        assert not np.array_equal(z1, z3)
        assert not np.array_equal(z1, z4)

    def test_normals_are_standard(self):
        zs = np.concatenate([normals_for_trajectory(j, 7, 0, 500, 1).ravel()
                             for j in range(40)])
        assert zs.mean() == pytest.approx(0.0, abs=0.02)
        assert zs.var() == pytest.approx(1.0, abs=0.03)
        assert np.mean(zs**3) == pytest.approx(0.0, abs=0.05)
        assert np.mean(zs**4) == pytest.approx(3.0, abs=0.15)

    def test_trajectories_unchanged_by_ensemble_size(self):
        p = strong_family_at(0.5)
        small = IntegratorConfig(dt=1e-3, t_end=1.0, n_traj=4, seed=3)
        large = IntegratorConfig(dt=1e-3, t_end=1.0, n_traj=16, seed=3)
        _, ps, _ = integrate_paths(p, small, system="reduced", stride=100)
        _, pl, _ = integrate_paths(p, large, system="reduced", stride=100)
        assert np.array_equal(ps, pl[:4])


class TestEulerStepAgainstReference:
    def _reference_reduced(self, params, config, n_record):
        """Plain python Euler loop consuming the same normal stream."""
        from mirrorcavity.reduced import (effective_coupling, noise_coefficient_m,
                                          noise_coefficient_n_per_photon)
        st = cavity_steady_states(params)[0]
        a, ap = st.alpha0, st.alpha0_plus
        G = effective_coupling(params)
        M = noise_coefficient_m(params)
        Mc = np.conj(M)
        Npn = noise_coefficient_n_per_photon(params)
        zs = normals_for_trajectory(0, config.seed & 0xFFFFFFFF,
                                    (config.seed >> 32) & 0xFFFFFFFF,
                                    config.n_steps, 1)
        sq = math.sqrt(config.dt)
        out = [(a, ap)]
        for k in range(config.n_steps):
            d1, d2 = reduced_drift(a, ap, params)
            D = reduced_diffusion_matrix((a, ap), params)
            s = G * ap * a
            tp, tm = D[0, 0] + D[1, 1] + 2 * s, D[0, 0] + D[1, 1] - 2 * s
            if abs(tm) > abs(tp):
                s, tp = -s, tm
            B = (D + s * np.eye(2)) / np.sqrt(tp)
            x = zs[k, 0]
            a = a + d1 * config.dt + (B[0, 0] * x[0] + B[0, 1] * x[1]) * sq
            ap = ap + d2 * config.dt + (B[1, 0] * x[0] + B[1, 1] * x[1]) * sq
            out.append((a, ap))
        return np.array(out)

    def test_kernel_matches_python_reference(self):
        p = strong_family_at(0.5)
        cfg = IntegratorConfig(dt=1e-3, t_end=0.03, n_traj=1, seed=91,
                               stationary_init=False)
        _, paths, kept = integrate_paths(p, cfg, system="reduced", stride=1)
        ref = self._reference_reduced(p, cfg, cfg.n_steps + 1)
        assert kept[0]
        assert np.allclose(paths[0], ref, rtol=1e-13, atol=1e-15)


class TestSimulate:
    def test_linear_cavity_exact(self):
        p = linear_cavity()
        cfg = IntegratorConfig(dt=1e-3, t_end=10.0, n_traj=200, seed=42)
        for system in ("reduced", "full"):
            st = simulate(p, cfg, system=system)
            exact = p.drive / (p.gamma1 + 1j * p.omega_c)
            assert st.mean_alpha == pytest.approx(exact, rel=1e-10)
            assert st.g2_estimate == pytest.approx(1.0, abs=1e-9)
            assert st.discarded_count == 0

    def test_vacuum_attractor(self):
        p = ModelParams(omega_c=1.0, omega_m=10.0, g=0.3, gamma1=0.5, gamma2=10.0,
                        drive=0.0)
        cfg = IntegratorConfig(dt=1e-3, t_end=60.0, n_traj=400, seed=5,
                               initial_state=(0.8 + 0.2j, 0.8 - 0.2j))
        st = simulate(p, cfg, system="reduced")
        # the absolute floor covers the deterministic transient residue,
        # exp(-gamma1 * burn) of the initial displacement
        assert abs(st.mean_alpha) <= 3 * math.hypot(st.se_alpha_re, st.se_alpha_im) + 1e-6
        assert abs(st.moment_n) <= 3 * st.se_n + 1e-9

    def test_seed_determinism_and_variation(self):
        p = strong_family_at(0.5)
        cfg = IntegratorConfig(dt=1e-3, t_end=4.0, n_traj=300, seed=42)
        s1 = simulate(p, cfg, system="reduced")
        s2 = simulate(p, cfg, system="reduced")
        assert s1.mean_alpha == s2.mean_alpha
        assert np.array_equal(s1.batch_m2, s2.batch_m2)
        s3 = simulate(p, IntegratorConfig(dt=1e-3, t_end=4.0, n_traj=300, seed=43),
                      system="reduced")
        assert s3.mean_alpha != s1.mean_alpha

    def test_debug_checks_factor_residual(self):
        p = strong_family_at(0.5)
        cfg = IntegratorConfig(dt=1e-3, t_end=2.0, n_traj=50, seed=1,
                               debug_checks=True)
        for system in ("reduced", "full"):
            st = simulate(p, cfg, system=system)
            assert st.max_factor_residual <= 1e-12

    def test_discard_policy_errors_loudly(self):
        p = strong_family_at(0.5)
        cfg = IntegratorConfig(dt=1e-3, t_end=2.0, n_traj=50, seed=1,
                               divergence_cutoff=1e-3)
        with pytest.raises(SimulationQualityError) as err:
            simulate(p, cfg, system="reduced")
        assert err.value.discard_fraction == 1.0
        assert err.value.first_divergence_time > 0

    def test_step_halving_leaves_g2_within_se(self):
        # fixed seed: the two runs draw independent streams, so the
        # comparison is deterministic but statistically ~sqrt(2) SE wide
        p = mc_benchmark()
        res = {}
        for dt in (4e-4, 2e-4):
            cfg = IntegratorConfig(dt=dt, t_end=6.0, n_traj=4000, seed=1)
            res[dt] = simulate(p, cfg, system="reduced")
        delta = abs(res[4e-4].g2_estimate - res[2e-4].g2_estimate)
        assert delta < res[4e-4].g2_se

    def test_adiabatic_mean_path_gap_shrinks(self):
        # noiseless full-system path approaches the eliminated one as the
        # mirror gets faster; omega_m small so gamma2 sets the mirror rate
        gaps = []
        for gamma2 in (1.0, 10.0, 100.0):
            p = ModelParams(omega_c=1.0, omega_m=0.5, g=0.3, gamma1=0.1,
                            gamma2=gamma2, drive=0.5)
            kw = dict(dt=5e-5, t_end=15.0, n_traj=1, seed=0, enable_noise=False,
                      stationary_init=False)
            cfg_r = IntegratorConfig(initial_state=(0j, 0j), **kw)
            cfg_f = IntegratorConfig(initial_state=(0j, 0j, 0j, 0j), **kw)
            _, pr, _ = integrate_paths(p, cfg_r, system="reduced", stride=20)
            _, pf, _ = integrate_paths(p, cfg_f, system="full", stride=20)
            gaps.append(float(np.max(np.abs(pf[0, :, 0] - pr[0, :, 0]))))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_moments_match_mc_benchmark(self, benchmark_mc_stats):
        params, _, stats = benchmark_mc_stats
        st = cavity_steady_states(params)[0]
        C = covariance_for_branch(st, params)
        n_lin = st.n + C.c21.real  # occupation including fluctuation excess
        assert stats.moment_n == pytest.approx(n_lin, abs=3 * stats.se_n)
        assert abs(stats.moment_n_imag) <= 5 * stats.se_n
        assert stats.discard_fraction < 0.01


class TestWarmStart:
    def test_linearized_real_covariance_reproduces_complex_moments(self):
        p = strong_family_at(0.5)
        st = cavity_steady_states(p)[0]
        X = linearized_real_covariance(st, p)
        C = covariance_for_branch(st, p)
        # coords (Re da, Re da+, Im da, Im da+)
        c11 = X[0, 0] - X[2, 2] + 2j * X[0, 2]
        c12 = X[0, 1] - X[2, 3] + 1j * (X[0, 3] + X[1, 2])
        assert c11 == pytest.approx(C.c11, rel=1e-9, abs=1e-12)
        assert c12 == pytest.approx(C.c12, rel=1e-9, abs=1e-12)

    def test_warm_start_sampling_is_seeded(self):
        p = strong_family_at(0.5)
        cfg = IntegratorConfig(dt=1e-3, t_end=1.0, n_traj=8, seed=99)
        _, p1, _ = integrate_paths(p, cfg, system="reduced", stride=1000)
        _, p2, _ = integrate_paths(p, cfg, system="reduced", stride=1000)
        assert np.array_equal(p1, p2)
        assert len({z for z in p1[:, 0, 0]}) > 1  # distinct initial samples

    def test_cold_start_places_all_at_fixed_point(self):
        p = strong_family_at(0.5)
        st = cavity_steady_states(p)[0]
        cfg = IntegratorConfig(dt=1e-3, t_end=1.0, n_traj=4, seed=99,
                               stationary_init=False)
        _, paths, _ = integrate_paths(p, cfg, system="reduced", stride=1000)
        assert np.all(paths[:, 0, 0] == st.alpha0)


class TestEstimator:
    def _stats_from_alphas(self, alphas):
        alphas = np.asarray(alphas, dtype=complex)
        m1 = np.conj(alphas) * alphas
        return EnsembleStats.from_trajectory_moments(
            "reduced", alphas, m1, m1 * m1, np.ones(alphas.size, dtype=bool),
            n_batches=10)

    def test_coherent_ensemble(self):
        st = self._stats_from_alphas(np.full(100, 0.7 - 0.2j))
        g2, se = estimate_g2(st)
        assert g2 == pytest.approx(1.0, rel=1e-14)
        assert se == 0.0

    def test_two_point_intensity_mixture(self):
        alphas = np.array([1.4 + 0j, 0j] * 50)
        st = self._stats_from_alphas(alphas)
        g2, _ = estimate_g2(st)
        assert g2 == pytest.approx(2.0, rel=1e-12)

    def test_vacuum_ensemble_is_undefined(self):
        st = self._stats_from_alphas(np.zeros(100, dtype=complex))
        with pytest.raises(UndefinedEstimateError):
            estimate_g2(st)


class TestTraces:
    def test_roundtrip(self, tmp_path):
        p = strong_family_at(0.5)
        cfg = IntegratorConfig(dt=1e-3, t_end=0.5, n_traj=6, seed=2)
        _, paths, _ = integrate_paths(p, cfg, system="full", stride=5)
        target = tmp_path / "paths.trace"
        write_trace_file(target, paths)
        back = read_trace_file(target)
        assert np.array_equal(back, paths)

    def test_magic_guard(self, tmp_path):
        bad = tmp_path / "not.trace"
        bad.write_bytes(b"whatever!")
        with pytest.raises(ValueError, match="magic"):
            read_trace_file(bad)


class TestConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(dt=0.0, t_end=1.0, n_traj=1),
        dict(dt=-1e-3, t_end=1.0, n_traj=1),
        dict(dt=1e-3, t_end=1e-4, n_traj=1),
        dict(dt=1e-3, t_end=1.0, n_traj=0),
        dict(dt=1e-3, t_end=1.0, n_traj=10, max_discard_fraction=1.0),
        dict(dt=1e-3, t_end=1.0, n_traj=10, scheme="milstein"),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            IntegratorConfig(**kwargs)

    def test_system_validation(self):
        p = strong_family_at(0.5)
        with pytest.raises(ValueError, match="system"):
            simulate(p, IntegratorConfig(dt=1e-3, t_end=1.0, n_traj=1), system="both")
