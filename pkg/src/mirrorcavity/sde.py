"""Positive-P stochastic integration of the cavity-mirror equations.

Both the full four-variable system and the mirror-eliminated two-variable
system are integrated with an Euler-Maruyama scheme under the Ito
convention (state += drift * dt + B xi sqrt(dt), xi independent standard
normals).  The doubled phase space means alpha and alpha+ are independent
complex variables; normal-ordered moments are plain ensemble averages.

Positive-P trajectories can escape to infinity.  Escaped trajectories are
discarded and counted; a run whose discard fraction exceeds the configured
bound raises, because silent discarding would bias the moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _engine
from .model import ModelParams
from .reduced import (SteadyState, cavity_steady_states, drift_matrix,
                      effective_coupling, mirror_steady_amplitudes,
                      noise_coefficient_m, noise_coefficient_n_per_photon)
from .stability import classify

TRACE_MAGIC = b"PPTRACE1"


class SimulationQualityError(RuntimeError):
    """Too many trajectories diverged for the moments to be trustworthy."""

    def __init__(self, msg, discard_fraction=None, first_divergence_time=None):
        super().__init__(msg)
        self.discard_fraction = discard_fraction
        self.first_divergence_time = first_divergence_time


class UndefinedEstimateError(RuntimeError):
    """The occupation estimate is consistent with zero, so g2 is undefined."""


@dataclass(frozen=True)
class FullState:
    """Phase-space point of the four-variable system (independent complex vars)."""

    alpha1: complex
    alpha1_plus: complex
    alpha2: complex
    alpha2_plus: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha1_plus, self.alpha2, self.alpha2_plus],
                        dtype=complex)


def full_drift(state, params: ModelParams) -> np.ndarray:
    """Deterministic part of the four-variable equations of motion."""
    a1, a1p, a2, a2p = (state.as_array() if isinstance(state, FullState)
                        else np.asarray(state, dtype=complex))
    g = params.g
    mir = a2 + a2p
    return np.array([
        -(params.gamma1 + 1j * params.omega_c) * a1 + 1j * g * a1 * mir + params.drive,
        -(params.gamma1 - 1j * params.omega_c) * a1p - 1j * g * a1p * mir
        + params.drive.conjugate(),
        -(params.gamma2 + 1j * params.omega_m) * a2 + 1j * g * a1p * a1,
        -(params.gamma2 - 1j * params.omega_m) * a2p - 1j * g * a1p * a1,
    ], dtype=complex)


def full_diffusion_matrix(state, params: ModelParams) -> np.ndarray:
    """Noise covariance of the four-variable system: only the cavity-mirror
    cross correlations i g a1 (for the plain pair) and -i g a1+ (for the
    plus pair) are nonzero."""
    a1, a1p, _, _ = (state.as_array() if isinstance(state, FullState)
                     else np.asarray(state, dtype=complex))
    D = np.zeros((4, 4), dtype=complex)
    D[0, 2] = D[2, 0] = 1j * params.g * a1
    D[1, 3] = D[3, 1] = -1j * params.g * a1p
    return D


def full_noise_factor(state, params: ModelParams) -> np.ndarray:
    """A 4x4 complex factor B with B B^T equal to the full diffusion matrix.

    Built per correlated pair: a pair with cross correlation d and no
    self-correlation gets the block sqrt(d/2) [[1, i], [1, -i]], which
    reconstructs [[0, d], [d, 0]] exactly.  The (alpha1, alpha2) pair feeds
    on noise channels 0 and 1, the (alpha1+, alpha2+) pair on channels 2
    and 3.
    """
    a1, a1p, _, _ = (state.as_array() if isinstance(state, FullState)
                     else np.asarray(state, dtype=complex))
    B = np.zeros((4, 4), dtype=complex)
    s1 = np.sqrt(0.5j * params.g * a1)
    s2 = np.sqrt(-0.5j * params.g * a1p)
    B[0, 0], B[0, 1] = s1, 1j * s1
    B[2, 0], B[2, 1] = s1, -1j * s1
    B[1, 2], B[1, 3] = s2, 1j * s2
    B[3, 2], B[3, 3] = s2, -1j * s2
    return B


def reduced_diffusion_matrix(state2, params: ModelParams) -> np.ndarray:
    """State-dependent noise covariance of the reduced two-variable system."""
    a, ap = np.asarray(state2, dtype=complex)
    M = noise_coefficient_m(params)
    Npn = noise_coefficient_n_per_photon(params)
    cross = Npn * ap * a
    return np.array([[M * a * a, cross], [cross, M.conjugate() * ap * ap]], dtype=complex)


def reduced_drift_and_noise(state2, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Drift vector and a symmetric noise factor for the reduced system.

    The factor is the closed-form symmetric square root
    B = (D + s I)/sqrt(tr D + 2 s) with s^2 = det D; det D equals
    (G a+ a)^2 identically, so no determinant square root is needed.  When
    the closed form is ill conditioned (both sign choices leave tr D + 2s
    near zero) the factor falls back to a dense matrix square root.
    """
    from .reduced import reduced_drift

    a, ap = np.asarray(state2, dtype=complex)
    d1, d2 = reduced_drift(a, ap, params)
    drift = np.array([d1, d2], dtype=complex)

    D = reduced_diffusion_matrix((a, ap), params)
    dnorm = float(np.max(np.abs(D)))
    if dnorm == 0.0:
        return drift, np.zeros((2, 2), dtype=complex)
    s = effective_coupling(params) * ap * a
    tr = D[0, 0] + D[1, 1]
    tp, tm = tr + 2.0 * s, tr - 2.0 * s
    if abs(tm) > abs(tp):
        s, tp = -s, tm
    if abs(tp) > 0.0:
        B = (D + s * np.eye(2)) / np.sqrt(tp)
        if float(np.max(np.abs(B @ B.T - D))) <= 1e-12 * (1.0 + dnorm):
            return drift, B
    import scipy.linalg

    B = np.asarray(scipy.linalg.sqrtm(D), dtype=complex)
    return drift, B


@dataclass(frozen=True)
class IntegratorConfig:
    """Settings of the fixed-step Euler-Maruyama ensemble run.

    ``scheme`` is fixed: the Ito interpretation of the equations pins the
    integrator, and higher-order schemes are out of scope.  The divergence
    cutoff defaults to 1e6 * max(1, |E|/gamma1) when left as None.
    """

    dt: float
    t_end: float
    n_traj: int
    seed: int = 0
    divergence_cutoff: float | None = None
    max_discard_fraction: float = 0.01
    n_batches: int = 20
    branch_id: int | None = None
    stationary_init: bool = True
    enable_noise: bool = True
    debug_checks: bool = False
    initial_state: tuple | None = None
    scheme: str = "euler-maruyama"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not (self.t_end >= self.dt):
            raise ValueError(f"t_end must be at least dt, got {self.t_end}")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if not (0.0 <= self.max_discard_fraction < 1.0):
            raise ValueError("max_discard_fraction must lie in [0, 1)")
        if self.n_batches < 1:
            raise ValueError("n_batches must be >= 1")
        if self.scheme != "euler-maruyama":
            raise ValueError("only the euler-maruyama scheme is supported")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    def cutoff_for(self, params: ModelParams) -> float:
        if self.divergence_cutoff is not None:
            return float(self.divergence_cutoff)
        return 1e6 * max(1.0, abs(params.drive) / params.gamma1)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["initial_state"] is not None:
            d["initial_state"] = [[z.real, z.imag] for z in map(complex, d["initial_state"])]
        return d


@dataclass
class EnsembleStats:
    """Normal-ordered ensemble moments with batch-mean standard errors."""

    system: str
    trajectory_count: int
    discarded_count: int
    batch_count: int
    mean_alpha: complex
    se_alpha_re: float
    se_alpha_im: float
    moment_n: float
    moment_n_imag: float
    se_n: float
    moment_n2: float
    moment_n2_imag: float
    se_n2: float
    g2_estimate: float
    g2_se: float
    first_divergence_time: float
    max_factor_residual: float
    batch_alpha: np.ndarray = field(repr=False)
    batch_m1: np.ndarray = field(repr=False)
    batch_m2: np.ndarray = field(repr=False)

    @property
    def discard_fraction(self) -> float:
        return self.discarded_count / self.trajectory_count

    @classmethod
    def from_trajectory_moments(cls, system: str, mean_a, m1, m2, kept,
                                n_batches: int, first_divergence_time: float = math.nan,
                                max_factor_residual: float = math.nan) -> "EnsembleStats":
        """Assemble statistics from per-trajectory time-averaged moments.

        ``kept`` marks trajectories that stayed within the divergence cutoff;
        batching follows trajectory index order, so the result is independent
        of any execution schedule.
        """
        mean_a = np.asarray(mean_a, dtype=complex)
        m1 = np.asarray(m1, dtype=complex)
        m2 = np.asarray(m2, dtype=complex)
        kept = np.asarray(kept, dtype=bool)
        n_traj = kept.size
        idx = np.flatnonzero(kept)
        n_kept = idx.size
        if n_kept == 0:
            raise SimulationQualityError(
                "every trajectory diverged; nothing to average",
                discard_fraction=1.0, first_divergence_time=first_divergence_time)
        B = min(n_batches, n_kept)
        chunks = np.array_split(idx, B)
        batch_alpha = np.array([mean_a[c].mean() for c in chunks])
        batch_m1 = np.array([m1[c].mean() for c in chunks])
        batch_m2 = np.array([m2[c].mean() for c in chunks])

        def se_of(batch_vals):
            if B < 2:
                return math.nan, math.nan
            vr = batch_vals.real.std(ddof=1) / math.sqrt(B)
            vi = batch_vals.imag.std(ddof=1) / math.sqrt(B)
            return vr, vi

        a_mean = complex(batch_alpha.mean())
        m1_mean = complex(batch_m1.mean())
        m2_mean = complex(batch_m2.mean())
        se_a_re, se_a_im = se_of(batch_alpha)
        se_m1, _ = se_of(batch_m1)
        se_m2, _ = se_of(batch_m2)

        stats = cls(
            system=system, trajectory_count=n_traj,
            discarded_count=n_traj - n_kept, batch_count=B,
            mean_alpha=a_mean, se_alpha_re=se_a_re, se_alpha_im=se_a_im,
            moment_n=m1_mean.real, moment_n_imag=m1_mean.imag, se_n=se_m1,
            moment_n2=m2_mean.real, moment_n2_imag=m2_mean.imag, se_n2=se_m2,
            g2_estimate=math.nan, g2_se=math.nan,
            first_divergence_time=first_divergence_time,
            max_factor_residual=max_factor_residual,
            batch_alpha=batch_alpha, batch_m1=batch_m1, batch_m2=batch_m2)
        try:
            g2, se = estimate_g2(stats)
            stats.g2_estimate, stats.g2_se = g2, se
        except UndefinedEstimateError:
            pass
        return stats

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "trajectory_count": self.trajectory_count,
            "discarded_count": self.discarded_count,
            "discard_fraction": self.discard_fraction,
            "batch_count": self.batch_count,
            "mean_alpha": {"re": self.mean_alpha.real, "im": self.mean_alpha.imag,
                           "se_re": self.se_alpha_re, "se_im": self.se_alpha_im},
            "moment_n": {"value": self.moment_n, "imag": self.moment_n_imag,
                         "se": self.se_n},
            "moment_n2": {"value": self.moment_n2, "imag": self.moment_n2_imag,
                          "se": self.se_n2},
            "g2": {"value": self.g2_estimate, "se": self.g2_se},
            "first_divergence_time": self.first_divergence_time,
            "max_factor_residual": self.max_factor_residual,
        }


def estimate_g2(stats: EnsembleStats) -> tuple[float, float]:
    """g2(0) = Re<a+^2 a^2> / (Re<a+ a>)^2 with a batch-propagated standard error.

    Raises when the occupation estimate is within one standard error of
    zero, in which case the ratio carries no information.
    """
    B = stats.batch_count
    m1 = float(np.mean(stats.batch_m1.real))
    m2 = float(np.mean(stats.batch_m2.real))
    se_m1 = stats.batch_m1.real.std(ddof=1) / math.sqrt(B) if B > 1 else 0.0
    if abs(m1) <= se_m1 or m1 == 0.0:
        raise UndefinedEstimateError(
            f"occupation estimate {m1:.3e} +/- {se_m1:.3e} is consistent with zero")
    g2 = m2 / m1**2
    if B > 1:
        u = (stats.batch_m2.real - m2) / m1**2 - 2.0 * m2 * (stats.batch_m1.real - m1) / m1**3
        se = float(np.sqrt(np.sum(u * u) / (B * (B - 1))))
    else:
        se = math.nan
    return g2, se


# --- initial conditions ------------------------------------------------------

def _select_branch(params: ModelParams, branch_id: int | None) -> SteadyState:
    states = cavity_steady_states(params)
    if branch_id is not None:
        for st in states:
            if st.branch_id == branch_id:
                return st
        raise ValueError(f"branch_id {branch_id} does not exist "
                         f"({len(states)} branches found)")
    for st in states:
        if classify(st, params).stable:
            return st
    return states[0]


def linearized_real_covariance(steady: SteadyState, params: ModelParams) -> np.ndarray:
    """Real 4x4 stationary covariance of the linearized fluctuations.

    Coordinates (Re da, Re da+, Im da, Im da+).  Used to draw initial
    fluctuations already close to stationarity, which shortens burn-in.
    """
    import scipy.linalg

    A = drift_matrix(steady, params)
    a0 = steady.alpha0
    _, Bn = reduced_drift_and_noise((a0, a0.conjugate()), params)
    Ar = np.block([[A.real, -A.imag], [A.imag, A.real]])
    Br = np.vstack([Bn.real, Bn.imag])
    Dr = Br @ Br.T
    if not np.any(Dr):
        return np.zeros((4, 4))
    X = scipy.linalg.solve_continuous_lyapunov(-Ar, -Dr)
    return 0.5 * (X + X.T)


def _initial_states(params: ModelParams, config: IntegratorConfig,
                    system: str) -> tuple[np.ndarray, ...]:
    n = config.n_traj
    if config.initial_state is not None:
        vals = [complex(z) for z in config.initial_state]
        expected = 2 if system == "reduced" else 4
        if len(vals) != expected:
            raise ValueError(f"initial_state needs {expected} complex values "
                             f"for the {system} system, got {len(vals)}")
        return tuple(np.full(n, v, dtype=complex) for v in vals)

    steady = _select_branch(params, config.branch_id)
    a0 = steady.alpha0
    a = np.full(n, a0, dtype=complex)
    ap = np.full(n, a0.conjugate(), dtype=complex)

    if config.stationary_init and config.enable_noise and classify(steady, params).stable:
        X = linearized_real_covariance(steady, params)
        if np.any(X):
            w, Q = np.linalg.eigh(X)
            L = Q @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
            z = np.empty((n, 4))
            _engine.init_normals_kernel(n, config.seed & 0xFFFFFFFF,
                                        (config.seed >> 32) & 0xFFFFFFFF, z)
            x = L @ z.T
            a = a + x[0] + 1j * x[2]
            ap = ap + x[1] + 1j * x[3]

    if system == "reduced":
        return a, ap
    # mirror follows the sampled cavity state; its own fluctuations relax
    # within a few 1/gamma2, well inside the burn-in window
    a2, a2p = mirror_steady_amplitudes(a, ap, params)
    return a, ap, np.asarray(a2, dtype=complex), np.asarray(a2p, dtype=complex)


# --- ensemble runs -----------------------------------------------------------

def simulate(params: ModelParams, config: IntegratorConfig,
             system: str = "full") -> EnsembleStats:
    """Integrate an ensemble and return normal-ordered moment statistics.

    Moments are accumulated over the second half of the horizon; the first
    half is burn-in.  Raises SimulationQualityError when more than
    ``max_discard_fraction`` of the trajectories hit the divergence cutoff.
    """
    if system not in ("full", "reduced"):
        raise ValueError(f"system must be 'full' or 'reduced', got {system!r}")
    n_steps = config.n_steps
    burn = n_steps // 2
    cutoff = config.cutoff_for(params)
    seed_lo = config.seed & 0xFFFFFFFF
    seed_hi = (config.seed >> 32) & 0xFFFFFFFF
    n = config.n_traj

    out_m = np.zeros((n, 3), dtype=complex)
    out_kept = np.zeros(n, dtype=np.int8)
    out_tdiv = np.full(n, np.nan)
    out_resid = np.zeros(n)

    if system == "reduced":
        a, ap = _initial_states(params, config, system)
        _engine.reduced_moment_kernel(
            a, ap, n_steps, burn, config.dt, seed_lo, seed_hi,
            params.omega_c, params.gamma1, complex(params.drive),
            effective_coupling(params), noise_coefficient_m(params),
            noise_coefficient_n_per_photon(params), cutoff,
            config.enable_noise, config.debug_checks,
            out_m, out_kept, out_tdiv, out_resid)
    else:
        a1, a1p, a2, a2p = _initial_states(params, config, system)
        _engine.full_moment_kernel(
            a1, a1p, a2, a2p, n_steps, burn, config.dt, seed_lo, seed_hi,
            params.omega_c, params.omega_m, params.gamma1, params.gamma2,
            params.g, complex(params.drive), cutoff,
            config.enable_noise, config.debug_checks,
            out_m, out_kept, out_tdiv, out_resid)

    kept = out_kept.astype(bool)
    discarded = int(n - kept.sum())
    tdiv = float(np.nanmin(out_tdiv)) if discarded else math.nan
    frac = discarded / n
    if frac > config.max_discard_fraction:
        raise SimulationQualityError(
            f"{discarded}/{n} trajectories diverged (fraction {frac:.4f} exceeds "
            f"{config.max_discard_fraction}); first divergence at t = {tdiv:.4g}",
            discard_fraction=frac, first_divergence_time=tdiv)
    resid = float(out_resid.max()) if config.debug_checks else math.nan
    return EnsembleStats.from_trajectory_moments(
        system, out_m[:, 0], out_m[:, 1], out_m[:, 2], kept, config.n_batches,
        first_divergence_time=tdiv, max_factor_residual=resid)


def integrate_paths(params: ModelParams, config: IntegratorConfig,
                    system: str = "full", stride: int = 1):
    """Integrate and record trajectories.

    Returns (times, paths, kept) with paths of shape
    (n_traj, n_recorded, n_vars); the noise stream per trajectory is the
    one simulate() uses, so recorded paths match the moment runs exactly.
    """
    if system not in ("full", "reduced"):
        raise ValueError(f"system must be 'full' or 'reduced', got {system!r}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_steps = config.n_steps
    n_rec = n_steps // stride + 1
    cutoff = config.cutoff_for(params)
    seed_lo = config.seed & 0xFFFFFFFF
    seed_hi = (config.seed >> 32) & 0xFFFFFFFF
    n = config.n_traj
    nvars = 2 if system == "reduced" else 4
    out_path = np.empty((n, n_rec, nvars), dtype=complex)
    out_kept = np.zeros(n, dtype=np.int8)

    if system == "reduced":
        a, ap = _initial_states(params, config, system)
        _engine.reduced_path_kernel(
            a, ap, n_steps, stride, config.dt, seed_lo, seed_hi,
            params.omega_c, params.gamma1, complex(params.drive),
            effective_coupling(params), noise_coefficient_m(params),
            noise_coefficient_n_per_photon(params), cutoff, config.enable_noise,
            out_path, out_kept)
    else:
        a1, a1p, a2, a2p = _initial_states(params, config, system)
        _engine.full_path_kernel(
            a1, a1p, a2, a2p, n_steps, stride, config.dt, seed_lo, seed_hi,
            params.omega_c, params.omega_m, params.gamma1, params.gamma2,
            params.g, complex(params.drive), cutoff, config.enable_noise,
            out_path, out_kept)

    times = np.arange(n_rec) * (config.dt * stride)
    return times, out_path, out_kept.astype(bool)


# --- binary trajectory dumps -------------------------------------------------

def write_trace_file(path, paths: np.ndarray) -> None:
    """Dump trajectories as little-endian float64 interleaved re/im.

    Layout: 8-byte magic, then three little-endian uint64 header words
    (variable count, recorded step count, trajectory count), then the data
    trajectory-major as re, im per variable.
    """
    paths = np.asarray(paths, dtype=complex)
    n_traj, n_rec, n_vars = paths.shape
    inter = np.empty((n_traj, n_rec, n_vars, 2), dtype="<f8")
    inter[..., 0] = paths.real
    inter[..., 1] = paths.imag
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(np.array([n_vars, n_rec, n_traj], dtype="<u8").tobytes())
        fh.write(inter.tobytes())


def read_trace_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != TRACE_MAGIC:
            raise ValueError(f"not a trace file (magic {magic!r})")
        n_vars, n_rec, n_traj = np.frombuffer(fh.read(24), dtype="<u8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    data = data.reshape(int(n_traj), int(n_rec), int(n_vars), 2)
    return data[..., 0] + 1j * data[..., 1]
