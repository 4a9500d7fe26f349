"""Adiabatic elimination of the mirror and the reduced cavity fixed points.

With the mirror slaved to the instantaneous photon number, the cavity obeys
an effective Kerr-type equation

    da/dt = -(gamma1 + i omega_c) a + i G a+ a^2 + E + noise ,

where G = 2 g^2 omega_m / (gamma2^2 + omega_m^2).  This module solves the
deterministic fixed points of that equation (a cubic in the occupation
n = |a0|^2) and builds the drift and diffusion matrices of the fluctuations
around each fixed point.

Sign convention: fluctuations obey d(delta)/dt = -A delta + noise, so a
stable fixed point has eigenvalues of A with positive real part.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams

# a cubic root is accepted as real when |Im| <= IM_TOL * |root|
IM_TOL = 1e-9
# relative residual bound for accepted fixed points
RESIDUAL_TOL = 1e-10


def effective_coupling(params: ModelParams) -> float:
    """Kerr-type coupling G = 2 g^2 omega_m / (gamma2^2 + omega_m^2)."""
    return 2.0 * params.g**2 * params.omega_m / (params.gamma2**2 + params.omega_m**2)


def noise_coefficient_m(params: ModelParams) -> complex:
    """Two-photon noise coefficient M = -2 g^2 / (gamma2 + i omega_m)."""
    return -2.0 * params.g**2 / (params.gamma2 + 1j * params.omega_m)


def noise_coefficient_n_per_photon(params: ModelParams) -> float:
    """Cross noise coefficient per unit occupation, 2 gamma2 g^2 / (gamma2^2 + omega_m^2).

    The cross correlation itself is this value times the occupation
    alpha+ alpha at which the noise is evaluated.
    """
    return 2.0 * params.gamma2 * params.g**2 / (params.gamma2**2 + params.omega_m**2)


@dataclass(frozen=True)
class EffectiveModel:
    """Coefficients of the mirror-eliminated cavity equation."""

    G: float
    M: complex
    N_per_photon: float
    params: ModelParams

    @classmethod
    def from_params(cls, params: ModelParams) -> "EffectiveModel":
        return cls(
            G=effective_coupling(params),
            M=noise_coefficient_m(params),
            N_per_photon=noise_coefficient_n_per_photon(params),
            params=params,
        )


def mirror_steady_amplitudes(alpha1: complex, alpha1_plus: complex,
                             params: ModelParams) -> tuple[complex, complex]:
    """Deterministic mirror amplitudes slaved to the cavity state.

    alpha2  =  i g a1 a1+ / (gamma2 + i omega_m)
    alpha2+ = -i g a1 a1+ / (gamma2 - i omega_m)
    """
    nn = alpha1_plus * alpha1
    a2 = 1j * params.g * nn / (params.gamma2 + 1j * params.omega_m)
    a2p = -1j * params.g * nn / (params.gamma2 - 1j * params.omega_m)
    return a2, a2p


@dataclass(frozen=True)
class SteadyState:
    """A deterministic fixed point of the reduced cavity equation."""

    alpha0: complex
    n: float
    branch_id: int
    mirror_alpha2: complex

    @property
    def alpha0_plus(self) -> complex:
        """Conjugate partner amplitude on the physical manifold."""
        return self.alpha0.conjugate()


def reduced_drift(alpha1: complex, alpha1_plus: complex, params: ModelParams,
                  include_drive: bool = True) -> tuple[complex, complex]:
    """Deterministic part of the reduced two-variable equation of motion."""
    G = effective_coupling(params)
    nn = alpha1_plus * alpha1
    d1 = -(params.gamma1 + 1j * params.omega_c) * alpha1 + 1j * G * nn * alpha1
    d2 = -(params.gamma1 - 1j * params.omega_c) * alpha1_plus - 1j * G * nn * alpha1_plus
    if include_drive:
        d1 += params.drive
        d2 += params.drive.conjugate()
    return d1, d2


def steady_state_residual(alpha0: complex, params: ModelParams) -> float:
    """Norm of the reduced drift at a candidate fixed point (physical manifold)."""
    d1, _ = reduced_drift(alpha0, alpha0.conjugate(), params)
    return abs(d1)


def occupation_polynomial_coeffs(params: ModelParams) -> tuple[float, float, float, float]:
    """Coefficients (a, b, c, d) of a n^3 + b n^2 + c n + d = 0 for the occupation."""
    G = effective_coupling(params)
    e2 = abs(params.drive) ** 2
    return (G * G, -2.0 * params.omega_c * G, params.gamma1**2 + params.omega_c**2, -e2)


def _cubic_roots(a: float, b: float, c: float, d: float) -> list[complex]:
    """All three roots of a x^3 + b x^2 + c x + d (a != 0), Cardano form."""
    b, c, d = b / a, c / a, d / a
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = cmath.sqrt((q / 2.0) ** 2 + (p / 3.0) ** 3)
    u3 = -q / 2.0 + disc
    if abs(u3) < abs(-q / 2.0 - disc):
        u3 = -q / 2.0 - disc
    if u3 == 0:
        # p == q == 0: triple root at the shift point
        return [-shift + 0j] * 3
    u = u3 ** (1.0 / 3.0)
    omega = complex(-0.5, math.sqrt(3.0) / 2.0)
    roots = []
    for k in range(3):
        uk = u * omega**k
        roots.append(uk - p / (3.0 * uk) - shift)
    return roots


def _newton_polish(x: complex, a: float, b: float, c: float, d: float) -> complex:
    fx = ((a * x + b) * x + c) * x + d
    dfx = (3.0 * a * x + 2.0 * b) * x + c
    if dfx != 0:
        x = x - fx / dfx
    return x


def amplitude_for_occupation(n: float, params: ModelParams) -> complex:
    """Cavity amplitude corresponding to occupation n, given the drive."""
    G = effective_coupling(params)
    return params.drive / (params.gamma1 + 1j * (params.omega_c - G * n))


def drive_for_occupation(params: ModelParams, n: float) -> float:
    """Drive magnitude |E| that places a steady-state branch exactly at occupation n."""
    if n < 0:
        raise ValueError(f"occupation must be >= 0, got {n}")
    G = effective_coupling(params)
    return math.sqrt(n * (params.gamma1**2 + (params.omega_c - G * n) ** 2))


def cavity_steady_states(params: ModelParams) -> list[SteadyState]:
    """All physical fixed points of the driven reduced cavity, ascending in n.

    Solves n [gamma1^2 + (omega_c - G n)^2] = |E|^2 analytically and keeps
    the real non-negative roots.  Every returned branch satisfies the drift
    residual bound; a violation raises rather than returning a bad root.
    """
    e_abs2 = abs(params.drive) ** 2
    a, b, c, d = occupation_polynomial_coeffs(params)

    if e_abs2 == 0.0:
        return [SteadyState(alpha0=0j, n=0.0, branch_id=0, mirror_alpha2=0j)]

    if a == 0.0:
        # g = 0: the cubic degenerates to a linear equation
        ns = [e_abs2 / c]
    else:
        roots = [_newton_polish(r, a, b, c, d) for r in _cubic_roots(a, b, c, d)]
        ns = []
        for r in roots:
            if abs(r.imag) <= IM_TOL * abs(r) and r.real >= 0.0:
                ns.append(r.real)
        # collapse numerically coincident real roots (near-degenerate folds)
        ns.sort()
        deduped: list[float] = []
        for n in ns:
            if not deduped or abs(n - deduped[-1]) > 1e-8 * max(1.0, abs(n)):
                deduped.append(n)
        ns = deduped

    states = []
    scale = max(1.0, abs(params.drive))
    for i, n in enumerate(sorted(ns)):
        alpha0 = amplitude_for_occupation(n, params)
        res = steady_state_residual(alpha0, params)
        if res > RESIDUAL_TOL * scale:
            raise ArithmeticError(
                f"steady-state root n={n} failed the residual check: {res:.3e}")
        a2, _ = mirror_steady_amplitudes(alpha0, alpha0.conjugate(), params)
        states.append(SteadyState(alpha0=alpha0, n=n, branch_id=i, mirror_alpha2=a2))
    return states


def drift_matrix(steady: SteadyState, params: ModelParams) -> np.ndarray:
    """Relaxation matrix A of the fluctuations, d(delta)/dt = -A delta + noise.

    A11 = gamma1 + i(omega_c - 2 G n)        A12 = -i G a0^2
    A21 = +i G (a0+)^2                       A22 = conj(A11)
    """
    G = effective_coupling(params)
    a0 = steady.alpha0
    a0p = steady.alpha0_plus
    n = steady.n
    a11 = params.gamma1 + 1j * (params.omega_c - 2.0 * G * n)
    return np.array([
        [a11, -1j * G * a0 * a0],
        [1j * G * a0p * a0p, a11.conjugate()],
    ], dtype=complex)


def diffusion_matrix(steady: SteadyState, params: ModelParams) -> np.ndarray:
    """Noise covariance matrix D of the fluctuations, frozen at the fixed point.

    D11 = M a0^2, D22 = conj(M) (a0+)^2, D12 = D21 = N n with
    M = -2 g^2/(gamma2 + i omega_m) and N = 2 gamma2 g^2/(gamma2^2 + omega_m^2).
    """
    M = noise_coefficient_m(params)
    Npn = noise_coefficient_n_per_photon(params)
    a0 = steady.alpha0
    a0p = steady.alpha0_plus
    cross = Npn * steady.n
    return np.array([
        [M * a0 * a0, cross],
        [cross, M.conjugate() * a0p * a0p],
    ], dtype=complex)


@dataclass(frozen=True)
class LinearizedSystem:
    """Drift and diffusion matrices of the fluctuations around a fixed point."""

    A: np.ndarray
    D: np.ndarray
    steady: SteadyState

    @classmethod
    def around(cls, steady: SteadyState, params: ModelParams) -> "LinearizedSystem":
        return cls(A=drift_matrix(steady, params), D=diffusion_matrix(steady, params),
                   steady=steady)
