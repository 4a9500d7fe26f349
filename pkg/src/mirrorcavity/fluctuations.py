"""Stationary covariance of the linearized fluctuations.

The fluctuations form a two-variable linear Ito system with relaxation
matrix A and noise covariance D, so the stationary second moments C solve
the Lyapunov equation

    A C + C A^T = D ,

with the plain (unconjugated) transpose: delta-alpha and delta-alpha+ are
independent variables of the doubled phase space.  Two routes are provided
and cross-checked at runtime:

* ``lyapunov_solve``      direct elimination of the 4-unknown linear system,
* ``covariance_closed_form``  the 2x2 closed form
      C = [D det(A) + (A - I tr A) D (A - I tr A)^T] / (2 tr(A) det(A)).

A third route, ``covariance_paper_elements``, evaluates explicit element
formulas built from the noise coefficients; it is a diagnostic reproduction
whose deviation from the Lyapunov solution is reported, never trusted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams
from .reduced import (SteadyState, drift_matrix, diffusion_matrix, effective_coupling,
                      noise_coefficient_m, noise_coefficient_n_per_photon)
from .stability import eigenvalues


class MarginalStabilityError(ArithmeticError):
    """The stationary covariance does not exist (an eigenvalue pair sums to ~0)."""


@dataclass(frozen=True)
class CovarianceMatrix:
    """Stationary second moments of the fluctuations.

    c11 = <da da>, c12 = <da da+>, c21 = <da+ da>, c22 = <da+ da+>.
    The two mixed moments coincide in the stationary state.
    """

    c11: complex
    c12: complex
    c21: complex
    c22: complex

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.c11, self.c12], [self.c21, self.c22]], dtype=complex)

    @classmethod
    def from_matrix(cls, C: np.ndarray) -> "CovarianceMatrix":
        return cls(c11=complex(C[0, 0]), c12=complex(C[0, 1]),
                   c21=complex(C[1, 0]), c22=complex(C[1, 1]))


def lyapunov_residual(A: np.ndarray, C: np.ndarray, D: np.ndarray) -> float:
    return float(np.linalg.norm(A @ C + C @ A.T - D))


def _check_solvable(A: np.ndarray) -> None:
    l1, l2 = eigenvalues(A)
    scale = max(np.max(np.abs(A)), 1e-300)
    smallest = min(abs(2 * l1), abs(l1 + l2), abs(2 * l2))
    if smallest <= 1e-13 * scale:
        raise MarginalStabilityError(
            f"eigenvalue pair sums {2*l1:.3e}, {l1+l2:.3e}, {2*l2:.3e} are too close "
            "to zero; the system is marginally stable and has no stationary covariance")


def lyapunov_solve(A: np.ndarray, D: np.ndarray) -> CovarianceMatrix:
    """Solve A C + C A^T = D for the 4 unknown entries of C by elimination."""
    A = np.asarray(A, dtype=complex)
    D = np.asarray(D, dtype=complex)
    _check_solvable(A)
    K = np.kron(np.eye(2), A) + np.kron(A, np.eye(2))
    c = np.linalg.solve(K, D.reshape(4))
    C = c.reshape(2, 2)
    res = lyapunov_residual(A, C, D)
    dnorm = np.linalg.norm(D)
    if dnorm > 0 and res > 1e-12 * dnorm:
        raise MarginalStabilityError(
            f"Lyapunov solve residual {res:.3e} exceeds 1e-12 * ||D|| = {1e-12*dnorm:.3e}")
    return CovarianceMatrix.from_matrix(C)


def _closed_form_raw(A: np.ndarray, D: np.ndarray) -> CovarianceMatrix:
    A = np.asarray(A, dtype=complex)
    D = np.asarray(D, dtype=complex)
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    scale = max(np.max(np.abs(A)), 1e-300)
    if abs(tr * det) <= 1e-13 * scale**3:
        raise MarginalStabilityError(
            f"tr(A) det(A) = {tr*det:.3e} is singular; no stationary covariance")
    B = A - np.eye(2) * tr
    C = (D * det + B @ D @ B.T) / (2.0 * tr * det)
    return CovarianceMatrix.from_matrix(C)


_SELFCHECK_DONE = False


def _random_stable_pair(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """A conjugation-symmetric stable (A, D) pair for self-checks and tests."""
    while True:
        gamma = rng.uniform(0.05, 2.0)
        b = rng.uniform(-3.0, 3.0)
        z = rng.uniform(-2.0, 2.0) + 1j * rng.uniform(-2.0, 2.0)
        disc = abs(z) ** 2 - b * b
        if disc >= gamma * gamma * 0.81:
            continue  # unstable or close to marginal
        a11 = gamma + 1j * b
        A = np.array([[a11, -1j * z], [np.conj(-1j * z), np.conj(a11)]])
        d11 = rng.uniform(-2.0, 2.0) + 1j * rng.uniform(-2.0, 2.0)
        cross = rng.uniform(0.0, 2.0)
        D = np.array([[d11, cross], [cross, np.conj(d11)]])
        return A, D


def _run_self_check() -> None:
    rng = np.random.default_rng(0x5EED)
    for _ in range(8):
        A, D = _random_stable_pair(rng)
        fast = _closed_form_raw(A, D).as_matrix()
        slow = lyapunov_solve(A, D).as_matrix()
        scale = max(np.max(np.abs(slow)), 1e-300)
        if np.max(np.abs(fast - slow)) > 1e-9 * scale:
            raise RuntimeError(
                "closed-form covariance disagrees with the Lyapunov solver; "
                "refusing to use the fast path")


def covariance_closed_form(A: np.ndarray, D: np.ndarray) -> CovarianceMatrix:
    """Stationary covariance by the 2x2 closed form.

    The first call cross-checks the formula against the Lyapunov solver on
    random stable matrices and aborts on mismatch; afterwards the closed
    form is used directly.
    """
    global _SELFCHECK_DONE
    if not _SELFCHECK_DONE:
        _run_self_check()
        _SELFCHECK_DONE = True
    return _closed_form_raw(A, D)


def covariance_for_branch(steady: SteadyState, params: ModelParams) -> CovarianceMatrix:
    """Stationary covariance around a stable fixed point of the reduced model."""
    A = drift_matrix(steady, params)
    D = diffusion_matrix(steady, params)
    return covariance_closed_form(A, D)


@dataclass(frozen=True)
class PaperElements:
    """Explicit element formulas for C11 and C12, with their deviation
    from the Lyapunov-validated covariance (relative, elementwise)."""

    c11: complex
    c12: complex
    dev_c11: float
    dev_c12: float


def covariance_paper_elements(params: ModelParams, steady: SteadyState) -> PaperElements:
    """Evaluate the explicit C11/C12 formulas and report their deviation.

    C11 = a0^2 [2 M g1^2 + 2 N G (B + i g1) - 2 i g1 B M - G^2 n^2 (M + M*)] / den
    C12 = [2 N (g1^2 + B^2) + i g1 G n^2 (M* - M) - G B n^2 (M + M*)] / den
    den = 4 g1 (g1^2 + B^2 - G^2 n^2),   B = omega_c - 2 G n.

    These are reproduced literally as printed; the deviation fields carry
    the comparison against the covariance solved from the Lyapunov equation.
    """
    g1 = params.gamma1
    G = effective_coupling(params)
    M = noise_coefficient_m(params)
    n = steady.n
    N = noise_coefficient_n_per_photon(params) * n
    B = params.omega_c - 2.0 * G * n
    den = 4.0 * g1 * (g1**2 + B**2 - G**2 * n**2)
    scale = max(abs(g1), abs(B), abs(G) * n, 1e-300)
    if abs(den) <= 1e-13 * 4.0 * abs(g1) * scale**2:
        raise MarginalStabilityError(
            f"element-formula denominator {den:.3e} vanishes (marginal stability)")
    a0sq = steady.alpha0 ** 2
    msum = M + M.conjugate()
    c11 = a0sq * (2.0 * M * g1**2 + 2.0 * N * G * (B + 1j * g1)
                  - 2j * g1 * B * M - G**2 * n**2 * msum) / den
    c12 = (2.0 * N * (g1**2 + B**2) + 1j * g1 * G * n**2 * (M.conjugate() - M)
           - G * B * n**2 * msum) / den

    ref = covariance_for_branch(steady, params)
    dev_c11 = abs(c11 - ref.c11) / max(abs(ref.c11), 1e-300)
    dev_c12 = abs(c12 - ref.c12) / max(abs(ref.c12), 1e-300)
    if ref.c11 == 0 and c11 == 0:
        dev_c11 = 0.0
    if ref.c12 == 0 and c12 == 0:
        dev_c12 = 0.0
    return PaperElements(c11=c11, c12=c12, dev_c11=dev_c11, dev_c12=dev_c12)
