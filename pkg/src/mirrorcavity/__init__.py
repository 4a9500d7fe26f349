"""Driven cavity with a heavily damped movable mirror: steady states,
stability, stationary fluctuations, photon statistics, and a positive-P
Monte Carlo engine that cross-validates the analytic chain."""

__version__ = "0.1.0"

from .model import (AdiabaticReport, GeometryParams, ModelParams,
                    coupling_from_geometry, validate_adiabatic)
from .reduced import (EffectiveModel, LinearizedSystem, SteadyState,
                      cavity_steady_states, diffusion_matrix, drift_matrix,
                      drive_for_occupation, effective_coupling,
                      mirror_steady_amplitudes)
from .stability import AxisSpec, SpectrumReport, classify, eigenvalues, stability_map
from .fluctuations import (CovarianceMatrix, MarginalStabilityError,
                           covariance_closed_form, covariance_for_branch,
                           covariance_paper_elements, lyapunov_solve)
from .correlation import (G2Report, classify_antibunching, g2_closed_form,
                          g2_from_covariance, g2_sweep)
from .sde import (EnsembleStats, FullState, IntegratorConfig,
                  SimulationQualityError, UndefinedEstimateError, estimate_g2,
                  full_drift, full_noise_factor, integrate_paths,
                  reduced_drift_and_noise, simulate)

__all__ = [name for name in dir() if not name.startswith("_")]
