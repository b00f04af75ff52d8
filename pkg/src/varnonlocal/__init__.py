"""Variable-exponent nonlocal energies: evaluation, convergence checks and a denoiser."""

from .convergence import ConvergenceReport, bound_check, delta_sweep, liminf_check
from .denoise import DenoiseConfig, DenoiseTrace, denoise, energy_gradient, total_energy
from .energy import (EnergyResult, epsilon_functional, indicator_functional, lambda_direct,
                     lambda_polar, upper_bound_rhs)
from .errors import CapabilityError, NormalizationError, UnsupportedInputError, ValidationError
from .exponent_field import ExponentField, field_from_expression, field_from_grid
from .grid import BoxDomain, GridFunction, gradient_magnitude, local_energy, sample
from .kernels import (KernelProfile, ScaledKernel, check_hypotheses, check_normalization,
                      make_indicator_kernel, make_majorant_kernel, make_model_kernel)
from .maximal import ModularGrowthReport, counterexample_report, directional_maximal, modular
from .sphere_constants import gamma, gamma_mc, k_const

__version__ = "0.1.0"
