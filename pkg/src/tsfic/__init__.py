"""Focused model selection between ARMA spectral families and the periodogram."""

__version__ = "0.1.0"

from .exceptions import (DegenerateInputError, DesignError, DiagnosticUnavailable, FocusDomainError,
                         InfeasibleCovarianceError, NumericDegeneracyError, PreconditionError,
                         SingularInformationError)
from .spectral import ARMAFamily, QuadratureRule, default_quadrature, make_arma_family
from .periodogram import EmpiricalSpectrum, TimeSeries, np_focus, periodogram_at
from .focus import (FocusFunctional, focus_band_mass, focus_from_config, focus_lag_corr,
                    focus_lag_cov, focus_threshold_prob)
from .estimation import FitOptions, FitResult, fit_gaussian_ml, fit_whittle, least_false
from .fic import (AficWeights, CandidateModel, CandidateScore, FicReport, afic_scores, fic_scores,
                  population_scores, z_statistic)
