"""Wavelet-contrast independent component analysis."""

from .metrics import amari_error, haar_contrast_oracle, select_resolution, u_v_statistics
from .optimizer import DemixState, OptimizerConfig, exp_skew, make_objective, minimize
from .preprocessing import apply_cube, fit_cube, fit_rotation_cube, to_cube, whiten
from .projection import CoefficientSet, contrast, contrast_of, project
from .sources import make_mixing, mix, parse_density, parse_mixing, sample_sources
from .wavelets import PhiTable, WaveletSpec, build_phi_table, eval_phi_periodized, make_filter

__version__ = "0.1.0"
