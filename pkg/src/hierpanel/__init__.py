"""Hierarchical three-dimensional panel regression with global and
industry-specific interactive factors."""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, bootstrap_ci, mbb_time_indices
from .dgp import DgpSpec, DgpTruth, draw_sizes, generate
from .heterogeneous import HeterogeneousFit, fit_heterogeneous, fit_industry
from .homogeneous import HomogeneousFit, beta_given_factors, factors_given_beta, fit_alternating, fit_full
from .io import load_csv, write_csv
from .montecarlo import McCell, McReport, projector_distance, run_cell, run_grid
from .panel import FactorStructure, ModelConfig, PanelDataset, PanelValidationError, objective_q, residuals, validate
from .selection import (
    SelectionResult,
    VarianceShares,
    extract_global,
    extract_loadings,
    select_global,
    select_specific,
    sigma_global,
    sigma_specific,
    variance_shares,
)
