"""Exact steady state from the hypergeometric kernel series."""

from .closed_forms import closed_form_correlation_f0, closed_form_rho_f0, closed_form_wigner_f0
from .kernel import KernelSeries, build_kernel_series, converged_series, g_switch, kernel
from .steady_state import (
    SteadyState,
    WignerGrid,
    correlation,
    density_matrix,
    g2,
    mean_photon_number,
    normalization,
    select_cutoff,
    wigner,
    wigner_grid,
)

__all__ = [
    "KernelSeries",
    "SteadyState",
    "WignerGrid",
    "build_kernel_series",
    "closed_form_correlation_f0",
    "closed_form_rho_f0",
    "closed_form_wigner_f0",
    "converged_series",
    "correlation",
    "density_matrix",
    "g2",
    "g_switch",
    "kernel",
    "mean_photon_number",
    "normalization",
    "select_cutoff",
    "wigner",
    "wigner_grid",
]
