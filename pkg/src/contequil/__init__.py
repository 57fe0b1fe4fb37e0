"""Finite-time equilibration bounds for Hamiltonians with continuous spectrum,
with a brute-force oracle for every inequality involved."""
from __future__ import annotations

from .bounds import (
    BoundBreakdown,
    FiniteDimSystem,
    ToyParams,
    assemble_bound,
    f_term,
    k_term,
    r_cross_term,
    short_bound_finite_dim,
    toy_closed_form,
)
from .kernels import (
    KernelParams,
    cesaro_kernel,
    coherence_bound,
    coherence_bound_envelope,
    kernel_y_derivative_magnitude,
    sinc,
    sup_F_over_cells,
)
from .oracle import cesaro_average_state, empirical_sigma_sq, evolve, trace_norm
from .povm import Povm, PovmFamily, distinguishability, effective_equilibration_check
from .spectral import (
    DensityMatrix,
    Observable,
    Partition,
    SpectralState,
    SpectrumGrid,
    beta,
    build_uniform_grid,
    characteristic_integral,
    normalize,
    project_cell,
    purity,
)

__version__ = "0.1.0"

__all__ = [
    "assemble_bound",
    "beta",
    "BoundBreakdown",
    "build_uniform_grid",
    "cesaro_average_state",
    "cesaro_kernel",
    "characteristic_integral",
    "coherence_bound",
    "coherence_bound_envelope",
    "DensityMatrix",
    "distinguishability",
    "effective_equilibration_check",
    "empirical_sigma_sq",
    "evolve",
    "f_term",
    "FiniteDimSystem",
    "k_term",
    "kernel_y_derivative_magnitude",
    "KernelParams",
    "normalize",
    "Observable",
    "Partition",
    "Povm",
    "PovmFamily",
    "project_cell",
    "purity",
    "r_cross_term",
    "short_bound_finite_dim",
    "sinc",
    "SpectralState",
    "SpectrumGrid",
    "sup_F_over_cells",
    "toy_closed_form",
    "ToyParams",
    "trace_norm",
]
