"""Jost solutions, resolvent kernels and weighted semiclassical resolvent bounds in one dimension."""

__version__ = "0.1.0"

from .audit import (
    AprioriReport, EnergyTrace, TestFunction, audit_apriori_bound, audit_energy, dump_trace_csv, gaussian_bump,
    oscillatory_packet, smoothed_plateau, zero_function,
)
from .errors import ConvergenceError, CatalogError, JostkitError, QuadratureError, SolverError, SpecError
from .jost import JostSolution, ScatteringData, extract_scattering, scattering_data, solve_jost
from .kernel import KernelEval, build_kernel, exterior_kernel_bound_check, free_kernel, kernel_value
from .norms import (
    NormEstimate, check_rescaling_invariance, derivative_weight, envelope_weight, estimate_norm, exterior_weight,
    norm_via_kernel, norm_via_matrix, window_weight,
)
from .potentials import (
    CATALOG_NAMES, Envelope, Potential, abs_envelope, catalog_get, cumulative_abs, indicator_envelope,
    power_envelope,
)
from .sweep import SweepReport, SweepSpec, run_audit, run_sweep
from .weights import (
    WeightFunction, build_thm1_weight, build_thm2_weight, custom_weight, validate_weight, verify_w2_condition,
)
