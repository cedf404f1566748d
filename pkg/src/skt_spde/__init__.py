"""Spectral-Galerkin simulation of a stochastic population cross-diffusion
system with multiplicative cylindrical noise."""

from .model import (
    ConditionReport,
    ModelParams,
    NoReversibleMeasure,
    check_conditions,
    entropy,
    entropy_density,
    eval_diffusion_matrix,
    eval_truncated_matrix,
    quadratic_form_gap,
    solve_detailed_balance,
)
from .spectral import GalerkinState, SpectralBasis, drift_apply, gradient, project, synthesize
from .noise import (
    NoiseSpec,
    WienerIncrement,
    apply_sigma,
    growth_constant,
    hs_norm_sq,
    increment_stream,
    sample_increment,
)
from .integrator import (
    BlowUpBudgetExceeded,
    BlowUpError,
    PathResult,
    SimConfig,
    em_step,
    run_ensemble,
    run_path,
)
from .diagnostics import (
    DiagnosticsRecord,
    EnsembleStats,
    StepAudit,
    export_csv,
    ito_residual,
    negativity_report,
    record,
    stampacchia_F,
    stampacchia_f,
    stampacchia_psi,
)

__version__ = "0.1.0"
