"""fanodyn: exact non-Markovian master-equation dynamics for Fano-Anderson
open systems with arbitrary Gaussian initial system-bath correlations, plus
an exact finite-environment oracle for validation."""

__version__ = "0.1.0"

from .grids import TimeGrid
from .model import (
    ConfigurationError,
    ConstantSchedule,
    CustomGaussian,
    DecoupledThermal,
    DomainError,
    GaussianInitialData,
    Mode,
    ModelSpec,
    PartitionFreeThermal,
    QuenchSchedule,
    Reservoir,
    Statistics,
    TabulatedSchedule,
    ValidationError,
    build_single_particle_hamiltonian,
    initial_correlations,
    thermal_occupation,
    uniform_band,
    validate_model,
)
from .kernels import (
    KernelSamples,
    PhaseTable,
    memory_kernel,
    pair_kernel_bb,
    particle_kernel_bb,
    sb_boundary_nu,
    sb_boundary_v,
    thermal_bb_kernel,
)
from .greens import (
    CorrelationPair,
    SingularPropagatorError,
    TwoTimeField,
    attach_log_derivatives,
    build_correlations,
    build_two_time_field,
    correlation_nu,
    correlation_v,
    equal_time_derivatives,
    lesser_green,
    log_derivative,
    solve_dyson,
)
from .master import (
    CoefficientTrajectory,
    FockSpace,
    MasterCoefficients,
    assemble_coefficients,
    coefficients,
    dissipator,
    evolve,
    fluctuator,
    liouvillian_apply,
    moments,
    nz_form_apply,
)
from .oracle import (
    ComparisonReport,
    GridMismatchError,
    OracleOutputs,
    RunOutputs,
    TotalPropagator,
    UnsupportedScopeError,
    compare,
    convergence_ratios,
    exact_moments,
    exact_reduced_density,
    gaussian_fock_state,
    system_moment_trajectory,
    total_propagator,
    trace_distance,
)
from .pipeline import (
    GreensStack,
    MasterRun,
    build_greens_stack,
    default_boson_cutoff,
    initial_reduced_density,
    oracle_outputs_for,
    run_master,
)
