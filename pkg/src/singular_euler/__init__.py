"""Singular-field construction for incompressible Euler on a periodic grid."""
from .grid import (
    Field2D,
    FieldError,
    GridSpec,
    ScalarField,
    Trajectory,
    VectorField3,
    exp_weighted_norm,
    laplacian,
    load_fields,
    make_field,
    norm,
    partial,
    save_fields,
)
from .kernels import (
    CutoffConfig,
    HeatKernel,
    HeatParams,
    PoissonGradKernel,
    direct_convolve_oracle,
    duhamel_integral,
    heat_convolve,
    poisson_grad_convolve,
)
from .divfree import CompletionResult, complete_f3, divergence, i3_partial
from .leray import ModeSet, assemble_g, mode_relation_residual, source_G
from .solver import (
    ContractionConstants,
    DataSolution,
    SolverConfig,
    contraction_constant,
    iterate_v,
    make_seed,
    solve_data,
    solve_parameterized,
    update_w,
)
from .verifier import (
    RigidityReport,
    VerificationReport,
    blowup_diagnostics,
    check_burgers_condition,
    check_dataeq,
    check_leray_condition,
    check_singular_euler,
    rigidity_2d,
)

__version__ = "0.1.0"
