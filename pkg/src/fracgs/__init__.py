"""fracgs: spectral ground states and continuation for the fractional NLS with a harmonic trap."""

from .core import (
    Field,
    Grid,
    Observables,
    TruncationWarning,
    apply_fractional_power,
    gaussian,
    inner,
    l2_norm,
    make_grid,
    observables,
    resample,
    window_fractional_apply,
    window_kinetic,
)
from .errors import (
    ConfigError,
    FoldError,
    FracgsError,
    NonConvergenceError,
    PositivityError,
    RegimeError,
    RootRangeError,
    StateFileError,
)
from .model import (
    IdentityReport,
    ModelParams,
    action,
    critical_exponents,
    identity_residuals,
    jacobian_apply,
    pohozaev_k,
    residual_field,
)
from .spectrum import (
    EigenPair,
    SpectrumEdges,
    dense_operator_matrix,
    ground_eigenpair,
    jacobian_spectrum_edges,
    lowest_eigenpairs,
)
from .groundstate import (
    GroundState,
    SolverOptions,
    UniquenessReport,
    recommended_grid,
    solve_ground_state,
    uniqueness_probe,
)
from .continuation import (
    AsymptoticsReport,
    BranchPoint,
    FoldResult,
    HomotopyReport,
    MassCurve,
    asymptotics_checks,
    classify_stability,
    find_fold,
    golden_refine_max,
    refine_fold_from_samples,
    s_homotopy,
    solve_normalized,
    trace_branch,
)
from .evolution import StabilityReport, Trajectory, evolve, smooth_noise, stability_probe, strang_step
from .stateio import (
    RunConfig,
    config_from_text,
    config_to_text,
    decode_state,
    emit_branch_csv,
    emit_trajectory_csv,
    encode_state,
    read_state,
    write_state,
)

__version__ = "0.1.0"
