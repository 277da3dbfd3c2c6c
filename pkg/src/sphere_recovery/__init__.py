"""Recovery of discrete point measures on the unit sphere from moments
against random polynomial ensembles, via l1-minimizing convex programs,
with the supporting analytic bounds, transport metrics, and experiment
harness."""

from .analysis import (
    BoundReport,
    RipReport,
    TauStarReport,
    c0,
    candes_error_constant,
    concentration_bound,
    gershgorin_bounds,
    mse_bound,
    rip_constant,
    tau_star,
    theorem_b_min_degree,
    theorem_b_probability,
    theorem_b_sample_bound,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    SelectorInfeasible,
    TauSelection,
    TrialRecord,
    default_sparsity_threshold,
    k_of_tau,
    load_config,
    make_code,
    numerical_sparsity,
    run_approx_recovery,
    run_consistency,
    run_exact_recovery,
    run_experiment,
    select_tau,
    tau_sweep,
    threshold_and_normalize,
)
from .kss import (
    KernelMatrix,
    KssPolynomial,
    enumerate_multiindices,
    evaluate,
    kernel_matrix,
    kernel_value,
    kss_variance,
    load_polynomial,
    monomial_matrix,
    multiindex_count,
    sample_evaluations,
    sample_kss,
    save_polynomial,
)
from .l1 import (
    KktReport,
    RecoveryProblem,
    RecoverySolution,
    check_kkt,
    lp_oracle_bp,
    solve,
    solve_bp,
    solve_bpdn,
)
from .measures import DiscreteMeasure, load_measure, save_measure
from .moments import (
    MeasurementEnsemble,
    MomentVector,
    MseForm,
    SingularSystemError,
    build_ensemble,
    build_joint_ensemble,
    load_matrix_csv,
    load_vector_csv,
    moments_of,
    mse_form,
    optimal_coeffs,
    psi,
    save_matrix_csv,
    save_vector_csv,
)
from .sphere_codes import (
    CodeSequence,
    SphericalCode,
    angular_distance,
    load_code,
    make_circle_code,
    make_e8_code,
    nearest_code_projection,
    save_code,
    theta_of,
)
from .transport import (
    TransportPlan,
    geodesic_cost_matrix,
    wasserstein,
    wasserstein_upper_bound_via_l1,
)

__version__ = "0.1.0"
