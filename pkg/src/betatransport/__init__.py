"""Approximate transport between one-cut beta-matrix models.

The package solves equilibrium measures for polynomial potentials, inverts
the associated master operator, assembles first-order accurate transport
vector fields between a source model V and a target V + W, integrates the
corresponding flows into eigenvalue maps, and compares local spectral
statistics of mapped and directly sampled ensembles.
"""
from .equilibrium import (
    EquilibriumMeasure,
    HypothesisReport,
    check_hypotheses,
    energy,
    interpolated_measure,
    log_potential,
    effective_potential,
    solve_equilibrium,
    stieltjes,
    variational_residual,
)
from .errors import (
    BetaTransportError,
    ClampWarning,
    ConfigurationError,
    CriticalityError,
    DegenerateConfigurationError,
    DomainError,
    ExtrapolationWarning,
    HypothesisFailureError,
    InversionFailureError,
    InvalidInputError,
    InvalidSupportError,
    NoOneCutSolutionError,
    NonConvergenceError,
    NumericalFailureError,
    StatisticalFailureError,
    StiffFlowError,
    TuningWarning,
    UnsupportedOrderError,
)
from .flow import (
    MappedSample,
    TransportMap,
    apply_map,
    build_transport_map,
    flow_correction,
    flow_scalar,
    map_derivative_at,
    map_from_dict,
    map_to_dict,
)
from .master_operator import (
    ExteriorFactor,
    SupportFunction,
    airfoil_h0,
    apply_xi,
    exterior_ell,
    invert_xi,
)
from .potentials import AffineMap, Potential, interpolate, match_supports
from .samplers import (
    EigenSample,
    SamplerConfig,
    batch_means_ess,
    sample_gaussian_tridiagonal,
    sample_mcmc,
    sample_spectra,
)
from .statistics import (
    ComparisonReport,
    EdgeStatistic,
    GapStatistic,
    UniversalityResult,
    bulk_gaps,
    compare_distributions,
    compare_local_statistics,
    compare_rescaled_statistics,
    edge_values,
    ks_null_quantile,
    rescale_gaps,
    rescaled_statistics_experiment,
    universality_experiment,
)
from .transport_fields import (
    FieldSlice,
    ResidualSample,
    TransportFieldSet,
    ZField,
    build_field_set,
    build_y0,
    build_y1,
    build_z,
    check_field_equations,
    evaluate_field,
    field_divergence,
    field_equation_residuals,
    fieldset_from_dict,
    fieldset_to_dict,
    residual,
    residual_slope,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
