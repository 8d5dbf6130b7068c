from .basis import (
    BasisError,
    DimensionMismatch,
    TooFewPoints,
    RankDeficient,
    MultiIndex,
    PolynomialBasis,
    BasisExpansion,
    basis_size,
    enumerate_multi_indices,
    evaluate_basis,
    ls_fit,
    add_indices,
)
from .likelihood import (
    LayoutMismatch,
    ExpFamilyLocalModel,
    GaussianMeasurementModel,
    CallableExpFamilyModel,
    JlfStatistic,
    fit_alpha,
    gamma_direct,
    gamma_indirect_gaussian,
    local_beta,
    local_general_terms,
    sum_local_statistics,
    eval_log_jlf,
    exp_family_eta,
    exact_sufficient_statistic,
    log_norm_const,
    consensus_payload,
    statistic_from_payload,
    payload_size,
)
