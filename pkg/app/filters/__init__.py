from .particles import (
    FilterDivergence,
    ParticleBudgetError,
    ParticleSet,
    GaussianBelief,
    PartialMoments,
    LinearDynamics,
    stream_rng,
    systematic_resample,
    propagate,
    weight_update,
    point_estimate,
    gaussian_moments,
    weighted_sum,
    weighted_outer_sum,
)
from .centralized import (
    Tracker,
    CentralizedPF,
    CentralizedGPF,
    cpf_step,
    cgpf_step,
)
from .distributed import (
    LcConfig,
    LikelihoodConsensus,
    LcDpf,
    LcDgpf,
    RLcDgpf,
    lcdpf_step,
    lcdgpf_step,
    rlcdgpf_step,
    weight_shift,
    check_particle_budget,
)
