from .config import (
    ConfigError,
    Method,
    ScenarioConfig,
    FilterConfig,
    ExperimentConfig,
    reference_config,
    n_consensus_lc,
    load_experiment_config,
    save_experiment_config,
)
from .model import (
    TargetDynamics,
    AcousticModel,
    PriorSpec,
    position_indices,
    h_all,
    h_acoustic,
    simulate_truth,
    measure_all,
    sensor_models,
    exact_log_jlf,
    jlf_factory,
)
