from .metrics import (
    TRACK_LOSS_THRESHOLD,
    MetricsReport,
    position_sq_errors,
    rmse_n,
    armse,
    sigma_armse,
    final_errors,
    track_loss,
    comm_cost,
    sdpf_cost,
)
from .runner import (
    RunResult,
    ExperimentResult,
    run_seed,
    build_network,
    build_tracker,
    expected_transmissions,
    simulate_run,
    run_experiment,
)
from .export import (
    write_rmse_csv,
    write_metrics_json,
    read_metrics_json,
    write_trajectory_csv,
    write_experiment,
)
from .suites import SuiteResult, table1, iterations, low_particles
