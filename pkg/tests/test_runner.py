from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from app.harness import (
    build_network,
    build_tracker,
    expected_transmissions,
    read_metrics_json,
    run_experiment,
    run_seed,
    simulate_run,
    write_experiment,
)
from app.main import main
from app.network import TransmissionLedger, load_topology
from app.scenario import (
    AcousticModel,
    ExperimentConfig,
    FilterConfig,
    Method,
    PriorSpec,
    ScenarioConfig,
    TargetDynamics,
    measure_all,
    reference_config,
    save_experiment_config,
    simulate_truth,
)


@pytest.fixture
def small_cfg() -> ExperimentConfig:
    return ExperimentConfig(
        scenario=ScenarioConfig(n_sensors=9, comm_range=25.0, n_steps=5),
        filter=FilterConfig(method="LC-DPF", n_particles=60),
        runs=2,
        seed=11,
    )


def test_run_seed_is_stable():
    assert run_seed(0, 3) == run_seed(0, 3)
    assert run_seed(0, 3) != run_seed(0, 4)
    assert run_seed(1, 3) != run_seed(0, 3)


def test_same_truth_for_every_method(small_cfg):
    net = build_network(small_cfg)
    a = simulate_run(small_cfg.with_method(Method.CPF), net, 0, keep_trajectory=True)
    b = simulate_run(small_cfg.with_method(Method.LC_DGPF), net, 0, keep_trajectory=True)
    np.testing.assert_array_equal(a.truth, b.truth)
    assert a.estimates.shape == (5, 1, 8)
    assert b.estimates.shape == (5, 9, 8)
    assert a.sq_errors.shape == (5, 1, 2) and b.sq_errors.shape == (5, 9, 2)


@pytest.mark.parametrize("method", list(Method))
def test_every_method_runs(small_cfg, method):
    n = 9 * 16 if method is Method.R_LC_DGPF else 60
    res = run_experiment(small_cfg.with_method(method, n_particles=n))
    rep = res.report
    assert rep.method == method.value
    assert rep.runs == 2 and len(rep.rmse) == 5
    assert all(np.isfinite(rep.rmse))
    assert rep.transmissions_per_step == expected_transmissions(res.config, res.network)


def test_outputs_are_reproducible(small_cfg, tmp_path):
    a = write_experiment(run_experiment(small_cfg), tmp_path / "a")
    b = write_experiment(run_experiment(small_cfg), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.name == pb.name
        assert pa.read_bytes() == pb.read_bytes()


def test_workers_do_not_change_results(small_cfg):
    serial = run_experiment(small_cfg).report
    pooled = run_experiment(replace(small_cfg, workers=2)).report
    assert serial == pooled


def test_low_noise_tracking(small_cfg):
    scen = replace(small_cfg.scenario, sigma_v2=0.01, fixed_x0=True)
    cfg = replace(small_cfg, scenario=scen).with_method(Method.CPF, n_particles=2000)
    rep = run_experiment(cfg).report
    assert rep.rmse[-1] < 1.0
    assert rep.track_loss_pct == 0.0


def test_transmissions_per_step_on_reference_network():
    cfg = replace(reference_config(), runs=1)
    cfg = replace(cfg, scenario=replace(cfg.scenario, n_steps=2))
    net = build_network(cfg)
    lc = simulate_run(cfg.with_method(Method.LC_DPF, n_particles=30), net, 0)
    assert lc.transmissions == [13800, 13800]
    r = simulate_run(cfg.with_method(Method.R_LC_DGPF, n_particles=400), net, 0)
    assert r.transmissions == [22800, 22800]
    exact = simulate_run(cfg.with_method(Method.LC_DGPF, n_particles=30, exact_sums=True), net, 0)
    assert exact.transmissions == [0, 0]


def test_rlcdgpf_with_consensus_tracks_reference_scenario():
    cfg = replace(reference_config(), runs=1)
    cfg = replace(cfg, scenario=replace(cfg.scenario, n_steps=4, fixed_x0=True)).with_method(Method.R_LC_DGPF)
    res = simulate_run(cfg, build_network(cfg), 0, keep_trajectory=True)
    assert res.estimates.shape == (4, 25, 8)
    assert np.isfinite(res.estimates).all()
    assert not res.diverged
    assert res.transmissions == [22800] * 4
    assert np.sqrt(res.sq_errors).max() < 3.0


def test_rlcdgpf_sensor_beliefs_under_imperfect_consensus():
    cfg = reference_config().with_method(Method.R_LC_DGPF)
    scen = replace(cfg.scenario, fixed_x0=True)
    net = build_network(cfg)
    ledger = TransmissionLedger()
    tracker = build_tracker(cfg, net, run_seed(cfg.seed, 0), ledger)
    prior = PriorSpec.from_config(scen)
    tracker.initialize(prior.belief())
    truth = simulate_truth(TargetDynamics.from_config(scen), prior, 3, np.random.default_rng(3), fixed_x0=True)
    acoustic = AcousticModel.from_config(scen)
    meas_rng = np.random.default_rng(4)
    for n in range(1, 4):
        est = tracker.step(n, measure_all(truth[n], net, acoustic, meas_rng))
        assert ledger.end_step() == {"lc": 13800, "moments": 9000}
        assert np.isfinite(est).all()
        for b in tracker.beliefs:
            assert np.isfinite(b.cov).all()
            assert np.linalg.eigvalsh(b.cov).min() > 0.0
        # eight iterations leave the sensors close but not identical
        spread = np.ptp(est, axis=0)
        assert 0.0 < spread.max() < 1.0
    assert tracker.diverged is False


def test_exact_sums_label(small_cfg):
    rep = run_experiment(small_cfg.with_method(Method.LC_DPF, exact_sums=True)).report
    assert rep.method == "LC-DPF (exact sums)"
    assert rep.transmissions_total == 0


def test_topology_file_is_reused(small_cfg, tmp_path):
    paths = write_experiment(run_experiment(small_cfg), tmp_path)
    topo = next(p for p in paths if p.name == "topology.json")
    reused = build_network(replace(small_cfg, seed=99, topology_path=str(topo)))
    np.testing.assert_array_equal(reused.positions, load_topology(topo).positions)


def test_trajectory_written_on_request(small_cfg, tmp_path):
    res = run_experiment(replace(small_cfg, save_trajectory=True))
    names = [p.name for p in write_experiment(res, tmp_path)]
    assert "trajectory.csv" in names
    lines = (tmp_path / "trajectory.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("n,node,truth_0")
    assert len(lines) == 1 + 5 * 9


def test_cli_run(small_cfg, tmp_path, capsys):
    cfg_path = save_experiment_config(small_cfg, tmp_path / "exp.json")
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg_path), "--method", "CGPF", "--runs", "1", "--out", str(out)])
    assert code == 0
    assert (out / "rmse.csv").exists() and (out / "topology.json").exists()
    (rep,) = read_metrics_json(out / "metrics.json")
    assert rep.method == "CGPF" and rep.runs == 1
    assert "[OK] wrote" in capsys.readouterr().out


def test_cli_topology(tmp_path, capsys):
    assert main(["topology", "--seed", "4", "--out", str(tmp_path)]) == 0
    assert load_topology(tmp_path / "topology.json").K == 25
    assert "connected=True" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["run", "--method", "EKF"],
    ["run", "--method", "R-LC-DGPF", "--particles", "401"],
    ["run", "--config", "does/not/exist.json"],
    ["run", "--topology", "does/not/exist.json"],
    ["run", "--log-level", "LOUD"],
    ["iterations", "--iteration-list", "4,x"],
])
def test_cli_rejects_bad_input(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err
