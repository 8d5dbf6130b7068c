from __future__ import annotations

import numpy as np
import pytest

from app.network import (
    ConsensusSummer,
    ConsensusWeights,
    ExactSummer,
    NotConnected,
    NotPerfectSquare,
    SensorNetwork,
    TopologyError,
    TransmissionLedger,
    build_jittered_grid,
    consensus_sum,
    load_topology,
    metropolis_weights,
    run_consensus,
    save_topology,
)


def _pair() -> SensorNetwork:
    return SensorNetwork.from_positions(np.array([[0.0, 0.0], [1.0, 0.0]]), 2.0)


def test_unjittered_grid_geometry():
    net = build_jittered_grid(25, 40.0, 18.0, jitter_fraction=0.0)
    xs = np.unique(np.round(net.positions[:, 0], 9))
    np.testing.assert_allclose(xs, [4.0, 12.0, 20.0, 28.0, 36.0])
    corner = net.nearest_sensor((0.0, 0.0))
    np.testing.assert_allclose(net.positions[corner], [4.0, 4.0])
    assert net.degree(corner) >= 3
    assert net.is_connected()


def test_large_range_gives_complete_graph():
    net = build_jittered_grid(4, 40.0, 100.0, rng=np.random.default_rng(0))
    assert all(net.degree(k) == 3 for k in range(4))


def test_jittered_grid_symmetric_and_within_range(grid25):
    adj = grid25.adjacency_matrix()
    np.testing.assert_array_equal(adj, adj.T)
    assert not adj.diagonal().any()
    dist = np.linalg.norm(grid25.positions[:, None] - grid25.positions[None], axis=2)
    np.testing.assert_array_equal(adj, (dist <= 18.0) & ~np.eye(25, dtype=bool))


def test_grid_errors():
    with pytest.raises(NotPerfectSquare):
        build_jittered_grid(24, 40.0, 18.0)
    with pytest.raises(NotConnected):
        build_jittered_grid(25, 40.0, 1.0, jitter_fraction=0.0)
    with pytest.raises(TopologyError):
        build_jittered_grid(25, 40.0, 18.0, jitter_fraction=0.5)


def test_asymmetric_neighbors_rejected():
    with pytest.raises(TopologyError):
        SensorNetwork(np.zeros((2, 2)), 1.0, ((1,), ()))


def test_topology_round_trip(tmp_path, grid25):
    path = save_topology(grid25, tmp_path / "topology.json")
    loaded = load_topology(path)
    np.testing.assert_array_equal(loaded.positions, grid25.positions)
    assert loaded.neighbors == grid25.neighbors
    assert loaded.comm_range == grid25.comm_range


def test_hop_counts_line(line3):
    np.testing.assert_array_equal(line3.hop_counts(0), [0, 1, 2])


def test_metropolis_pair_and_star():
    W = metropolis_weights(_pair()).matrix
    np.testing.assert_allclose(W, [[0.5, 0.5], [0.5, 0.5]])
    star = SensorNetwork(np.zeros((5, 2)), 1.0, ((1, 2, 3, 4), (0,), (0,), (0,), (0,)))
    S = metropolis_weights(star).matrix
    np.testing.assert_allclose(S[0], [0.2] * 5)
    np.testing.assert_allclose(np.diag(S)[1:], 0.8)


def test_metropolis_doubly_stochastic(grid25):
    W = metropolis_weights(grid25).matrix
    np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(W, W.T)
    assert (W >= 0).all()
    off = ~grid25.adjacency_matrix() & ~np.eye(25, dtype=bool)
    assert (W[off] == 0).all()


def test_two_node_one_iteration():
    net = _pair()
    states, done = run_consensus(net, metropolis_weights(net), np.array([0.0, 2.0]), 1)
    np.testing.assert_array_equal(states, [1.0, 1.0])
    assert done == 1
    np.testing.assert_array_equal(consensus_sum(net, metropolis_weights(net), np.array([1.0, 3.0]), 1), [4.0, 4.0])


def test_zero_iterations_is_identity():
    net = _pair()
    ledger = TransmissionLedger()
    init = np.array([[1.0, 2.0], [3.0, 4.0]])
    states, _ = run_consensus(net, metropolis_weights(net), init, 0, ledger=ledger)
    np.testing.assert_array_equal(states, init)
    assert ledger.total == 0


def test_path_converges(line3):
    states, _ = run_consensus(line3, metropolis_weights(line3), np.array([0.0, 0.0, 3.0]), 50)
    np.testing.assert_allclose(states, 1.0, atol=1e-9)


def test_fixed_point(grid25):
    out = consensus_sum(grid25, metropolis_weights(grid25), np.full((25, 3), 2.5), 7)
    np.testing.assert_allclose(out, 25 * 2.5, rtol=1e-13)


def test_average_preservation_and_contraction(grid25, rng):
    W = metropolis_weights(grid25)
    init = rng.normal(size=25)
    prev = init
    for i in range(1, 30):
        cur, _ = run_consensus(grid25, W, init, i)
        assert abs(cur.mean() - init.mean()) <= 1e-12
        assert np.ptp(cur) <= np.ptp(prev) + 1e-15
        prev = cur


def test_convergence_rate_and_sum(grid25, rng):
    # ptp(x_i) <= 2 |x_i - mean|_2 <= 2 lam^i |x_0 - mean|_2 <= 2 sqrt(K) lam^i ptp(x_0)
    W = metropolis_weights(grid25)
    rate = W.second_largest_modulus() ** 60
    init = rng.normal(size=(25, 4))
    final, _ = run_consensus(grid25, W, init, 60)
    spread0 = np.ptp(init, axis=0)
    assert (np.ptp(final, axis=0) <= 10 * rate * spread0 * (1 + 1e-9) + 1e-14).all()
    sums = consensus_sum(grid25, W, init, 60)
    dev = np.linalg.norm(init - init.mean(axis=0), axis=0)
    assert (np.abs(sums - init.sum(axis=0)) <= 25 * rate * dev * (1 + 1e-9) + 1e-12).all()


def test_unjittered_grid_reaches_tight_agreement(rng):
    net = build_jittered_grid(25, 40.0, 18.0, jitter_fraction=0.0)
    W = metropolis_weights(net)
    assert W.second_largest_modulus() ** 60 < 1e-8
    init = rng.normal(size=(25, 4))
    final, _ = run_consensus(net, W, init, 60)
    assert (np.ptp(final, axis=0) < 1e-8 * np.ptp(init, axis=0)).all()


def test_ledger_counts_table_value(grid25, rng):
    ledger = TransmissionLedger()
    run_consensus(grid25, metropolis_weights(grid25), rng.normal(size=(25, 69)), 8, ledger=ledger, stage="lc")
    assert ledger.stage_total("lc") == 13800
    assert ledger.end_step() == {"lc": 13800}
    assert ledger.per_step == [13800]


def test_tolerance_stops_early(grid25, rng):
    ledger = TransmissionLedger()
    _, done = run_consensus(grid25, metropolis_weights(grid25), rng.normal(size=25), 500, ledger=ledger, tol=1e-6)
    assert 0 < done < 500
    assert ledger.total == 25 * done


def test_time_varying_weights(line3):
    fixed = metropolis_weights(line3)
    calls = []

    def weights(i):
        calls.append(i)
        return fixed
    a, _ = run_consensus(line3, weights, np.array([0.0, 1.0, 5.0]), 4)
    b, _ = run_consensus(line3, fixed, np.array([0.0, 1.0, 5.0]), 4)
    np.testing.assert_array_equal(a, b)
    assert calls == [1, 2, 3, 4]


def test_summers(grid25, rng):
    addends = rng.normal(size=(25, 5))
    exact = ExactSummer(25)(addends, "lc")
    np.testing.assert_allclose(exact, np.broadcast_to(addends.sum(axis=0), (25, 5)))
    ledger = TransmissionLedger()
    approx = ConsensusSummer(grid25, metropolis_weights(grid25), 200, ledger=ledger)(addends, "lc")
    np.testing.assert_allclose(approx, exact, atol=1e-9)
    assert ledger.total == 25 * 200 * 5


def test_second_largest_modulus_of_pair():
    assert ConsensusWeights(np.array([[0.5, 0.5], [0.5, 0.5]])).second_largest_modulus() == pytest.approx(0.0, abs=1e-12)
