import numpy as np
import pytest

from aoisched import config as cfg_mod
from aoisched import harness, reference
from aoisched.states import AbstractState, Action, SystemState, local_state_count


def test_same_seed_bit_identical(default_scenario):
    sc = default_scenario
    a = harness.run_episode(harness.FixedSplitPolicy(sc), sc, seed=5, n_frames=300)
    b = harness.run_episode(harness.FixedSplitPolicy(sc), sc, seed=5, n_frames=300)
    for field in ("cells", "gains", "queues", "aoi_sensor", "aoi_server",
                  "sample", "tau_sec", "power_w", "delivered", "cost"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    c = harness.run_episode(harness.FixedSplitPolicy(sc), sc, seed=6, n_frames=300)
    assert not np.array_equal(a.cells, c.cells)


def test_policies_share_randomness(default_scenario):
    # common random numbers: blocker path and gains agree across policies
    sc = default_scenario
    a = harness.run_episode(harness.FixedSplitPolicy(sc), sc, seed=9, n_frames=200)
    b = harness.run_episode(harness.AoiFirstPolicy(sc), sc, seed=9, n_frames=200)
    assert np.array_equal(a.cells, b.cells)
    assert np.array_equal(a.gains, b.gains)


def test_blocked_network_ages_to_cap():
    cfg = cfg_mod.resolve_config({
        "room": {"sensorPositions": [[10.0, 2.0]], "sensorCount": 1},
        "blocker": {"cells": [[10.0, 6.0], [10.0, 5.0]], "startCell": 1},
        "mdp": {"dataVolume": [2], "aMax": 3},
    })
    sc = cfg_mod.build_scenario(cfg)

    class Idle:
        name = "idle"

        def action(self, state):
            k = len(state.queues)
            return Action(sample=np.zeros(k, dtype=np.int64),
                          tau_sec=np.zeros(k), power_w=np.zeros(k))

    rec = harness.run_episode(Idle(), sc, seed=1, n_frames=10)
    a_max = sc.weights.a_max
    # no departures ever: server AoI reaches the cap by frame a_max and stays
    assert (rec.aoi_server[a_max - 1:] == a_max).all()
    assert (np.diff(rec.aoi_server[:a_max, 0]) == 1).all()


def test_components_sum_to_cost(default_scenario):
    sc = default_scenario
    rec = harness.run_episode(harness.BackpressurePolicy(sc), sc, seed=2,
                              n_frames=500)
    total = rec.comp_aoi + rec.comp_sampling + rec.comp_tx + rec.comp_penalty
    assert np.allclose(total, rec.cost, atol=1e-9)


def test_monte_carlo_constant_cost_geometric():
    cfg = cfg_mod.resolve_config({
        "room": {"sensorPositions": [[10.0, 2.0]], "sensorCount": 1},
        "blocker": {"cells": [[10.0, 6.0], [10.0, 5.0]], "startCell": 1},
        "mdp": {"dataVolume": [2], "aMax": 3},
    })
    sc = cfg_mod.build_scenario(cfg)

    class Idle:
        name = "idle"

        def action(self, state):
            return Action(sample=np.zeros(1, dtype=np.int64),
                          tau_sec=np.zeros(1), power_w=np.zeros(1))

    # start at the cap: the cost is (a_max + penalty) every frame
    start = AbstractState(1, np.array([2]), np.array([3]), np.array([3]))
    horizon, gamma = 40, sc.weights.gamma
    est = harness.monte_carlo_value(Idle(), sc, start, n_rollouts=8,
                                    horizon=horizon, gamma=gamma, seed=3)
    g = 3 + sc.weights.w_q
    expected = g * (1 - gamma ** horizon) / (1 - gamma)
    assert est.mean == pytest.approx(expected, rel=1e-12)
    assert est.std == 0.0


def test_discounted_return_matches_recorded_episode(default_scenario):
    sc = default_scenario
    gamma = sc.weights.gamma
    policy = harness.FixedSplitPolicy(sc)
    rec = harness.run_episode(policy, sc, seed=11, n_frames=150)
    direct = harness.discounted_return(policy, sc, seed=11, horizon=150,
                                       gamma=gamma)
    weights = gamma ** np.arange(150)
    assert direct == pytest.approx(float(rec.cost @ weights), rel=1e-12)


def test_truncation_control(small_scenario, small_tables):
    sc = small_scenario
    policy = harness.FixedSplitPolicy(sc)
    start = AbstractState(1, np.array([0]), np.array([1]), np.array([1]))
    short = harness.monte_carlo_value(policy, sc, start, 64, 700,
                                      sc.weights.gamma, seed=4)
    long = harness.monte_carlo_value(policy, sc, start, 64, 1400,
                                     sc.weights.gamma, seed=4)
    assert abs(long.mean - short.mean) / abs(long.mean) < 1e-4


def test_empirical_transitions_match_model(small_scenario, small_tables):
    # mechanics check at a modest frame count; binomial noise at ~500 visits
    # allows TV up to roughly 0.05 (the full-scale bound runs in acceptance)
    sc = small_scenario
    empirical, counts = harness.empirical_transitions(sc, 1, 40_000, seed=5)
    model = small_tables.transition[0]
    rows = np.flatnonzero(counts >= 500)
    assert len(rows) > 0
    for r in rows:
        emp = empirical[r].toarray().ravel()
        ref = model[r].toarray().ravel()
        assert 0.5 * np.abs(emp - ref).sum() < 0.05
        assert not np.any((emp > 0) & (ref == 0))  # structural zeros stay zero
        assert emp.sum() == pytest.approx(1.0, abs=1e-12)


def test_oracle_refuses_oversized_instances(small_scenario):
    with pytest.raises(ValueError):
        harness.oracle_value_iteration(small_scenario, size_cap=10)


def test_oracle_rejects_multi_sensor(default_scenario):
    with pytest.raises(ValueError):
        harness.oracle_value_iteration(default_scenario)


def test_oracle_zero_discount_is_myopic_min(small_scenario):
    result = harness.oracle_value_iteration(small_scenario, gamma=0.0,
                                            quad_nodes=48)
    w = small_scenario.weights
    # with no lookahead the value is the expected minimal per-frame cost:
    # transmitting is never worth paying energy for, sampling costs energy,
    # so the optimum is the bare AoI cost plus the cap penalty
    for cell in (1, 2):
        for q in (0, 1, 2):
            for a_s in (1, 2, 3):
                for a_d in (1, 2, 3):
                    expected = a_d + (w.w_q if a_d == w.a_max else 0.0)
                    got = result.value(cell, q, a_s, a_d, w.a_max)
                    assert got == pytest.approx(expected, abs=1e-9)


def test_oracle_upper_bounded_by_reference(small_scenario, small_tables):
    # the discretized optimum can never exceed the reference policy's value
    result = harness.oracle_value_iteration(small_scenario)
    w = small_scenario.weights
    for cell in (1, 2):
        for q in (0, 1, 2):
            for a_s in (1, 2, 3):
                for a_d in (1, 2, 3):
                    ref = small_tables.sensor_value(1, cell, q, a_s, a_d)
                    ref += small_tables.constant_term
                    assert result.value(cell, q, a_s, a_d, w.a_max) <= ref + 1e-6


def test_make_policy_names(default_scenario, default_tables):
    for name in harness.POLICY_NAMES:
        p = harness.make_policy(name, default_scenario, default_tables)
        assert p.name == name
    assert harness.make_policy("psi2", default_scenario, default_tables).max_iters == 2
    with pytest.raises(ValueError):
        harness.make_policy("nope", default_scenario)
    with pytest.raises(ValueError):
        harness.make_policy("proposed", default_scenario, None)


def test_recorded_actions_validate(default_scenario, default_tables):
    sc = default_scenario
    pol = harness.make_policy("proposed", sc, default_tables)
    rec = harness.run_episode(pol, sc, seed=13, n_frames=100)
    for t in range(rec.n_frames):
        act = Action(sample=rec.sample[t], tau_sec=rec.tau_sec[t],
                     power_w=rec.power_w[t])
        act.validate(sc.weights.frame_sec, sc.params.max_power_w)
        assert (rec.delivered[t] <= np.array(sc.weights.data_volume)).all()


def test_csv_round_trip(default_scenario, tmp_path):
    import csv
    sc = default_scenario
    rec = harness.run_episode(harness.FixedSplitPolicy(sc), sc, seed=3, n_frames=20)
    path = tmp_path / "episode.csv"
    with open(path, "w") as fh:
        rec.write_csv(fh)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20
    assert int(rows[0]["frame"]) == 1
    assert int(rows[7]["cell"]) == rec.cells[7]
    assert float(rows[4]["cost"]) == pytest.approx(rec.cost[4], rel=1e-8)
    k = sc.n_sensors
    assert f"q{k}" in rows[0] and f"delivered{k}" in rows[0]
