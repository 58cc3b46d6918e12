import numpy as np
import pytest
import scipy.sparse as sp

from aoisched import config as cfg_mod
from aoisched import harness, reference
from aoisched.states import AbstractState, local_state_count, state_index, tuple_index


def test_reference_action_rules():
    sample, tau, power = reference.reference_action(
        np.array([0, 3, 0]), np.array([0.002, 0.003, 0.005]), 0.05)
    assert sample.tolist() == [1, 0, 1]
    assert np.allclose(power, 0.05)
    assert np.allclose(tau, [0.002, 0.003, 0.005])


def test_reference_split_proportional():
    cfg = cfg_mod.resolve_config({"mdp": {"dataVolume": [3, 5]},
                                  "room": {"sensorCount": 2}})
    sc = cfg_mod.build_scenario(cfg)
    assert np.allclose(sc.tau_ref, [0.00375, 0.00625])


def test_local_matrix_rows_sum_to_one(default_scenario):
    sc = default_scenario
    for k0 in (0, 1):
        lk = sc.weights.data_volume[k0]
        for c0 in (0, 5, 11):
            m = reference.local_transition_matrix(sc.reference_pmf[k0][c0], lk,
                                                  sc.weights.a_max)
            rows = np.asarray(m.sum(axis=1)).ravel()
            assert np.allclose(rows, 1.0, atol=1e-9)


def test_local_matrix_blocked_cell_is_deterministic_aging():
    amax = 4
    lk = 3
    pmf = np.zeros(lk + 1)
    pmf[0] = 1.0  # everything blocked: no departures
    m = reference.local_transition_matrix(pmf, lk, amax).toarray()
    r = tuple_index(2, 2, 3, amax) - 1
    c = tuple_index(2, 3, 4, amax) - 1
    assert m[r, c] == 1.0
    assert m[r].sum() == 1.0


def test_local_matrix_empty_queue_full_delivery_entry(default_scenario):
    sc = default_scenario
    k0, c0 = 0, 0
    lk = sc.weights.data_volume[k0]
    amax = sc.weights.a_max
    pmf = sc.reference_pmf[k0][c0]
    m = reference.local_transition_matrix(pmf, lk, amax).toarray()
    r = tuple_index(0, 3, 7, amax) - 1
    full = tuple_index(0, 1, 1, amax) - 1
    assert m[r, full] == pytest.approx(pmf[lk], abs=1e-12)  # tail mass at L_k
    partial = tuple_index(2, 1, 8, amax) - 1
    assert m[r, partial] == pytest.approx(pmf[lk - 2], abs=1e-12)


def test_full_matrix_dimension_and_rows(default_tables, default_scenario):
    sc = default_scenario
    for k0 in range(sc.n_sensors):
        m = default_tables.transition[k0]
        expected = sc.n_cells * local_state_count(sc.weights.data_volume[k0],
                                                  sc.weights.a_max)
        assert m.shape == (expected, expected)
        rows = np.asarray(m.sum(axis=1)).ravel()
        assert np.allclose(rows, 1.0, atol=1e-9)
    five = [k0 for k0, l in enumerate(sc.weights.data_volume) if l == 5]
    assert default_tables.transition[five[0]].shape[0] == 14_400


def test_cost_vector_entries(default_scenario):
    sc = default_scenario
    g = reference.cost_vector(sc, 1)
    amax = sc.weights.a_max
    lk = sc.weights.data_volume[0]
    idx = state_index(1, 0, 1, 1, lk, amax, sc.n_cells)
    assert g[idx - 1] == pytest.approx(1 + 1e4 * 1e-4)  # sampling on empty queue
    idx = state_index(5, 2, 3, amax, lk, amax, sc.n_cells)
    assert g[idx - 1] == pytest.approx(amax + 100.0)
    assert g.min() == pytest.approx(1.0)


def test_solve_value_limits():
    n = 40
    rng = np.random.default_rng(0)
    rows = rng.dirichlet(np.ones(n), size=n)
    transition = sp.csr_matrix(rows)
    cost = rng.uniform(1.0, 5.0, size=n)
    w_small = reference.solve_value(transition, cost, 1e-12)
    assert np.allclose(w_small, cost, atol=1e-9)
    identity = sp.identity(n, format="csr")
    w_geo = reference.solve_value(identity, cost, 0.5)
    assert np.allclose(w_geo, cost / 0.5)


def test_value_is_bellman_fixed_point(default_tables, default_scenario):
    gamma = default_scenario.weights.gamma
    for k0 in range(default_scenario.n_sensors):
        w = default_tables.value[k0]
        g = default_tables.cost[k0]
        backup = g + gamma * (default_tables.transition[k0] @ w)
        assert np.abs(backup - w).max() < 1e-6
        assert w.min() >= 0.0
        assert w.max() <= g.max() / (1 - gamma) + 1e-9


def test_constant_term_value(default_tables):
    assert default_tables.constant_term == pytest.approx(250.0, abs=1e-9)


def test_value_additive_over_sensors(default_tables, default_scenario):
    sc = default_scenario
    state = AbstractState(blocker_cell=3,
                          queues=np.array([1] * sc.n_sensors),
                          aoi_sensor=np.array([2] * sc.n_sensors),
                          aoi_server=np.array([4] * sc.n_sensors))
    total = reference.value_of_abstract_state(default_tables, state)
    parts = sum(default_tables.sensor_value(k + 1, 3, 1, 2, 4)
                for k in range(sc.n_sensors))
    assert total == pytest.approx(parts + default_tables.constant_term, rel=1e-12)


def test_value_monotone_in_server_aoi(small_tables, small_scenario):
    sc = small_scenario
    amax = sc.weights.a_max
    lk = sc.weights.data_volume[0]
    for cell in range(1, sc.n_cells + 1):
        for q in range(lk + 1):
            for a_s in range(1, amax + 1):
                values = [small_tables.sensor_value(1, cell, q, a_s, a_d)
                          for a_d in range(1, amax + 1)]
                assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


def test_value_matches_monte_carlo(small_tables, small_scenario):
    # solved value inside the Monte-Carlo confidence band (full-scale check
    # with 2000 rollouts runs in the acceptance suite)
    sc = small_scenario
    policy = harness.FixedSplitPolicy(sc)
    rng = np.random.default_rng(11)
    for i in range(4):
        start = AbstractState(
            blocker_cell=int(rng.integers(1, sc.n_cells + 1)),
            queues=np.array([int(rng.integers(0, 3))]),
            aoi_sensor=np.array([int(rng.integers(1, 4))]),
            aoi_server=np.array([int(rng.integers(1, 4))]))
        analytic = reference.value_of_abstract_state(small_tables, start)
        est = harness.monte_carlo_value(policy, sc, start, n_rollouts=400,
                                        horizon=600, gamma=sc.weights.gamma,
                                        seed=500 + i)
        assert abs(est.z_score(analytic)) < 4.0


def test_cache_round_trip(tmp_path, small_tables, small_scenario):
    path = reference.save_tables(small_tables, str(tmp_path))
    loaded = reference.load_tables(str(tmp_path), small_scenario)
    assert loaded is not None
    assert loaded.config_hash == small_tables.config_hash
    assert loaded.constant_term == small_tables.constant_term
    for k0 in range(len(small_tables.value)):
        assert np.allclose(loaded.value[k0], small_tables.value[k0])
        assert (loaded.transition[k0] != small_tables.transition[k0]).nnz == 0
        assert np.allclose(loaded.expected_next[k0], small_tables.expected_next[k0])
    assert path == reference.cache_path(str(tmp_path), small_tables.config_hash)


def test_cache_miss_on_config_change(tmp_path, small_tables):
    reference.save_tables(small_tables, str(tmp_path))
    changed = cfg_mod.build_scenario(cfg_mod.resolve_config({
        "room": {"sensorPositions": [[10.0, 2.0]], "sensorCount": 1},
        "blocker": {"cells": [[10.0, 6.0], [11.0, 6.0]], "startCell": 2},
        "mdp": {"dataVolume": [2], "aMax": 3, "gamma": 0.95},
    }))
    assert reference.load_tables(str(tmp_path), changed) is None


def test_load_or_build_uses_cache(tmp_path, small_scenario):
    notices = []
    t1 = reference.load_or_build(small_scenario, str(tmp_path), notice=notices.append)
    assert len(notices) >= 1
    notices.clear()
    t2 = reference.load_or_build(small_scenario, str(tmp_path), notice=notices.append)
    assert notices == []  # cache hit builds nothing
    assert np.allclose(t1.value[0], t2.value[0])
