import numpy as np
import pytest

from aoisched import mobility
from aoisched.states import (Action, CostWeights, SystemState, advance_local,
                             cost_components, local_state_count, per_frame_cost,
                             state_from_index, state_index, transition_support,
                             tuple_index)


def weights(k=1, a_max=10, w_p=1e4, w_q=100.0):
    return CostWeights(w_p=w_p, w_q=w_q, sample_energy_j=1e-4, a_max=a_max,
                       gamma=0.98, frame_sec=0.01, data_volume=(5,) * k)


def one_sensor_state(aoi_server, queue=2, aoi_sensor=1, gain=100.0):
    return SystemState(blocker_cell=1, gains=np.array([gain]),
                       queues=np.array([queue]), aoi_sensor=np.array([aoi_sensor]),
                       aoi_server=np.array([aoi_server]))


def action(sample=0, tau=0.0, power=0.0):
    return Action(sample=np.array([sample]), tau_sec=np.array([tau]),
                  power_w=np.array([power]))


def test_cost_single_aoi_term():
    w = weights()
    assert per_frame_cost(one_sensor_state(1), action(), w) == 1.0


def test_cost_table_values():
    w = weights()
    # server AoI 10 at the cap, energy 0.01 s * 0.05 W, no sampling
    c = per_frame_cost(one_sensor_state(10), action(0, 0.01, 0.05), w)
    assert c == pytest.approx(10 + 1e4 * 5e-4 + 100, abs=1e-12)
    assert c == pytest.approx(115.0)
    c2 = per_frame_cost(one_sensor_state(10), action(1, 0.01, 0.05), w)
    assert c2 == pytest.approx(116.0)


def test_cost_components_sum():
    w = weights()
    st = one_sensor_state(7, queue=3)
    act = action(1, 0.004, 0.08)
    parts = cost_components(st, act, w)
    assert sum(parts) == pytest.approx(per_frame_cost(st, act, w), abs=1e-9)


def test_cost_affine_in_energy():
    w = weights()
    base = per_frame_cost(one_sensor_state(5), action(0, 0.002, 0.01), w)
    bumped = per_frame_cost(one_sensor_state(5), action(0, 0.002, 0.02), w)
    assert bumped - base == pytest.approx(w.w_p * 0.002 * 0.01, rel=1e-12)


def test_cap_penalty_step():
    w = weights()
    at_cap = per_frame_cost(one_sensor_state(10), action(), w)
    below = per_frame_cost(one_sensor_state(9), action(), w)
    assert at_cap - below == pytest.approx(1.0 + w.w_q)


def test_advance_keep_transmitting():
    assert advance_local(3, 2, 5, 0, 1, 5, 10) == (2, 3, 6)


def test_advance_drain_refreshes_server():
    # backlog of 2 fully departs: server AoI picks up the sensor age + 1
    assert advance_local(2, 4, 9, 0, 2, 5, 10) == (0, 5, 5)


def test_advance_fresh_sample_full_delivery():
    # sampling replaces the queue and everything departs in-frame
    assert advance_local(3, 7, 9, 1, 5, 5, 10) == (0, 1, 1)


def test_advance_caps_departures_and_ages():
    nq, na_s, na_d = advance_local(1, 10, 10, 0, 99, 5, 10)
    assert (nq, na_s, na_d) == (0, 10, 10)
    nq, na_s, na_d = advance_local(4, 10, 10, 0, 0, 5, 10)
    assert (nq, na_s, na_d) == (4, 10, 10)


def test_advance_empty_idle_tracks_sensor_age():
    # empty queue, no sampling: the server already holds the newest sample
    assert advance_local(0, 3, 9, 0, 0, 5, 10) == (0, 4, 4)


def test_advance_pre_sampling_variant():
    # literal frame-start test: sampling frame with full delivery keeps the
    # frame-start sensor age instead of the fresh one
    assert advance_local(0, 7, 3, 1, 5, 5, 10, "pre_sampling") == (0, 1, 8)
    assert advance_local(2, 4, 9, 0, 2, 5, 10, "pre_sampling") == (0, 5, 5)


def test_advance_stays_in_bounds(rng):
    for _ in range(3000):
        lk = int(rng.integers(1, 6))
        amax = int(rng.integers(2, 11))
        q = int(rng.integers(0, lk + 1))
        a_s = int(rng.integers(1, amax + 1))
        a_d = int(rng.integers(1, amax + 1))
        s = int(rng.integers(0, 2))
        d = int(rng.integers(0, lk + 3))
        nq, na_s, na_d = advance_local(q, a_s, a_d, s, d, lk, amax)
        assert 0 <= nq <= lk
        assert 1 <= na_s <= amax
        assert 1 <= na_d <= amax


def test_state_index_corners():
    assert state_index(1, 0, 1, 1, 5, 10, 24) == 1
    assert state_index(1, 5, 10, 10, 5, 10, 24) == local_state_count(5, 10)
    assert state_index(24, 5, 10, 10, 5, 10, 24) == 24 * 600


def test_state_index_round_trip_exhaustive():
    lk, amax, cells = 5, 10, 24
    seen = set()
    for cell in range(1, cells + 1):
        for q in range(lk + 1):
            for a_s in range(1, amax + 1):
                for a_d in range(1, amax + 1):
                    idx = state_index(cell, q, a_s, a_d, lk, amax, cells)
                    assert state_from_index(idx, lk, amax, cells) == (cell, q, a_s, a_d)
                    seen.add(idx)
    assert seen == set(range(1, cells * local_state_count(lk, amax) + 1))
    assert len(seen) == 14_400


def test_state_index_rejects_out_of_range():
    with pytest.raises(ValueError):
        state_index(0, 0, 1, 1, 5, 10, 24)
    with pytest.raises(ValueError):
        state_index(1, 6, 1, 1, 5, 10, 24)
    with pytest.raises(ValueError):
        tuple_index(0, 1, 1, 10) and state_index(1, 0, 11, 1, 5, 10, 24)
    with pytest.raises(ValueError):
        state_from_index(0, 5, 10, 24)


def test_transition_support_probabilities():
    model = mobility.build_random_walk(
        [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 1.0, 0.9)
    support = transition_support(1, 2, 3, 4, 0, 1, model, 5, 10)
    probs = {cell: p for (cell, *_rest), p in support}
    assert probs == pytest.approx({1: 0.9, 2: 0.05, 3: 0.05})
    assert sum(p for _, p in support) == pytest.approx(1.0, abs=1e-12)
    for (cell, nq, na_s, na_d), _ in support:
        assert (nq, na_s, na_d) == (1, 4, 5)


def test_transition_support_deterministic_row():
    model = mobility.build_random_walk([(0.0, 0.0), (9.0, 9.0)], 1.0, 1.0)
    support = transition_support(2, 0, 1, 1, 1, 5, model, 5, 10)
    assert len(support) == 1
    (cell, nq, na_s, na_d), p = support[0]
    assert p == 1.0 and cell == 2
    assert (nq, na_s, na_d) == (0, 1, 1)


def test_action_validation():
    act = Action(sample=np.array([0, 1]), tau_sec=np.array([0.004, 0.006]),
                 power_w=np.array([0.05, 0.1]))
    act.validate(0.01, 0.1)
    bad_tau = Action(sample=np.array([0, 0]), tau_sec=np.array([0.009, 0.009]),
                     power_w=np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        bad_tau.validate(0.01, 0.1)
    bad_power = Action(sample=np.array([0]), tau_sec=np.array([0.001]),
                       power_w=np.array([0.2]))
    with pytest.raises(ValueError):
        bad_power.validate(0.01, 0.1)


def test_weights_invariants():
    with pytest.raises(ValueError):
        weights(a_max=1)
    with pytest.raises(ValueError):
        CostWeights(w_p=1, w_q=1, sample_energy_j=1, a_max=2, gamma=1.0,
                    frame_sec=0.01, data_volume=(1,))
    with pytest.raises(ValueError):
        CostWeights(w_p=1, w_q=1, sample_energy_j=1, a_max=2, gamma=0.5,
                    frame_sec=0.01, data_volume=(0,))
