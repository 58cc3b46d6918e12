"""Benchmark scheduling policies.

All three share the reference sampling rule (sample when the queue is empty)
and the fixed reference transmission power; they differ only in how the
frame time is split.  bm1 is the reference split itself; bm2 and bm3 serve
sensors sequentially by a priority rule, each scheduled sensor receiving its
drain time at the fixed power, capped by the time still left in the frame.
"""

from __future__ import annotations

import math

import numpy as np

from .channel import ChannelParams
from .config import Scenario
from .reference import reference_action
from .states import Action, SystemState


def bm1(state: SystemState, scenario: Scenario) -> Action:
    """Reference policy: proportional time split, fixed power, state-blind."""
    sample, tau, power = reference_action(state.queues, scenario.tau_ref,
                                          scenario.ref_power_w)
    return Action(sample=sample, tau_sec=tau, power_w=power)


def _drain_time(packets: int, gain_y: float, power_w: float, params: ChannelParams) -> float:
    """Time to push `packets` at fixed power; infinite when the rate is zero."""
    if packets <= 0:
        return 0.0
    rate = params.bandwidth_hz * math.log2(1.0 + power_w * gain_y)
    if rate <= 0.0:
        return math.inf
    return packets * params.packet_bits / rate


def _sequential(state: SystemState, scenario: Scenario, priorities, eligible) -> Action:
    """Serve sensors in priority order until the frame time runs out.

    Each scheduled sensor gets min(remaining, drain time of its post-sampling
    queue) at the reference power; a zero-rate sensor therefore absorbs all
    remaining time.  Leftover time idles.  Ties break toward the smaller
    sensor index.
    """
    k = scenario.n_sensors
    sample = (state.queues == 0).astype(np.int64)
    buffered = np.where(sample == 1, np.array(scenario.weights.data_volume),
                        state.queues)
    tau = np.zeros(k)
    power = np.zeros(k)
    remaining = scenario.weights.frame_sec
    order = sorted(range(k), key=lambda i: (-priorities[i], i))
    for i in order:
        if remaining <= 0.0:
            break
        if not eligible[i]:
            continue
        need = _drain_time(int(buffered[i]), float(state.gains[i]),
                           scenario.ref_power_w, scenario.params)
        tau[i] = min(remaining, need)
        power[i] = scenario.ref_power_w
        remaining -= tau[i]
    return Action(sample=sample, tau_sec=tau, power_w=power)


def bm2(state: SystemState, scenario: Scenario) -> Action:
    """Largest server-AoI first; selection ignores the channel entirely."""
    priorities = [float(a) for a in state.aoi_server]
    eligible = [True] * scenario.n_sensors
    return _sequential(state, scenario, priorities, eligible)


def bm3(state: SystemState, scenario: Scenario) -> Action:
    """Backpressure: largest queue * capacity product first.

    The product uses the frame-start queue, so freshly sampling sensors
    (empty queue) and zero-rate sensors are never scheduled.
    """
    params = scenario.params
    rates = [params.bandwidth_hz * math.log2(1.0 + scenario.ref_power_w * float(g))
             for g in state.gains]
    priorities = [float(q) * r for q, r in zip(state.queues, rates)]
    eligible = [p > 0.0 for p in priorities]
    return _sequential(state, scenario, priorities, eligible)
