"""Per-frame scheduling by one-step lookahead against the reference value.

Each frame solves a mixed discrete/continuous program: per-sensor sampling
flags and packet counts are optimized against the expected next-frame value,
and the frame time is split across transmitting sensors by a closed-form
water-filling expression built on the Lambert W function.  The three blocks
are iterated from the reference action until the objective stops improving;
every block is an exact coordinate minimizer, so the objective never
increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from .channel import ChannelParams
from .config import Scenario
from .reference import ReferenceTables
from .states import Action, SystemState, advance_local, tuple_index

_INV_E = math.exp(-1.0)
_BISECT_REL_TOL = 1e-12  # on |sum(tau) - frame|, tighter than the 1e-9 contract


class InfeasibleAllocation(RuntimeError):
    """Raised when even full-power transmission cannot fit the requested packets."""

    def __init__(self, min_total: float, frame_sec: float):
        super().__init__(
            f"minimum feasible airtime {min_total:.3e}s exceeds the frame {frame_sec:.3e}s")
        self.min_total = min_total
        self.frame_sec = frame_sec


def lambert_w0(x: float) -> float:
    """Principal branch of w * exp(w) = x for x >= -1/e.

    Halley iterations from a series (near the branch point and near zero) or
    log-based initial guess; the iteration stops on a machine-precision
    residual, so the anchor inputs -1/e, 0 and e come out exact.
    """
    if x < -_INV_E:
        if x < -_INV_E - 1e-12 * max(1.0, abs(x)):
            raise ValueError(f"lambert_w0 domain is x >= -1/e, got {x}")
        x = -_INV_E
    if x == -_INV_E:
        return -1.0
    if x == 0.0:
        return 0.0
    if x < -0.2:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p ** 3 / 72.0
    elif x < 1.0:
        w = x * (1.0 - x + 1.5 * x * x)
    else:
        w = math.log(x)
        if w > 1.0:
            w -= math.log(w)
    tol = 1e-16 * max(abs(x), 1e-300)
    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= tol:
            break
        w1 = w + 1.0
        step = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1))
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def power_from(packets: int, tau_sec: float, gain_y: float, params: ChannelParams) -> float:
    """Power delivering exactly `packets` in `tau_sec` at gain Y; 0 for no packets."""
    if packets == 0:
        return 0.0
    if tau_sec <= 0.0 or gain_y <= 0.0:
        raise ValueError("positive packet count needs positive time and gain")
    exponent = packets * params.packet_bits / (tau_sec * params.bandwidth_hz)
    if exponent > 1020.0:
        return math.inf
    return (2.0 ** exponent - 1.0) / gain_y


def _implied_departures(tau_sec: float, power_w: float, gain_y: float,
                        params: ChannelParams) -> int:
    if tau_sec <= 0.0 or power_w <= 0.0 or gain_y <= 0.0:
        return 0
    packets = (params.bandwidth_hz * math.log2(1.0 + power_w * gain_y)
               * tau_sec / params.packet_bits)
    return int(math.floor(packets + 1e-9))


def choose_sampling(queue: int, aoi_sensor: int, aoi_server: int, gain_y: float,
                    cell: int, prev_tau: float, prev_power: float,
                    expected_next: np.ndarray, data_volume: int, a_max: int,
                    w_p: float, sample_energy_j: float, gamma: float,
                    params: ChannelParams) -> int:
    """Binary sampling choice against the expected next-frame value.

    Departures are the deterministic count implied by the previous iterate's
    time and power at the realized gain (capped at the buffer inside the
    state update).  Ties resolve to not sampling.
    """
    implied = _implied_departures(prev_tau, prev_power, gain_y, params)
    row = expected_next[cell - 1]

    def objective(sample):
        nq, na_s, na_d = advance_local(queue, aoi_sensor, aoi_server, sample,
                                       implied, data_volume, a_max)
        return (w_p * sample * sample_energy_j
                + gamma * float(row[tuple_index(nq, na_s, na_d, a_max) - 1]))

    return 0 if objective(0) <= objective(1) else 1


def choose_packets(queue: int, aoi_sensor: int, aoi_server: int, gain_y: float,
                   cell: int, sample: int, prev_tau: float,
                   expected_next: np.ndarray, data_volume: int, a_max: int,
                   w_p: float, gamma: float, params: ChannelParams) -> int:
    """Packet count minimizing energy at the previous time split plus next value.

    Candidates run from 0 to the post-sampling buffer; counts needing more
    than the power cap at the previous time split are infeasible.  Ties
    resolve to the smaller count.
    """
    cap = data_volume if sample else queue
    row = expected_next[cell - 1]
    best_d, best_obj = 0, None
    for d in range(cap + 1):
        if d == 0:
            power = 0.0
        else:
            if prev_tau <= 0.0 or gain_y <= 0.0:
                break
            power = power_from(d, prev_tau, gain_y, params)
            # tolerance matches the allocator's power-cap guarantee, so a
            # sensor clamped at full power keeps its packet count feasible
            if power > params.max_power_w * (1.0 + 1e-9):
                break  # power grows with d, nothing further is feasible
            power = min(power, params.max_power_w)
        nq, na_s, na_d = advance_local(queue, aoi_sensor, aoi_server, sample, d,
                                       data_volume, a_max)
        obj = (w_p * prev_tau * power
               + gamma * float(row[tuple_index(nq, na_s, na_d, a_max) - 1]))
        if best_obj is None or obj < best_obj:
            best_d, best_obj = d, obj
    return best_d


def min_airtime(packets: int, gain_y: float, params: ChannelParams) -> float:
    """Shortest time that can carry `packets` at the power cap."""
    if packets == 0:
        return 0.0
    if gain_y <= 0.0:
        return math.inf
    return (packets * params.packet_bits
            / (params.bandwidth_hz * math.log2(1.0 + params.max_power_w * gain_y)))


def allocate_time(packets, gains, params: ChannelParams, frame_sec: float) -> np.ndarray:
    """Energy-minimal frame-time split delivering the requested packet counts.

    Solves min sum_k tau_k * p_k(tau_k) with sum tau = frame, 0 <= tau <=
    frame and p_k <= power cap.  The stationarity condition inverts in closed
    form through the Lambert W function; the shared multiplier is found by
    bisection (the total time is non-increasing in it), bracketed by doubling
    and run in the compiled kernel.  Sensors with no packets get zero time.
    Raises InfeasibleAllocation when the full-power minimum times already
    exceed the frame.
    """
    packets = np.asarray(packets, dtype=int)
    gains = np.asarray(gains, dtype=float)
    taus = np.zeros(len(packets))
    active = np.flatnonzero(packets > 0)
    if len(active) == 0:
        return taus

    t_min = np.array([min_airtime(int(packets[k]), float(gains[k]), params)
                      for k in active])
    if t_min.sum() > frame_sec * (1.0 + 1e-12):
        raise InfeasibleAllocation(float(t_min.sum()), frame_sec)
    if len(active) == 1:
        taus[active[0]] = frame_sec  # single transmitter takes the whole frame
        return taus

    coeff = packets[active] * params.packet_bits / params.bandwidth_hz
    taus[active] = _fast.time_split(coeff, gains[active], t_min, frame_sec,
                                    _BISECT_REL_TOL)
    for k in active:
        power = power_from(int(packets[k]), float(taus[k]), float(gains[k]), params)
        if power > params.max_power_w * (1.0 + 1e-9):
            raise RuntimeError("allocated time violates the power cap")
    return taus


def allocate_time_with_repair(packets, gains, params: ChannelParams, frame_sec: float):
    """allocate_time plus the greedy repair for infeasible packet vectors.

    While the full-power minimum times exceed the frame, one packet is
    removed from the sensor whose per-packet minimum time is largest (the
    removal freeing the most airtime), then the split is re-solved.  Always
    terminates: an all-zero vector is trivially feasible.
    """
    packets = np.asarray(packets, dtype=int).copy()
    gains = np.asarray(gains, dtype=float)
    while True:
        try:
            return allocate_time(packets, gains, params, frame_sec), packets
        except InfeasibleAllocation:
            per_packet = np.array([
                min_airtime(1, float(gains[k]), params) if packets[k] > 0 else -1.0
                for k in range(len(packets))
            ])
            worst = int(np.argmax(per_packet))
            if per_packet[worst] <= 0.0:
                raise
            packets[worst] -= 1


@dataclass
class IterationTrace:
    """Per-iteration actions and objective of one frame's optimization.

    Index 0 is the reference-policy starting point.  The objective is the
    energy term plus the discounted expected next value, omitting the
    action-independent cost terms and the policy-independent constant, so it
    is comparable across iterations but not across frames.
    """

    sample: list = field(default_factory=list)
    packets: list = field(default_factory=list)
    tau_sec: list = field(default_factory=list)
    power_w: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    converged_at: int | None = None

    @property
    def iterations(self) -> int:
        return len(self.objective) - 1


def schedule(state: SystemState, tables: ReferenceTables, scenario: Scenario,
             max_iters: int | None = None, tol: float | None = None):
    """Optimize one frame's action starting from the reference behaviour.

    Returns (action, trace).  The loop stops when the objective improves by
    less than `tol` (absolute) or after `max_iters` iterations; the returned
    action is the last iterate, whose total time never exceeds the frame
    (leftover time idles at zero power).
    """
    cfg = scenario.config["policy"]
    max_iters = cfg["maxIters"] if max_iters is None else max_iters
    tol = cfg["tol"] if tol is None else tol

    w = scenario.weights
    params = scenario.params
    n = scenario.n_sensors
    cell = state.blocker_cell
    cell0 = cell - 1
    gains = [float(g) for g in state.gains]
    queues = [int(q) for q in state.queues]
    aoi_s = [int(a) for a in state.aoi_sensor]
    aoi_d = [int(a) for a in state.aoi_server]
    volumes = w.data_volume
    ev = tables.expected_next

    def objective(sample, packets, taus, powers):
        total = 0.0
        for k in range(n):
            total += w.w_p * (taus[k] * powers[k] + sample[k] * w.sample_energy_j)
            nq, na_s, na_d = advance_local(queues[k], aoi_s[k], aoi_d[k],
                                           sample[k], packets[k], volumes[k], w.a_max)
            total += w.gamma * float(ev[k][cell0, tuple_index(nq, na_s, na_d, w.a_max) - 1])
        return total

    # reference starting point: its deterministic departures seed the packets
    sample = [1 if q == 0 else 0 for q in queues]
    taus = [float(t) for t in scenario.tau_ref]
    powers = [scenario.ref_power_w] * n
    packets = [min(_implied_departures(taus[k], powers[k], gains[k], params),
                   volumes[k] if sample[k] else queues[k]) for k in range(n)]

    trace = IterationTrace()
    trace.sample.append(list(sample))
    trace.packets.append(list(packets))
    trace.tau_sec.append(list(taus))
    trace.power_w.append(list(powers))
    prev_obj = objective(sample, packets, taus, powers)
    trace.objective.append(prev_obj)

    for iteration in range(1, max_iters + 1):
        sample = [
            choose_sampling(queues[k], aoi_s[k], aoi_d[k], gains[k], cell,
                            taus[k], powers[k], ev[k], volumes[k], w.a_max,
                            w.w_p, w.sample_energy_j, w.gamma, params)
            for k in range(n)
        ]
        packets = [
            choose_packets(queues[k], aoi_s[k], aoi_d[k], gains[k], cell,
                           sample[k], taus[k], ev[k], volumes[k], w.a_max,
                           w.w_p, w.gamma, params)
            for k in range(n)
        ]
        tau_arr, packet_arr = allocate_time_with_repair(packets, gains, params,
                                                        w.frame_sec)
        packets = [int(d) for d in packet_arr]
        taus = [float(t) for t in tau_arr]
        powers = [min(power_from(packets[k], taus[k], gains[k], params)
                      if packets[k] > 0 else 0.0, params.max_power_w)
                  for k in range(n)]

        obj = objective(sample, packets, taus, powers)
        trace.sample.append(list(sample))
        trace.packets.append(list(packets))
        trace.tau_sec.append(list(taus))
        trace.power_w.append(list(powers))
        trace.objective.append(obj)
        if prev_obj - obj < tol:
            trace.converged_at = iteration
            break
        prev_obj = obj

    action = Action(sample=np.array(sample, dtype=np.int64),
                    tau_sec=np.array(taus), power_w=np.array(powers))
    return action, trace
