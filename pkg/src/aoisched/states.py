"""MDP state machinery: states, actions, per-frame cost and local dynamics.

The state keeps, per sensor, the uplink queue length Q, the age of the newest
sample held at the sensor (aoi_sensor) and the age of the newest delivered
sample at the server (aoi_server), plus the shared blocker cell and, in the
full state, the realized channel gains.  Indices exposed by this module are
1-based; array storage is 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SystemState:
    blocker_cell: int          # 1-based
    gains: np.ndarray          # (K,) realized Y per sensor, 1/W
    queues: np.ndarray         # (K,) packets
    aoi_sensor: np.ndarray     # (K,) frames, in [1, a_max]
    aoi_server: np.ndarray     # (K,) frames, in [1, a_max]

    def abstract(self) -> "AbstractState":
        return AbstractState(self.blocker_cell, self.queues.copy(),
                             self.aoi_sensor.copy(), self.aoi_server.copy())


@dataclass
class AbstractState:
    """System state with the continuously distributed gains marginalized out."""

    blocker_cell: int
    queues: np.ndarray
    aoi_sensor: np.ndarray
    aoi_server: np.ndarray


@dataclass
class Action:
    sample: np.ndarray     # (K,) 0/1
    tau_sec: np.ndarray    # (K,) transmission time
    power_w: np.ndarray    # (K,) transmission power

    def validate(self, frame_sec: float, max_power_w: float):
        """Check the frame constraints; idle padding (sum tau < frame) is allowed."""
        if np.any(self.tau_sec < -1e-15) or np.any(self.tau_sec > frame_sec * (1 + 1e-9)):
            raise ValueError("per-sensor time outside [0, frame duration]")
        if self.tau_sec.sum() > frame_sec * (1 + 1e-9):
            raise ValueError("total transmission time exceeds the frame")
        if np.any(self.power_w < -1e-15) or np.any(self.power_w > max_power_w * (1 + 1e-9)):
            raise ValueError("power outside [0, max power]")
        if not np.all((self.sample == 0) | (self.sample == 1)):
            raise ValueError("sampling flags must be 0/1")


@dataclass(frozen=True)
class CostWeights:
    """Cost weights and the bounded-state-space sizes.

    drain_test selects how the server-AoI update condition is evaluated:
    "post_action" (default) applies the emptiness test to the queue after
    sampling and departures; "pre_sampling" applies it to the frame-start
    queue and ages the frame-start sensor AoI, which reproduces the update
    rule literally even on sampling frames (sensitivity switch).
    """

    w_p: float                 # energy weight, 1/J
    w_q: float                 # outdated-AoI penalty weight
    sample_energy_j: float
    a_max: int
    gamma: float
    frame_sec: float
    data_volume: tuple         # per-sensor packets per sample, L_k
    drain_test: str = "post_action"

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("discount must lie in (0, 1)")
        if self.a_max < 2:
            raise ValueError("a_max must be at least 2")
        if any(l < 1 for l in self.data_volume):
            raise ValueError("data volumes must be at least 1 packet")
        if self.drain_test not in ("post_action", "pre_sampling"):
            raise ValueError(f"unknown drain_test {self.drain_test!r}")

    @property
    def n_sensors(self) -> int:
        return len(self.data_volume)


def per_frame_cost(state: SystemState, action: Action, weights: CostWeights) -> float:
    """Server AoI sum + weighted sampling/transmission energy + outdated penalty."""
    aoi = float(state.aoi_server.sum())
    energy = float(np.sum(action.sample * weights.sample_energy_j
                          + action.tau_sec * action.power_w))
    outdated = int(np.sum(state.aoi_server == weights.a_max))
    return aoi + weights.w_p * energy + weights.w_q * outdated


def cost_components(state: SystemState, action: Action, weights: CostWeights):
    """The four cost summands: (server AoI, sampling energy, tx energy, penalty)."""
    aoi = float(state.aoi_server.sum())
    sampling = weights.w_p * weights.sample_energy_j * float(action.sample.sum())
    tx = weights.w_p * float(np.sum(action.tau_sec * action.power_w))
    penalty = weights.w_q * int(np.sum(state.aoi_server == weights.a_max))
    return aoi, sampling, tx, penalty


def advance_local(queue: int, aoi_sensor: int, aoi_server: int, sample: int,
                  departed: int, data_volume: int, a_max: int,
                  drain_test: str = "post_action"):
    """One-frame update of a single sensor's (Q, aoi_sensor, aoi_server).

    Sampling replaces the queue content with a fresh sample of data_volume
    packets before departures are applied; departures are capped at the
    queue.  When the post-action queue drains to zero the server holds the
    sensor's newest sample, so the server AoI follows the updated sensor AoI;
    otherwise both ages advance, saturating at a_max.
    """
    if departed < 0:
        raise ValueError("departures must be nonnegative")
    buffered = data_volume if sample else queue
    delivered = min(departed, buffered)
    next_queue = buffered - delivered
    next_aoi_sensor = 1 if sample else min(aoi_sensor + 1, a_max)
    if drain_test == "post_action":
        drained = next_queue == 0
        refreshed = next_aoi_sensor
    else:  # pre_sampling: literal frame-start queue test and frame-start age
        drained = max(queue - departed, 0) == 0
        refreshed = min(aoi_sensor + 1, a_max)
    next_aoi_server = refreshed if drained else min(aoi_server + 1, a_max)
    return next_queue, next_aoi_sensor, next_aoi_server


def local_state_count(data_volume: int, a_max: int) -> int:
    """Number of per-sensor tuples (Q, aoi_sensor, aoi_server)."""
    return (data_volume + 1) * a_max * a_max


def tuple_index(queue: int, aoi_sensor: int, aoi_server: int, a_max: int) -> int:
    """1-based index of a (Q, aoi_sensor, aoi_server) tuple."""
    return queue * a_max * a_max + (aoi_sensor - 1) * a_max + aoi_server


def state_index(blocker_cell: int, queue: int, aoi_sensor: int, aoi_server: int,
                data_volume: int, a_max: int, n_cells: int) -> int:
    """1-based index of a local abstract state (cell, Q, aoi_sensor, aoi_server)."""
    if not (1 <= blocker_cell <= n_cells):
        raise ValueError("blocker cell out of range")
    if not (0 <= queue <= data_volume):
        raise ValueError("queue out of range")
    if not (1 <= aoi_sensor <= a_max and 1 <= aoi_server <= a_max):
        raise ValueError("AoI out of range")
    per_cell = local_state_count(data_volume, a_max)
    return (blocker_cell - 1) * per_cell + tuple_index(queue, aoi_sensor, aoi_server, a_max)


def state_from_index(index: int, data_volume: int, a_max: int, n_cells: int):
    """Inverse of state_index: (cell, Q, aoi_sensor, aoi_server), all 1-based."""
    per_cell = local_state_count(data_volume, a_max)
    if not (1 <= index <= n_cells * per_cell):
        raise ValueError("state index out of range")
    cell, rem = divmod(index - 1, per_cell)
    queue, rem = divmod(rem, a_max * a_max)
    aoi_sensor, aoi_server = divmod(rem, a_max)
    return cell + 1, queue, aoi_sensor + 1, aoi_server + 1


def transition_support(blocker_cell: int, queue: int, aoi_sensor: int, aoi_server: int,
                       sample: int, departed: int, blocker_model, data_volume: int,
                       a_max: int, drain_test: str = "post_action"):
    """Next local abstract states and probabilities for fixed realized departures.

    With the departure count realized, the only randomness left is the
    blocker move, so the support has one entry per reachable next cell.
    """
    nq, na_s, na_d = advance_local(queue, aoi_sensor, aoi_server, sample, departed,
                                   data_volume, a_max, drain_test)
    row = blocker_model.transition[blocker_cell - 1]
    return [((cell0 + 1, nq, na_s, na_d), float(p))
            for cell0, p in enumerate(row) if p > 0.0]
