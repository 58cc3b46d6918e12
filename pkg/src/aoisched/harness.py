"""Frame-loop simulation, Monte-Carlo value estimation and a small oracle.

Randomness is organized for common random numbers: one master seed derives a
blocker stream and a channel stream whose per-frame consumption (one uniform
plus one standard exponential per sensor) does not depend on the policy, so
runs with the same seed see identical blockage and fading across policies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import benchmarks
from .config import Scenario
from .reference import ReferenceTables
from .scheduler import schedule, power_from
from .states import (Action, AbstractState, SystemState, advance_local,
                     cost_components, local_state_count, state_index, tuple_index)


class FixedSplitPolicy:
    """Reference behaviour: sample on empty, proportional time, fixed power."""

    def __init__(self, scenario: Scenario, name: str = "bm1"):
        self.scenario = scenario
        self.name = name

    def action(self, state: SystemState) -> Action:
        return benchmarks.bm1(state, self.scenario)


class AoiFirstPolicy:
    name = "bm2"

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def action(self, state: SystemState) -> Action:
        return benchmarks.bm2(state, self.scenario)


class BackpressurePolicy:
    name = "bm3"

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def action(self, state: SystemState) -> Action:
        return benchmarks.bm3(state, self.scenario)


class LookaheadPolicy:
    """Value-guided per-frame optimization; `max_iters` caps the iterations.

    When `trace_sink` is a list, the per-frame iteration traces are appended
    to it (used by the descent checks).
    """

    def __init__(self, scenario: Scenario, tables: ReferenceTables,
                 max_iters: int | None = None, tol: float | None = None,
                 name: str = "proposed", trace_sink: list | None = None):
        self.scenario = scenario
        self.tables = tables
        self.max_iters = max_iters
        self.tol = tol
        self.name = name
        self.trace_sink = trace_sink

    def action(self, state: SystemState) -> Action:
        act, trace = schedule(state, self.tables, self.scenario,
                              max_iters=self.max_iters, tol=self.tol)
        if self.trace_sink is not None:
            self.trace_sink.append(trace)
        return act


POLICY_NAMES = ("proposed", "psi1", "psi2", "psi3", "bm1", "bm2", "bm3")


def make_policy(name: str, scenario: Scenario, tables: ReferenceTables | None = None,
                trace_sink: list | None = None):
    """Policy object for a CLI policy name; psi* limit the iteration count."""
    if name == "bm1":
        return FixedSplitPolicy(scenario)
    if name == "bm2":
        return AoiFirstPolicy(scenario)
    if name == "bm3":
        return BackpressurePolicy(scenario)
    if name == "proposed" or name.startswith("psi"):
        if tables is None:
            raise ValueError(f"policy {name!r} needs reference value tables")
        iters = None if name == "proposed" else int(name[3:])
        return LookaheadPolicy(scenario, tables, max_iters=iters,
                               name=name, trace_sink=trace_sink)
    raise ValueError(f"unknown policy {name!r}; choose from {POLICY_NAMES}")


@dataclass
class EpisodeRecord:
    """Full per-frame record of one simulated episode."""

    policy_name: str
    seed: int
    cells: np.ndarray          # (T,)
    gains: np.ndarray          # (T, K)
    queues: np.ndarray
    aoi_sensor: np.ndarray
    aoi_server: np.ndarray
    sample: np.ndarray
    tau_sec: np.ndarray
    power_w: np.ndarray
    delivered: np.ndarray
    cost: np.ndarray           # (T,)
    comp_aoi: np.ndarray
    comp_sampling: np.ndarray
    comp_tx: np.ndarray
    comp_penalty: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.cells)

    @property
    def n_sensors(self) -> int:
        return self.gains.shape[1]

    def component_means(self) -> dict:
        return {
            "serverAoi": float(self.comp_aoi.mean()),
            "samplingEnergy": float(self.comp_sampling.mean()),
            "transmissionEnergy": float(self.comp_tx.mean()),
            "outdatedPenalty": float(self.comp_penalty.mean()),
        }

    def write_csv(self, fh):
        k = self.n_sensors
        head = ["frame", "cell"]
        for i in range(1, k + 1):
            head += [f"y{i}", f"q{i}", f"aoiSensor{i}", f"aoiServer{i}",
                     f"sample{i}", f"tau{i}", f"power{i}", f"delivered{i}"]
        head += ["cost", "costServerAoi", "costSampling", "costTx", "costPenalty"]
        fh.write(",".join(head) + "\n")
        for t in range(self.n_frames):
            row = [str(t + 1), str(int(self.cells[t]))]
            for i in range(k):
                row += [f"{self.gains[t, i]:.9e}", str(int(self.queues[t, i])),
                        str(int(self.aoi_sensor[t, i])), str(int(self.aoi_server[t, i])),
                        str(int(self.sample[t, i])), f"{self.tau_sec[t, i]:.9e}",
                        f"{self.power_w[t, i]:.9e}", str(int(self.delivered[t, i]))]
            row += [f"{self.cost[t]:.9e}", f"{self.comp_aoi[t]:.9e}",
                    f"{self.comp_sampling[t]:.9e}", f"{self.comp_tx[t]:.9e}",
                    f"{self.comp_penalty[t]:.9e}"]
            fh.write(",".join(row) + "\n")


def _init_state(scenario: Scenario, start: AbstractState | None) -> SystemState:
    k = scenario.n_sensors
    if start is None:
        return SystemState(blocker_cell=scenario.start_cell,
                           gains=np.zeros(k),
                           queues=np.zeros(k, dtype=np.int64),
                           aoi_sensor=np.ones(k, dtype=np.int64),
                           aoi_server=np.ones(k, dtype=np.int64))
    return SystemState(blocker_cell=int(start.blocker_cell),
                       gains=np.zeros(k),
                       queues=np.asarray(start.queues, dtype=np.int64).copy(),
                       aoi_sensor=np.asarray(start.aoi_sensor, dtype=np.int64).copy(),
                       aoi_server=np.asarray(start.aoi_server, dtype=np.int64).copy())


def run_episode(policy, scenario: Scenario, seed: int, n_frames: int,
                start: AbstractState | None = None) -> EpisodeRecord:
    """Simulate and record `n_frames` under the given policy.

    Queues start empty with both AoIs at 1 unless `start` overrides them.
    Fully reproducible: identical (scenario config, seed) give bit-identical
    records for any policy.
    """
    k = scenario.n_sensors
    w = scenario.weights
    params = scenario.params
    means = scenario.gain_mean
    cum = scenario.blocker.cum_rows
    volumes = w.data_volume

    ss = np.random.SeedSequence(seed)
    blocker_rng, channel_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    state = _init_state(scenario, start)

    shape = (n_frames, k)
    rec = EpisodeRecord(
        policy_name=getattr(policy, "name", "custom"), seed=seed,
        cells=np.zeros(n_frames, dtype=np.int64),
        gains=np.zeros(shape), queues=np.zeros(shape, dtype=np.int64),
        aoi_sensor=np.zeros(shape, dtype=np.int64),
        aoi_server=np.zeros(shape, dtype=np.int64),
        sample=np.zeros(shape, dtype=np.int64),
        tau_sec=np.zeros(shape), power_w=np.zeros(shape),
        delivered=np.zeros(shape, dtype=np.int64),
        cost=np.zeros(n_frames), comp_aoi=np.zeros(n_frames),
        comp_sampling=np.zeros(n_frames), comp_tx=np.zeros(n_frames),
        comp_penalty=np.zeros(n_frames))

    for t in range(n_frames):
        cell = state.blocker_cell
        state.gains = channel_rng.standard_exponential(k) * means[cell - 1]
        action = policy.action(state)
        action.validate(w.frame_sec, params.max_power_w)

        rec.cells[t] = cell
        rec.gains[t] = state.gains
        rec.queues[t] = state.queues
        rec.aoi_sensor[t] = state.aoi_sensor
        rec.aoi_server[t] = state.aoi_server
        rec.sample[t] = action.sample
        rec.tau_sec[t] = action.tau_sec
        rec.power_w[t] = action.power_w

        aoi, sampling, tx, penalty = cost_components(state, action, w)
        rec.comp_aoi[t], rec.comp_sampling[t] = aoi, sampling
        rec.comp_tx[t], rec.comp_penalty[t] = tx, penalty
        rec.cost[t] = aoi + sampling + tx + penalty

        for i in range(k):
            raw = _departure_count(float(action.tau_sec[i]), float(action.power_w[i]),
                                   float(state.gains[i]), params)
            buffered = volumes[i] if action.sample[i] else int(state.queues[i])
            rec.delivered[t, i] = min(raw, buffered)
            nq, na_s, na_d = advance_local(
                int(state.queues[i]), int(state.aoi_sensor[i]),
                int(state.aoi_server[i]), int(action.sample[i]), raw,
                volumes[i], w.a_max, w.drain_test)
            state.queues[i] = nq
            state.aoi_sensor[i] = na_s
            state.aoi_server[i] = na_d

        u = blocker_rng.random()
        state.blocker_cell = int(np.searchsorted(cum[cell - 1], u, side="right")) + 1
    return rec


def _departure_count(tau, power, gain, params):
    if tau <= 0.0 or power <= 0.0 or gain <= 0.0:
        return 0
    packets = (params.bandwidth_hz * math.log2(1.0 + power * gain)
               * tau / params.packet_bits)
    return int(math.floor(packets + 1e-9))


def discounted_return(policy, scenario: Scenario, seed: int, horizon: int,
                      gamma: float, start: AbstractState | None = None) -> float:
    """Discounted episode cost without recording (lean loop for Monte Carlo)."""
    k = scenario.n_sensors
    w = scenario.weights
    params = scenario.params
    means = scenario.gain_mean
    cum = scenario.blocker.cum_rows
    volumes = w.data_volume

    ss = np.random.SeedSequence(seed)
    blocker_rng, channel_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    state = _init_state(scenario, start)

    total = 0.0
    gpow = 1.0
    for _ in range(horizon):
        cell = state.blocker_cell
        state.gains = channel_rng.standard_exponential(k) * means[cell - 1]
        action = policy.action(state)
        aoi, sampling, tx, penalty = cost_components(state, action, w)
        total += gpow * (aoi + sampling + tx + penalty)
        gpow *= gamma
        for i in range(k):
            raw = _departure_count(float(action.tau_sec[i]), float(action.power_w[i]),
                                   float(state.gains[i]), params)
            nq, na_s, na_d = advance_local(
                int(state.queues[i]), int(state.aoi_sensor[i]),
                int(state.aoi_server[i]), int(action.sample[i]), raw,
                volumes[i], w.a_max, w.drain_test)
            state.queues[i] = nq
            state.aoi_sensor[i] = na_s
            state.aoi_server[i] = na_d
        u = blocker_rng.random()
        state.blocker_cell = int(np.searchsorted(cum[cell - 1], u, side="right")) + 1
    return total


@dataclass
class ValueEstimate:
    mean: float
    half_width: float     # 95% normal-approximation confidence half width
    std: float
    n: int

    def z_score(self, reference: float) -> float:
        se = self.std / math.sqrt(self.n)
        return (reference - self.mean) / se if se > 0 else 0.0


def monte_carlo_value(policy, scenario: Scenario, start: AbstractState,
                      n_rollouts: int, horizon: int, gamma: float,
                      seed: int) -> ValueEstimate:
    """Mean discounted cost over independent rollouts from one abstract start.

    Rollout r uses the r-th child of the master seed, so estimates for
    different policies at the same seed share all randomness.
    """
    children = np.random.SeedSequence(seed).spawn(n_rollouts)
    returns = np.array([
        discounted_return(policy, scenario, _child_seed(child), horizon, gamma, start)
        for child in children
    ])
    std = float(returns.std(ddof=1)) if n_rollouts > 1 else 0.0
    half = 1.96 * std / math.sqrt(n_rollouts)
    return ValueEstimate(mean=float(returns.mean()), half_width=half,
                         std=std, n=n_rollouts)


def _child_seed(child: np.random.SeedSequence) -> int:
    return int(child.generate_state(1, dtype=np.uint64)[0])


def empirical_transitions(scenario: Scenario, sensor: int, n_frames: int, seed: int):
    """Visit-normalized local-state transition frequencies under the reference policy.

    Returns (matrix, row_counts) where matrix is the row-normalized sparse
    count matrix over the sensor's local abstract states and row_counts the
    number of observed departures from each state.
    """
    policy = FixedSplitPolicy(scenario)
    rec = run_episode(policy, scenario, seed, n_frames)
    k0 = sensor - 1
    lk = scenario.weights.data_volume[k0]
    amax = scenario.weights.a_max
    per_cell = local_state_count(lk, amax)
    n = scenario.n_cells * per_cell

    kappa = ((rec.cells - 1) * per_cell
             + rec.queues[:, k0] * amax * amax
             + (rec.aoi_sensor[:, k0] - 1) * amax
             + rec.aoi_server[:, k0])            # 1-based
    src = kappa[:-1] - 1
    dst = kappa[1:] - 1
    counts = sp.coo_matrix((np.ones(len(src)), (src, dst)), shape=(n, n)).tocsr()
    row_counts = np.asarray(counts.sum(axis=1)).ravel()
    scale = np.divide(1.0, row_counts, out=np.zeros(n), where=row_counts > 0)
    matrix = sp.diags(scale) @ counts
    return matrix.tocsr(), row_counts


@dataclass
class OracleResult:
    """Converged small-instance value table and the pieces to act greedily."""

    values: np.ndarray        # (n_cells, n_local_tuples)
    tau_grid: np.ndarray
    quad_nodes: int
    sweeps: int

    def value(self, cell: int, queue: int, aoi_sensor: int, aoi_server: int,
              a_max: int) -> float:
        return float(self.values[cell - 1, tuple_index(queue, aoi_sensor,
                                                       aoi_server, a_max) - 1])


def oracle_value_iteration(scenario: Scenario, gamma: float | None = None,
                           tol: float = 1e-8, tau_levels: int = 8,
                           quad_nodes: int = 64, size_cap: float = 5e7,
                           max_sweeps: int = 20000) -> OracleResult:
    """Brute-force value iteration over abstract states for one-sensor instances.

    Actions discretize (sample, packet count, time) with the power implied by
    the realized gain; the gain expectation uses Gauss-Laguerre quadrature on
    the per-cell exponential law (a point mass at zero when every path is
    blocked).  The discretized optimum upper-bounds the true optimum.
    Refuses instances whose state x action x node product exceeds `size_cap`.
    """
    from scipy.special import roots_laguerre

    if scenario.n_sensors != 1:
        raise ValueError("the value-iteration oracle supports single-sensor instances")
    w = scenario.weights
    if gamma is None:
        gamma = w.gamma
    if not (0.0 <= gamma < 1.0):
        raise ValueError("oracle discount must lie in [0, 1)")
    params = scenario.params
    lk = w.data_volume[0]
    amax = w.a_max
    n_cells = scenario.n_cells
    n_eps = local_state_count(lk, amax)

    tau_grid = w.frame_sec * np.arange(1, tau_levels + 1) / tau_levels
    # zero-packet actions charge no transmission energy, so one tau suffices
    actions = [(0, 0, 0.0), (1, 0, 0.0)]
    for s in (0, 1):
        for d in range(1, lk + 1):
            for tau in tau_grid:
                actions.append((s, d, float(tau)))
    n_actions = len(actions)
    if n_cells * n_eps * n_actions * quad_nodes > size_cap:
        raise ValueError("oracle instance exceeds the configured size cap")

    nodes, weights_q = roots_laguerre(quad_nodes)
    weights_q = weights_q / weights_q.sum()

    # per-cell gain samples: exponential quadrature nodes, or a point mass at 0
    node_gain = np.zeros((n_cells, quad_nodes))
    node_weight = np.zeros((n_cells, quad_nodes))
    for c0 in range(n_cells):
        mean = scenario.gain_mean[c0, 0]
        if mean > 0:
            node_gain[c0] = nodes * mean
            node_weight[c0] = weights_q
        else:
            node_weight[c0, 0] = 1.0

    # feasibility-dependent immediate costs and (y-independent) next tuples
    cost = np.full((n_cells, n_eps, quad_nodes, n_actions), np.inf)
    nxt = np.zeros((n_eps, n_actions), dtype=np.int64)
    base = np.zeros(n_eps)
    for q in range(lk + 1):
        for a_s in range(1, amax + 1):
            for a_d in range(1, amax + 1):
                e0 = tuple_index(q, a_s, a_d, amax) - 1
                base[e0] = a_d + (w.w_q if a_d == amax else 0.0)
                for a_i, (s, d, tau) in enumerate(actions):
                    cap = lk if s else q
                    nq, na_s, na_d = advance_local(q, a_s, a_d, s, min(d, cap),
                                                   lk, amax)
                    nxt[e0, a_i] = tuple_index(nq, na_s, na_d, amax) - 1

    for c0 in range(n_cells):
        for j in range(quad_nodes):
            if node_weight[c0, j] == 0.0:
                continue
            y = node_gain[c0, j]
            for a_i, (s, d, tau) in enumerate(actions):
                if d == 0:
                    energy = w.w_p * s * w.sample_energy_j
                else:
                    if y <= 0.0:
                        continue
                    p = power_from(d, tau, y, params)
                    if p > params.max_power_w * (1 + 1e-12):
                        continue
                    energy = w.w_p * (s * w.sample_energy_j + tau * p)
                cost[c0, :, j, a_i] = base + energy

    # mask actions whose packet count exceeds the post-sampling buffer
    for q in range(lk + 1):
        for a_s in range(1, amax + 1):
            for a_d in range(1, amax + 1):
                e0 = tuple_index(q, a_s, a_d, amax) - 1
                for a_i, (s, d, tau) in enumerate(actions):
                    if d > (lk if s else q):
                        cost[:, e0, :, a_i] = np.inf

    values = np.zeros((n_cells, n_eps))
    p_b = scenario.blocker.transition
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        expected = p_b @ values                        # (n_cells, n_eps)
        cont = gamma * expected[:, nxt]                # (n_cells, n_eps, n_actions)
        totals = cost + cont[:, :, None, :]
        best = totals.min(axis=3)                      # (n_cells, n_eps, nodes)
        new = (best * node_weight[:, None, :]).sum(axis=2)
        change = np.abs(new - values).max()
        values = new
        if change <= tol:
            break
    return OracleResult(values=values, tau_grid=tau_grid,
                        quad_nodes=quad_nodes, sweeps=sweeps)
