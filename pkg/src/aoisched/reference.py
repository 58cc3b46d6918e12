"""Reference policy and its closed-form discounted value tables.

The reference policy samples whenever the uplink queue is empty, splits the
frame time proportionally to the per-sensor sample sizes and transmits at a
fixed power.  Under it each sensor's local abstract state evolves as an
independent Markov chain, so the discounted value is the solution of one
sparse linear system per sensor plus a constant accounting for the fixed
transmission energy.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import Scenario
from .states import (AbstractState, advance_local, local_state_count,
                     state_index, tuple_index)

SOLVE_RESIDUAL = 1e-8
CACHE_FORMAT = 1


def reference_action(queues, tau_ref, ref_power_w):
    """Per-sensor (sample, tau, power): sample on empty queue, fixed split/power."""
    queues = np.asarray(queues)
    sample = (queues == 0).astype(np.int64)
    power = np.full(len(queues), float(ref_power_w))
    return sample, np.asarray(tau_ref, dtype=float).copy(), power


def local_transition_matrix(pmf_row: np.ndarray, data_volume: int, a_max: int) -> sp.csr_matrix:
    """Per-sensor transition matrix over (Q, aoi_sensor, aoi_server) tuples,
    conditioned on one blocker cell.

    pmf_row holds the departure distribution for that cell with the tail
    aggregated at data_volume.  Rows with an empty queue sample and ship the
    fresh packets; rows with a backlog keep transmitting it.  Delivering the
    whole buffer refreshes the server AoI to the updated sensor AoI, partial
    delivery ages both sides.
    """
    lk, amax = data_volume, a_max
    n = local_state_count(lk, amax)
    tail = np.concatenate([np.cumsum(pmf_row[::-1])[::-1], [0.0]])  # tail[d] = Pr[D >= d]
    rows, cols, vals = [], [], []

    def put(r, q, a_s, a_d, prob):
        if prob > 0.0:
            rows.append(r)
            cols.append(tuple_index(q, a_s, a_d, amax) - 1)
            vals.append(prob)

    for q in range(lk + 1):
        for a_s in range(1, amax + 1):
            for a_d in range(1, amax + 1):
                r = tuple_index(q, a_s, a_d, amax) - 1
                if q == 0:
                    # empty queue: a fresh sample of lk packets is queued
                    put(r, 0, 1, 1, tail[lk])                       # full delivery
                    for nq in range(1, lk + 1):                     # partial delivery
                        put(r, nq, 1, min(a_d + 1, amax), pmf_row[lk - nq])
                else:
                    aged_s = min(a_s + 1, amax)
                    put(r, 0, aged_s, aged_s, tail[q])              # backlog drained
                    for nq in range(1, q + 1):                      # backlog shrinks
                        put(r, nq, aged_s, min(a_d + 1, amax), pmf_row[q - nq])

    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def full_transition_matrix(scenario: Scenario, sensor: int) -> sp.csr_matrix:
    """Joint (cell, local tuple) transition matrix for one sensor (1-based).

    Block (cell, cell') is the blocker transition probability times the
    cell-conditional local matrix; stored sparse, dimension
    |cells| * (L_k + 1) * a_max^2.
    """
    k0 = sensor - 1
    lk = scenario.weights.data_volume[k0]
    amax = scenario.weights.a_max
    pmf = scenario.reference_pmf[k0]
    p_b = scenario.blocker.transition
    block_rows = []
    for c0 in range(scenario.n_cells):
        local = local_transition_matrix(pmf[c0], lk, amax)
        block_rows.append(sp.kron(sp.csr_matrix(p_b[c0:c0 + 1, :]), local))
    return sp.vstack(block_rows).tocsr()


def cost_vector(scenario: Scenario, sensor: int) -> np.ndarray:
    """Per-state cost under the reference policy (energy constant excluded).

    Entry = server AoI + energy-weighted sampling cost on empty queues +
    outdated penalty at the AoI cap; identical across blocker cells.
    """
    w = scenario.weights
    lk = w.data_volume[sensor - 1]
    amax = w.a_max
    per_cell = np.empty(local_state_count(lk, amax))
    for q in range(lk + 1):
        for a_s in range(1, amax + 1):
            for a_d in range(1, amax + 1):
                value = a_d
                if q == 0:
                    value += w.w_p * w.sample_energy_j
                if a_d == amax:
                    value += w.w_q
                per_cell[tuple_index(q, a_s, a_d, amax) - 1] = value
    return np.tile(per_cell, scenario.n_cells)


def solve_value(transition: sp.csr_matrix, cost: np.ndarray, gamma: float) -> np.ndarray:
    """Solve (I - gamma * P) w = g with a sparse direct factorization."""
    if not (0.0 < gamma < 1.0):
        raise ValueError("discount must lie in (0, 1)")
    n = transition.shape[0]
    system = (sp.identity(n, format="csc") - gamma * transition.tocsc())
    w = spla.spsolve(system, cost)
    residual = np.abs(system @ w - cost).max() / max(np.abs(cost).max(), 1.0)
    if residual > SOLVE_RESIDUAL:
        raise RuntimeError(f"value solve residual {residual:.2e} above {SOLVE_RESIDUAL:.0e}")
    return w


@dataclass
class ReferenceTables:
    """Solved per-sensor value tables plus the shared energy constant.

    expected_next[k][cell0] is the blocker-transition average of the next
    frame's value over next cells, indexed by the next local tuple; it is
    what one-step lookahead needs and is precomputed for speed.
    """

    transition: list            # per sensor csr matrix
    cost: list                  # per sensor vector
    value: list                 # per sensor vector
    expected_next: list         # per sensor (|L|, (L_k+1)*a_max^2)
    constant_term: float
    residuals: np.ndarray
    config_hash: str
    data_volume: tuple
    a_max: int
    n_cells: int

    def sensor_value(self, sensor: int, cell: int, queue: int,
                     aoi_sensor: int, aoi_server: int) -> float:
        lk = self.data_volume[sensor - 1]
        idx = state_index(cell, queue, aoi_sensor, aoi_server, lk, self.a_max, self.n_cells)
        return float(self.value[sensor - 1][idx - 1])


def build_tables(scenario: Scenario, workers: int | None = None) -> ReferenceTables:
    """Build and solve the value tables for every sensor.

    Per-sensor builds are independent; they run on a small thread pool since
    the sparse factorizations release the interpreter lock.
    """
    from concurrent.futures import ThreadPoolExecutor

    w = scenario.weights
    n_sensors = scenario.n_sensors

    def one(sensor):
        transition = full_transition_matrix(scenario, sensor)
        cost = cost_vector(scenario, sensor)
        value = solve_value(transition, cost, w.gamma)
        system = sp.identity(transition.shape[0], format="csr") - w.gamma * transition
        residual = np.abs(system @ value - cost).max() / max(np.abs(cost).max(), 1.0)
        return transition, cost, value, residual

    workers = workers or min(n_sensors, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, range(1, n_sensors + 1)))

    transitions = [r[0] for r in results]
    costs = [r[1] for r in results]
    values = [r[2] for r in results]
    residuals = np.array([r[3] for r in results])
    expected = [
        scenario.blocker.transition @ values[k0].reshape(scenario.n_cells, -1)
        for k0 in range(n_sensors)
    ]
    constant = w.w_p * w.frame_sec * scenario.ref_power_w / (1.0 - w.gamma)
    return ReferenceTables(
        transition=transitions, cost=costs, value=values, expected_next=expected,
        constant_term=constant, residuals=residuals,
        config_hash=scenario.config_hash(), data_volume=w.data_volume,
        a_max=w.a_max, n_cells=scenario.n_cells)


def value_of_abstract_state(tables: ReferenceTables, state: AbstractState) -> float:
    """Discounted cost of the reference policy started from an abstract state."""
    total = tables.constant_term
    for k0 in range(len(tables.data_volume)):
        total += tables.sensor_value(k0 + 1, state.blocker_cell,
                                     int(state.queues[k0]),
                                     int(state.aoi_sensor[k0]),
                                     int(state.aoi_server[k0]))
    return total


def cache_path(cache_dir: str, config_hash: str) -> str:
    return os.path.join(cache_dir, f"tables-{config_hash}.npz")


def save_tables(tables: ReferenceTables, cache_dir: str) -> str:
    """Write the tables as sparse triplets keyed by the config hash."""
    os.makedirs(cache_dir, exist_ok=True)
    payload = {
        "cacheFormat": np.array(CACHE_FORMAT),
        "configHash": np.array(tables.config_hash),
        "constantTerm": np.array(tables.constant_term),
        "dataVolume": np.array(tables.data_volume),
        "aMax": np.array(tables.a_max),
        "nCells": np.array(tables.n_cells),
        "residuals": tables.residuals,
    }
    for k0, matrix in enumerate(tables.transition):
        coo = matrix.tocoo()
        payload[f"s{k0}_row"] = coo.row
        payload[f"s{k0}_col"] = coo.col
        payload[f"s{k0}_val"] = coo.data
        payload[f"s{k0}_cost"] = tables.cost[k0]
        payload[f"s{k0}_value"] = tables.value[k0]
    path = cache_path(cache_dir, tables.config_hash)
    np.savez_compressed(path, **payload)
    return path


def load_tables(cache_dir: str, scenario: Scenario) -> ReferenceTables | None:
    """Load cached tables matching the scenario's config hash, if any."""
    path = cache_path(cache_dir, scenario.config_hash())
    if not os.path.exists(path):
        return None
    with np.load(path, allow_pickle=False) as blob:
        if int(blob["cacheFormat"]) != CACHE_FORMAT:
            return None
        if str(blob["configHash"]) != scenario.config_hash():
            return None
        n_sensors = len(blob["dataVolume"])
        transitions, costs, values = [], [], []
        for k0 in range(n_sensors):
            n = len(blob[f"s{k0}_cost"])
            matrix = sp.csr_matrix(
                (blob[f"s{k0}_val"], (blob[f"s{k0}_row"], blob[f"s{k0}_col"])),
                shape=(n, n))
            transitions.append(matrix)
            costs.append(blob[f"s{k0}_cost"])
            values.append(blob[f"s{k0}_value"])
        expected = [
            scenario.blocker.transition @ values[k0].reshape(scenario.n_cells, -1)
            for k0 in range(n_sensors)
        ]
        return ReferenceTables(
            transition=transitions, cost=costs, value=values, expected_next=expected,
            constant_term=float(blob["constantTerm"]), residuals=blob["residuals"],
            config_hash=str(blob["configHash"]),
            data_volume=tuple(int(v) for v in blob["dataVolume"]),
            a_max=int(blob["aMax"]), n_cells=int(blob["nCells"]))


def load_or_build(scenario: Scenario, cache_dir: str | None,
                  notice=None) -> ReferenceTables:
    """Return cached tables when fresh, otherwise build (and cache) them."""
    if cache_dir is not None:
        cached = load_tables(cache_dir, scenario)
        if cached is not None:
            return cached
    if notice is not None:
        notice("building reference value tables (no cache hit)")
    started = time.perf_counter()
    tables = build_tables(scenario)
    if notice is not None:
        notice(f"tables built in {time.perf_counter() - started:.1f}s")
    if cache_dir is not None:
        save_tables(tables, cache_dir)
    return tables
