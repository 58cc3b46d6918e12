"""Quantitative cross-check suites: analytics vs independent oracles.

Each suite returns a dict with a boolean "passed" plus the measured
quantities; the CLI prints them and the acceptance tests assert on them.
The oracles here deliberately avoid the code paths they check: departure
PMFs are checked against direct channel sampling, transition matrices
against simulated visit counts, closed-form values against Monte-Carlo
rollouts, and the time allocation against a generic constrained optimizer.
"""

from __future__ import annotations

import math

import numpy as np

from . import harness
from .config import Scenario
from .reference import ReferenceTables, value_of_abstract_state
from .scheduler import (InfeasibleAllocation, allocate_time,
                        allocate_time_with_repair, min_airtime)
from .states import AbstractState, local_state_count

SMALL_INSTANCE = {
    "room": {"sensorPositions": [[10.0, 2.0]], "sensorCount": 1},
    "blocker": {"cells": [[10.0, 6.0], [11.0, 6.0]], "startCell": 2},
    "mdp": {"dataVolume": [2], "aMax": 3},
}


def pmf_suite(scenario: Scenario, samples: int = 1_000_000, seed: int = 0,
              tv_limit: float = 0.005) -> dict:
    """Departure-PMF check: analytic law vs direct channel sampling.

    For every sensor and blocker cell, draws exponential gains, computes the
    implied packet departures at the reference time/power and compares the
    empirical distribution with the analytic PMF by total variation.
    """
    params = scenario.params
    rng = np.random.default_rng(seed)
    worst_tv = 0.0
    worst_sum = 0.0
    for k0 in range(scenario.n_sensors):
        lk = scenario.weights.data_volume[k0]
        tau = float(scenario.tau_ref[k0])
        rate_factor = params.bandwidth_hz * tau / params.packet_bits
        for c0 in range(scenario.n_cells):
            pmf = scenario.reference_pmf[k0][c0]
            worst_sum = max(worst_sum, abs(pmf.sum() - 1.0))
            mean = scenario.gain_mean[c0, k0]
            if mean == 0.0:
                empirical = np.zeros(lk + 1)
                empirical[0] = 1.0
            else:
                y = rng.exponential(mean, size=samples)
                d = np.floor(np.log2(1.0 + scenario.ref_power_w * y)
                             * rate_factor + 1e-9).astype(np.int64)
                np.clip(d, 0, lk, out=d)
                empirical = np.bincount(d, minlength=lk + 1) / samples
            worst_tv = max(worst_tv, 0.5 * float(np.abs(empirical - pmf).sum()))
    return {
        "passed": worst_tv < tv_limit and worst_sum < 1e-9,
        "worstTotalVariation": worst_tv,
        "worstNormalizationError": worst_sum,
        "samples": samples,
    }


def transitions_suite(scenario: Scenario, tables: ReferenceTables,
                      n_frames: int = 100_000, seed: int = 1,
                      min_visits: int = 500, tv_limit: float = 0.02) -> dict:
    """Reference-chain check: simulated transition rows vs the built matrices.

    Rows with at least `min_visits` departures are compared by total
    variation.  Note that multinomial noise alone puts the expected TV of a
    row with ~500 visits near 0.05, so the result also reports the worst TV
    over well-visited rows (10x the threshold), where noise is ~0.015.
    """
    worst_tv = 0.0
    worst_tv_heavy = 0.0
    support_violations = 0
    rows_checked = 0
    heavy_checked = 0
    for sensor in range(1, scenario.n_sensors + 1):
        empirical, counts = harness.empirical_transitions(scenario, sensor,
                                                          n_frames, seed)
        model = tables.transition[sensor - 1]
        rows = np.flatnonzero(counts >= min_visits)
        rows_checked += len(rows)
        for r in rows:
            diff = np.abs(empirical[r].toarray().ravel()
                          - model[r].toarray().ravel())
            tv = 0.5 * float(diff.sum())
            worst_tv = max(worst_tv, tv)
            if counts[r] >= 10 * min_visits:
                heavy_checked += 1
                worst_tv_heavy = max(worst_tv_heavy, tv)
            observed = empirical[r].toarray().ravel() > 0
            allowed = model[r].toarray().ravel() > 0
            support_violations += int(np.any(observed & ~allowed))
    return {
        "passed": worst_tv < tv_limit and support_violations == 0 and rows_checked > 0,
        "worstTotalVariation": worst_tv,
        "rowsChecked": rows_checked,
        "worstTotalVariationWellVisited": worst_tv_heavy,
        "wellVisitedRows": heavy_checked,
        "supportViolations": support_violations,
    }


def random_abstract_states(scenario: Scenario, count: int, seed: int):
    rng = np.random.default_rng(seed)
    w = scenario.weights
    states = []
    for _ in range(count):
        states.append(AbstractState(
            blocker_cell=int(rng.integers(1, scenario.n_cells + 1)),
            queues=np.array([rng.integers(0, l + 1) for l in w.data_volume]),
            aoi_sensor=rng.integers(1, w.a_max + 1, size=scenario.n_sensors),
            aoi_server=rng.integers(1, w.a_max + 1, size=scenario.n_sensors)))
    return states


def value_suite(scenario: Scenario, tables: ReferenceTables, n_starts: int = 10,
                rollouts: int = 2000, horizon: int = 700, seed: int = 2,
                z_limit: float = 3.0) -> dict:
    """Closed-form reference value vs Monte-Carlo rollouts (95% CI / z-score)."""
    gamma = scenario.weights.gamma
    policy = harness.FixedSplitPolicy(scenario)
    starts = random_abstract_states(scenario, n_starts, seed)
    zs, inside = [], 0
    for i, start in enumerate(starts):
        analytic = value_of_abstract_state(tables, start)
        est = harness.monte_carlo_value(policy, scenario, start, rollouts,
                                        horizon, gamma, seed=seed * 1000 + i)
        z = est.z_score(analytic)
        zs.append(z)
        if abs(analytic - est.mean) <= est.half_width:
            inside += 1
    worst = max(abs(z) for z in zs)
    return {
        "passed": worst < z_limit,
        "worstAbsZ": worst,
        "zScores": zs,
        "insideCi": inside,
        "starts": n_starts,
    }


def _split_energy(taus, packets, gains, params) -> float:
    total = 0.0
    for tau, d, y in zip(taus, packets, gains):
        if d > 0:
            exponent = d * params.packet_bits / (tau * params.bandwidth_hz)
            total += tau * (2.0 ** exponent - 1.0) / y
    return total


def _split_gradient(tau, d, y, params) -> float:
    c = d * params.packet_bits / params.bandwidth_hz
    e = 2.0 ** (c / tau)
    return (e * (1.0 - c * math.log(2.0) / tau) - 1.0) / y


def p23_numerical_oracle(packets, gains, params, frame_sec, scale=1e4):
    """Generic constrained minimizer for the time-split program.

    Runs scipy's sequential quadratic programming on the normalized simplex
    formulation with analytic gradients; independent of the Lambert-W closed
    form.  The objective is rescaled to order one for solver conditioning.
    Returns (taus, objective).
    """
    from scipy.optimize import minimize

    packets = np.asarray(packets, dtype=int)
    gains = np.asarray(gains, dtype=float)
    active = np.flatnonzero(packets > 0)
    taus = np.zeros(len(packets))
    if len(active) == 0:
        return taus, 0.0
    c = packets[active] * params.packet_bits / params.bandwidth_hz
    y = gains[active]
    t_lo = np.array([min_airtime(int(d), float(g), params)
                     for d, g in zip(packets[active], y)]) / frame_sec

    def fun(x):
        tau = np.maximum(x, t_lo) * frame_sec
        return float(np.sum(tau * (2.0 ** (c / tau) - 1.0) / y)) * scale

    def jac(x):
        tau = np.maximum(x, t_lo) * frame_sec
        e = 2.0 ** (c / tau)
        return (e * (1.0 - c * math.log(2.0) / tau) - 1.0) / y * frame_sec * scale

    n = len(active)
    x0 = t_lo + (1.0 - t_lo.sum()) * np.ones(n) / n
    import warnings

    with warnings.catch_warnings():
        # SLSQP clips trial points to the bounds itself; the warning is noise
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(fun, x0, jac=jac, method="SLSQP",
                       bounds=list(zip(t_lo, np.ones(n))),
                       constraints=[{"type": "eq",
                                     "fun": lambda x: x.sum() - 1.0,
                                     "jac": lambda x: np.ones(len(x))}],
                       options={"ftol": 1e-16, "maxiter": 400})
    taus[active] = res.x * frame_sec
    return taus, float(res.fun) / scale


def kkt_residual(taus, packets, gains, params, frame_sec) -> float:
    """Relative stationarity residual of a time split (0 means exact KKT).

    Unclamped sensors must share one marginal-energy multiplier; clamped
    sensors (at the full-power minimum time) may only exceed it.
    """
    packets = np.asarray(packets, dtype=int)
    active = np.flatnonzero(packets > 0)
    if len(active) == 0:
        return 0.0
    grads, clamped = [], []
    for k in active:
        t_min = min_airtime(int(packets[k]), float(gains[k]), params)
        g = _split_gradient(float(taus[k]), int(packets[k]), float(gains[k]), params)
        if taus[k] <= t_min * (1.0 + 1e-9):
            clamped.append(g)
        else:
            grads.append(g)
    if grads:
        nu = -float(np.mean(grads))
    else:
        nu = -float(max(clamped))
    scale = abs(nu) + 1e-30
    residual = max((abs(g + nu) for g in grads), default=0.0) / scale
    # complementarity: a clamped sensor's marginal saving must not beat nu
    slack = max((-(g + nu) for g in clamped), default=0.0) / scale
    return max(residual, slack)


def lemma3_suite(scenario: Scenario, n_instances: int = 1000, seed: int = 3,
                 rel_limit: float = 1e-6) -> dict:
    """Closed-form time split vs the generic optimizer on random instances."""
    params = scenario.params
    frame = scenario.weights.frame_sec
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    worst_kkt = 0.0
    worst_budget = 0.0
    infeasible = 0
    repaired = 0
    for _ in range(n_instances):
        k = int(rng.integers(1, 9))
        packets = rng.integers(0, 6, size=k)
        if packets.sum() == 0:
            packets[rng.integers(k)] = 1
        gains = 10.0 ** rng.uniform(1.8, 4.3, size=k)
        try:
            taus = allocate_time(packets, gains, params, frame)
        except InfeasibleAllocation:
            infeasible += 1
            taus, packets = allocate_time_with_repair(packets, gains, params, frame)
            repaired += 1
            if packets.sum() == 0:
                continue
        closed = _split_energy(taus, packets, gains, params)
        _, numeric = p23_numerical_oracle(packets, gains, params, frame)
        gap = abs(closed - numeric) / max(abs(numeric), 1e-30)
        worst_gap = max(worst_gap, gap)
        worst_kkt = max(worst_kkt, kkt_residual(taus, packets, gains, params, frame))
        worst_budget = max(worst_budget, abs(taus.sum() - frame) / frame)
    return {
        "passed": worst_gap < rel_limit and worst_kkt < 1e-6 and worst_budget <= 1e-9,
        "worstRelativeGap": worst_gap,
        "worstKktResidual": worst_kkt,
        "worstBudgetError": worst_budget,
        "infeasibleInstances": infeasible,
        "repairedInstances": repaired,
        "instances": n_instances,
    }


def lemma4_suite(scenario: Scenario, tables: ReferenceTables, n_starts: int = 10,
                 rollouts: int = 64, horizon: int = 500, seed: int = 4) -> dict:
    """Policy-improvement chain: iterating the optimizer never hurts.

    Monte-Carlo discounted costs with common random numbers must satisfy
    psi1 <= reference and psi(n+1) <= psi(n); a violation only counts when
    the confidence intervals do not overlap.
    """
    gamma = scenario.weights.gamma
    starts = random_abstract_states(scenario, n_starts, seed)
    names = ["bm1", "psi1", "psi2", "psi3"]
    estimates = {name: [] for name in names}
    for name in names:
        policy = harness.make_policy(name, scenario, tables)
        for i, start in enumerate(starts):
            estimates[name].append(harness.monte_carlo_value(
                policy, scenario, start, rollouts, horizon, gamma,
                seed=seed * 1000 + i))
    violations = []
    for hi, lo in (("bm1", "psi1"), ("psi1", "psi2"), ("psi2", "psi3")):
        for i in range(n_starts):
            a, b = estimates[hi][i], estimates[lo][i]
            if b.mean > a.mean and (b.mean - b.half_width) > (a.mean + a.half_width):
                violations.append((hi, lo, i, a.mean, b.mean))
    means = {name: float(np.mean([e.mean for e in estimates[name]])) for name in names}
    return {
        "passed": len(violations) == 0,
        "violations": violations,
        "meanByPolicy": means,
        "starts": n_starts,
        "rollouts": rollouts,
    }


def oracle_suite(small_config: dict | None = None, rollouts: int = 64,
                 horizon: int = 500, seed: int = 5,
                 cache_dir: str | None = None) -> dict:
    """Small-instance sandwich: oracle optimum <= proposed <= reference.

    Runs discretized value iteration on a single-sensor instance and checks,
    for every abstract start state, that the Monte-Carlo cost of the
    converged policy sits between the oracle value and the reference value
    (within confidence intervals).
    """
    from . import config as cfg_mod
    from . import reference as ref_mod

    raw = dict(SMALL_INSTANCE)
    if small_config:
        raw = small_config
    scenario = cfg_mod.build_scenario(cfg_mod.resolve_config(raw))
    tables = ref_mod.load_or_build(scenario, cache_dir)
    oracle = harness.oracle_value_iteration(scenario)
    gamma = scenario.weights.gamma
    w = scenario.weights
    lk = w.data_volume[0]

    proposed = harness.make_policy("proposed", scenario, tables)
    pi = harness.FixedSplitPolicy(scenario)
    lower_violations = 0
    upper_violations = 0
    checked = 0
    worst_gap_low = 0.0
    for cell in range(1, scenario.n_cells + 1):
        for q in range(lk + 1):
            for a_s in range(1, w.a_max + 1):
                for a_d in range(1, w.a_max + 1):
                    start = AbstractState(cell, np.array([q]),
                                          np.array([a_s]), np.array([a_d]))
                    mc_prop = harness.monte_carlo_value(
                        proposed, scenario, start, rollouts, horizon, gamma,
                        seed=seed * 10000 + checked)
                    mc_ref = harness.monte_carlo_value(
                        pi, scenario, start, rollouts, horizon, gamma,
                        seed=seed * 10000 + checked)
                    oracle_value = oracle.value(cell, q, a_s, a_d, w.a_max)
                    if oracle_value > mc_prop.mean + mc_prop.half_width:
                        lower_violations += 1
                        worst_gap_low = max(worst_gap_low,
                                            oracle_value - mc_prop.mean - mc_prop.half_width)
                    if mc_prop.mean - mc_prop.half_width > mc_ref.mean + mc_ref.half_width:
                        upper_violations += 1
                    checked += 1
    return {
        "passed": lower_violations == 0 and upper_violations == 0,
        "statesChecked": checked,
        "lowerViolations": lower_violations,
        "upperViolations": upper_violations,
        "worstLowerGap": worst_gap_low,
        "oracleSweeps": oracle.sweeps,
    }


SUITES = ("pmf", "transitions", "value", "lemma3", "lemma4", "oracle")


def run_suite(name: str, scenario: Scenario, tables: ReferenceTables | None,
              cache_dir: str | None = None) -> dict:
    if name == "pmf":
        return pmf_suite(scenario)
    if name == "transitions":
        return transitions_suite(scenario, tables)
    if name == "value":
        return value_suite(scenario, tables)
    if name == "lemma3":
        return lemma3_suite(scenario)
    if name == "lemma4":
        return lemma4_suite(scenario, tables)
    if name == "oracle":
        return oracle_suite(cache_dir=cache_dir)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
