"""Configuration loading and scenario assembly.

A single JSON document with sections {room, blocker, channel, mdp, policy,
sim} configures everything; every key has a default so an empty document is a
valid configuration.  Powers are Watts, energies Joules, times seconds and
rates bit/s internally; dB and dBm appear only here at the boundary.  Packet
size uses decimal kilobytes (200 KB = 200 * 1000 * 8 bits).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import geometry as geom
from . import mobility
from .states import CostWeights

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "schemaVersion": SCHEMA_VERSION,
    "room": {
        "width": 20.0,
        "height": 20.0,
        "bsPosition": [10.0, 10.0],
        "sensorCount": 8,
        "sensorInset": 1.0,
        "sensorSeed": 12,
        "sensorPlacement": "even",      # "even" or "uniform" on the inset perimeter
        "sensorPositions": None,        # explicit [[x, y], ...] overrides placement
    },
    "blocker": {
        "cells": None,                  # explicit [[x, y], ...] overrides the ring
        "ringRadiusM": 3.0,
        "cellSpacingM": 1.0,
        "radiusM": 0.3,
        "stayProbability": 0.90,
        "startCell": 1,
    },
    "channel": {
        "carrierFreqGHz": 60.0,
        "bandwidthHz": 4.0e8,
        "noisePsdDbmPerHz": -174.0,
        "packetBits": 1_600_000,        # 200 decimal KB
        "nlosExtraLossDb": 15.0,
        "nR": 64,
        "nT": 128,
        "maxPowerW": 0.1,
    },
    "mdp": {
        "dataVolume": None,             # per-sensor packets per sample; default U{3..5}
        "dataVolumeSeed": 20230921,
        "aMax": 10,
        "gamma": 0.98,
        "frameSec": 0.01,
        "energyWeight": 1.0e4,          # cost per Joule
        "outdatedPenaltyWeight": 100.0,
        "sampleEnergyJ": 1.0e-4,
        "drainTest": "post_action",
    },
    "policy": {
        "referencePowerW": 0.05,
        "maxIters": 50,
        "tol": 1.0e-9,
    },
    "sim": {
        "frames": 100_000,
        "seed": 7,
        "horizon": 700,
        "rollouts": 2000,
        "kSweep": None,                 # e.g. [4, 5, 6, 7, 8] for sweep outputs
    },
}


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key path."""


def _merge(defaults, override, path):
    if override is None:
        return copy.deepcopy(defaults)
    if not isinstance(override, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(override).__name__}")
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"{here}: unknown key")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = value
    return out


def _require_number(cfg, section, key, positive=False):
    value = cfg[section][key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{section}.{key}: must be positive, got {value!r}")
    return value


def resolve_config(raw: dict | None) -> dict:
    """Merge a (possibly partial) config over the defaults and sanity-check it."""
    cfg = _merge(DEFAULT_CONFIG, raw, "")
    if cfg["schemaVersion"] != SCHEMA_VERSION:
        raise ConfigError(f"schemaVersion: expected {SCHEMA_VERSION}, got {cfg['schemaVersion']!r}")
    for section, key in (
        ("room", "width"), ("room", "height"), ("room", "sensorInset"),
        ("blocker", "cellSpacingM"), ("blocker", "radiusM"),
        ("channel", "carrierFreqGHz"), ("channel", "bandwidthHz"),
        ("channel", "packetBits"), ("channel", "maxPowerW"),
        ("mdp", "frameSec"), ("policy", "referencePowerW"),
    ):
        _require_number(cfg, section, key, positive=True)
    if not 0.0 <= cfg["blocker"]["stayProbability"] <= 1.0:
        raise ConfigError("blocker.stayProbability: must lie in [0, 1]")
    if not 0.0 < cfg["mdp"]["gamma"] < 1.0:
        raise ConfigError("mdp.gamma: must lie in (0, 1)")
    if cfg["room"]["sensorPositions"] is None and cfg["room"]["sensorCount"] < 1:
        raise ConfigError("room.sensorCount: must be at least 1")
    return cfg


def load_config(path: str) -> dict:
    """Read and resolve a JSON configuration file."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return resolve_config(raw)


def table_config_hash(cfg: dict) -> str:
    """Hash of the config subset that determines the reference value tables."""
    relevant = {k: cfg[k] for k in ("room", "blocker", "channel", "mdp")}
    relevant["referencePowerW"] = cfg["policy"]["referencePowerW"]
    blob = json.dumps(relevant, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def noise_psd_w_per_hz(dbm_per_hz: float) -> float:
    return 10.0 ** ((dbm_per_hz - 30.0) / 10.0)


def _data_volumes(cfg: dict, n_sensors: int) -> tuple:
    explicit = cfg["mdp"]["dataVolume"]
    if explicit is not None:
        if len(explicit) != n_sensors:
            raise ConfigError(
                f"mdp.dataVolume: expected {n_sensors} entries, got {len(explicit)}")
        return tuple(int(v) for v in explicit)
    rng = np.random.default_rng(cfg["mdp"]["dataVolumeSeed"])
    pool = rng.integers(3, 6, size=max(n_sensors, 64))  # U{3,4,5}
    return tuple(int(v) for v in pool[:n_sensors])


@dataclass
class Scenario:
    """Everything derived from one configuration, precomputed once.

    best_path[cell0, k0] is the strongest unblocked path index for sensor
    k0+1 when the blocker sits in cell cell0+1, or -1 when every path is
    blocked; gain_mean is the corresponding mean of Y (zero when blocked).
    reference_pmf[k0][cell0] is the departure PMF under the fixed-time,
    fixed-power reference behaviour, with the tail aggregated at L_k.
    """

    config: dict
    room: geom.RoomLayout
    paths: list                 # per sensor: list of PropagationPath
    blocker: mobility.BlockerModel
    params: chan.ChannelParams
    weights: CostWeights
    ref_power_w: float
    tau_ref: np.ndarray         # (K,) reference time split
    unblocked: list             # per sensor: (|L|, n_paths) 0/1 array
    best_path: np.ndarray       # (|L|, K) int
    gain_mean: np.ndarray       # (|L|, K) mean Y given the cell
    reference_pmf: list         # per sensor: (|L|, L_k + 1)

    @property
    def n_sensors(self) -> int:
        return self.room.n_sensors

    @property
    def n_cells(self) -> int:
        return self.room.n_cells

    @property
    def start_cell(self) -> int:
        return int(self.config["blocker"]["startCell"])

    def config_hash(self) -> str:
        return table_config_hash(self.config)


def build_scenario(cfg: dict, sensor_count: int | None = None) -> Scenario:
    """Assemble the room, mobility model, channel tables and PMFs for a config.

    `sensor_count` overrides room.sensorCount (used by K sweeps); seeded
    placement and data volumes are drawn from fixed-size pools so smaller
    counts reuse the first entries of larger ones.
    """
    cfg = resolve_config(cfg)
    room_cfg, blk_cfg, ch_cfg = cfg["room"], cfg["blocker"], cfg["channel"]

    if sensor_count is not None:
        cfg = copy.deepcopy(cfg)
        cfg["room"]["sensorCount"] = int(sensor_count)
        cfg["room"]["sensorPositions"] = None
        room_cfg = cfg["room"]

    if room_cfg["sensorPositions"] is not None:
        sensors = [tuple(p) for p in room_cfg["sensorPositions"]]
    else:
        sensors = geom.perimeter_positions(
            room_cfg["width"], room_cfg["height"], room_cfg["sensorInset"],
            room_cfg["sensorCount"], room_cfg["sensorSeed"], room_cfg["sensorPlacement"])

    if blk_cfg["cells"] is not None:
        cells = [tuple(c) for c in blk_cfg["cells"]]
    else:
        cells = geom.ring_cells(tuple(room_cfg["bsPosition"]),
                                blk_cfg["ringRadiusM"], blk_cfg["cellSpacingM"])

    room = geom.make_room(room_cfg["width"], room_cfg["height"],
                          tuple(room_cfg["bsPosition"]), sensors, cells)
    if not (1 <= blk_cfg["startCell"] <= room.n_cells):
        raise ConfigError("blocker.startCell: out of range")

    blocker = mobility.build_random_walk(
        room.blocker_cells, blk_cfg["cellSpacingM"], blk_cfg["stayProbability"],
        radius=blk_cfg["radiusM"])

    params = chan.ChannelParams(
        bandwidth_hz=ch_cfg["bandwidthHz"],
        noise_psd_w_per_hz=noise_psd_w_per_hz(ch_cfg["noisePsdDbmPerHz"]),
        packet_bits=float(ch_cfg["packetBits"]),
        n_r=int(ch_cfg["nR"]), n_t=int(ch_cfg["nT"]),
        max_power_w=ch_cfg["maxPowerW"])

    data_volume = _data_volumes(cfg, room.n_sensors)
    mdp_cfg = cfg["mdp"]
    weights = CostWeights(
        w_p=mdp_cfg["energyWeight"], w_q=mdp_cfg["outdatedPenaltyWeight"],
        sample_energy_j=mdp_cfg["sampleEnergyJ"], a_max=int(mdp_cfg["aMax"]),
        gamma=mdp_cfg["gamma"], frame_sec=mdp_cfg["frameSec"],
        data_volume=data_volume, drain_test=mdp_cfg["drainTest"])

    paths = [geom.build_paths(room, k, ch_cfg["carrierFreqGHz"],
                              ch_cfg["nlosExtraLossDb"])
             for k in range(1, room.n_sensors + 1)]

    total_volume = sum(data_volume)
    tau_ref = weights.frame_sec * np.array(data_volume, dtype=float) / total_volume
    ref_power = cfg["policy"]["referencePowerW"]

    n_cells, n_sensors = room.n_cells, room.n_sensors
    unblocked = []
    best = np.full((n_cells, n_sensors), -1, dtype=int)
    gain_mean = np.zeros((n_cells, n_sensors))
    pmfs = []
    for k0 in range(n_sensors):
        sensor_paths = paths[k0]
        flags = np.zeros((n_cells, len(sensor_paths)), dtype=int)
        pmf = np.zeros((n_cells, data_volume[k0] + 1))
        for c0 in range(n_cells):
            flags[c0] = [geom.blockage_indicator(room, c0 + 1, p, blocker.radius)
                         for p in sensor_paths]
            sel = chan.select_beam(sensor_paths, flags[c0])
            if sel is not None:
                best[c0, k0] = sel
                gain_mean[c0, k0] = chan.mean_gain(sensor_paths[sel], params)
            pmf[c0] = chan.departure_pmf(sensor_paths, flags[c0], float(tau_ref[k0]),
                                         ref_power, data_volume[k0], params)
        unblocked.append(flags)
        pmfs.append(pmf)

    return Scenario(
        config=cfg, room=room, paths=paths, blocker=blocker, params=params,
        weights=weights, ref_power_w=ref_power, tau_ref=tau_ref,
        unblocked=unblocked, best_path=best, gain_mean=gain_mean,
        reference_pmf=pmfs)
