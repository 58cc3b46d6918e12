"""Uplink channel: beam selection, baseband gain, capacity and departures.

The default "analytical" mode works in the large-array limit: the beam pair
locks onto the strongest unblocked path and the post-beamforming gain over
noise power, Y (units 1/W), is exponentially distributed with mean
1 / (path_loss_linear * N0 * W).  A finite-antenna mode assembling the full
channel matrix exists for validation only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EXP_FLOOR = 745.0  # exp(-x) underflows to 0 beyond this; used as a guard


@dataclass(frozen=True)
class ChannelParams:
    bandwidth_hz: float        # W
    noise_psd_w_per_hz: float  # N0, linear scale
    packet_bits: float         # bits per packet
    n_r: int                   # BS array elements
    n_t: int                   # sensor array elements
    max_power_w: float

    def __post_init__(self):
        for name in ("bandwidth_hz", "noise_psd_w_per_hz", "packet_bits", "max_power_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_r < 1 or self.n_t < 1:
            raise ValueError("antenna counts must be at least 1")

    @property
    def noise_power_w(self) -> float:
        return self.noise_psd_w_per_hz * self.bandwidth_hz


@dataclass(frozen=True)
class FiniteChannelRealization:
    """One draw of the finite-antenna channel matrix and its per-path gains."""

    sensor_index: int
    matrix: np.ndarray       # (n_r, n_t) complex
    path_gains: np.ndarray   # complex gain per path (blocked paths included)


def array_response(n: int, angle: float) -> np.ndarray:
    """Normalized ULA response: entry m is exp(-j*pi*m*sin(angle)) / sqrt(n)."""
    if n < 1:
        raise ValueError("array size must be at least 1")
    m = np.arange(n)
    return np.exp(-1j * np.pi * m * math.sin(angle)) / math.sqrt(n)


def select_beam(paths, block_indicators):
    """Index of the strongest unblocked path, or None when all are blocked.

    Strength is the inverse linear path loss; ties break toward the smallest
    list index, which prefers the direct path.
    """
    if len(paths) != len(block_indicators):
        raise ValueError("indicator list must align with paths")
    best, best_gain = None, 0.0
    for i, (path, b) in enumerate(zip(paths, block_indicators)):
        if not b:
            continue
        gain = 1.0 / path.path_loss_linear
        if gain > best_gain:
            best, best_gain = i, gain
    return best


def codebook_angles(n: int) -> np.ndarray:
    """Beam steering angles arcsin(2*(q-1)/n - 1) for q = 1..n."""
    return np.arcsin(2.0 * np.arange(n) / n - 1.0)


def expected_beam_gain_search(paths, block_indicators, n_r: int, n_t: int):
    """Exhaustive codebook search maximizing the expected beamformed gain.

    The expectation of |w^H H f|^2 over independent zero-mean path gains is
    sum_i B_i * loss_i^-1 * |w^H a_R(aoa_i)|^2 * |a_T(aod_i)^H f|^2 (cross
    terms vanish), so the search evaluates that closed form over the full
    receive x transmit beam grid.  Returns (q, p, expected_gain) with 1-based
    beam indices; all-blocked inputs return (1, 1, 0.0).
    """
    weights = np.array([b / p.path_loss_linear for p, b in zip(paths, block_indicators)])
    if weights.sum() == 0.0:
        return 1, 1, 0.0
    rx_grid = codebook_angles(n_r)
    tx_grid = codebook_angles(n_t)
    a_rx = np.stack([array_response(n_r, p.aoa_rad) for p in paths])   # (n_paths, n_r)
    a_tx = np.stack([array_response(n_t, p.aod_rad) for p in paths])
    w_all = np.stack([array_response(n_r, ang) for ang in rx_grid])    # (n_r, n_r)
    f_all = np.stack([array_response(n_t, ang) for ang in tx_grid])
    rx_gain = np.abs(w_all.conj() @ a_rx.T) ** 2                       # (n_r, n_paths)
    tx_gain = np.abs(f_all.conj() @ a_tx.T) ** 2                       # (n_t, n_paths)
    table = rx_gain @ np.diag(weights) @ tx_gain.T                     # (n_r, n_t)
    q, p = np.unravel_index(int(np.argmax(table)), table.shape)
    return int(q) + 1, int(p) + 1, float(table[q, p])


def mean_gain(path, params: ChannelParams) -> float:
    """Large-array mean of Y along one path: 1 / (loss * N0 * W)."""
    return 1.0 / (path.path_loss_linear * params.noise_power_w)


def sample_baseband_gain(selected, paths, params: ChannelParams,
                         rng: np.random.Generator, size=None):
    """Draw Y for the selected path; zero when nothing is selected.

    Y is exponential with mean 1 / (loss * N0 * W).  `size` enables batched
    draws for statistical tests; the default returns a scalar.
    """
    if selected is None:
        return 0.0 if size is None else np.zeros(size)
    scale = mean_gain(paths[selected], params)
    if size is None:
        return float(rng.exponential(scale))
    return rng.exponential(scale, size=size)


def capacity(power_w: float, gain_y: float, params: ChannelParams) -> float:
    """Uplink rate W * log2(1 + p * Y) in bits per second."""
    if power_w < 0 or gain_y < 0:
        raise ValueError("power and gain must be nonnegative")
    return params.bandwidth_hz * math.log2(1.0 + power_w * gain_y)


def departures(tau_sec: float, power_w: float, gain_y: float, params: ChannelParams) -> int:
    """Whole packets delivered in tau seconds: floor(rate * tau / packet_bits).

    A tiny relative slack keeps exact packet boundaries (power chosen to
    deliver an integer count) from rounding down due to float error.
    """
    if tau_sec < 0:
        raise ValueError("tau must be nonnegative")
    packets = capacity(power_w, gain_y, params) * tau_sec / params.packet_bits
    return int(math.floor(packets + 1e-9))


def departure_pmf(paths, block_indicators, tau_sec: float, power_w: float,
                  d_max: int, params: ChannelParams) -> np.ndarray:
    """PMF of the departure count under exponential Y, tail mass at d_max.

    Pr[D >= d] = exp(-c * (2^(d*Nb/(W*tau)) - 1)) with c = loss * N0 * W / p,
    so entry d < d_max is the difference of consecutive tails and entry d_max
    absorbs Pr[D >= d_max].  All paths blocked gives a unit mass at zero.
    """
    if tau_sec <= 0 or power_w <= 0:
        raise ValueError("tau and power must be positive")
    if d_max < 1:
        raise ValueError("d_max must be at least 1")
    selected = select_beam(paths, block_indicators)
    pmf = np.zeros(d_max + 1)
    if selected is None:
        pmf[0] = 1.0
        return pmf
    c = paths[selected].path_loss_linear * params.noise_power_w / power_w
    bits_per_packet = params.packet_bits / (params.bandwidth_hz * tau_sec)

    def tail(d):
        # Pr[D >= d]
        exponent = d * bits_per_packet
        if exponent > 1020.0:
            return 0.0
        arg = c * (2.0 ** exponent - 1.0)
        return math.exp(-arg) if arg < _EXP_FLOOR else 0.0

    tails = np.array([tail(d) for d in range(d_max + 1)])
    pmf[:-1] = tails[:-1] - tails[1:]
    pmf[-1] = tails[-1]
    return pmf


def finite_array_sample(paths, block_indicators, params: ChannelParams,
                        rng: np.random.Generator):
    """Validation mode: draw the finite-antenna channel and the resulting Y.

    Path gains are complex Gaussian with variance 1/loss, the matrix is the
    sum of blocked-masked rank-one terms, and the beams come from the
    codebook search.  Returns (realization, Y).
    """
    n_paths = len(paths)
    std = np.array([math.sqrt(0.5 / p.path_loss_linear) for p in paths])
    gains = std * (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths))
    mask = np.asarray(block_indicators, dtype=float)
    matrix = np.zeros((params.n_r, params.n_t), dtype=complex)
    for i, path in enumerate(paths):
        if mask[i] == 0.0:
            continue
        matrix += gains[i] * np.outer(array_response(params.n_r, path.aoa_rad),
                                      array_response(params.n_t, path.aod_rad).conj())
    q, p, _ = expected_beam_gain_search(paths, block_indicators, params.n_r, params.n_t)
    w = array_response(params.n_r, codebook_angles(params.n_r)[q - 1])
    f = array_response(params.n_t, codebook_angles(params.n_t)[p - 1])
    y = abs(w.conj() @ matrix @ f) ** 2 / (np.vdot(w, w).real * params.noise_power_w)
    realization = FiniteChannelRealization(
        sensor_index=paths[0].sensor_index, matrix=matrix, path_gains=gains)
    return realization, float(y)


def finite_array_gain_samples(paths, block_indicators, params: ChannelParams,
                              rng: np.random.Generator, size: int) -> np.ndarray:
    """Batched finite-antenna Y draws via per-path beam coupling scalars.

    |w^H H f|^2 = |sum_i B_i g_i (w^H a_R,i)(a_T,i^H f)|^2, so the matrix is
    never materialized; equality with finite_array_sample is covered by test.
    """
    q, p, _ = expected_beam_gain_search(paths, block_indicators, params.n_r, params.n_t)
    w = array_response(params.n_r, codebook_angles(params.n_r)[q - 1])
    f = array_response(params.n_t, codebook_angles(params.n_t)[p - 1])
    coupling = np.array([
        b * (w.conj() @ array_response(params.n_r, path.aoa_rad))
        * (array_response(params.n_t, path.aod_rad).conj() @ f)
        for path, b in zip(paths, block_indicators)
    ])
    std = np.array([math.sqrt(0.5 / p_.path_loss_linear) for p_ in paths])
    draws = std * (rng.standard_normal((size, len(paths)))
                   + 1j * rng.standard_normal((size, len(paths))))
    return np.abs(draws @ coupling) ** 2 / params.noise_power_w
