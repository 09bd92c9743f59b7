"""Compute- and communication-latency model: training time, air-to-ground
path loss, link rates, and round duration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# exp() overflows past roughly 709 in double precision; clamp the argument and
# return the asymptotic value instead of propagating inf
_EXP_ARG_LIMIT = 700.0


@dataclass
class ComputeProfile:
    gamma_hz: float
    kappa_cycles: float

    def __post_init__(self):
        if self.gamma_hz <= 0 or self.kappa_cycles <= 0:
            raise ValueError("gamma and kappa must be positive")


@dataclass
class UavGeometry:
    distance_m: float
    elevation_deg: float

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ValueError("distance must be positive")
        if not 0.0 <= self.elevation_deg <= 90.0:
            raise ValueError("elevation angle must lie in [0, 90] degrees")


@dataclass
class ChannelParams:
    """Environment constants shared by every link in a run."""

    beta0: float = 1e-4
    a1: float = 2.0
    a2: float = 2.0
    a3: float = 0.31
    a4: float = 9.61
    noise_psd_w_per_hz: float = 1e-20
    total_bandwidth_hz: float = 10e6
    uav_tx_power_w: float = 0.28
    bs_tx_power_w: float = 10.0
    t_ag_s: float = 0.5

    def __post_init__(self):
        for name in ("beta0", "noise_psd_w_per_hz", "total_bandwidth_hz",
                     "uav_tx_power_w", "bs_tx_power_w", "t_ag_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.a3 <= 0:
            raise ValueError("a3 must be positive for a monotone elevation response")


def path_loss_exponent(theta_deg: float, params: ChannelParams) -> float:
    """Elevation-dependent path-loss exponent.

    alpha = a1 / (1 + a4 * exp(a3 * (theta - a4))) + a2. Large elevation
    saturates to a2; an overflowing exponent is clamped to that limit.
    """
    arg = params.a3 * (theta_deg - params.a4)
    if arg > _EXP_ARG_LIMIT:
        return params.a2
    return params.a1 / (1.0 + params.a4 * np.exp(arg)) + params.a2


def channel_gain(d_m: float, alpha: float, beta0: float) -> float:
    """Amplitude gain h = sqrt(beta0) * d^(-alpha/2), so |h|^2 = beta0 * d^-alpha."""
    if d_m <= 0:
        raise ValueError("distance must be positive")
    return np.sqrt(beta0) * d_m ** (-alpha / 2.0)


def uplink_rate(bandwidth_hz: float, tx_power_w: float, h: float, noise_psd: float) -> float:
    """Shannon rate R = B * log2(1 + P*|h|^2 / (B * sigma^2)) in bits/s."""
    if bandwidth_hz <= 0 or tx_power_w <= 0 or noise_psd <= 0:
        raise ValueError("bandwidth, power, and noise PSD must be positive")
    snr = tx_power_w * h * h / (bandwidth_hz * noise_psd)
    return bandwidth_hz * np.log2(1.0 + snr)


def downlink_rate(total_bandwidth_hz: float, bs_power_w: float, h: float, noise_psd: float) -> float:
    """Same rate law as the uplink with the base-station bandwidth and power."""
    return uplink_rate(total_bandwidth_hz, bs_power_w, h, noise_psd)


def training_time(epochs: int, kappa_cycles: float, sample_count: int, gamma_hz: float) -> float:
    """t = T_e * kappa * |M| / gamma, seconds."""
    if epochs <= 0 or kappa_cycles <= 0 or sample_count <= 0 or gamma_hz <= 0:
        raise ValueError("all training-time inputs must be positive")
    return epochs * kappa_cycles * sample_count / gamma_hz


def upload_time(param_count: int, param_bytes: int, rate_bps: float) -> float:
    """t = V * z * 8 / R, with z in bytes so the numerator is a bit count."""
    if param_count <= 0 or param_bytes <= 0 or rate_bps <= 0:
        raise ValueError("all upload-time inputs must be positive")
    return param_count * param_bytes * 8.0 / rate_bps


def round_duration(per_client_times, t_ag_s: float) -> float:
    """Slowest participant plus the server-side aggregation time."""
    times = list(per_client_times)
    if not times:
        raise ValueError("round_duration needs at least one participant time")
    return max(times) + t_ag_s
