"""Spectral efficiency, consumed power and global energy efficiency."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .beamformers import Architecture, BeamformerSet
from .channel import ChannelRealization

__all__ = [
    "NoiseModel",
    "PowerModel",
    "AseResult",
    "GeeResult",
    "ase_downlink",
    "ase_uplink_user",
    "consumed_power",
    "downlink_power",
    "gee_downlink",
    "gee_uplink_user",
    "log2det_rate",
]


@dataclass(frozen=True)
class NoiseModel:
    bandwidth_hz: float = 5e8
    noise_figure_db: float = 3.0
    noise_psd_dbm_hz: float = -174.0

    @property
    def sigma2(self) -> float:
        """Receiver noise power in watts, ``F * N0 * W``."""
        return 10.0 ** ((self.noise_figure_db + self.noise_psd_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz


@dataclass(frozen=True)
class PowerModel:
    """Hardware power constants in watts, plus the PA inefficiency ``eta``."""

    p_rfc_w: float = 0.040
    p_dac_w: float = 0.110
    p_adc_w: float = 0.200
    p_pa_w: float = 0.016
    p_lna_w: float = 0.030
    p_bb_w: float = 0.243
    p_ps_w: float = 0.0195
    p_ps_fixed_w: float = 0.001
    p_sw_w: float = 0.005
    p_element_w: float = 0.027
    eta: float = 2.0
    # False counts the transmit-side antennas in the HY receiver LNA term
    correct_hy_rx_lna: bool = True

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if name.startswith("p_") and value < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.eta > 1:
            raise ValueError("eta must be > 1")


@dataclass
class AseResult:
    total: float
    per_user: np.ndarray
    regularized: bool = False


@dataclass
class GeeResult:
    total: float
    consumed_power_w: float
    ase: float = field(default=0.0)


def _matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, ChannelRealization) else np.asarray(h)


def _herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _logdet_pd(a: np.ndarray):
    """log2 det of a Hermitian PD matrix, or None when Cholesky fails."""
    try:
        c = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * float(np.sum(np.log2(np.abs(np.diag(c)))))


def log2det_rate(signal: np.ndarray, disturbance: np.ndarray):
    """``log2 det(I + R^{-1} S)`` evaluated as ``log2 det(R + S) - log2 det R``.

    ``R`` gets a trace-scaled jitter ``1e-12 * tr(R) / M`` when it is not
    numerically positive definite. Returns ``(rate, regularized)``.
    """
    r = _herm(disturbance)
    s = _herm(signal)
    regularized = False
    ld_r = _logdet_pd(r)
    if ld_r is None:
        m = r.shape[0]
        jitter = 1e-12 * max(float(np.real(np.trace(r))), np.finfo(float).tiny) / m
        r = r + jitter * np.eye(m)
        regularized = True
        ld_r = _logdet_pd(r)
        if ld_r is None:
            raise np.linalg.LinAlgError("disturbance covariance is not positive definite")
    ld_rs = _logdet_pd(r + s)
    if ld_rs is None:
        ld_rs = float(np.linalg.slogdet(r + s)[1] / np.log(2.0))
    return max(ld_rs - ld_r, 0.0), regularized


def ase_downlink(channels: Sequence, bf: BeamformerSet, p_t_w: float, noise: NoiseModel) -> AseResult:
    """Sum-rate of the downlink with Gaussian inputs and uniform stream powers."""
    if p_t_w < 0:
        raise ValueError("transmit power must be nonnegative")
    hs = [_matrix(h) for h in channels]
    k_users = bf.k_users
    if len(hs) != k_users:
        raise ValueError("one channel per user is required")
    m = bf.m
    scale = p_t_w / (k_users * m)
    sigma2 = noise.sigma2
    per_user = np.zeros(k_users)
    any_reg = False
    q_all = np.hstack(bf.precoders)
    for k in range(k_users):
        d = bf.postcoders[k]
        # effective M x (K M) channel towards every user's streams
        g = d.conj().T @ hs[k] @ q_all
        g_own = g[:, k * m:(k + 1) * m]
        interf = np.delete(g, np.s_[k * m:(k + 1) * m], axis=1)
        r = sigma2 * (d.conj().T @ d) + scale * (interf @ interf.conj().T)
        s = scale * (g_own @ g_own.conj().T)
        per_user[k], reg = log2det_rate(s, r)
        any_reg |= reg
    return AseResult(float(np.sum(per_user)), per_user, any_reg)


def ase_uplink_user(
    channels: Sequence,
    bf: BeamformerSet,
    k: int,
    p_t_per_user_w: Sequence[float],
    noise: NoiseModel,
) -> float:
    """Rate of user ``k`` in the uplink with single-user detection at the BS."""
    hs = [_matrix(h) for h in channels]
    powers = np.asarray(p_t_per_user_w, dtype=float)
    if np.any(powers < 0):
        raise ValueError("transmit powers must be nonnegative")
    m = bf.m
    d = bf.postcoders[k]
    r = noise.sigma2 * (d.conj().T @ d)
    for l, h in enumerate(hs):
        if l == k:
            continue
        g = d.conj().T @ h @ bf.precoders[l]
        r = r + (powers[l] / m) * (g @ g.conj().T)
    g = d.conj().T @ hs[k] @ bf.precoders[k]
    rate, _ = log2det_rate((powers[k] / m) * (g @ g.conj().T), r)
    return rate


_FAMILY = {
    Architecture.CM_FD: "FD",
    Architecture.PZF_FD: "FD",
    Architecture.CM_HY: "HY",
    Architecture.PZF_HY: "HY",
    Architecture.AN: "AN",
    Architecture.SW_PHSH: "SW_PHSH",
    Architecture.SW: "SW",
}


def consumed_power(
    kind,
    side: str,
    n_ant: int,
    n_rf: int,
    pm: PowerModel,
    n_q: int = 8,
    n_ant_peer: int | None = None,
) -> float:
    """Circuit power (W) of one transmitter (``side='TX'``) or receiver (``'RX'``).

    ``n_ant_peer`` is only read by the HY receiver when
    ``pm.correct_hy_rx_lna`` is False, where the LNA term counts the
    transmit-side antennas.
    """
    try:
        family = _FAMILY[Architecture.parse(kind)]
    except ValueError:
        raise ValueError(f"unknown architecture {kind!r}") from None
    side = side.upper()
    if side not in ("TX", "RX"):
        raise ValueError("side must be 'TX' or 'RX'")
    tx = side == "TX"
    conv = pm.p_dac_w if tx else pm.p_adc_w
    amp = pm.p_pa_w if tx else pm.p_lna_w

    if family == "FD":
        return n_ant * (pm.p_rfc_w + conv + amp) + pm.p_bb_w
    if family == "HY":
        amp_count = n_ant
        if not tx and not pm.correct_hy_rx_lna:
            if n_ant_peer is None:
                raise ValueError("n_ant_peer is required for the uncorrected HY receiver formula")
            amp_count = n_ant_peer
        return n_rf * (pm.p_rfc_w + conv + n_ant * pm.p_ps_w) + amp_count * amp + pm.p_bb_w
    if family == "AN":
        return n_rf * (pm.p_rfc_w + n_ant * pm.p_element_w + conv)
    if family == "SW_PHSH":
        return n_rf * (pm.p_rfc_w + conv + n_q * pm.p_ps_fixed_w) + n_ant * (n_rf * pm.p_sw_w + amp) + pm.p_bb_w
    # SW
    return n_rf * (pm.p_rfc_w + conv + pm.p_sw_w) + n_rf * amp + pm.p_bb_w


def downlink_power(
    kind,
    p_t_w: float,
    n_t: int,
    n_r: int,
    k_users: int,
    n_rf_tx: int,
    n_rf_rx: int,
    pm: PowerModel,
    n_q: int = 8,
) -> float:
    """Downlink GEE denominator ``eta P_T + P_TX,c + K P_RX,c`` in watts."""
    p_tx = consumed_power(kind, "TX", n_t, n_rf_tx, pm, n_q=n_q)
    p_rx = consumed_power(kind, "RX", n_r, n_rf_rx, pm, n_q=n_q, n_ant_peer=n_t)
    return pm.eta * p_t_w + p_tx + k_users * p_rx


def gee_downlink(
    ase: "AseResult | float",
    p_t_w: float,
    bf: BeamformerSet,
    n_t: int,
    n_r: int,
    pm: PowerModel,
    noise: NoiseModel,
) -> GeeResult:
    """System GEE in bit/J: ``W ASE / (eta P_T + P_TX,c + K P_RX,c)``."""
    total = ase.total if isinstance(ase, AseResult) else float(ase)
    denom = downlink_power(bf.kind, p_t_w, n_t, n_r, bf.k_users, bf.n_rf_tx, bf.n_rf_rx, pm, bf.n_q or 8)
    return GeeResult(noise.bandwidth_hz * total / denom, denom, total)


def gee_uplink_user(
    ase_k: float,
    p_t_k_w: float,
    kind,
    n_t: int,
    n_rf_tx: int,
    pm: PowerModel,
    noise: NoiseModel,
    n_q: int = 8,
) -> GeeResult:
    """Per-user uplink GEE; only the user's own circuitry enters the denominator."""
    p_tx = consumed_power(kind, "TX", n_t, n_rf_tx, pm, n_q=n_q)
    denom = pm.eta * p_t_k_w + p_tx
    return GeeResult(noise.bandwidth_hz * ase_k / denom, denom, ase_k)
