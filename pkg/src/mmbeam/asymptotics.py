"""Large-array approximations of the achievable spectral efficiency.

Fully digital beamformers are described by the dominant singular values of
each user channel (:class:`SpectralSummary`). Beam-steering beamformers are
described by ULA overlap tables between the selected steering vectors and
every ray of every user (:class:`OverlapTables`); the exact matrix-form rate
and its limits for ``n_t``, ``n_r`` or both going to infinity are all
expressed through these tables.

Regimes name the dimension that diverges: ``NT_INF``, ``NR_INF`` or
``BOTH_INF``. In the uplink ``n_t`` is the terminal array and ``n_r`` the
base station array.
"""

from __future__ import annotations

import enum
import functools
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .beamformers import an_beamsteer, cm_fd
from .channel import ChannelParams, ChannelRealization, sample_strongest_angle, steering_overlap
from .metrics import NoiseModel, log2det_rate

__all__ = [
    "Regime",
    "SpectralSummary",
    "OverlapTables",
    "spectral_summary",
    "overlap_tables",
    "cmfd_dl_logdet",
    "cmfd_dl_asymptotic",
    "cmfd_ul_asymptotic",
    "pzf_dl_asymptotic",
    "pzf_ul_asymptotic",
    "an_dl_matrix",
    "an_dl_asymptotic",
    "an_ul_matrix",
    "an_ul_asymptotic",
    "an_dl_exact_m1",
    "an_dl_limits_m1",
    "an_ul_exact_m1",
    "an_ul_limits_m1",
    "expected_overlap_sq",
]


class Regime(str, enum.Enum):
    NT_INF = "NT_INF"
    NR_INF = "NR_INF"
    BOTH_INF = "BOTH_INF"
    # M = 1 only
    NT_INF_NOISE_FREE = "NT_INF_NOISE_FREE"
    NR_INF_NOISE_FREE = "NR_INF_NOISE_FREE"
    LARGE_K = "LARGE_K"


def _matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, ChannelRealization) else np.asarray(h)


# --------------------------------------------------------------------------
# fully digital beamformers
# --------------------------------------------------------------------------


@dataclass
class SpectralSummary:
    lambdas: np.ndarray  # (K, M), descending
    lambdas_normalized: np.ndarray
    mus: np.ndarray  # (K, M), descending
    n_t: int
    n_r: int

    @property
    def k_users(self) -> int:
        return self.lambdas.shape[0]

    @property
    def m(self) -> int:
        return self.lambdas.shape[1]


def spectral_summary(channels: Sequence, m: int, precoders: Sequence | None = None) -> SpectralSummary:
    """Dominant singular values of each channel and the interference eigenvalues.

    ``mus[k]`` are the eigenvalues of
    ``sum_{l != k} Lam_k V_k^H Q_l Q_l^H V_k Lam_k``; the CM-FD precoders are
    used when ``precoders`` is None.
    """
    hs = [_matrix(h) for h in channels]
    n_r, n_t = hs[0].shape
    k_users = len(hs)
    lambdas = np.zeros((k_users, m))
    vs = []
    for k, h in enumerate(hs):
        _, s, vh = np.linalg.svd(h, full_matrices=False)
        lambdas[k] = s[:m]
        vs.append(vh[:m].conj().T)
    if precoders is None:
        precoders = [cm_fd(h, m)[0] for h in hs]
    mus = np.zeros((k_users, m))
    for k in range(k_users):
        lam = np.diag(lambdas[k])
        acc = np.zeros((m, m), dtype=complex)
        for l in range(k_users):
            if l == k:
                continue
            x = lam @ vs[k].conj().T @ precoders[l]
            acc += x @ x.conj().T
        ev = np.linalg.eigvalsh(0.5 * (acc + acc.conj().T))
        mus[k] = np.clip(ev[::-1], 0.0, None)
    return SpectralSummary(lambdas, lambdas / np.sqrt(n_t * n_r), mus, n_t, n_r)


def cmfd_dl_logdet(channels: Sequence, m: int, p_t: float, noise: NoiseModel, precoders: Sequence | None = None) -> float:
    """Matrix-form large-array CM-FD downlink ASE (before eigen-splitting)."""
    hs = [_matrix(h) for h in channels]
    k_users = len(hs)
    if precoders is None:
        precoders = [cm_fd(h, m)[0] for h in hs]
    c = p_t / (k_users * m)
    total = 0.0
    for k, h in enumerate(hs):
        _, s, vh = np.linalg.svd(h, full_matrices=False)
        lam = np.diag(s[:m])
        v = vh[:m].conj().T
        r = noise.sigma2 * np.eye(m, dtype=complex)
        for l in range(k_users):
            if l != k:
                x = lam @ v.conj().T @ precoders[l]
                r = r + c * (x @ x.conj().T)
        total += log2det_rate(c * lam @ lam, r)[0]
    return total


def cmfd_dl_asymptotic(summary: SpectralSummary, p_t: float, noise: NoiseModel) -> float:
    c = p_t / (summary.k_users * summary.m)
    snr = summary.n_r * summary.n_t * c * summary.lambdas_normalized**2 / (noise.sigma2 + c * summary.mus)
    return float(np.sum(np.log2(1.0 + snr)))


def cmfd_ul_asymptotic(channels: Sequence, postcoders: Sequence, k: int, powers: Sequence[float], noise: NoiseModel, m: int) -> float:
    """Large-array uplink CM-FD rate of user ``k``.

    Interference of user ``l`` seen through ``D_k`` is ``D_k^H U_l Lam_l``.
    """
    hs = [_matrix(h) for h in channels]
    powers = np.asarray(powers, dtype=float)
    d = postcoders[k]
    r = noise.sigma2 * np.eye(m, dtype=complex)
    lam_k = None
    for l, h in enumerate(hs):
        u, s, _ = np.linalg.svd(h, full_matrices=False)
        if l == k:
            lam_k = s[:m]
            continue
        x = d.conj().T @ u[:, :m] * s[:m]
        r = r + (powers[l] / m) * (x @ x.conj().T)
    return log2det_rate((powers[k] / m) * np.diag(lam_k**2).astype(complex), r)[0]


def pzf_dl_asymptotic(summary: SpectralSummary, p_t: float, noise: NoiseModel) -> float:
    c = p_t / (summary.k_users * summary.m)
    snr = summary.n_t * summary.n_r * c * summary.lambdas_normalized**2 / noise.sigma2
    return float(np.sum(np.log2(1.0 + snr)))


def pzf_ul_asymptotic(summary: SpectralSummary, k: int, p_t_k: float, noise: NoiseModel) -> float:
    snr = summary.n_t * summary.n_r * (p_t_k / summary.m) * summary.lambdas_normalized[k] ** 2 / noise.sigma2
    return float(np.sum(np.log2(1.0 + snr)))


# --------------------------------------------------------------------------
# beam-steering beamformers
# --------------------------------------------------------------------------


@dataclass
class OverlapTables:
    """ULA overlaps for beam-steering beamformers.

    Paths of each user are reordered so that the ``m`` selected ones come
    first, in selection order. ``f_r[k][l]`` is ``D_k^H A_{l,r}`` and
    ``f_t[k][l]`` is ``Q_k^H A_{l,t}``, both ``(m, N_l)``.
    """

    f_r: list
    f_t: list
    gains: list  # per user, lumped coefficients gain * sqrt(path loss)
    gammas: np.ndarray
    n_paths: np.ndarray  # scattered-ray count N used in gamma
    m: int
    n_t: int
    n_r: int

    @property
    def k_users(self) -> int:
        return len(self.gains)

    def dd(self, k: int) -> np.ndarray:
        """``D_k^H D_k``, the leading block of ``f_r[k][k]``."""
        return self.f_r[k][k][:, : self.m]


def overlap_tables(channels: Sequence[ChannelRealization], m: int, min_sep_deg: float = 5.0) -> OverlapTables:
    n_r, n_t = channels[0].n_r, channels[0].n_t
    aods, aoas, gains = [], [], []
    for h in channels:
        if len(h.paths) < m:
            raise ValueError("every user needs at least m paths")
        _, _, chosen, _ = an_beamsteer(h, m, min_sep_deg)
        order = list(chosen) + [i for i in range(len(h.paths)) if i not in chosen]
        aods.append(h.aods[order])
        aoas.append(h.aoas[order])
        gains.append(h.coefficients[order])
    k_users = len(channels)
    f_r = [[None] * k_users for _ in range(k_users)]
    f_t = [[None] * k_users for _ in range(k_users)]
    for k in range(k_users):
        for l in range(k_users):
            f_r[k][l] = steering_overlap(aoas[k][:m, None], aoas[l][None, :], n_r)
            f_t[k][l] = steering_overlap(aods[k][:m, None], aods[l][None, :], n_t)
    gammas = np.array([h.gamma for h in channels])
    n_paths = np.array([h.n_cl * h.n_ray for h in channels])
    return OverlapTables(f_r, f_t, gains, gammas, n_paths, m, n_t, n_r)


def _gram_block(gain: np.ndarray, f: np.ndarray, m: int) -> np.ndarray:
    """``[L F^H F L^*]_{1:m,1:m}`` for one overlap table ``f``."""
    x = f[:, :m] * gain[:m]
    return x.conj().T @ x


def an_dl_matrix(t: OverlapTables, p_t: float, noise: NoiseModel) -> float:
    """Exact downlink ASE of beam-steering beamformers in overlap form."""
    m, k_users = t.m, t.k_users
    c = p_t / (k_users * m)
    total = 0.0
    for k in range(k_users):
        g2 = t.gammas[k] ** 2
        fr, lk = t.f_r[k][k], t.gains[k]
        own = (fr * lk) @ t.f_t[k][k].conj().T
        r = noise.sigma2 * t.dd(k)
        for l in range(k_users):
            if l != k:
                x = (fr * lk) @ t.f_t[l][k].conj().T
                r = r + c * g2 * (x @ x.conj().T)
        total += log2det_rate(c * g2 * (own @ own.conj().T), r)[0]
    return total


def an_dl_asymptotic(t: OverlapTables, regime, p_t: float, noise: NoiseModel) -> float:
    regime = Regime(regime)
    m, k_users = t.m, t.k_users
    c = p_t / (k_users * m)
    total = 0.0
    for k in range(k_users):
        g2 = t.gammas[k] ** 2
        lk = t.gains[k]
        if regime is Regime.NT_INF:
            # only the selected departure directions survive at the transmitter
            dd = t.dd(k)
            x = dd * lk[:m]
            total += log2det_rate(c * g2 * (x @ x.conj().T), noise.sigma2 * dd)[0]
        elif regime is Regime.NR_INF:
            s = c * g2 * _gram_block(lk, t.f_t[k][k], m)
            r = noise.sigma2 * np.eye(m, dtype=complex)
            for l in range(k_users):
                if l != k:
                    r = r + c * g2 * _gram_block(lk, t.f_t[l][k], m)
            total += log2det_rate(s, r)[0]
        elif regime is Regime.BOTH_INF:
            total += float(np.sum(np.log2(1.0 + p_t * g2 * np.abs(lk[:m]) ** 2 / (k_users * m * noise.sigma2))))
        else:
            raise ValueError(f"regime {regime.value} is not defined for general m")
    return total


def an_ul_matrix(t: OverlapTables, k: int, powers: Sequence[float], noise: NoiseModel) -> float:
    """Exact uplink rate of user ``k`` with beam-steering beamformers."""
    m = t.m
    powers = np.asarray(powers, dtype=float)
    own = (t.f_r[k][k] * t.gains[k]) @ t.f_t[k][k].conj().T
    s = (powers[k] / m) * t.gammas[k] ** 2 * (own @ own.conj().T)
    r = noise.sigma2 * t.dd(k)
    for l in range(t.k_users):
        if l != k:
            x = (t.f_r[k][l] * t.gains[l]) @ t.f_t[l][l].conj().T
            r = r + (powers[l] / m) * t.gammas[l] ** 2 * (x @ x.conj().T)
    return log2det_rate(s, r)[0]


def an_ul_asymptotic(t: OverlapTables, k: int, regime, powers: Sequence[float], noise: NoiseModel) -> float:
    regime = Regime(regime)
    m = t.m
    powers = np.asarray(powers, dtype=float)
    g2 = t.gammas[k] ** 2
    lk = t.gains[k]
    if regime is Regime.NR_INF:
        s = (powers[k] / m) * g2 * _gram_block(lk, t.f_t[k][k], m)
        return log2det_rate(s, noise.sigma2 * np.eye(m, dtype=complex))[0]
    if regime is Regime.NT_INF:
        # every terminal precoder excites only its own selected paths
        x = t.f_r[k][k][:, :m] * lk[:m]
        s = (powers[k] / m) * g2 * (x @ x.conj().T)
        r = noise.sigma2 * t.dd(k)
        for l in range(t.k_users):
            if l != k:
                y = t.f_r[k][l][:, :m] * t.gains[l][:m]
                r = r + (powers[l] / m) * t.gammas[l] ** 2 * (y @ y.conj().T)
        return log2det_rate(s, r)[0]
    if regime is Regime.BOTH_INF:
        return float(np.sum(np.log2(1.0 + powers[k] * g2 * np.abs(lk[:m]) ** 2 / (m * noise.sigma2))))
    raise ValueError(f"regime {regime.value} is not defined for general m")


# --------------------------------------------------------------------------
# single-stream closed forms
# --------------------------------------------------------------------------


def _dominant(h: ChannelRealization):
    return h.coefficients, h.aods, h.aoas


def an_dl_exact_m1(channels: Sequence[ChannelRealization], p_t: float, noise: NoiseModel) -> float:
    """Exact single-stream downlink ASE from path gains and overlap sums."""
    k_users = len(channels)
    n_r, n_t = channels[0].n_r, channels[0].n_t
    c = p_t / k_users
    total = 0.0
    for k, h in enumerate(channels):
        a, aod, aoa = _dominant(h)
        g2 = h.gamma**2
        # receive-side overlap of each ray with the selected arrival direction
        rx = steering_overlap(aoa[0], aoa[1:], n_r)
        sig = a[0] + np.sum(a[1:] * rx * steering_overlap(aod[1:], aod[0], n_t))
        interf = 0.0
        for l, other in enumerate(channels):
            if l == k:
                continue
            target = other.aods[0]
            amp = a[0] * steering_overlap(aod[0], target, n_t) + np.sum(a[1:] * rx * steering_overlap(aod[1:], target, n_t))
            interf += c * g2 * abs(amp) ** 2
        total += np.log2(1.0 + c * g2 * abs(sig) ** 2 / (noise.sigma2 + interf))
    return float(total)


def _interference_overlap_sum(channels, k, n):
    aod_k = channels[k].aods[0]
    return sum(
        abs(steering_overlap(aod_k, channels[l].aods[0], n)) ** 2 for l in range(len(channels)) if l != k
    )


def an_dl_limits_m1(
    channels: Sequence[ChannelRealization],
    regime,
    p_t: float,
    noise: NoiseModel,
    params: ChannelParams | None = None,
) -> float:
    """Single-stream downlink limits.

    ``NT_INF`` and ``BOTH_INF``: interference-free, noise-limited.
    ``NR_INF``: interference through the transmit overlaps of the dominant
    departure angles; ``NR_INF_NOISE_FREE`` drops the noise.
    ``LARGE_K``: ``1 / (ln 2 * E|f_{n_t}|^2)``, with the expectation taken
    over the generator's angle prior given by ``params``.
    """
    regime = Regime(regime)
    k_users = len(channels)
    n_r, n_t = channels[0].n_r, channels[0].n_t
    sigma2 = noise.sigma2
    if regime is Regime.LARGE_K:
        return 1.0 / (np.log(2.0) * expected_overlap_sq(n_t, params or ChannelParams()))
    total = 0.0
    for k, h in enumerate(channels):
        a1 = abs(h.coefficients[0]) ** 2
        snr = (p_t / k_users) * a1 * n_t * n_r / (h.n_cl * h.n_ray)
        if regime in (Regime.NT_INF, Regime.BOTH_INF):
            total += np.log2(1.0 + snr / sigma2)
        elif regime is Regime.NR_INF:
            total += np.log2(1.0 + snr / (sigma2 + snr * _interference_overlap_sum(channels, k, n_t)))
        elif regime is Regime.NR_INF_NOISE_FREE:
            total += np.log2(1.0 + 1.0 / _interference_overlap_sum(channels, k, n_t))
        else:
            raise ValueError(f"regime {regime.value} is not a downlink single-stream limit")
    return float(total)


def an_ul_exact_m1(channels: Sequence[ChannelRealization], k: int, powers: Sequence[float], noise: NoiseModel) -> float:
    """Exact single-stream uplink rate of user ``k``."""
    powers = np.asarray(powers, dtype=float)
    n_r, n_t = channels[0].n_r, channels[0].n_t
    a, aod, aoa = _dominant(channels[k])
    sig = a[0] + np.sum(a[1:] * steering_overlap(aoa[0], aoa[1:], n_r) * steering_overlap(aod[1:], aod[0], n_t))
    interf = 0.0
    for l, other in enumerate(channels):
        if l == k:
            continue
        b, bod, boa = _dominant(other)
        amp = b[0] * steering_overlap(aoa[0], boa[0], n_r) + np.sum(
            b[1:] * steering_overlap(bod[1:], bod[0], n_t) * steering_overlap(aoa[0], boa[1:], n_r)
        )
        interf += powers[l] * other.gamma**2 * abs(amp) ** 2
    h = channels[k]
    return float(np.log2(1.0 + powers[k] * h.gamma**2 * abs(sig) ** 2 / (noise.sigma2 + interf)))


def an_ul_limits_m1(
    channels: Sequence[ChannelRealization],
    k: int,
    regime,
    powers: Sequence[float],
    noise: NoiseModel,
    params: ChannelParams | None = None,
) -> float:
    """Single-stream uplink limits of user ``k``.

    ``NR_INF``/``BOTH_INF`` are interference-free; ``NT_INF`` keeps the
    receive overlaps of the dominant arrival angles; ``LARGE_K`` replaces the
    interference sum by ``(K-1) E|alpha|^2 E|f_{n_r}|^2`` with the gain moment
    estimated from the other users' dominant paths.
    """
    regime = Regime(regime)
    powers = np.asarray(powers, dtype=float)
    n_r, n_t = channels[0].n_r, channels[0].n_t
    h = channels[k]
    scale = n_t * n_r / (h.n_cl * h.n_ray)
    a1 = abs(h.coefficients[0]) ** 2
    if regime in (Regime.NR_INF, Regime.BOTH_INF):
        return float(np.log2(1.0 + powers[k] * a1 * scale / noise.sigma2))
    others = [l for l in range(len(channels)) if l != k]
    aoa_k = h.aoas[0]
    weighted = [
        powers[l] * abs(channels[l].coefficients[0]) ** 2 * abs(steering_overlap(aoa_k, channels[l].aoas[0], n_r)) ** 2
        for l in others
    ]
    if regime is Regime.NT_INF:
        return float(np.log2(1.0 + powers[k] * a1 * scale / (noise.sigma2 + scale * sum(weighted))))
    if regime is Regime.NT_INF_NOISE_FREE:
        return float(np.log2(1.0 + powers[k] * a1 / sum(weighted)))
    if regime is Regime.LARGE_K:
        mean_gain = np.mean([powers[l] * abs(channels[l].coefficients[0]) ** 2 for l in others])
        e_f = expected_overlap_sq(n_r, params or ChannelParams())
        return float(np.log2(1.0 + powers[k] * a1 / (len(others) * mean_gain * e_f)))
    raise ValueError(f"regime {regime.value} is not an uplink single-stream limit")


_quad_lock = threading.Lock()


@functools.lru_cache(maxsize=256)
def _expected_overlap_sq_cached(p: int, params: ChannelParams, n_samples: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    phi1 = sample_strongest_angle(params, n_samples, rng)
    phi2 = sample_strongest_angle(params, n_samples, rng)
    return float(np.mean(np.abs(steering_overlap(phi1, phi2, p)) ** 2))


def expected_overlap_sq(p: int, params: ChannelParams, n_samples: int = 10_000, seed: int = 0) -> float:
    """Monte Carlo estimate of ``E|f_p(phi1, phi2)|^2`` for independent angles."""
    with _quad_lock:
        return _expected_overlap_sq_cached(p, params, n_samples, seed)
