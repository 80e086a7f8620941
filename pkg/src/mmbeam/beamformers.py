"""Precoder/postcoder construction for the seven beamforming architectures.

All builders return per-user ``(precoder, postcoder)`` pairs of shapes
``(n_t, m)`` and ``(n_r, m)``. Precoders are scaled so that
``||Q_k||_F^2 = m``, i.e. each stream gets its ``P/(K m)`` share of the
radiated power; postcoder scaling is irrelevant to the rate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelRealization, steering_matrix

__all__ = [
    "Architecture",
    "InfeasibleError",
    "SingularProjectionError",
    "BeamformerSet",
    "HybridFactors",
    "SwitchSelection",
    "cm_fd",
    "pzf_fd",
    "hybrid_factorize",
    "cm_hy",
    "pzf_hy",
    "an_beamsteer",
    "sw_phsh_quantize",
    "sw_mfn_select",
    "build_beamformers",
    "build_uplink_beamformers",
]


class Architecture(str, enum.Enum):
    CM_FD = "CM-FD"
    PZF_FD = "PZF-FD"
    CM_HY = "CM-HY"
    PZF_HY = "PZF-HY"
    AN = "AN"
    SW_PHSH = "SW+PHSH"
    SW = "SW"

    @classmethod
    def parse(cls, name: "str | Architecture") -> "Architecture":
        if isinstance(name, cls):
            return name
        key = str(name).strip()
        for arch in cls:
            if key.upper() in (arch.value.upper(), arch.name):
                return arch
        if key.upper().replace("_", "-") in ("SW-PHSH", "SWPHSH"):
            return cls.SW_PHSH
        raise ValueError(f"unknown architecture {name!r}")


class InfeasibleError(ValueError):
    """Not enough antenna dimensions for the requested nulling."""


class SingularProjectionError(ValueError):
    """The projected precoder or effective channel lost rank."""


@dataclass
class HybridFactors:
    rf: np.ndarray
    baseband: np.ndarray
    approx_error: float
    error_history: list = field(default_factory=list)

    @property
    def product(self) -> np.ndarray:
        return self.rf @ self.baseband


@dataclass
class SwitchSelection:
    selected_rows: np.ndarray
    n_rows: int

    @property
    def selection_matrix(self) -> np.ndarray:
        s = np.zeros((self.n_rows, len(self.selected_rows)))
        s[self.selected_rows, np.arange(len(self.selected_rows))] = 1.0
        return s


@dataclass
class BeamformerSet:
    kind: Architecture
    precoders: list
    postcoders: list
    n_rf_tx: int
    n_rf_rx: int
    n_q: int = 0
    # AN: users whose selection had to ignore the angular separation rule
    relaxed_users: list = field(default_factory=list)

    @property
    def k_users(self) -> int:
        return len(self.precoders)

    @property
    def m(self) -> int:
        return self.precoders[0].shape[1]


def _matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, ChannelRealization) else np.asarray(h)


def _normalize_power(q: np.ndarray, m: int) -> np.ndarray:
    norm = np.linalg.norm(q)
    if norm == 0:
        return q
    return q * (np.sqrt(m) / norm)


def _dominant_svd(h: np.ndarray, m: int):
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    u, s, v = u[:, :m], s[:m], vh[:m].conj().T
    # make the largest-magnitude entry of each right vector real positive
    idx = np.argmax(np.abs(v), axis=0)
    phase = np.exp(-1j * np.angle(v[idx, np.arange(m)]))
    return u * phase, s, v * phase


def cm_fd(h, m: int):
    """Channel-matched fully digital pair: the ``m`` dominant singular vectors."""
    h = _matrix(h)
    if m < 1 or m > min(h.shape):
        raise ValueError(f"m={m} exceeds min channel dimension {min(h.shape)}")
    u, _, v = _dominant_svd(h, m)
    return v, u


def _orth(a: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    if a.size == 0:
        return a
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return u[:, :0]
    rank = int(np.sum(s > rtol * s[0]))
    return u[:, :rank]


def pzf_fd(channels: Sequence, k: int, m: int):
    """Partial zero-forcing fully digital pair for user ``k``.

    The CM-FD precoder is projected onto the orthogonal complement of the
    other users' ``m`` dominant right singular vectors and re-orthonormalized;
    the postcoder is ``((H_k Q_k)^+)^H`` so that ``D^H H_k Q = I``.
    """
    hs = [_matrix(h) for h in channels]
    h_k = hs[k]
    n_t = h_k.shape[1]
    k_users = len(hs)
    if n_t - m * (k_users - 1) < m:
        raise InfeasibleError(f"n_t={n_t} leaves fewer than m={m} dimensions after nulling {m * (k_users - 1)}")
    q_cm, _ = cm_fd(h_k, m)
    others = [cm_fd(hs[l], m)[0] for l in range(k_users) if l != k]
    q = q_cm
    if others:
        basis = _orth(np.hstack(others))
        q = q_cm - basis @ (basis.conj().T @ q_cm)
    qq, r = np.linalg.qr(q)
    diag = np.diag(r)
    if np.any(np.abs(diag) < 1e-10):
        raise SingularProjectionError("projected precoder is rank deficient")
    qq = qq * (diag / np.abs(diag))
    eff = h_k @ qq
    sv = np.linalg.svd(eff, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise SingularProjectionError("effective channel H_k Q_k is rank deficient")
    d = np.linalg.pinv(eff).conj().T
    return qq, d


def _init_rf(target: np.ndarray, n_rf: int) -> np.ndarray:
    p, m = target.shape
    rf = np.empty((p, n_rf), dtype=complex)
    n_tgt = min(m, n_rf)
    rf[:, :n_tgt] = np.exp(1j * np.angle(target[:, :n_tgt]))
    if n_rf > n_tgt:
        # DFT columns keep the extra RF chains linearly independent
        dft = np.exp(-2j * np.pi * np.outer(np.arange(p), np.arange(p)) / p)
        cols = [(n_tgt + j) % p for j in range(n_rf - n_tgt)]
        rf[:, n_tgt:] = dft[:, cols]
    return rf


def _ls_baseband(rf: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(rf, target, rcond=None)[0]


def hybrid_factorize(target, n_rf: int, tol: float = 1e-6, max_iters: int = 100, atol: float = 1e-14) -> HybridFactors:
    """Approximate ``target`` by ``rf @ baseband`` with unit-modulus ``rf``.

    Block coordinate descent: the baseband block is the least-squares
    solution for the current RF matrix, and each RF column is then replaced
    by its exact minimizer with the other columns held fixed. Rows of the
    RF matrix decouple, so the column update is the entrywise phase of the
    residual correlated with the matching baseband row. Every block step is
    an exact minimization, so the error sequence never increases.

    Parameters
    ----------
    target : (P, M) complex array
    n_rf : int
        Number of RF chains, at least ``M``.
    tol : float
        Stop once the relative error improvement of a sweep falls below it.
    """
    target = np.asarray(target, dtype=complex)
    if target.ndim == 1:
        target = target[:, None]
    p, m = target.shape
    if n_rf < m:
        raise ValueError(f"n_rf={n_rf} must be >= number of streams {m}")
    tnorm = np.linalg.norm(target)
    if tnorm == 0:
        return HybridFactors(np.ones((p, n_rf), dtype=complex), np.zeros((n_rf, m), dtype=complex), 0.0, [0.0])

    rf = _init_rf(target, n_rf)
    bb = _ls_baseband(rf, target)
    err = float(np.linalg.norm(target - rf @ bb))
    history = [err]
    floor = atol * tnorm
    for _ in range(max_iters):
        if err <= floor:
            break
        resid = target - rf @ bb
        for j in range(n_rf):
            b_j = bb[j]
            # residual with column j's contribution added back
            c = resid + rf[:, j, None] * b_j
            z = c @ b_j.conj()
            nz = np.abs(z) > 0
            new_col = rf[:, j].copy()
            new_col[nz] = z[nz] / np.abs(z[nz])
            resid = c - new_col[:, None] * b_j
            rf[:, j] = new_col
        bb = _ls_baseband(rf, target)
        new_err = float(np.linalg.norm(target - rf @ bb))
        improvement = err - new_err
        err = new_err
        history.append(err)
        if improvement <= tol * history[-2]:
            break
    return HybridFactors(rf, bb, float(np.linalg.norm(target - rf @ bb)), history)


def _hybrid_pair(q_target, d_target, n_rf_tx: int, n_rf_rx: int, m: int, **opts):
    pre = hybrid_factorize(q_target, n_rf_tx, **opts)
    post = hybrid_factorize(d_target, n_rf_rx, **opts)
    return pre, post


def cm_hy(channels: Sequence, k: int, m: int, n_rf_tx: int, n_rf_rx: int, target: str = "cm", **opts):
    """Hybrid approximation of the CM-FD pair (or of PZF-FD with ``target='pzf'``)."""
    if target == "pzf":
        q, d = pzf_fd(channels, k, m)
    else:
        q, d = cm_fd(channels[k], m)
    return _hybrid_pair(q, d, n_rf_tx, n_rf_rx, m, **opts)


def pzf_hy(channels: Sequence, k: int, m: int, n_rf_tx: int, n_rf_rx: int, **opts):
    q, d = pzf_fd(channels, k, m)
    return _hybrid_pair(q, d, n_rf_tx, n_rf_rx, m, **opts)


def an_beamsteer(h: ChannelRealization, m: int, min_sep_deg: float = 5.0):
    """Beam-steering pair on the strongest well-separated paths.

    Returns ``(precoder, postcoder, selected, relaxed)`` where ``selected``
    lists path indices in selection order and ``relaxed`` tells whether the
    separation rule had to be dropped to fill ``m`` columns.
    """
    if not h.paths:
        raise ValueError("channel has no paths")
    sep = np.deg2rad(min_sep_deg)
    aod, aoa = h.aods, h.aoas
    chosen: list[int] = []
    for i in range(len(h.paths)):
        if len(chosen) == m:
            break
        if all(abs(aod[i] - aod[j]) >= sep and abs(aoa[i] - aoa[j]) >= sep for j in chosen):
            chosen.append(i)
    relaxed = len(chosen) < m
    if relaxed:
        for i in range(len(h.paths)):
            if len(chosen) == m:
                break
            if i not in chosen:
                chosen.append(i)
        # fewer paths than streams: reuse the strongest ones cyclically
        base = list(chosen)
        while len(chosen) < m:
            chosen.append(base[len(chosen) % len(base)])
    q = steering_matrix(aod[chosen], h.n_t)
    d = steering_matrix(aoa[chosen], h.n_r)
    return q, d, chosen, relaxed


def sw_phsh_quantize(target, n_q: int = 8) -> np.ndarray:
    """Replace every entry by the unit phasor on the nearest of ``n_q`` phases.

    The grid is ``{2 pi q / n_q}``; ties go to the smaller grid index and an
    exactly zero entry maps to phase 0.
    """
    if n_q < 2:
        raise ValueError("n_q must be >= 2")
    target = np.asarray(target, dtype=complex)
    step = 2.0 * np.pi / n_q
    phase = np.where(target == 0, 0.0, np.angle(target))
    pos = np.mod(phase, 2.0 * np.pi) / step
    idx = np.ceil(pos - 0.5).astype(int)
    # a tie between the last grid point and the wrap-around goes to index 0
    idx = np.where(pos - 0.5 == n_q - 1, 0, idx)
    idx = np.mod(idx, n_q)
    return np.exp(1j * step * idx)


def sw_mfn_select(target, n_rf: int):
    """Minimum-Frobenius-norm antenna selection: keep the ``n_rf`` strongest rows.

    Returns ``(SwitchSelection, baseband, composed)``.
    """
    target = np.asarray(target)
    p = target.shape[0]
    if n_rf > p or n_rf < 1:
        raise ValueError(f"n_rf={n_rf} must be in [1, {p}]")
    norms = np.linalg.norm(target, axis=1)
    order = np.argsort(-norms, kind="stable")
    rows = np.sort(order[:n_rf])
    baseband = target[rows].copy()
    composed = np.zeros_like(target)
    composed[rows] = baseband
    return SwitchSelection(rows, p), baseband, composed


def _fd_target(channels, k, m, which):
    if which == "pzf":
        return pzf_fd(channels, k, m)
    return cm_fd(channels[k], m)


def build_beamformers(
    kind,
    channels: Sequence[ChannelRealization],
    m: int,
    n_rf_tx: int,
    n_rf_rx: int,
    n_q: int = 8,
    cm_hy_target: str = "cm",
    sw_target: str = "cm",
    min_sep_deg: float = 5.0,
    hy_tol: float = 1e-6,
    hy_max_iters: int = 100,
) -> BeamformerSet:
    """Build the full downlink :class:`BeamformerSet` for ``kind``."""
    kind = Architecture.parse(kind)
    pre, post, relaxed = [], [], []
    opts = dict(tol=hy_tol, max_iters=hy_max_iters)
    for k in range(len(channels)):
        if kind is Architecture.CM_FD:
            q, d = cm_fd(channels[k], m)
        elif kind is Architecture.PZF_FD:
            q, d = pzf_fd(channels, k, m)
        elif kind is Architecture.CM_HY:
            fq, fd = cm_hy(channels, k, m, n_rf_tx, n_rf_rx, target=cm_hy_target, **opts)
            q, d = fq.product, fd.product
        elif kind is Architecture.PZF_HY:
            fq, fd = pzf_hy(channels, k, m, n_rf_tx, n_rf_rx, **opts)
            q, d = fq.product, fd.product
        elif kind is Architecture.AN:
            q, d, _, was_relaxed = an_beamsteer(channels[k], m, min_sep_deg)
            if was_relaxed:
                relaxed.append(k)
        elif kind is Architecture.SW_PHSH:
            tq, td = _fd_target(channels, k, m, sw_target)
            q, d = sw_phsh_quantize(tq, n_q), sw_phsh_quantize(td, n_q)
        elif kind is Architecture.SW:
            tq, td = _fd_target(channels, k, m, sw_target)
            q = sw_mfn_select(tq, n_rf_tx)[2]
            d = sw_mfn_select(td, n_rf_rx)[2]
        else:  # pragma: no cover
            raise ValueError(kind)
        pre.append(_normalize_power(q, m))
        post.append(d)
    return BeamformerSet(
        kind,
        pre,
        post,
        n_rf_tx,
        n_rf_rx,
        n_q if kind is Architecture.SW_PHSH else 0,
        relaxed,
    )


def build_uplink_beamformers(
    kind,
    channels: Sequence[ChannelRealization],
    m: int,
    n_rf_tx: int,
    n_rf_rx: int,
    **kwargs,
) -> BeamformerSet:
    """Uplink beamformers via link duality.

    ``channels[k]`` maps user ``k`` (``n_t`` antennas, ``n_rf_tx`` chains) to
    the base station (``n_r`` antennas, ``n_rf_rx`` chains). The design runs
    on the conjugate-transposed channels, where the base station acts as
    transmitter, and the roles are then swapped back. This makes the PZF
    postcoder at the base station orthogonal to the other users' dominant
    left singular vectors.
    """
    dual = [h.dual() for h in channels]
    bf = build_beamformers(kind, dual, m, n_rf_rx, n_rf_tx, **kwargs)
    return BeamformerSet(
        bf.kind,
        [_normalize_power(d, m) for d in bf.postcoders],
        [q for q in bf.precoders],
        n_rf_tx,
        n_rf_rx,
        bf.n_q,
        bf.relaxed_users,
    )

