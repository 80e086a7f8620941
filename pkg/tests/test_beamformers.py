import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmbeam.beamformers import (
    Architecture,
    InfeasibleError,
    build_beamformers,
    build_uplink_beamformers,
    cm_fd,
    hybrid_factorize,
    pzf_fd,
    an_beamsteer,
    sw_mfn_select,
    sw_phsh_quantize,
)
from mmbeam.channel import ChannelParams, ChannelRealization, PathComponent, reconstruct, ula_response
from mmbeam.metrics import NoiseModel, ase_downlink

from conftest import crandn, draw_users

seeds = st.integers(0, 2**32 - 1)


def exhaustive_mfn(target, n_rf):
    """Subset minimizing ||target - S S^T target||_F, by enumeration."""
    best, best_rows = np.inf, None
    for rows in itertools.combinations(range(target.shape[0]), n_rf):
        kept = np.zeros_like(target)
        kept[list(rows)] = target[list(rows)]
        err = np.linalg.norm(target - kept)
        if err < best - 1e-12:
            best, best_rows = err, rows
    return best, best_rows


def test_architecture_parse():
    assert Architecture.parse("pzf-fd") is Architecture.PZF_FD
    assert Architecture.parse(Architecture.SW) is Architecture.SW
    with pytest.raises(ValueError):
        Architecture.parse("XX")


def test_cm_fd_rank_one_gain():
    rng = np.random.default_rng(0)
    u = crandn(rng, 5)
    v = crandn(rng, 7)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    h = 2.0 * np.outer(u, v.conj())
    q, d = cm_fd(h, 1)
    g = (d.conj().T @ h @ q)[0, 0]
    assert abs(g - 2.0) < 1e-12


@settings(max_examples=40)
@given(seeds, st.integers(1, 4))
def test_cm_fd_orthonormal(seed, m):
    h = crandn(np.random.default_rng(seed), 6, 9)
    q, d = cm_fd(h, m)
    np.testing.assert_allclose(q.conj().T @ q, np.eye(m), atol=1e-12)
    np.testing.assert_allclose(d.conj().T @ d, np.eye(m), atol=1e-12)


def test_pzf_equals_cm_for_orthogonal_users():
    rng = np.random.default_rng(1)
    basis = np.linalg.qr(crandn(rng, 8, 8))[0]
    h1 = crandn(rng, 4, 2) @ basis[:, :2].conj().T
    h2 = crandn(rng, 4, 2) @ basis[:, 2:4].conj().T
    q_pzf, _ = pzf_fd([h1, h2], 0, 2)
    q_cm, _ = cm_fd(h1, 2)
    # same subspace and, with the shared phase convention, the same columns
    np.testing.assert_allclose(q_pzf, q_cm, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_pzf_nulls_other_users(seed):
    hs = [crandn(np.random.default_rng(seed), 8, 32)] + [crandn(np.random.default_rng(seed + i + 1), 8, 32) for i in range(3)]
    m = 2
    for k in range(4):
        q, d = pzf_fd(hs, k, m)
        for l in range(4):
            if l != k:
                v_l = np.linalg.svd(hs[l])[2][:m].conj().T
                assert np.linalg.norm(v_l.conj().T @ q) < 1e-10
        np.testing.assert_allclose(d.conj().T @ hs[k] @ q, np.eye(m), atol=1e-10)


def test_pzf_infeasible_dimension():
    hs = [crandn(np.random.default_rng(i), 4, 6) for i in range(4)]
    with pytest.raises(InfeasibleError):
        pzf_fd(hs, 0, 2)


def test_hybrid_exact_for_steering_column():
    target = ula_response(0.4, 16)[:, None] * (0.7 - 0.2j)
    f = hybrid_factorize(target, 1)
    assert f.approx_error < 1e-10
    assert np.max(np.abs(np.abs(f.rf) - 1.0)) <= 2 * np.finfo(float).eps


def test_hybrid_square_rf_matches_dft_oracle():
    rng = np.random.default_rng(2)
    target = crandn(rng, 8, 2)
    # oracle: any target is representable with an invertible unit-modulus rf
    dft = np.exp(-2j * np.pi * np.outer(np.arange(8), np.arange(8)) / 8)
    assert np.linalg.norm(dft @ np.linalg.solve(dft, target) - target) < 1e-12
    assert hybrid_factorize(target, 8).approx_error < 1e-6


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(4, 24), st.integers(1, 3), st.integers(0, 3))
def test_hybrid_error_monotone_and_unit_modulus(seed, p, m, extra):
    target = crandn(np.random.default_rng(seed), p, m)
    f = hybrid_factorize(target, min(m + extra, p))
    hist = f.error_history
    assert all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(hist, hist[1:]))
    assert np.max(np.abs(np.abs(f.rf) - 1.0)) <= 2 * np.finfo(float).eps
    assert f.approx_error == pytest.approx(np.linalg.norm(target - f.product), rel=1e-12, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0, 2 * np.pi))
def test_hybrid_error_invariant_to_global_phase(seed, theta):
    target = crandn(np.random.default_rng(seed), 12, 2)
    a = hybrid_factorize(target, 3).approx_error
    b = hybrid_factorize(target * np.exp(1j * theta), 3).approx_error
    assert abs(a - b) < 1e-12 * max(1.0, np.linalg.norm(target))


def test_hybrid_rejects_too_few_chains():
    with pytest.raises(ValueError):
        hybrid_factorize(np.ones((4, 2)), 1)


def _manual_channel(aods_deg, aoas_deg, n_r=8, n_t=16):
    paths = [
        PathComponent(complex(3.0 - i), float(np.deg2rad(t)), float(np.deg2rad(r)), 1.0, 0)
        for i, (t, r) in enumerate(zip(aods_deg, aoas_deg))
    ]
    gamma = float(np.sqrt(n_r * n_t / len(paths)))
    return ChannelRealization(reconstruct(paths, gamma, n_r, n_t), paths, gamma, 1, len(paths), 10.0)


def test_an_skips_paths_closer_than_separation():
    h = _manual_channel([10, 12, 40], [-30, 0, 30])
    q, d, chosen, relaxed = an_beamsteer(h, 2)
    assert chosen == [0, 2] and not relaxed
    np.testing.assert_allclose(q[:, 1], ula_response(np.deg2rad(40), 16))
    np.testing.assert_allclose(d[:, 0], ula_response(np.deg2rad(-30), 8))


def test_an_single_path_snr():
    h = _manual_channel([20], [-10])
    q, d, _, _ = an_beamsteer(h, 1)
    g = (d.conj().T @ h.matrix @ q)[0, 0]
    # |g|^2 = n_t n_r |alpha|^2 L / N with N = 1
    assert abs(g) ** 2 == pytest.approx(16 * 8 * 9.0, rel=1e-12)


def test_an_relaxes_when_paths_crowd():
    h = _manual_channel([10, 11, 12], [0, 1, 2])
    _, _, chosen, relaxed = an_beamsteer(h, 2)
    assert relaxed and len(set(chosen)) == 2


@settings(max_examples=20, deadline=None)
@given(seeds, st.floats(1e-3, 1e3))
def test_an_invariant_to_channel_scaling(seed, scale):
    h = draw_users(seed, 1, 8, 16)[0]
    scaled = ChannelRealization(
        h.matrix * scale,
        [PathComponent(p.gain * scale, p.aod_rad, p.aoa_rad, p.path_loss_linear, p.cluster_index, p.is_los) for p in h.paths],
        h.gamma, h.n_cl, h.n_ray, h.distance_m, h.los,
    )
    a, b = an_beamsteer(h, 3), an_beamsteer(scaled, 3)
    assert a[2] == b[2]
    np.testing.assert_array_equal(a[0], b[0])


def test_phsh_examples():
    assert np.angle(sw_phsh_quantize(np.exp(1j * np.pi / 4))) == pytest.approx(np.pi / 4)
    assert np.angle(sw_phsh_quantize(np.exp(1j * np.deg2rad(25.7)))) == pytest.approx(np.pi / 4)
    assert sw_phsh_quantize(0.0) == 1.0


@given(seeds, st.sampled_from([2, 4, 8, 16]))
def test_phsh_unit_modulus_and_nearest(seed, n_q):
    x = crandn(np.random.default_rng(seed), 6, 3)
    y = sw_phsh_quantize(x, n_q)
    assert np.max(np.abs(np.abs(y) - 1.0)) <= 2 * np.finfo(float).eps
    dist = np.abs(np.angle(y * np.conj(x)))
    assert np.all(dist <= np.pi / n_q + 1e-12)


def test_mfn_top_rows():
    target = np.array([[3.0], [1.0], [2.0]])
    sel, _, composed = sw_mfn_select(target, 2)
    assert list(sel.selected_rows) == [0, 2]
    assert int(np.sum(np.all(composed == 0, axis=1))) == 1
    np.testing.assert_array_equal(sel.selection_matrix @ sel.selection_matrix.T @ target, composed)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 8), st.integers(1, 4), st.integers(1, 3))
def test_mfn_matches_exhaustive_oracle(seed, p, n_rf, m):
    n_rf = min(n_rf, p)
    target = crandn(np.random.default_rng(seed), p, m)
    _, _, composed = sw_mfn_select(target, n_rf)
    best, _ = exhaustive_mfn(target, n_rf)
    assert abs(np.linalg.norm(target - composed) - best) < 1e-12


@pytest.mark.parametrize("kind", [a.value for a in Architecture])
def test_build_normalizes_precoder_power(kind):
    chans = draw_users(7, 3, 8, 24)
    bf = build_beamformers(kind, chans, 2, 6, 2)
    assert bf.k_users == 3 and bf.m == 2
    for q in bf.precoders:
        assert np.linalg.norm(q) ** 2 == pytest.approx(2.0, rel=1e-12)
    if kind == "SW+PHSH":
        assert bf.n_q == 8


@pytest.mark.parametrize("kind", [a.value for a in Architecture])
def test_uplink_build_shapes(kind):
    chans = draw_users(8, 3, 24, 8)  # 8-antenna terminals, 24-antenna BS
    bf = build_uplink_beamformers(kind, chans, 2, 2, 6)
    for q, d in zip(bf.precoders, bf.postcoders):
        assert q.shape == (8, 2) and d.shape == (24, 2)
        assert np.linalg.norm(q) ** 2 == pytest.approx(2.0, rel=1e-12)


def test_uplink_pzf_nulls_at_base_station():
    chans = draw_users(9, 3, 24, 8)
    bf = build_uplink_beamformers("PZF-FD", chans, 2, 2, 6)
    for k in range(3):
        for l in range(3):
            if l != k:
                u_l = np.linalg.svd(chans[l].matrix)[0][:, :2]
                assert np.linalg.norm(bf.postcoders[k].conj().T @ u_l) < 1e-10


def test_hybrid_does_not_beat_fully_digital():
    noise = NoiseModel()
    gaps = []
    for t in range(200):
        chans = draw_users(1000 + t, 2, 8, 16)
        fd = ase_downlink(chans, build_beamformers("CM-FD", chans, 2, 4, 2), 1.0, noise).total
        hy = ase_downlink(chans, build_beamformers("CM-HY", chans, 2, 4, 2), 1.0, noise).total
        gaps.append((hy - fd) / fd)
    assert np.mean(gaps) <= 0.005
