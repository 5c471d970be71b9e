import math

import numpy as np
import pytest

from thznoma.errors import DomainError
from thznoma.link import (
    CSI_MODELS,
    LinkSetup,
    SuperposedFrame,
    ber_trial,
    build_csi_estimate,
    draw_link_geometry,
    merge_counts,
    noma_sic_receive,
    normalized_split,
    run_ber_experiment,
    true_channel,
    whiten,
    wilson_halfwidth,
)
from thznoma.modulation import qam
from thznoma.rng import stream


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_superposed_frame_power():
    c = qam(4)
    f = SuperposedFrame(c.points[[0, 1]], c.points[[2, 3]], (0.8, 0.2))
    assert np.allclose(f.tx_vector, np.sqrt(0.8) * c.points[[0, 1]] + np.sqrt(0.2) * c.points[[2, 3]])
    with pytest.raises(DomainError):
        SuperposedFrame(c.points[:2], c.points[:2], (0.7, 0.2))
    with pytest.raises(DomainError):
        SuperposedFrame(c.points[:2], c.points[:3])
    assert normalized_split([8, 2]) == pytest.approx((0.8, 0.2))


def test_whitening_gives_identity_covariance():
    rng = np.random.default_rng(0)
    H = _cn(rng, (4, 4))
    ps, nv = 0.2, 0.05
    Hw, _ = whiten(H, np.zeros(4), ps, nv)
    C = ps * H @ H.conj().T + nv * np.eye(4)
    L = np.linalg.cholesky(C)
    # the whitening matrix applied to the covariance gives the identity
    Linv = np.linalg.inv(L)
    assert np.allclose(Linv @ C @ Linv.conj().T, np.eye(4))
    assert np.allclose(Hw, Linv @ H)


def test_sic_noiseless_decodes_both_layers():
    rng = np.random.default_rng(1)
    c = qam(4)
    H = _cn(rng, (300, 4, 4))
    iw = rng.integers(0, 4, (300, 4))
    is_ = rng.integers(0, 4, (300, 4))
    x = SuperposedFrame(c.points[iw], c.points[is_], (0.8, 0.2)).tx_vector
    y = np.einsum("bij,bj->bi", H, x)
    for det in ("lord", "nc", "zf"):
        own, weak = noma_sic_receive(H, y, det, (0.8, 0.2), "strong", c, c, 1e-12)
        assert np.array_equal(weak, iw)
        assert np.array_equal(own, is_)
    with pytest.raises(DomainError):
        noma_sic_receive(H, y, "lord", (0.8, 0.2), "middle", c)


def test_csi_models():
    setup = LinkSetup()
    geo = draw_link_geometry(setup, np.random.default_rng(2))
    truth = true_channel(geo.tx, geo.rx_strong, geo.paths_strong, setup).matrix
    est = {m.value: build_csi_estimate(geo.tx, geo.rx_strong, geo.paths_strong, setup, m).matrix
           for m in CSI_MODELS}
    assert np.allclose(est["perfect"], truth)
    errs = {k: np.linalg.norm(v - truth) / np.linalg.norm(truth) for k, v in est.items()}
    assert errs["ignore_squint"] > 1e-3
    assert errs["ignore_swp"] > 1e-3
    assert errs["ignore_both"] > 1e-3
    # amplitudes come from the same geometry in every model
    assert np.allclose(np.abs(est["ignore_both"]).sum(), np.abs(truth).sum(), rtol=0.2)


def test_geometry_users_inside_beam():
    setup = LinkSetup()
    for seed in range(20):
        geo = draw_link_geometry(setup, np.random.default_rng(seed))
        for rx, d in ((geo.rx_strong, setup.strong_distance_m), (geo.rx_weak, setup.weak_distance_m)):
            ref = rx.reference_point
            assert np.linalg.norm(ref) == pytest.approx(d)
            assert abs(math.degrees(math.atan2(ref[1], ref[0]))) <= setup.beam_half_width_deg
        assert geo.paths_strong[0].is_los and len(geo.paths_strong) == 1 + setup.num_scatterers


def test_ber_trial_reproducible_and_counts():
    setup = LinkSetup(frames_per_drop=8)
    a = ber_trial(setup, ("lord",), ("perfect",), [10.0], 5, 0)
    b = ber_trial(setup, ("lord",), ("perfect",), [10.0], 5, 0)
    assert a == b
    assert a[("lord", "perfect", "weak", 0)][1] == 8 * 4 * 2


def test_high_snr_perfect_csi_is_nearly_error_free():
    setup = LinkSetup(frames_per_drop=64)
    stats = run_ber_experiment(setup, ["lord"], ["perfect"], [60.0], 8, 3)
    strong = [s for s in stats if s.user_role == "strong"][0]
    assert strong.ber < 1e-3


def test_merge_counts_order_free():
    parts = [{("a", 0): (1, 10)}, {("a", 0): (2, 10), ("b", 0): (0, 5)}]
    assert merge_counts(parts) == merge_counts(parts[::-1]) == {("a", 0): (3, 20), ("b", 0): (0, 5)}


def test_wilson_halfwidth():
    assert math.isnan(wilson_halfwidth(0, 0))
    hw = wilson_halfwidth(50, 1000)
    p = 0.05
    assert hw == pytest.approx(1.96 * math.sqrt(p * (1 - p) / 1000), rel=0.05)
    assert wilson_halfwidth(0, 1000) > 0


def test_stream_independence():
    a = stream(1, "ber", 0).random(4)
    b = stream(1, "ber", 1).random(4)
    assert not np.allclose(a, b)
