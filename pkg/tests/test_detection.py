import itertools

import numpy as np
import pytest

from thznoma.detection import (
    check_full_column_rank,
    detect_lord,
    detect_ml,
    detect_nc,
    detect_zf,
    get_detector,
    lord_candidates,
)
from thznoma.errors import DomainError, SingularChannelError
from thznoma.modulation import (
    bits_to_indices,
    demap,
    indices_to_bits,
    modulate,
    qam,
    slice_indices,
)


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.mark.parametrize("order", [4, 16, 64])
def test_qam_unit_power_and_gray(order):
    c = qam(order)
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    assert len({tuple(l) for l in c.labels}) == order
    dmin = min(abs(a - b) for a, b in itertools.combinations(c.points, 2))
    # nearest neighbours differ in exactly one bit
    for i, j in itertools.combinations(range(order), 2):
        if abs(abs(c.points[i] - c.points[j]) - dmin) < 1e-9:
            assert np.sum(c.labels[i] != c.labels[j]) == 1


def test_bits_round_trip():
    rng = np.random.default_rng(0)
    for order in (4, 16, 64):
        c = qam(order)
        bits = rng.integers(0, 2, (10, 4 * c.bits_per_symbol), dtype=np.uint8)
        idx = bits_to_indices(bits, c)
        assert np.array_equal(indices_to_bits(idx, c), bits)
        assert np.array_equal(demap(modulate(bits, c), c), bits)
        assert np.array_equal(demap(2.0 * modulate(bits, c), c, amplitude=2.0), bits)
    with pytest.raises(DomainError):
        qam(8)
    with pytest.raises(DomainError):
        bits_to_indices(np.zeros(3, np.uint8), qam(4))


def _brute_ml(H, y, points):
    best, arg = np.inf, None
    for cand in itertools.product(range(len(points)), repeat=H.shape[1]):
        m = np.linalg.norm(y - H @ points[list(cand)]) ** 2
        if m < best:
            best, arg = m, cand
    return np.array(arg)


def test_ml_matches_brute_force():
    rng = np.random.default_rng(1)
    pts = qam(4).points
    for _ in range(50):
        H = _cn(rng, (3, 2))
        y = H @ pts[rng.integers(0, 4, 2)] + 0.5 * _cn(rng, 3)
        assert np.array_equal(detect_ml(H, y, pts), _brute_ml(H, y, pts))


def test_ml_search_space_guard():
    pts = qam(64).points
    H = np.eye(4)
    with pytest.raises(DomainError):
        detect_ml(H, np.zeros(4), pts)


def test_zf_exact_without_noise():
    rng = np.random.default_rng(2)
    pts = qam(16).points
    H = _cn(rng, (50, 4, 4))
    s = rng.integers(0, 16, (50, 4))
    y = np.einsum("bij,bj->bi", H, pts[s])
    for det in (detect_zf, detect_nc, detect_lord):
        assert np.array_equal(det(H, y, pts), s)


def test_nc_against_explicit_vblast():
    rng = np.random.default_rng(3)
    pts = qam(4).points

    def vblast(H, y):
        H = H.copy()
        active = list(range(H.shape[1]))
        out = np.zeros(H.shape[1], int)
        r = y.copy()
        while active:
            G = np.linalg.pinv(H[:, active])
            k = int(np.argmin(np.sum(np.abs(G) ** 2, axis=1)))
            i = active[k]
            s = int(np.argmin(np.abs(G[k] @ r - pts)))
            out[i] = s
            r = r - H[:, i] * pts[s]
            active.pop(k)
        return out

    for _ in range(200):
        H = _cn(rng, (4, 4))
        y = H @ pts[rng.integers(0, 4, 4)] + 0.4 * _cn(rng, 4)
        assert np.array_equal(detect_nc(H, y, pts), vblast(H, y))


def test_lord_equals_ml_two_streams():
    rng = np.random.default_rng(4)
    pts = qam(16).points
    H = _cn(rng, (2000, 2, 2))
    y = np.einsum("bij,bj->bi", H, pts[rng.integers(0, 16, (2000, 2))]) + 0.3 * _cn(rng, (2000, 2))
    assert np.array_equal(detect_lord(H, y, pts), detect_ml(H, y, pts))


def test_lord_candidates_contain_every_root_symbol():
    rng = np.random.default_rng(5)
    pts = qam(4).points
    H = _cn(rng, (3, 3))
    y = _cn(rng, 3)
    cands = lord_candidates(H, y, pts)
    assert cands.shape == (12, 3)
    for root in range(3):
        block = cands[root * 4:(root + 1) * 4]
        assert sorted(block[:, root]) == [0, 1, 2, 3]


def test_tie_break_is_lexicographic():
    pts = np.array([-1.0, 1.0])
    H = np.array([[1.0, 1.0]])
    # y = 0 is equidistant from (-1, 1) and (1, -1)
    with pytest.raises(SingularChannelError):
        detect_lord(H, np.zeros(1), pts)
    assert list(detect_ml(H, np.zeros(1), pts)) == [0, 1]


def test_singular_channel_rejected():
    pts = qam(4).points
    H = np.array([[1.0, 2.0], [2.0, 4.0]])
    for det in (detect_zf, detect_nc, detect_lord):
        with pytest.raises(SingularChannelError):
            det(H, np.zeros(2), pts)
    with pytest.raises(SingularChannelError):
        check_full_column_rank(np.ones((2, 3)))


def test_registry():
    assert get_detector("LORD") is detect_lord
    with pytest.raises(DomainError):
        get_detector("sphere")


def test_slicer_nearest_point():
    pts = qam(4).points
    x = np.array([0.6 + 0.8j, -2 - 2j])
    idx = slice_indices(x, pts)
    for xi, i in zip(x, idx):
        assert abs(xi - pts[i]) == pytest.approx(np.min(np.abs(xi - pts)), rel=1e-12)
