import math

import numpy as np
import pytest

from thznoma.errors import DomainError
from thznoma.geometry import (
    CellSpec,
    UserDrop,
    assign_users_to_beams,
    beam_index,
    drop_users,
    partition_beams,
    prob_k_users_in_beam,
)
from thznoma.rng import stream


def test_drop_inside_annulus_and_area_uniform():
    cell = CellSpec(10.0, 0.5)
    d = drop_users(cell, 200_000, rng=np.random.default_rng(1))
    assert d.r_m.min() >= 0.5 and d.r_m.max() <= 10.0
    assert np.all((d.phi_deg >= 0) & (d.phi_deg < 360))
    # uniform area: P(r <= x) = (x^2 - r0^2) / (R^2 - r0^2)
    x = 5.0
    expected = (x**2 - 0.25) / (100 - 0.25)
    assert abs(np.mean(d.r_m <= x) - expected) < 4 * math.sqrt(expected * (1 - expected) / 200_000)


def test_drop_polar_and_los():
    cell = CellSpec(10.0, 0.0)
    d = drop_users(cell, 100_000, "uniform_polar", 0.3, np.random.default_rng(2))
    assert abs(np.mean(d.r_m <= 5.0) - 0.5) < 0.01
    assert abs(d.is_los.mean() - 0.3) < 0.01
    with pytest.raises(DomainError):
        drop_users(cell, 3, "ring", rng=np.random.default_rng(0))
    with pytest.raises(DomainError):
        drop_users(cell, 0)


def test_drop_is_reproducible_from_stream():
    cell = CellSpec()
    a = drop_users(cell, 20, rng=stream(7, "fairness", 20, 3))
    b = drop_users(cell, 20, rng=stream(7, "fairness", 20, 3))
    c = drop_users(cell, 20, rng=stream(7, "fairness", 20, 4))
    assert np.array_equal(a.r_m, b.r_m)
    assert not np.array_equal(a.r_m, c.r_m)


def test_drop_csv_round_trip():
    d = drop_users(CellSpec(), 7, los_probability=0.5, rng=np.random.default_rng(4))
    text = d.to_csv()
    assert text.splitlines()[0] == "id,r,phi_deg,is_los"
    back = UserDrop.from_csv(text)
    assert np.array_equal(back.ids, d.ids)
    assert np.array_equal(back.r_m, d.r_m)
    assert np.array_equal(back.phi_deg, d.phi_deg)
    assert np.array_equal(back.is_los, d.is_los)


def test_user_drop_validation():
    with pytest.raises(DomainError):
        UserDrop([0, 0], [1, 2], [0, 0], [True, True])
    with pytest.raises(DomainError):
        UserDrop([0, 1], [1], [0, 0], [True, True])


@pytest.mark.parametrize("bw,n", [(30, 12), (27, 14), (360, 1), (90, 4), (7, 52)])
def test_beam_count(bw, n):
    assert partition_beams(CellSpec(), bw).num_beams == n


def test_partition_covers_circle_once():
    p = partition_beams(CellSpec(), 27)
    widths = [p.sector(i)[1] - p.sector(i)[0] for i in range(p.num_beams)]
    assert sum(widths) == pytest.approx(360.0)
    assert p.beams[0].gain_dbi == pytest.approx(10 * math.log10(41253 / 27**2))


def test_beam_index_boundaries():
    idx = beam_index([0.0, 30.0, 30.0001, 359.9, 360.0, -10.0], 30, 12)
    assert list(idx) == [0, 0, 1, 11, 0, 11]


def test_every_user_in_exactly_one_beam():
    d = drop_users(CellSpec(), 500, rng=np.random.default_rng(9))
    part = assign_users_to_beams(d, partition_beams(CellSpec(), 30))
    assert sorted(part.assignment) == list(range(500))
    counts = sum(len(part.members(b)) for b in range(part.num_beams))
    assert counts == 500


@pytest.mark.parametrize("n,bw,k", [(2, 27, 2), (5, 30, 1), (20, 30, 0), (3, 90, 2)])
def test_prob_k_users_matches_binomial(n, bw, k):
    trials = 400_000
    p = bw / 360.0
    exact = math.comb(n, k) * p**k * (1 - p) ** (n - k)
    est = prob_k_users_in_beam(n, bw, k, trials, np.random.default_rng(11))
    se = math.sqrt(exact * (1 - exact) / trials)
    assert abs(est - exact) <= 3 * se


def test_two_users_in_27_degree_beam():
    exact = (27 / 360) ** 2
    assert exact == pytest.approx(0.0056, abs=5e-5)
