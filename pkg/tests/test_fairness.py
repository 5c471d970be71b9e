import numpy as np
import pytest

from thznoma.errors import DomainError
from thznoma.fairness import (
    SCHEMES,
    FairnessSetup,
    bootstrap_mean_diff_lower,
    distance_based_plan,
    evaluate_drop,
    fairness_trial,
    group_audit_rows,
    run_fairness,
    sdg_groups,
)
from thznoma.geometry import CellSpec, UserDrop, drop_users

SNR = np.array([40.0, 80.0, 120.0])


def test_drop_fairness_in_range_and_exhaustive_best():
    setup = FairnessSetup()
    for t in range(6):
        res = fairness_trial(setup, 20, SNR, 1, t)
        assert res.fairness.shape == (len(SCHEMES), SNR.size)
        assert np.all((res.fairness >= 0) & (res.fairness <= 1))
        k = {s: i for i, s in enumerate(SCHEMES)}
        assert np.all(res.fairness[k["exhaustive"]] >= res.fairness[k["distance"]] - 1e-12)
        assert np.all(np.diff(res.sum_rate_bps[k["oma"]]) > 0)


def test_crowded_beam_falls_back():
    setup = FairnessSetup(max_exhaustive_users=3)
    res = fairness_trial(setup, 30, SNR, 2, 0)
    assert res.fallback_beams > 0
    k = {s: i for i, s in enumerate(SCHEMES)}
    assert np.all(res.fairness[k["exhaustive"]] >= res.fairness[k["distance"]] - 1e-12)


def test_distance_plan_pairs_weak_with_strong():
    setup = FairnessSetup()
    d = np.array([1.0, 8.0, 2.0, 9.0])
    g = 1 / d**2
    groups, fr = distance_based_plan(setup, g, d, np.ones(4, bool))
    assert sorted(groups) == [(1, 2), (3, 0)]
    assert all(0 < f < 0.5 for f in fr)
    assert sorted(sdg_groups(g, d, np.ones(4, bool))) == [(2, 0), (3, 1)]


def test_single_user_beam_counts_as_fair():
    setup = FairnessSetup()
    drop = UserDrop([0], [4.0], [10.0], [True])
    res = evaluate_drop(drop, setup, SNR)
    assert np.allclose(res.fairness, 1.0)


def test_bootstrap_lower_bound():
    rng = np.random.default_rng(0)
    a = rng.normal(1.0, 0.1, 400)
    b = a - 0.2 + rng.normal(0, 0.01, 400)
    lo = bootstrap_mean_diff_lower(a, b, np.random.default_rng(1), paired=True)
    assert 0.18 < lo < 0.2
    lo_u = bootstrap_mean_diff_lower(a, b, np.random.default_rng(1), paired=False)
    assert lo_u < lo
    with pytest.raises(DomainError):
        bootstrap_mean_diff_lower(a, b[:10], rng, paired=True)


def test_run_fairness_shapes():
    runs = run_fairness(FairnessSetup(), [10], SNR, 3, 4)
    r = runs[10]
    assert r.fairness.shape == (3, 3, 3)
    assert r.mean_fairness().shape == (3, 3)
    with pytest.raises(DomainError):
        run_fairness(FairnessSetup(), [10], SNR, 0, 4)


def test_group_audit_rows_cover_users():
    setup = FairnessSetup()
    drop = drop_users(CellSpec(), 15, rng=np.random.default_rng(3))
    rows = group_audit_rows(drop, setup, 80.0)
    for scheme in ("distance", "oma"):
        ids = sorted(int(u) for r in rows if r[0] == scheme for u in r[2].split("+"))
        assert ids == list(range(15))


def test_setup_validation():
    with pytest.raises(DomainError):
        FairnessSetup(power_rule="equal")
    with pytest.raises(DomainError):
        FairnessSetup(strong_radius_m=20.0)
