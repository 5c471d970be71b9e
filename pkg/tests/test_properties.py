"""Property-based checks of the core invariants."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from thznoma.channel import (
    ArrayGeometry,
    CarrierSpec,
    absorption_amplitude,
    beamwidth_from_gain,
    channel_correlation,
    fspl_db,
    gain_from_beamwidth,
    synth_channel,
)
from thznoma.detection import detect_lord, detect_ml
from thznoma.mac import (
    BeamContext,
    allocate_power_fixed_fraction,
    allocate_power_ftpa,
    cluster_exhaustive,
    fairness_factor,
    pair_rates,
)
from thznoma.modulation import qam

dist = st.floats(0.01, 1e4)
spread = st.floats(1.0, 180.0)


@given(dist, st.floats(1e9, 1e13))
def test_fspl_doubling(d, f):
    assert math.isclose(fspl_db(2 * d, f) - fspl_db(d, f), 20 * math.log10(2), abs_tol=1e-9)


@given(st.floats(0.0, 1e3), st.floats(0.0, 1.0))
def test_absorption_unit_interval(d, k):
    a = absorption_amplitude(d, k)
    assert 0 < a <= 1


@given(spread, spread)
def test_gain_round_trip(az, el):
    g = gain_from_beamwidth(az, el)
    a2, e2 = beamwidth_from_gain(g, el / az)
    assert abs(a2 - az) <= 1e-9 and abs(e2 - el) <= 1e-9


@given(st.floats(1e-3, 10.0), st.floats(0.05, 0.95), st.integers(1, 12))
def test_fixed_fraction_budget(budget, frac, n):
    p = allocate_power_fixed_fraction(budget, frac, n)
    assert math.isclose(p.sum(), budget, rel_tol=1e-12)
    assert np.all(np.diff(p) < 0)


@given(st.lists(st.floats(1e-12, 1.0), min_size=1, max_size=10), st.floats(0.0, 3.0))
def test_ftpa_weaker_gets_more(gains, alpha):
    p = allocate_power_ftpa(1.0, gains, alpha)
    assert math.isclose(p.sum(), 1.0, rel_tol=1e-9)
    g = np.asarray(gains)
    order = np.argsort(g)
    assert np.all(np.diff(p[order]) <= 1e-12)


@given(st.floats(0.01, 0.49), st.floats(1e-6, 1.0), st.floats(1.0, 1e3), st.floats(1e-6, 1.0))
def test_pair_rates_sic_order(f, gw, ratio, noise):
    # with the strong user's gain at least the weak user's, the SIC cap never binds
    r_w, r_s = pair_rates(1 - f, f, gw, gw * ratio, noise)
    assert r_w > 0 and r_s > 0
    assert math.isclose(r_w, math.log2(1 + (1 - f) * gw / (f * gw + noise)), rel_tol=1e-12)


@given(st.dictionaries(st.integers(0, 11), st.lists(st.floats(0.0, 1e9), min_size=1, max_size=6), min_size=1))
def test_fairness_factor_bounds(beams):
    per, overall = fairness_factor(beams)
    assert all(0 <= v <= 1 for v in per.values())
    assert 0 <= overall <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_exhaustive_partitions_users(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.2, 10, n)
    ctx = BeamContext((1 / d**2)[:, None] * np.ones((1, 3)), d, 1.0, 1e-3)
    r = cluster_exhaustive(ctx, [0.1, 0.3])
    members = sorted(u for g in r.groups for u in g)
    assert members == list(range(n))
    assert all(len(g) <= 2 for g in r.groups)
    assert 0 <= r.fairness <= 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 2.0))
def test_lord_matches_ml(seed, noise):
    rng = np.random.default_rng(seed)
    pts = qam(4).points
    H = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
    y = H @ pts[rng.integers(0, 4, 2)] + noise * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
    assert np.array_equal(detect_lord(H, y, pts), detect_ml(H, y, pts))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 20.0), st.floats(-60.0, 60.0))
def test_channel_entries_bounded_by_free_space(d, az):
    c = CarrierSpec(300e9)
    a = math.radians(az)
    tx = ArrayGeometry.ula(2, 4e-3)
    rx = ArrayGeometry.ula(2, 4e-3, center=(d * math.cos(a), d * math.sin(a), 0.0))
    h = synth_channel(tx, rx, c).matrix
    bound = 2.998e8 / (4 * math.pi * 300e9 * (d - 8e-3))
    assert np.all(np.abs(h) <= bound)
    assert 0 <= channel_correlation(h, h.conj()) <= 1
