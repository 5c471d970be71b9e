"""System-level fairness experiment: NOMA clustering versus FDMA per beam."""

from dataclasses import dataclass, field

import numpy as np

from .channel import channel_power_gain, window_absorption_coefficient
from .errors import DomainError
from .geometry import CellSpec, beam_index, drop_users, partition_beams
from .mac import (
    DEFAULT_POWER_GRID,
    BeamContext,
    LinkBudget,
    allocate_power_fixed_fraction,
    allocate_power_ftpa,
    cluster_distance_based,
    cluster_exhaustive,
    cluster_sdg,
    evaluate_grouping,
    fairness_factor,
    optimise_candidates,
    snap_to_grid,
    subband_centers,
)
from .rng import stream

SCHEMES = ("distance", "exhaustive", "oma")


@dataclass(frozen=True)
class FairnessSetup:
    """Physical and algorithmic knobs of one fairness sweep.

    ``total_power_w`` is split evenly over all beams (uniform beamforming);
    the noise power spectral density is fixed so that the noise over the
    whole window equals ``total_power_w / SNR``.
    """

    cell: CellSpec = field(default_factory=CellSpec)
    beamwidth_deg: float = 30.0
    carrier_hz: float = 300e9
    window_hz: float = 10e9
    subband_hz: float = 1e9
    tx_gain_dbi: float = 16.61
    rx_gain_dbi: float = 16.61
    absorption_center_per_m: float = 0.0033
    absorption_edge_per_m: float = 0.0033
    total_power_w: float = 1.0
    strong_radius_m: float = 5.0
    power_rule: str = "ftpa"
    fraction: float = 0.5
    ftpa_alpha: float = 1.0
    power_grid: tuple = DEFAULT_POWER_GRID
    los_probability: float = 1.0
    nlos_loss_db: float = 15.0
    distribution: str = "uniform_area"
    max_exhaustive_users: int = 8

    def __post_init__(self):
        if self.power_rule not in ("ftpa", "fixed"):
            raise DomainError("power_rule must be 'ftpa' or 'fixed'")
        if not 0 < self.strong_radius_m < self.cell.radius_m:
            raise DomainError("strong radius must lie inside the cell")
        if self.subband_hz > self.window_hz:
            raise DomainError("sub-band wider than the window")

    @property
    def num_subbands(self):
        return int(np.floor(self.window_hz / self.subband_hz + 1e-9))

    def subband_gains(self, distance_m, is_los):
        """Power gain of each user (rows) on each sub-band (columns)."""
        f = subband_centers(self.carrier_hz, self.window_hz, self.subband_hz)
        k = window_absorption_coefficient(f, self.carrier_hz, self.window_hz,
                                          self.absorption_center_per_m, self.absorption_edge_per_m)
        d = np.asarray(distance_m, dtype=float)[:, None]
        los = np.asarray(is_los, dtype=bool)[:, None]
        return channel_power_gain(d, f[None, :], self.tx_gain_dbi, self.rx_gain_dbi,
                                  k[None, :], los, self.nlos_loss_db)


@dataclass
class DropFairness:
    """Overall fairness and sum rate of one drop, indexed [scheme, snr]."""

    fairness: np.ndarray
    sum_rate_bps: np.ndarray
    fallback_beams: int = 0


def _pair_fraction(setup, g_weak, g_strong):
    if setup.power_rule == "fixed":
        p = allocate_power_fixed_fraction(1.0, setup.fraction, 2)
    else:
        p = allocate_power_ftpa(1.0, [g_weak, g_strong], setup.ftpa_alpha)
    return snap_to_grid(p[1] / (p[0] + p[1]), setup.power_grid)


def distance_based_plan(setup, gains, distances, is_los):
    """Groups (local index tuples, weak first) and strong-user fractions."""
    users = [LinkBudget(i, float(gains[i]), float(distances[i]), bool(is_los[i]))
             for i in range(len(distances))]
    groups = [tuple(g.member_ids) for g in cluster_distance_based(users, setup.strong_radius_m)]
    fracs = [_pair_fraction(setup, gains[g[0]], gains[g[1]]) if len(g) == 2 else 0.0 for g in groups]
    return groups, fracs


def sdg_groups(gains, distances, is_los):
    users = [LinkBudget(i, float(gains[i]), float(distances[i]), bool(is_los[i]))
             for i in range(len(distances))]
    return [tuple(g.member_ids) for g in cluster_sdg(users)]


def evaluate_drop(drop, setup: FairnessSetup, snr_db):
    """Fairness of the three schemes for one user drop across the SNR grid."""
    snr_db = np.atleast_1d(np.asarray(snr_db, dtype=float))
    part = partition_beams(setup.cell, setup.beamwidth_deg)
    nb = part.num_beams
    bidx = beam_index(drop.phi_deg, setup.beamwidth_deg, nb)
    budget = setup.total_power_w / nb
    noise_total = setup.total_power_w / 10.0 ** (snr_db / 10.0)
    noise_sub = noise_total * setup.subband_hz / setup.window_hz

    beams = []
    for b in range(nb):
        sel = np.flatnonzero(bidx == b)
        if sel.size:
            beams.append((b, sel))

    ff = np.zeros((len(SCHEMES), snr_db.size))
    rsum = np.zeros_like(ff)
    fallbacks = 0
    for b, sel in beams:
        d, los = drop.r_m[sel], drop.is_los[sel]
        slot_gains = setup.subband_gains(d, los)
        ctx0 = BeamContext(slot_gains, d, budget, 1.0, setup.subband_hz)
        base = ctx0.base_gains
        dist_groups, dist_fracs = distance_based_plan(setup, base, d, los)
        singles = [(i,) for i in range(sel.size)]
        big = sel.size > setup.max_exhaustive_users
        fallbacks += int(big)
        for j, nz in enumerate(noise_sub):
            ctx = BeamContext(slot_gains, d, budget, float(nz), setup.subband_hz, ctx0.slot_order)
            r_dist = evaluate_grouping(ctx, dist_groups, dist_fracs)
            r_oma = evaluate_grouping(ctx, singles, [0.0] * len(singles))
            if big:
                cands = [dist_groups, sdg_groups(base, d, los), singles]
                r_exh = optimise_candidates(ctx, cands, setup.power_grid).rates
            else:
                r_exh = cluster_exhaustive(ctx, setup.power_grid,
                                           max_users=setup.max_exhaustive_users).rates
            for k, r in enumerate((r_dist, r_exh, r_oma)):
                _, overall = fairness_factor({b: r})
                ff[k, j] += sel.size * overall
                rsum[k, j] += r.sum()
    ff /= len(drop)
    return DropFairness(ff, rsum, fallbacks)


def fairness_trial(setup, n_users, snr_db, master_seed, trial):
    """One independently seeded drop; the unit of parallel work."""
    rng = stream(master_seed, "fairness", n_users, trial)
    drop = drop_users(setup.cell, n_users, setup.distribution, setup.los_probability, rng,
                      {"master_seed": master_seed, "key": ["fairness", n_users, trial]})
    return evaluate_drop(drop, setup, snr_db)


def bootstrap_mean_diff_lower(a, b, rng, paired, level=0.95, resamples=2000):
    """One-sided lower bootstrap bound on mean(a) - mean(b).

    ``paired`` resamples drops jointly (both samples come from the same
    drops); otherwise each sample is resampled on its own.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if paired:
        if a.size != b.size:
            raise DomainError("paired samples need equal length")
        idx = rng.integers(0, a.size, (resamples, a.size))
        diffs = (a[idx] - b[idx]).mean(axis=1)
    else:
        ia = rng.integers(0, a.size, (resamples, a.size))
        ib = rng.integers(0, b.size, (resamples, b.size))
        diffs = a[ia].mean(axis=1) - b[ib].mean(axis=1)
    return float(np.quantile(diffs, 1.0 - level))


@dataclass
class FairnessRun:
    """Per-drop results for one user count, arrays indexed [drop, scheme, snr]."""

    n_users: int
    snr_db: np.ndarray
    fairness: np.ndarray
    sum_rate_bps: np.ndarray
    fallback_beams: int

    def mean_fairness(self):
        return self.fairness.mean(axis=0)

    def mean_sum_rate(self):
        return self.sum_rate_bps.mean(axis=0)


def _fairness_star(args):
    return fairness_trial(*args)


def run_fairness(setup, user_counts, snr_db, drops, master_seed, mapper=map):
    """Independent drops per user count; results are kept in drop order."""
    if drops < 1:
        raise DomainError("drops must be positive")
    snr_db = np.asarray(snr_db, dtype=float)
    out = {}
    for n in user_counts:
        res = list(mapper(_fairness_star, [(setup, int(n), snr_db, master_seed, t) for t in range(drops)]))
        out[int(n)] = FairnessRun(int(n), snr_db,
                                  np.stack([r.fairness for r in res]),
                                  np.stack([r.sum_rate_bps for r in res]),
                                  int(sum(r.fallback_beams for r in res)))
    return out


def group_audit_rows(drop, setup, snr_db):
    """Grouping chosen by each scheme in every beam at one SNR, for auditing."""
    part = partition_beams(setup.cell, setup.beamwidth_deg)
    bidx = beam_index(drop.phi_deg, setup.beamwidth_deg, part.num_beams)
    noise = setup.total_power_w / 10.0 ** (snr_db / 10.0) * setup.subband_hz / setup.window_hz
    rows = []
    for b in range(part.num_beams):
        sel = np.flatnonzero(bidx == b)
        if not sel.size:
            continue
        d, los = drop.r_m[sel], drop.is_los[sel]
        ctx = BeamContext(setup.subband_gains(d, los), d, setup.total_power_w / part.num_beams,
                          float(noise), setup.subband_hz)
        plans = {"distance": distance_based_plan(setup, ctx.base_gains, d, los),
                 "oma": ([(i,) for i in range(sel.size)], [0.0] * sel.size)}
        if sel.size <= setup.max_exhaustive_users:
            r = cluster_exhaustive(ctx, setup.power_grid, max_users=setup.max_exhaustive_users)
            plans["exhaustive"] = (r.groups, r.fractions)
        for scheme, (groups, fracs) in plans.items():
            for g, fr in zip(groups, fracs):
                ids = "+".join(str(int(drop.ids[sel[i]])) for i in g)
                rows.append((scheme, b, ids, fr))
    return rows
