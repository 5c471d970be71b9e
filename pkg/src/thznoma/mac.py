"""System-level NOMA algorithms.

User classification and clustering, distance-aware sub-band allocation,
power allocation, achievable rates with SIC, the OMA/FDMA baseline and
the per-beam fairness factor.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
import math

import numpy as np

from .channel import channel_power_gain, fspl_db
from .errors import AllocationError, DomainError, SearchSpaceError

DEFAULT_POWER_GRID = tuple(np.round(np.arange(1, 20) * 0.05, 10))
MAX_EXHAUSTIVE_USERS = 8


@dataclass(frozen=True)
class LinkBudget:
    user_id: int
    channel_power_gain: float
    distance_m: float
    is_los: bool = True

    def __post_init__(self):
        if not (self.channel_power_gain > 0 and math.isfinite(self.channel_power_gain)):
            raise DomainError("channel power gain must be positive and finite")


@dataclass(frozen=True)
class SubBand:
    center_hz: float
    width_hz: float


@dataclass
class NomaGroup:
    member_ids: list
    powers_w: list = field(default_factory=list)
    subband: SubBand | None = None
    beam_index: int = 0

    @property
    def size(self):
        return len(self.member_ids)


@dataclass
class RateReport:
    snr_db: float
    user_rates: dict
    group_rates: list
    beam_fairness: dict
    overall_fairness: float


def link_budgets(drop, frequency_hz, tx_gain_dbi=0.0, rx_gain_dbi=0.0,
                 absorption_per_m=0.0, nlos_loss_db=15.0):
    """LinkBudget per user of a drop."""
    g = channel_power_gain(drop.r_m, frequency_hz, tx_gain_dbi, rx_gain_dbi,
                           absorption_per_m, drop.is_los, nlos_loss_db)
    g = np.atleast_1d(g)
    return [LinkBudget(int(i), float(gi), float(r), bool(los))
            for i, gi, r, los in zip(drop.ids, g, drop.r_m, drop.is_los)]


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

def classify_strong_weak(users, radius_threshold_m):
    """Split users into (strong, weak); blocked users are always weak."""
    strong, weak = [], []
    for u in users:
        (strong if u.is_los and u.distance_m <= radius_threshold_m else weak).append(u)
    return strong, weak


def _weak_first(members):
    return [u.user_id for u in sorted(members, key=lambda u: (u.channel_power_gain, u.user_id))]


def cluster_distance_based(beam_users, radius_threshold_m, cap=2, beam_index=0):
    """Pair the farthest weak user with the nearest strong user, greedily.

    Users left without a partner become singleton groups.
    """
    if not beam_users:
        raise DomainError("beam has no users")
    if cap < 1:
        raise DomainError("cap must be positive")
    strong, weak = classify_strong_weak(beam_users, radius_threshold_m)
    strong.sort(key=lambda u: (u.distance_m, u.user_id))
    weak.sort(key=lambda u: (-u.distance_m, u.user_id))
    groups = []
    npairs = min(len(strong), len(weak)) if cap >= 2 else 0
    for w, s in zip(weak[:npairs], strong[:npairs]):
        groups.append(NomaGroup(_weak_first([w, s]), beam_index=beam_index))
    for u in weak[npairs:] + strong[npairs:]:
        groups.append(NomaGroup([u.user_id], beam_index=beam_index))
    return groups


def cluster_sdg(beam_users, cap=2, beam_index=0):
    """Similar-distance grouping: consecutive users in distance order."""
    if not beam_users:
        raise DomainError("beam has no users")
    if cap < 1:
        raise DomainError("cap must be positive")
    ordered = sorted(beam_users, key=lambda u: (u.distance_m, u.user_id))
    return [NomaGroup(_weak_first(ordered[i:i + cap]), beam_index=beam_index)
            for i in range(0, len(ordered), cap)]


# ---------------------------------------------------------------------------
# Spectrum allocation
# ---------------------------------------------------------------------------

def subband_centers(center_hz, total_bw_hz, subband_hz):
    n = int(math.floor(total_bw_hz / subband_hz + 1e-9))
    lo = center_hz - total_bw_hz / 2.0
    return lo + subband_hz * (np.arange(n) + 0.5)


def center_out_order(num_subbands):
    """Sub-band indices from the window centre outward: centre, right, left, ..."""
    if num_subbands < 1:
        return []
    c = (num_subbands - 1) // 2
    order = [c]
    step = 1
    while len(order) < num_subbands:
        for idx in (c + step, c - step):
            if 0 <= idx < num_subbands and len(order) < num_subbands:
                order.append(idx)
        step += 1
    return order


def allocate_spectrum_damc(groups, window, subband_hz, distances):
    """Give far groups the window centre and near groups the sides.

    ``window`` is ``(center_hz, total_bw_hz)`` and ``distances`` maps user
    id to BS distance.  Groups are ranked by the mean distance of their
    members, farthest first.
    """
    center_hz, total_bw_hz = window
    centers = subband_centers(center_hz, total_bw_hz, subband_hz)
    if len(groups) > len(centers):
        raise AllocationError(f"{len(groups)} groups but only {len(centers)} sub-bands")
    centroid = [np.mean([distances[u] for u in g.member_ids]) for g in groups]
    rank = sorted(range(len(groups)), key=lambda i: (-centroid[i], i))
    order = center_out_order(len(centers))
    out = list(groups)
    for r, gi in enumerate(rank):
        out[gi] = replace(groups[gi], subband=SubBand(float(centers[order[r]]), float(subband_hz)))
    return out


# ---------------------------------------------------------------------------
# Power allocation
# ---------------------------------------------------------------------------

def allocate_power_fixed_fraction(budget_w, fraction, users):
    """Weakest user gets the largest share; each next user ``fraction`` of the previous.

    ``users`` is a weak-first sequence or a user count.
    """
    n = users if isinstance(users, int) else len(users)
    if n < 1:
        raise DomainError("need at least one user")
    if not 0 < fraction < 1:
        raise DomainError("fraction must lie in (0, 1)")
    w = fraction ** np.arange(n)
    return budget_w * w / w.sum()


def allocate_power_ftpa(budget_w, gains, alpha=1.0):
    """Fractional transmit power allocation: p_i proportional to g_i^-alpha."""
    g = np.asarray(gains, dtype=float)
    if g.size < 1:
        raise DomainError("need at least one user")
    if np.any(g <= 0):
        raise DomainError("gains must be positive")
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    # work relative to the largest gain to keep g^-alpha finite
    w = (g / g.max()) ** (-alpha)
    return budget_w * w / w.sum()


def receive_power_dbm(tx_power_w, distance_m, frequency_hz, gains_dbi=0.0):
    p = np.asarray(tx_power_w, dtype=float)
    if np.any(p <= 0):
        raise DomainError("transmit power must be positive")
    return 10.0 * np.log10(p * 1e3) + gains_dbi - fspl_db(distance_m, frequency_hz)


def snap_to_grid(value, grid):
    grid = np.asarray(grid, dtype=float)
    return float(grid[np.argmin(np.abs(grid - value))])


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------

def pair_rates(p_w, p_s, g_w, g_s, noise_w, bandwidth_hz=1.0):
    """(R_weak, R_strong) of a two-user group in bit/s.

    The weak user decodes with the strong signal as noise, capped by the
    strong user's ability to decode the weak message before SIC.  The
    strong user decodes its own message interference-free after SIC.
    Broadcasts over array arguments.
    """
    sinr_w = p_w * g_w / (p_s * g_w + noise_w)
    sinr_w_at_s = p_w * g_s / (p_s * g_s + noise_w)
    r_w = bandwidth_hz * np.log2(1.0 + np.minimum(sinr_w, sinr_w_at_s))
    r_s = bandwidth_hz * np.log2(1.0 + p_s * g_s / noise_w)
    return r_w, r_s


def single_user_rate(p, g, noise_w, bandwidth_hz=1.0):
    return bandwidth_hz * np.log2(1.0 + p * g / noise_w)


def noma_rates(group, budgets, noise_w_per_hz, subband_hz):
    """Per-member rates (weak-first order) of a NOMA group."""
    by_id = {b.user_id: b for b in budgets}
    noise = noise_w_per_hz * subband_hz
    if group.size == 1:
        b = by_id[group.member_ids[0]]
        return [float(single_user_rate(group.powers_w[0], b.channel_power_gain, noise, subband_hz))]
    if group.size != 2:
        raise DomainError("NOMA rates are defined for two-member groups")
    w, s = (by_id[u] for u in group.member_ids)
    r_w, r_s = pair_rates(group.powers_w[0], group.powers_w[1],
                          w.channel_power_gain, s.channel_power_gain, noise, subband_hz)
    return [float(r_w), float(r_s)]


def oma_rates(users, per_user_bw_hz, budget_w, noise_w_per_hz, powers_w=None):
    """FDMA rates; the beam budget is split equally unless ``powers_w`` is given."""
    if not users:
        raise DomainError("need at least one user")
    g = np.array([u.channel_power_gain for u in users])
    p = np.full(g.size, budget_w / g.size) if powers_w is None else np.asarray(powers_w, float)
    return single_user_rate(p, g, noise_w_per_hz * per_user_bw_hz, per_user_bw_hz)


def fairness_factor(beam_rates):
    """Per-beam min/max rate ratio and the user-weighted overall factor.

    ``beam_rates`` maps beam index to the rates of its users (empty beams
    are skipped).
    """
    per_beam = {}
    num = 0.0
    den = 0
    for b, rates in beam_rates.items():
        r = np.asarray(rates, dtype=float)
        if r.size == 0:
            continue
        hi = r.max()
        ff = 0.0 if hi <= 0 else float(r.min() / hi)
        if r.size == 1:
            ff = 1.0
        per_beam[b] = ff
        num += r.size * ff
        den += r.size
    return per_beam, (num / den if den else float("nan"))


# ---------------------------------------------------------------------------
# Beam evaluation engine shared by the heuristics and the exhaustive search
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def matchings(n, cap=2):
    """All partitions of range(n) into groups of size <= cap (cap in {1, 2}).

    Returned as an int array (num_matchings, n, 2) padded with -1, in
    lexicographic order of the group lists.  Singletons are (i, -1).
    """
    if cap not in (1, 2):
        raise DomainError("only groups of one or two users are supported")

    def rec(rest):
        if not rest:
            yield []
            return
        first, tail = rest[0], rest[1:]
        for m in rec(tail):
            yield [(first, -1)] + m
        if cap == 2:
            for k, other in enumerate(tail):
                for m in rec(tail[:k] + tail[k + 1:]):
                    yield [(first, other)] + m

    out = []
    for m in rec(tuple(range(n))):
        m = m + [(-1, -1)] * (n - len(m))
        out.append(m)
    arr = np.array(out, dtype=int).reshape(-1, n, 2) if out else np.zeros((1, 0, 2), int)
    arr.setflags(write=False)
    return arr


@dataclass
class BeamContext:
    """Everything needed to turn a grouping of one beam's users into rates.

    ``slot_gains[u, k]`` is user u's power gain on sub-band k; sub-bands are
    handed out centre-outward to groups in decreasing order of mean member
    distance.  Groups beyond the sub-band count time-share slots.
    """

    slot_gains: np.ndarray
    distances: np.ndarray
    budget_w: float
    noise_w: float
    subband_hz: float = 1.0
    slot_order: tuple | None = None

    def __post_init__(self):
        self.slot_gains = np.atleast_2d(np.asarray(self.slot_gains, dtype=float))
        self.distances = np.asarray(self.distances, dtype=float)
        if self.slot_order is None:
            self.slot_order = tuple(center_out_order(self.slot_gains.shape[1]))

    @property
    def n_users(self):
        return self.slot_gains.shape[0]

    @property
    def n_slots(self):
        return self.slot_gains.shape[1]

    @property
    def base_gains(self):
        return self.slot_gains[:, self.slot_order[0]]


def _orient_weak_first(match, gains):
    """Reorder each pair as (weak, strong) by ``gains``; ties keep index order."""
    a, b = match[..., 0], match[..., 1]
    pair = b >= 0
    ga = np.where(a >= 0, gains[np.maximum(a, 0)], 0.0)
    gb = np.where(pair, gains[np.maximum(b, 0)], 0.0)
    swap = pair & (gb < ga)
    w = np.where(swap, b, a)
    s = np.where(swap, a, b)
    return w, s


def _slot_assignment(ctx, w, s):
    """Slot index and time share per group for stacked groupings (..., G)."""
    valid = w >= 0
    d = ctx.distances
    cen = np.where(s >= 0, 0.5 * (d[np.maximum(w, 0)] + d[np.maximum(s, 0)]), d[np.maximum(w, 0)])
    cen = np.where(valid, cen, -np.inf)
    order = np.argsort(-cen, axis=-1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(order.shape[-1])[(None,) * (order.ndim - 1)], axis=-1)
    n_groups = valid.sum(axis=-1, keepdims=True)
    ns = ctx.n_slots
    slot = np.asarray(ctx.slot_order)[rank % ns]
    sharing = (n_groups - 1 - rank % ns) // ns + 1
    tau = np.where(valid, 1.0 / np.maximum(sharing, 1), 0.0)
    return slot, tau, n_groups


def _option_rates(ctx, w, s, fractions):
    """Rates of every group under every strong-power fraction.

    Returns (r_weak, r_strong) shaped (..., G, F).  Singletons carry their
    rate in r_weak and NaN in r_strong; padded groups are all NaN.
    """
    slot, tau, n_groups = _slot_assignment(ctx, w, s)
    p_group = ctx.budget_w / n_groups
    gw = ctx.slot_gains[np.maximum(w, 0), slot]
    gs = ctx.slot_gains[np.maximum(s, 0), slot]
    f = np.asarray(fractions, dtype=float)
    pg = p_group[..., None]
    bw = ctx.subband_hz * tau[..., None]
    r_w, r_s = pair_rates(pg * (1.0 - f), pg * f, gw[..., None], gs[..., None], ctx.noise_w, bw)
    single = single_user_rate(pg, gw[..., None], ctx.noise_w, bw) + 0.0 * f
    is_pair = (s >= 0)[..., None]
    valid = (w >= 0)[..., None]
    r_weak = np.where(is_pair, r_w, single)
    r_strong = np.where(is_pair, r_s, np.nan)
    r_weak = np.where(valid, r_weak, np.nan)
    r_strong = np.where(valid, r_strong, np.nan)
    return r_weak, r_strong


def evaluate_grouping(ctx, groups, fractions):
    """Rates per user for explicit groups (index tuples) and per-pair fractions.

    ``groups`` is a list of (i,) or (i, j) user-index tuples; ``fractions``
    gives the strong-user share of each pair's group budget (ignored for
    singletons).  Returns an array of per-user rates.
    """
    n = ctx.n_users
    m = np.full((n, 2), -1, dtype=int)
    for k, g in enumerate(groups):
        m[k, 0] = g[0]
        if len(g) == 2:
            m[k, 1] = g[1]
        elif len(g) != 1:
            raise DomainError("groups must have one or two members")
    w, s = _orient_weak_first(m, ctx.base_gains)
    f = np.zeros(n)
    f[: len(groups)] = fractions
    r_weak, r_strong = _option_rates(ctx, w, s, [0.0])
    # re-evaluate pairs at their own fraction
    rates = np.zeros(n)
    for k in range(len(groups)):
        if s[k] >= 0:
            rw, rs = _option_rates(ctx, w, s, [f[k]])
            rates[w[k]] = rw[k, 0]
            rates[s[k]] = rs[k, 0]
        else:
            rates[w[k]] = r_weak[k, 0]
    return rates


@dataclass
class ExhaustiveResult:
    groups: list
    fractions: list
    rates: np.ndarray
    fairness: float
    sum_rate: float


_CHUNK = 48


def _best_ratio(lo, hi, c):
    """max over candidate maxima M of (min over groups of best lo with hi <= M) / M."""
    ok = hi[..., None] <= c[:, None, None, :]                    # (m, G, F, C)
    best_lo = np.where(ok, lo[..., None], -np.inf).max(axis=2)   # (m, G, C)
    floor = best_lo.min(axis=1)                                  # (m, C)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(c > 0, floor / c, np.where(np.isfinite(floor), 0.0, -np.inf))
    ratio = np.where(np.isfinite(c), ratio, -np.inf)
    return ratio.max(axis=1)


def _best_sum(lo, hi, c, total, pad, ff, rel_tol):
    """Largest sum rate among assignments that reach the optimum ratio ``ff``."""
    thresh = (ff * (1.0 - rel_tol))[:, None, None, None] * c[:, None, None, :]
    feas = (hi[..., None] <= c[:, None, None, :]) & (lo[..., None] >= thresh)
    best = np.where(feas, total[..., None], -np.inf).max(axis=2)  # (m, G, C)
    best = np.where(pad[..., None], 0.0, best)
    return best.sum(axis=1).max(axis=1)


def cluster_exhaustive(ctx, power_grid=DEFAULT_POWER_GRID, cap=2, max_users=MAX_EXHAUSTIVE_USERS,
                       rel_tol=1e-12):
    """Fairness-optimal grouping and power split of one beam.

    Enumerates every partition of the beam's users into groups of at most
    ``cap`` users and every grid power split of each pair, and returns the
    assignment maximising min rate / max rate.  Ties go to the higher sum
    rate, then to the lexicographically first grouping.
    """
    n = ctx.n_users
    if n < 1:
        raise DomainError("beam has no users")
    if n > max_users:
        raise SearchSpaceError(f"{n} users exceed the exhaustive-search limit of {max_users}")
    return _search(ctx, matchings(n, cap), power_grid, rel_tol)


def _as_matching(groups, n):
    m = np.full((n, 2), -1, dtype=int)
    seen = []
    for k, g in enumerate(groups):
        if len(g) not in (1, 2):
            raise DomainError("groups must have one or two members")
        m[k, : len(g)] = g
        seen.extend(g)
    if sorted(seen) != list(range(n)):
        raise DomainError("groups must cover every user exactly once")
    return m


def optimise_candidates(ctx, candidates, power_grid=DEFAULT_POWER_GRID, rel_tol=1e-12):
    """Same objective as ``cluster_exhaustive`` but over the given groupings only.

    Used when a beam is too crowded to enumerate: each candidate grouping
    still gets its fairness-optimal grid power split.
    """
    if not candidates:
        raise DomainError("need at least one candidate grouping")
    M = np.stack([_as_matching(c, ctx.n_users) for c in candidates])
    return _search(ctx, M, power_grid, rel_tol)


def _search(ctx, M, power_grid, rel_tol):
    n = ctx.n_users
    grid = np.asarray(power_grid, dtype=float)
    w, s = _orient_weak_first(M, ctx.base_gains)
    r_weak, r_strong = _option_rates(ctx, w, s, grid)          # (Mt, G, F)
    lo = np.fmin(r_weak, r_strong)
    hi = np.fmax(r_weak, r_strong)
    valid = ~np.isnan(lo)
    lo = np.where(valid, lo, np.inf)
    hi = np.where(valid, hi, -np.inf)
    mt, g, f = lo.shape
    total = np.where(valid, np.nan_to_num(r_weak) + np.nan_to_num(r_strong), 0.0)
    pad = ~valid[..., 0]
    c = hi.reshape(mt, g * f)                                    # candidate max rates

    ff = np.empty(mt)
    for a in range(0, mt, _CHUNK):
        ff[a:a + _CHUNK] = _best_ratio(lo[a:a + _CHUNK], hi[a:a + _CHUNK], c[a:a + _CHUNK])
    ff = np.minimum(ff, 1.0)

    top = ff.max()
    tied = np.flatnonzero(ff >= top - rel_tol * max(abs(top), 1.0))
    sums = np.full(mt, -np.inf)
    for a in range(0, tied.size, _CHUNK):
        k = tied[a:a + _CHUNK]
        sums[k] = _best_sum(lo[k], hi[k], c[k], total[k], pad[k], ff[k], rel_tol)
    best_s = sums.max()
    pick = int(tied[np.flatnonzero(sums[tied] >= best_s - rel_tol * max(abs(best_s), 1.0))[0]])

    # recover the per-group choice for the chosen matching
    k = pick
    target = ff[k]
    c_k = c[k]
    lo_k, hi_k, tot_k = lo[k], hi[k], total[k]
    best = None
    for ci in np.argsort(c_k, kind="stable"):
        cm = c_k[ci]
        if not np.isfinite(cm):
            continue
        choice = []
        ssum = 0.0
        feasible = True
        for gi in range(g):
            if pad[k, gi]:
                continue
            okk = (hi_k[gi] <= cm) & (lo_k[gi] >= target * (1.0 - rel_tol) * cm)
            if not okk.any():
                feasible = False
                break
            idx = np.flatnonzero(okk)
            j = idx[np.argmax(tot_k[gi, idx])]
            choice.append(int(j))
            ssum += tot_k[gi, j]
        if feasible and (best is None or ssum > best[0] + rel_tol * max(abs(best[0]), 1.0)):
            best = (ssum, choice)
    _, choice = best
    groups, fracs = [], []
    rates = np.zeros(n)
    gi_used = 0
    for gi in range(g):
        if pad[k, gi]:
            continue
        j = choice[gi_used]
        gi_used += 1
        if s[k, gi] >= 0:
            groups.append((int(w[k, gi]), int(s[k, gi])))
            fracs.append(float(grid[j]))
            rates[w[k, gi]] = r_weak[k, gi, j]
            rates[s[k, gi]] = r_strong[k, gi, j]
        else:
            groups.append((int(w[k, gi]),))
            fracs.append(0.0)
            rates[w[k, gi]] = r_weak[k, gi, j]
    hi_r = rates.max()
    fair = 1.0 if n == 1 else (0.0 if hi_r <= 0 else float(rates.min() / hi_r))
    return ExhaustiveResult(groups, fracs, rates, fair, float(rates.sum()))
