"""Slow, independent reference implementations used by the tests."""

import itertools
import math


def partitions(items):
    """All ways to split ``items`` into groups of one or two."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in partitions(rest):
        yield [(first,)] + p
    for k, other in enumerate(rest):
        for p in partitions(rest[:k] + rest[k + 1:]):
            yield [(first, other)] + p


def centre_out(n):
    c = (n - 1) // 2
    out = [c]
    step = 1
    while len(out) < n:
        for i in (c + step, c - step):
            if 0 <= i < n and len(out) < n:
                out.append(i)
        step += 1
    return out


def beam_rates(slot_gains, distances, budget, noise, groups, fractions, bw=1.0):
    """Per-user Shannon rates of a grouping, written out one group at a time.

    Groups are ranked by mean member distance (farthest first) and handed
    slots from the window centre outward; when groups outnumber slots the
    extra groups share slots round-robin with equal time.
    """
    n_slots = len(slot_gains[0])
    order = centre_out(n_slots)
    base = [row[order[0]] for row in slot_gains]
    ng = len(groups)
    centroid = [sum(distances[u] for u in g) / len(g) for g in groups]
    ranked = sorted(range(ng), key=lambda i: (-centroid[i], i))
    slot_of, share = {}, {}
    users_on_slot = {}
    for r, gi in enumerate(ranked):
        s = order[r % n_slots]
        slot_of[gi] = s
        users_on_slot.setdefault(s, []).append(gi)
    for s, gl in users_on_slot.items():
        for gi in gl:
            share[gi] = 1.0 / len(gl)
    p = budget / ng
    rates = {}
    for gi, g in enumerate(groups):
        s = slot_of[gi]
        b = bw * share[gi]
        if len(g) == 1:
            u = g[0]
            rates[u] = b * math.log2(1 + p * slot_gains[u][s] / noise)
            continue
        a, c = g
        w, st = (c, a) if base[c] < base[a] else (a, c)
        f = fractions[gi]
        pw, ps = p * (1 - f), p * f
        gw, gs = slot_gains[w][s], slot_gains[st][s]
        sinr_w = min(pw * gw / (ps * gw + noise), pw * gs / (ps * gs + noise))
        rates[w] = b * math.log2(1 + sinr_w)
        rates[st] = b * math.log2(1 + ps * gs / noise)
    return [rates[u] for u in range(len(distances))]


def brute_force_fairness(slot_gains, distances, budget, noise, grid):
    """(best fairness, best sum rate among fairness-optimal choices)."""
    n = len(distances)
    best = None
    for part in partitions(list(range(n))):
        pair_idx = [i for i, g in enumerate(part) if len(g) == 2]
        for combo in itertools.product(grid, repeat=len(pair_idx)):
            fr = [0.0] * len(part)
            for i, f in zip(pair_idx, combo):
                fr[i] = f
            r = beam_rates(slot_gains, distances, budget, noise, part, fr)
            ff = 1.0 if n == 1 else (min(r) / max(r) if max(r) > 0 else 0.0)
            s = sum(r)
            if best is None or ff > best[0] * (1 + 1e-12) or (abs(ff - best[0]) <= 1e-12 * max(ff, 1) and s > best[1]):
                best = (ff, s)
    return best
