"""Two-user NOMA versus multi-user linear precoding under zero-forcing beams."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import CarrierSpec, ChannelEnsembleKind, gen_ensemble
from .errors import DomainError, NullingError
from .mac import DEFAULT_POWER_GRID
from .rng import stream

OCTAVE_DB = 10.0 * np.log10(2.0)


class PrecodingScheme(str, Enum):
    NOMA_ZFBF = "noma_zfbf"
    MULP_ZFBF = "mulp_zfbf"


def _null_projector(Hj, rtol=1e-12):
    """Orthogonal projector onto the null space of ``Hj``."""
    _, s, vh = np.linalg.svd(Hj)
    rank = int(np.sum(s > rtol * max(s.max(initial=0.0), 1e-300)))
    v_range = vh[:rank].conj().T
    return np.eye(Hj.shape[1]) - v_range @ v_range.conj().T


def _dominant_right(H):
    _, s, vh = np.linalg.svd(H)
    return vh[0].conj(), float(s[0])


def zfbf_precoder(user_channels, degraded=False, rtol=1e-9):
    """One unit-norm beam per user, nulling every other user's channel.

    User i's beam is the strongest direction of H_i restricted to the null
    space of the other users' stacked rows.  If that restriction leaves
    less than ``rtol`` of H_i's gain, exact nulling is infeasible: an error
    is raised unless ``degraded`` is set, in which case the beam falls back
    to the unconstrained dominant direction.  Returns (W, flagged) with W
    of shape (nt, num_users).
    """
    blocks = [np.atleast_2d(np.asarray(h, dtype=complex)) for h in user_channels]
    nt = blocks[0].shape[1]
    if any(b.shape[1] != nt for b in blocks):
        raise DomainError("all user blocks need the same number of columns")
    W = np.zeros((nt, len(blocks)), dtype=complex)
    flagged = False
    for i, Hi in enumerate(blocks):
        others = [b for j, b in enumerate(blocks) if j != i]
        P = _null_projector(np.vstack(others)) if others else np.eye(nt)
        v, s = _dominant_right(Hi @ P)
        full = np.linalg.norm(Hi, 2)
        if full == 0:
            raise NullingError(f"user {i} has an all-zero channel")
        if s <= rtol * full:
            if not degraded:
                raise NullingError(f"user {i} has no gain outside the other users' row space")
            flagged = True
            v, _ = _dominant_right(Hi)
        else:
            v = P @ v
        W[:, i] = v / np.linalg.norm(v)
    return W, flagged


def mulp_sum_rate(user_channels, W, power_budget, noise_var):
    """Sum of log2(1 + SINR) with matched-filter combining at each user.

    Residual leakage from the other beams counts as interference.  Power is
    split equally.  ``noise_var`` may be an array (rates broadcast over it).
    """
    k = len(user_channels)
    p = power_budget / k
    noise = np.asarray(noise_var, dtype=float)
    total = np.zeros_like(noise)
    for i, Hi in enumerate(user_channels):
        hi = np.atleast_2d(Hi) @ W
        own = hi[:, i]
        g = np.linalg.norm(own) ** 2
        if g == 0:
            continue
        u = own / np.sqrt(g)
        leak = sum(abs(np.vdot(u, hi[:, j])) ** 2 for j in range(k) if j != i)
        total = total + np.log2(1.0 + p * g / (p * leak + noise))
    return total


@dataclass
class NomaGains:
    g_ww: float     # weak user, common beam
    g_sw: float     # strong user, common beam
    g_ss: float     # strong user, own beam after SIC
    i_ss: float     # strong own beam seen through the weak-message combiner


def noma_gains(h_weak, h_strong):
    """Effective scalar gains of the two-user NOMA beam pair.

    The weak message rides on the weak user's dominant direction; the
    strong message uses a zero-forcing beam in the null space of the weak
    user's channel, so the weak user sees no interference from it.
    """
    hw = np.atleast_2d(np.asarray(h_weak, dtype=complex))
    hs = np.atleast_2d(np.asarray(h_strong, dtype=complex))
    wc, _ = _dominant_right(hw)
    P = _null_projector(hw)
    v, s = _dominant_right(hs @ P)
    ws = P @ v if s > 0 else np.zeros_like(wc)
    n = np.linalg.norm(ws)
    ws = ws / n if n > 0 else ws
    a = hs @ wc
    g_sw = float(np.linalg.norm(a) ** 2)
    u = a / np.sqrt(g_sw) if g_sw > 0 else a
    return NomaGains(float(np.linalg.norm(hw @ wc) ** 2), g_sw,
                     float(np.linalg.norm(hs @ ws) ** 2), float(abs(np.vdot(u, hs @ ws)) ** 2))


def noma_zfbf_sum_rate(h_weak, h_strong, power_budget, noise_var, power_grid=DEFAULT_POWER_GRID,
                       include_zero=True):
    """Rate-maximising NOMA sum rate over the strong-user power grid.

    R_weak is capped by the strong user's ability to decode the weak
    message; R_strong follows ideal SIC.  ``include_zero`` adds the
    no-superposition point (all power to the weak message).
    """
    g = noma_gains(h_weak, h_strong)
    f = np.asarray(power_grid, dtype=float)
    if include_zero:
        f = np.concatenate([[0.0], f])
    noise = np.asarray(noise_var, dtype=float)[..., None]
    ps = power_budget * f
    pw = power_budget - ps
    r_w = np.minimum(np.log2(1.0 + pw * g.g_ww / noise),
                     np.log2(1.0 + pw * g.g_sw / (ps * g.i_ss + noise)))
    r_s = np.log2(1.0 + ps * g.g_ss / noise)
    return (r_w + r_s).max(axis=-1)


def slope_top_octave(snr_db, rate):
    """Least-squares slope in bit/s/Hz per 3.01 dB over the top SNR octave.

    Uses every grid point within 3.0103 dB of the highest SNR (at least two).
    """
    x = np.asarray(snr_db, dtype=float)
    y = np.asarray(rate, dtype=float)
    if x.size < 2:
        raise DomainError("need at least two SNR points")
    order = np.argsort(x)
    x, y = x[order], y[order]
    sel = x >= x[-1] - OCTAVE_DB - 1e-9
    if sel.sum() < 2:
        sel[-2:] = True
    a = np.polyfit(x[sel], y[sel], 1)[0]
    return float(a * OCTAVE_DB)


def split_users(H, ensemble):
    """Row blocks (first half, second half) of a stacked two-user channel."""
    H = np.asarray(H)
    n1 = (H.shape[0] + 1) // 2
    return H[:n1], H[n1:]


def draw_two_user_channel(ensemble, rng, carrier=None, dims=(4, 4)):
    """Stacked channel normalised to ||H||_F^2 = rows * cols."""
    carrier = CarrierSpec(300e9) if carrier is None else carrier
    H = gen_ensemble(ensemble, dims, carrier, rng).matrix
    kind = ChannelEnsembleKind(ensemble)
    if kind != ChannelEnsembleKind.GAUSSIAN_IID:
        H = H * np.sqrt(H.size) / np.linalg.norm(H)
    return H


@dataclass
class SumRateCurve:
    snr_db: np.ndarray
    mean_rate: dict                       # (ensemble, scheme) -> array over snr
    trials: int
    slopes: dict = field(default_factory=dict)
    degraded_trials: dict = field(default_factory=dict)


def mulp_trial(ensemble, snr_db, master_seed, trial, power_grid=DEFAULT_POWER_GRID):
    """(MU-LP rates, NOMA rates, degraded flag) of one random channel."""
    rng = stream(master_seed, "mulp", ChannelEnsembleKind(ensemble).value, trial)
    H = draw_two_user_channel(ensemble, rng)
    a, b = split_users(H, ensemble)
    noise = 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)
    W, flagged = zfbf_precoder([a, b], degraded=True)
    mulp = mulp_sum_rate([a, b], W, 1.0, noise)
    weak, strong = (a, b) if np.linalg.norm(a) <= np.linalg.norm(b) else (b, a)
    noma = noma_zfbf_sum_rate(weak, strong, 1.0, noise, power_grid)
    return mulp, noma, flagged


def run_mulp_experiment(snr_db, ensembles, trials, master_seed, mapper=map):
    """Mean sum-rate curves and top-octave slopes per ensemble and scheme."""
    if trials < 1:
        raise DomainError("trials must be positive")
    snr_db = np.asarray(snr_db, dtype=float)
    if snr_db.size < 2:
        raise DomainError("need at least two SNR points")
    curve = SumRateCurve(snr_db, {}, trials)
    for ens in ensembles:
        ens = ChannelEnsembleKind(ens).value
        res = list(mapper(_mulp_star, [(ens, snr_db, master_seed, t) for t in range(trials)]))
        m = np.mean([r[0] for r in res], axis=0)
        n = np.mean([r[1] for r in res], axis=0)
        curve.mean_rate[(ens, PrecodingScheme.MULP_ZFBF.value)] = m
        curve.mean_rate[(ens, PrecodingScheme.NOMA_ZFBF.value)] = n
        curve.slopes[(ens, PrecodingScheme.MULP_ZFBF.value)] = slope_top_octave(snr_db, m)
        curve.slopes[(ens, PrecodingScheme.NOMA_ZFBF.value)] = slope_top_octave(snr_db, n)
        curve.degraded_trials[ens] = int(sum(r[2] for r in res))
    return curve


def _mulp_star(args):
    return mulp_trial(*args)
