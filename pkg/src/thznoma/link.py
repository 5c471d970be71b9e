"""Link-level NOMA simulation: superposition, SIC receivers, CSI mismatch and BER."""

from dataclasses import dataclass
from enum import Enum
import time

import numpy as np

from .channel import (
    LOS,
    ArrayGeometry,
    CarrierSpec,
    Path,
    Wavefront,
    _facing_ula,
    _polar,
    synth_channel,
)
from .detection import get_detector
from .errors import DomainError
from .modulation import Constellation, bits_to_indices, indices_to_bits, qam
from .rng import stream


class CsiModel(str, Enum):
    PERFECT = "perfect"
    IGNORE_SQUINT = "ignore_squint"
    IGNORE_SWP = "ignore_swp"
    IGNORE_BOTH = "ignore_both"


CSI_MODELS = tuple(CsiModel)


@dataclass(frozen=True)
class SuperposedFrame:
    """Per-SA superposition of a weak and a strong symbol vector."""

    weak_symbols: np.ndarray
    strong_symbols: np.ndarray
    power_split: tuple = (2.0 / 3.0, 1.0 / 3.0)

    def __post_init__(self):
        pw, ps = self.power_split
        if pw < 0 or ps < 0 or abs(pw + ps - 1.0) > 1e-12:
            raise DomainError("power split must be nonnegative and sum to 1")
        if np.shape(self.weak_symbols) != np.shape(self.strong_symbols):
            raise DomainError("weak and strong symbol blocks must have equal shape")

    @property
    def tx_vector(self):
        pw, ps = self.power_split
        return np.sqrt(pw) * np.asarray(self.weak_symbols) + np.sqrt(ps) * np.asarray(self.strong_symbols)


def normalized_split(powers_weak_first):
    """(p_w, p_s) from a weak-first power pair, normalised to sum to 1."""
    p = np.asarray(powers_weak_first, dtype=float)
    if p.shape != (2,) or np.any(p < 0) or p.sum() <= 0:
        raise DomainError("need two nonnegative powers")
    p = p / p.sum()
    return float(p[0]), float(p[1])


def whiten(H, y, interference_power, noise_var):
    """Whiten (H, y) against noise covariance p H H^H + noise_var I."""
    H = np.asarray(H, dtype=complex)
    nr = H.shape[-2]
    C = interference_power * (H @ np.swapaxes(H.conj(), -1, -2)) + noise_var * np.eye(nr)
    L = np.linalg.cholesky(C)
    Hw = np.linalg.solve(L, H)
    yw = np.linalg.solve(L, np.asarray(y, dtype=complex)[..., None])[..., 0]
    return Hw, yw


def noma_sic_receive(H, y, detector, power_split, role, const_weak: Constellation,
                     const_strong: Constellation | None = None, noise_var=0.0):
    """Decode at one NOMA receiver.

    The weak layer is detected with the strong layer treated as extra
    Gaussian noise of covariance p_s H H^H (the detector sees whitened
    inputs).  The strong role then cancels the re-modulated weak layer and
    detects its own symbols.  Returns (own indices, weak indices); for the
    weak role both entries are the weak indices.
    """
    detect = get_detector(detector) if isinstance(detector, str) else detector
    pw, ps = power_split
    const_strong = const_weak if const_strong is None else const_strong
    weak_pts = np.sqrt(pw) * const_weak.points
    if ps > 0:
        Hw, yw = whiten(H, y, ps, noise_var)
    else:
        Hw, yw = H, y
    s_w = detect(Hw, yw, weak_pts)
    if role == "weak":
        return s_w, s_w
    if role != "strong":
        raise DomainError("role must be 'weak' or 'strong'")
    resid = y - np.einsum("...ij,...j->...i", H, weak_pts[s_w])
    s_s = detect(H, resid, np.sqrt(ps) * const_strong.points)
    return s_s, s_w


@dataclass(frozen=True)
class LinkSetup:
    """Geometry and signal parameters of the two-user link experiment.

    The BS carries a ULA of ``num_sas`` sub-arrays; each user has a facing
    ULA with the same count.  The true channel uses spherical phases at the
    upper band edge (carrier + bandwidth / 2).
    """

    carrier_hz: float = 300e9
    bandwidth_hz: float = 10e9
    num_sas: int = 4
    sa_spacing_m: float = 4e-3
    strong_distance_m: float = 1.0
    weak_distance_m: float = 5.0
    beam_half_width_deg: float = 15.0
    num_scatterers: int = 10
    scatterer_loss_db: float = 15.0
    absorption_per_m: float = 0.0033
    power_split: tuple = (0.8, 0.2)
    weak_order: int = 4
    strong_order: int = 4
    frames_per_drop: int = 256

    def __post_init__(self):
        if self.num_sas < 1 or self.sa_spacing_m <= 0 or self.frames_per_drop < 1:
            raise DomainError("invalid array or frame settings")
        if not 0 < self.strong_distance_m < self.weak_distance_m:
            raise DomainError("strong user must be closer than the weak user")
        if self.power_split[0] < self.power_split[1]:
            raise DomainError("weak-first split needs p_w >= p_s")

    @property
    def carrier(self):
        return CarrierSpec(self.carrier_hz, self.bandwidth_hz, self.absorption_per_m)

    @property
    def subcarrier_hz(self):
        return self.carrier_hz + self.bandwidth_hz / 2.0


@dataclass(frozen=True)
class LinkGeometry:
    tx: ArrayGeometry
    rx_strong: ArrayGeometry
    rx_weak: ArrayGeometry
    paths_strong: tuple
    paths_weak: tuple


def draw_link_geometry(setup: LinkSetup, rng) -> LinkGeometry:
    """BS array, two users inside one beam and a few random scatterers."""
    n = setup.num_sas
    tx = ArrayGeometry.ula(n, setup.sa_spacing_m, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    hw = setup.beam_half_width_deg
    az_s, az_w = rng.uniform(-hw, hw, 2)
    rx_s = _facing_ula(n, setup.sa_spacing_m, _polar(setup.strong_distance_m, az_s), tx.reference_point)
    rx_w = _facing_ula(n, setup.sa_spacing_m, _polar(setup.weak_distance_m, az_w), tx.reference_point)

    def scatter(d):
        out = [LOS]
        for _ in range(setup.num_scatterers):
            p = _polar(rng.uniform(0.3 * d, 1.5 * d), rng.uniform(-60.0, 60.0))
            p[2] = rng.uniform(-0.5, 0.5) * d
            out.append(Path.nlos(p, setup.scatterer_loss_db, rng.uniform(0.0, 2.0 * np.pi)))
        return tuple(out)

    return LinkGeometry(tx, rx_s, rx_w, scatter(setup.strong_distance_m), scatter(setup.weak_distance_m))


def true_channel(tx, rx, paths, setup: LinkSetup):
    return synth_channel(tx, rx, setup.carrier, paths=paths, wavefront=Wavefront.SPHERICAL,
                         squint_frequency_hz=setup.subcarrier_hz)


def build_csi_estimate(tx, rx, paths, setup: LinkSetup, model):
    """Channel knowledge of the receiver under a CSI model.

    Every estimate keeps the true common phase of each path (measured at the
    array reference points) and differs from the truth only in how the phase
    spread across sub-arrays is modelled: carrier instead of sub-carrier
    frequency, a planar instead of a spherical wavefront, or both.
    """
    model = CsiModel(model)
    f = setup.subcarrier_hz
    if model in (CsiModel.IGNORE_SQUINT, CsiModel.IGNORE_BOTH):
        f = setup.carrier_hz
    wf = Wavefront.SPHERICAL
    if model in (CsiModel.IGNORE_SWP, CsiModel.IGNORE_BOTH):
        wf = Wavefront.PLANAR
    return synth_channel(tx, rx, setup.carrier, paths=paths, wavefront=wf,
                         squint_frequency_hz=f, calibration_frequency_hz=setup.subcarrier_hz)


@dataclass
class BerStats:
    detector: str
    csi_model: str
    user_role: str
    snr_db: float
    bits: int
    errors: int

    @property
    def ber(self):
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def ci_halfwidth(self):
        return wilson_halfwidth(self.errors, self.bits)


def wilson_halfwidth(errors, n, z=1.959963984540054):
    """Half-width of the Wilson score interval for a binomial proportion."""
    if n == 0:
        return float("nan")
    p = errors / n
    return float(z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n))


def _noise(rng, shape, var):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(var / 2.0)


def ber_trial(setup: LinkSetup, detectors, csi_models, snr_db, master_seed, trial):
    """Bit-error counts of one drop: dict keyed (detector, csi, role, snr_index) -> (errors, bits)."""
    rng = stream(master_seed, "ber", trial)
    geo = draw_link_geometry(setup, rng)
    Hs = true_channel(geo.tx, geo.rx_strong, geo.paths_strong, setup).matrix
    Hw = true_channel(geo.tx, geo.rx_weak, geo.paths_weak, setup).matrix
    est = {m: (build_csi_estimate(geo.tx, geo.rx_strong, geo.paths_strong, setup, m).matrix,
               build_csi_estimate(geo.tx, geo.rx_weak, geo.paths_weak, setup, m).matrix)
           for m in csi_models}
    cw, cs = qam(setup.weak_order), qam(setup.strong_order)
    n, F = setup.num_sas, setup.frames_per_drop
    bw = rng.integers(0, 2, (F, n * cw.bits_per_symbol), dtype=np.uint8)
    bs = rng.integers(0, 2, (F, n * cs.bits_per_symbol), dtype=np.uint8)
    iw, is_ = bits_to_indices(bw, cw), bits_to_indices(bs, cs)
    frame = SuperposedFrame(cw.points[iw], cs.points[is_], setup.power_split)
    x = frame.tx_vector
    # SNR = E||x||^2 * (weak user's mean channel power gain) / noise variance,
    # with E||x||^2 = n for unit-power symbols and a split summing to one
    ref_gain = n * float(np.mean(np.abs(Hw) ** 2))
    z_unit_s = _noise(rng, (len(snr_db), F, n), 1.0)
    z_unit_w = _noise(rng, (len(snr_db), F, n), 1.0)
    yw0 = x @ Hw.T
    ys0 = x @ Hs.T
    out = {}
    for j, snr in enumerate(snr_db):
        sigma = np.sqrt(ref_gain / 10.0 ** (snr / 10.0))
        yw = yw0 + sigma * z_unit_w[j]
        ys = ys0 + sigma * z_unit_s[j]
        for m in csi_models:
            Es, Ew = est[m]
            for det in detectors:
                hw_, _ = noma_sic_receive(Ew, yw, det, setup.power_split, "weak", cw, cs, sigma**2)
                hs_, _ = noma_sic_receive(Es, ys, det, setup.power_split, "strong", cw, cs, sigma**2)
                ew = int(np.count_nonzero(indices_to_bits(hw_, cw) != bw))
                es = int(np.count_nonzero(indices_to_bits(hs_, cs) != bs))
                out[(det, CsiModel(m).value, "weak", j)] = (ew, bw.size)
                out[(det, CsiModel(m).value, "strong", j)] = (es, bs.size)
    return out


def merge_counts(results):
    """Exact integer accumulation of per-trial counts (order-independent)."""
    tot = {}
    for r in results:
        for k, (e, b) in r.items():
            e0, b0 = tot.get(k, (0, 0))
            tot[k] = (e0 + e, b0 + b)
    return tot


def counts_to_stats(counts, snr_db):
    rows = []
    for (det, m, role, j), (e, b) in sorted(counts.items(), key=lambda kv: kv[0]):
        rows.append(BerStats(det, m, role, float(snr_db[j]), b, e))
    return rows


def run_ber_experiment(setup: LinkSetup, detectors, csi_models, snr_db, trials, master_seed, mapper=map):
    """Monte Carlo BER table over ``trials`` independent drops.

    ``mapper`` lets the caller supply an ordered parallel map; results do
    not depend on it because counts are merged by exact integer addition.
    """
    if trials < 1:
        raise DomainError("trials must be positive")
    snr_db = [float(s) for s in snr_db]
    work = [(setup, tuple(detectors), tuple(csi_models), snr_db, master_seed, t) for t in range(trials)]
    counts = merge_counts(mapper(_ber_star, work))
    return counts_to_stats(counts, snr_db)


def _ber_star(args):
    return ber_trial(*args)


def measure_detector_throughput(detector, dims=(4, 4), order=16, duration_s=0.5, batch=2048, seed=0):
    """Detected bits per second of wall-clock time on random full-rank channels."""
    if duration_s <= 0:
        raise DomainError("duration must be positive")
    detect = get_detector(detector) if isinstance(detector, str) else detector
    rng = np.random.default_rng(seed)
    nr, nt = dims
    c = qam(order)
    H = (rng.standard_normal((batch, nr, nt)) + 1j * rng.standard_normal((batch, nr, nt))) / np.sqrt(2)
    s = rng.integers(0, order, (batch, nt))
    y = np.einsum("bij,bj->bi", H, c.points[s]) + _noise(rng, (batch, nr), 0.01)
    bits = 0
    t0 = time.perf_counter()
    while True:
        detect(H, y, c.points)
        bits += batch * nt * c.bits_per_symbol
        el = time.perf_counter() - t0
        if el >= duration_s:
            return bits / el
