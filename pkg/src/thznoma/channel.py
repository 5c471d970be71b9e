"""THz physical-layer primitives.

Path loss, molecular absorption, subarray (SA) gain versus beamwidth, steering
phases under spherical or planar wavefronts, and synthesis of SA-level MIMO
channel matrices.  Channel matrices are taken after fixed analog
beamforming: each SA is one port and its element-level pattern is folded
into the gain terms.
"""

from dataclasses import dataclass, field
from enum import Enum
import csv
import math

import numpy as np

from .errors import DomainError

SPEED_OF_LIGHT = 2.998e8
"Speed of light in m/s."

# Square degrees on the full sphere, rounded as in the usual directivity rule.
SPHERE_SQ_DEG = 41253.0

DEFAULT_ABSORPTION_PER_M = 0.0033
DEFAULT_NLOS_LOSS_DB = 15.0


@dataclass(frozen=True)
class CarrierSpec:
    frequency_hz: float
    bandwidth_hz: float = 0.0
    absorption_coefficient_per_m: float = DEFAULT_ABSORPTION_PER_M

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise DomainError("frequency_hz must be positive")
        if self.bandwidth_hz < 0:
            raise DomainError("bandwidth_hz must be nonnegative")
        if self.absorption_coefficient_per_m < 0:
            raise DomainError("absorption coefficient must be nonnegative")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def band_edge_hz(self) -> float:
        """Highest subcarrier frequency, used as the squint worst case."""
        return self.frequency_hz + self.bandwidth_hz / 2.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Positions of the SA phase centres of one array-of-subarrays."""

    sa_positions: np.ndarray
    reference_point: np.ndarray
    elements_per_sa: int = 1

    def __post_init__(self):
        pos = np.array(self.sa_positions, dtype=float).reshape(-1, 3)
        ref = np.array(self.reference_point, dtype=float).reshape(3)
        if pos.shape[0] < 1:
            raise DomainError("an array needs at least one SA")
        if self.elements_per_sa < 1:
            raise DomainError("elements_per_sa must be positive")
        if pos.shape[0] > 1:
            gaps = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            np.fill_diagonal(gaps, np.inf)
            if gaps.min() <= 0:
                raise DomainError("SA positions must be pairwise distinct")
        pos.setflags(write=False)
        ref.setflags(write=False)
        object.__setattr__(self, "sa_positions", pos)
        object.__setattr__(self, "reference_point", ref)

    @property
    def num_sas(self) -> int:
        return self.sa_positions.shape[0]

    @property
    def aperture_m(self) -> float:
        if self.num_sas == 1:
            return 0.0
        d = self.sa_positions[:, None, :] - self.sa_positions[None, :, :]
        return float(np.linalg.norm(d, axis=-1).max())

    @classmethod
    def ula(cls, num_sas, spacing_m, center=(0.0, 0.0, 0.0), axis=(0.0, 1.0, 0.0), elements_per_sa=1):
        """Uniform linear SA array centred on ``center`` along ``axis``."""
        if num_sas < 1:
            raise DomainError("num_sas must be positive")
        if num_sas > 1 and not spacing_m > 0:
            raise DomainError("spacing must be positive")
        center = np.asarray(center, dtype=float)
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        offsets = (np.arange(num_sas) - (num_sas - 1) / 2.0) * spacing_m
        return cls(center + offsets[:, None] * axis, center, elements_per_sa)


@dataclass(frozen=True)
class BeamSpec:
    azimuth_spread_deg: float
    elevation_spread_deg: float
    gain_dbi: float
    boresight_azimuth_deg: float = 0.0

    def __post_init__(self):
        if not 0 < self.azimuth_spread_deg <= 360:
            raise DomainError("azimuth spread must lie in (0, 360]")
        if not 0 < self.elevation_spread_deg <= 180:
            raise DomainError("elevation spread must lie in (0, 180]")
        expected = gain_from_beamwidth(self.azimuth_spread_deg, self.elevation_spread_deg)
        if abs(expected - self.gain_dbi) > 1e-9:
            raise DomainError("gain_dbi inconsistent with the spreads")

    @classmethod
    def from_spreads(cls, azimuth_spread_deg, elevation_spread_deg, boresight_azimuth_deg=0.0):
        return cls(
            azimuth_spread_deg,
            elevation_spread_deg,
            gain_from_beamwidth(azimuth_spread_deg, elevation_spread_deg),
            boresight_azimuth_deg,
        )


@dataclass(frozen=True)
class Path:
    """One propagation path.

    ``scatterer`` is None for the LoS path; otherwise the path bounces once
    off the given 3D point and suffers ``extra_loss_db`` plus ``phase_rad``.
    """

    scatterer: np.ndarray | None = None
    extra_loss_db: float = 0.0
    phase_rad: float = 0.0

    @property
    def is_los(self) -> bool:
        return self.scatterer is None

    @classmethod
    def nlos(cls, scatterer, extra_loss_db=DEFAULT_NLOS_LOSS_DB, phase_rad=0.0):
        return cls(np.asarray(scatterer, dtype=float).reshape(3), extra_loss_db, phase_rad)


LOS = Path()


class Wavefront(str, Enum):
    SPHERICAL = "spherical"
    PLANAR = "planar"


@dataclass(frozen=True)
class ModelFlags:
    wavefront: Wavefront = Wavefront.SPHERICAL
    squint_frequency_hz: float | None = None


class ChannelEnsembleKind(str, Enum):
    GAUSSIAN_IID = "gaussian"
    THZ_CORRELATED = "thz_correlated"
    THZ_ORTHOGONAL = "thz_orthogonal"


@dataclass(frozen=True)
class ChannelRealization:
    matrix: np.ndarray
    carrier: CarrierSpec | None = None
    tx_geometry: ArrayGeometry | None = None
    rx_geometry: ArrayGeometry | None = None
    path_inventory: tuple = ()
    model_flags: ModelFlags = field(default_factory=ModelFlags)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise DomainError("channel matrix must be 2-D")
        if self.rx_geometry is not None and m.shape[0] != self.rx_geometry.num_sas:
            raise DomainError("row count must match the receive SAs")
        if self.tx_geometry is not None and m.shape[1] != self.tx_geometry.num_sas:
            raise DomainError("column count must match the transmit SAs")
        if not np.all(np.isfinite(m)):
            raise DomainError("channel entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape


# ---------------------------------------------------------------------------
# Scalar link-budget primitives
# ---------------------------------------------------------------------------

def fspl_db(distance_m, frequency_hz):
    """Free-space path loss 20 log10(4 pi d f / c) in dB."""
    d = np.asarray(distance_m, dtype=float)
    f = np.asarray(frequency_hz, dtype=float)
    if np.any(d <= 0) or np.any(f <= 0):
        raise DomainError("distance and frequency must be positive")
    out = 20.0 * np.log10(4.0 * np.pi * d * f / SPEED_OF_LIGHT)
    return float(out) if out.ndim == 0 else out


def free_space_amplitude(distance_m, frequency_hz):
    """Amplitude gain c / (4 pi f d) of an isotropic free-space link."""
    d = np.asarray(distance_m, dtype=float)
    f = np.asarray(frequency_hz, dtype=float)
    if np.any(d <= 0) or np.any(f <= 0):
        raise DomainError("distance and frequency must be positive")
    out = SPEED_OF_LIGHT / (4.0 * np.pi * f * d)
    return float(out) if out.ndim == 0 else out


def absorption_amplitude(distance_m, carrier):
    """Amplitude factor exp(-K d / 2) of molecular absorption.

    ``carrier`` may be a CarrierSpec or a bare coefficient in 1/m.
    """
    k = carrier.absorption_coefficient_per_m if isinstance(carrier, CarrierSpec) else float(carrier)
    d = np.asarray(distance_m, dtype=float)
    if np.any(d < 0):
        raise DomainError("distance must be nonnegative")
    out = np.exp(-k * d / 2.0)
    return float(out) if out.ndim == 0 else out


def window_absorption_coefficient(frequency_hz, center_hz, window_hz, k_center, k_edge):
    """Parabolic absorption profile across a transmission window.

    Equals ``k_center`` at the window centre and ``k_edge`` at both edges,
    so sub-bands near the centre see less path loss than the sides.
    """
    if window_hz <= 0:
        raise DomainError("window width must be positive")
    x = (np.asarray(frequency_hz, dtype=float) - center_hz) / (window_hz / 2.0)
    return k_center + (k_edge - k_center) * x**2


def channel_power_gain(distance_m, frequency_hz, tx_gain_dbi=0.0, rx_gain_dbi=0.0,
                       absorption_per_m=0.0, is_los=True, nlos_loss_db=DEFAULT_NLOS_LOSS_DB):
    """Linear power gain used by the system-level rate models.

    g = 10^((Gt+Gr)/10) (c / 4 pi f d)^2 exp(-K d), with an extra
    ``nlos_loss_db`` for blocked users.
    """
    d = np.asarray(distance_m, dtype=float)
    g = 10.0 ** ((tx_gain_dbi + rx_gain_dbi) / 10.0) * free_space_amplitude(d, frequency_hz) ** 2
    g = g * np.exp(-np.asarray(absorption_per_m) * d)
    g = np.where(np.asarray(is_los), g, g * 10.0 ** (-nlos_loss_db / 10.0))
    return float(g) if np.ndim(g) == 0 else g


# ---------------------------------------------------------------------------
# Beam gain versus beamwidth
# ---------------------------------------------------------------------------

def gain_from_beamwidth(azimuth_spread_deg, elevation_spread_deg):
    """SA gain in dBi of a beam with the given half-power spreads (degrees)."""
    az = np.asarray(azimuth_spread_deg, dtype=float)
    el = np.asarray(elevation_spread_deg, dtype=float)
    if np.any(az <= 0) or np.any(el <= 0) or np.any(az > 360) or np.any(el > 360):
        raise DomainError("angular spreads must lie in (0, 360] degrees")
    out = 10.0 * np.log10(SPHERE_SQ_DEG / (az * el))
    return float(out) if out.ndim == 0 else out


def beamwidth_from_gain(gain_dbi, aspect_ratio=1.0):
    """Spreads (azimuth, elevation) in degrees giving ``gain_dbi``.

    The elevation spread is ``aspect_ratio`` times the azimuth spread.
    """
    if not aspect_ratio > 0:
        raise DomainError("aspect_ratio must be positive")
    product = SPHERE_SQ_DEG / 10.0 ** (gain_dbi / 10.0)
    az = math.sqrt(product / aspect_ratio)
    el = aspect_ratio * az
    if az > 360 or el > 360:
        raise DomainError(f"{gain_dbi} dBi needs spreads wider than 360 degrees")
    return az, el


def cbf_widen(active_elements, total_elements):
    """Gain change and beamwidth scale when only some elements stay active.

    Returns ``(gain_delta_db, beamwidth_scale)``; the scale applies to both
    spreads, so the gain-beamwidth product rule still holds.
    """
    if active_elements < 1 or total_elements < 1:
        raise DomainError("element counts must be positive")
    if active_elements > total_elements:
        raise DomainError("cannot activate more elements than exist")
    ratio = active_elements / total_elements
    return 10.0 * math.log10(ratio), math.sqrt(1.0 / ratio)


def multibeam_split(gain_dbi, num_beams):
    """Per-beam gain when one RF chain radiates ``num_beams`` beams."""
    if num_beams < 1:
        raise DomainError("num_beams must be at least 1")
    return gain_dbi - 10.0 * math.log10(num_beams)


# ---------------------------------------------------------------------------
# Steering phases and channel synthesis
# ---------------------------------------------------------------------------

def _excess_distance(v, w, wavefront):
    """Return ||v + w|| - ||v|| (spherical) or its first-order form (planar).

    ``v`` is the reference separation, ``w`` the element offsets (..., 3).
    The spherical form is evaluated without cancellation so that it stays
    accurate when ||v|| is many orders larger than ||w||.
    """
    nv = np.linalg.norm(v)
    vw = w @ v
    if wavefront == Wavefront.PLANAR:
        return vw / nv
    ww = np.einsum("...i,...i->...", w, w)
    nvw = np.linalg.norm(v + w, axis=-1)
    return (2.0 * vw + ww) / (nvw + nv)


def steering_phase(element_position, source_position, frequency_hz,
                   wavefront=Wavefront.SPHERICAL, reference_point=None):
    """Unit-modulus phase term of a wave from ``source_position`` at an element.

    Spherical: exp(-j 2 pi f ||source - element|| / c).  Planar: the distance
    is linearised around ``reference_point`` along the source direction.
    """
    e = np.asarray(element_position, dtype=float)
    s = np.asarray(source_position, dtype=float)
    ref = e if reference_point is None else np.asarray(reference_point, dtype=float)
    wavefront = Wavefront(wavefront)
    if wavefront == Wavefront.SPHERICAL and np.linalg.norm(s - e) == 0:
        raise DomainError("source and element coincide")
    v = ref - s
    if np.linalg.norm(v) == 0:
        raise DomainError("source and reference point coincide")
    k = 2.0 * np.pi * frequency_hz / SPEED_OF_LIGHT
    delta = _excess_distance(v, e - ref, wavefront)
    return np.exp(-1j * (k * np.linalg.norm(v) % (2.0 * np.pi))) * np.exp(-1j * k * delta)


def _segment(far_point, geometry, wavefront):
    """Distances from each SA of ``geometry`` to ``far_point``, split as ref + excess."""
    v = geometry.reference_point - far_point
    d_ref = float(np.linalg.norm(v))
    if d_ref == 0:
        raise DomainError("zero-distance path")
    return d_ref, _excess_distance(v, geometry.sa_positions - geometry.reference_point, wavefront)


def _path_distances(tx, rx, path, wavefront):
    """(reference distance, excess matrix rx x tx) for one path."""
    if path.is_los:
        v = rx.reference_point - tx.reference_point
        d_ref = float(np.linalg.norm(v))
        if d_ref == 0:
            raise DomainError("zero-distance path")
        w = ((rx.sa_positions - rx.reference_point)[:, None, :]
             - (tx.sa_positions - tx.reference_point)[None, :, :])
        return d_ref, _excess_distance(v, w, wavefront)
    d_t, ex_t = _segment(path.scatterer, tx, wavefront)
    d_r, ex_r = _segment(path.scatterer, rx, wavefront)
    return d_t + d_r, ex_r[:, None] + ex_t[None, :]


def synth_channel(tx, rx, carrier, tx_gain_dbi=0.0, rx_gain_dbi=0.0, paths=(LOS,),
                  wavefront=Wavefront.SPHERICAL, squint_frequency_hz=None,
                  calibration_frequency_hz=None):
    """SA-level channel matrix (rx SAs x tx SAs) as a sum of paths.

    Each path contributes 10^((Gt+Gr)/20) (c / 4 pi f d) exp(-K d / 2)
    exp(-j 2 pi f_eff d / c) with d the SA-to-SA path length.  Amplitudes use
    the carrier frequency; phases use ``squint_frequency_hz`` when given.

    ``calibration_frequency_hz`` overrides the frequency of the common phase
    of each path (the phase between the two array reference points), which
    models an estimator that measures that phase and only relies on the
    geometric model for the spread across sub-arrays.
    """
    paths = list(paths)
    if not paths:
        raise DomainError("at least one path is required")
    wavefront = Wavefront(wavefront)
    f_eff = carrier.frequency_hz if squint_frequency_hz is None else float(squint_frequency_hz)
    k = 2.0 * np.pi * f_eff / SPEED_OF_LIGHT
    f_cal = f_eff if calibration_frequency_hz is None else float(calibration_frequency_hz)
    k_cal = 2.0 * np.pi * f_cal / SPEED_OF_LIGHT
    gain_amp = 10.0 ** ((tx_gain_dbi + rx_gain_dbi) / 20.0)
    H = np.zeros((rx.num_sas, tx.num_sas), dtype=complex)
    inventory = []
    for p in paths:
        d_ref, excess = _path_distances(tx, rx, p, wavefront)
        d = d_ref + excess
        if np.any(d <= 0):
            raise DomainError("zero-distance path")
        amp = (gain_amp * free_space_amplitude(d, carrier.frequency_hz)
               * absorption_amplitude(d, carrier) * 10.0 ** (-p.extra_loss_db / 20.0))
        phase = np.exp(-1j * ((k_cal * d_ref) % (2.0 * np.pi) - p.phase_rad)) * np.exp(-1j * k * excess)
        H += amp * phase
        ref_amp = (gain_amp * free_space_amplitude(d_ref, carrier.frequency_hz)
                   * absorption_amplitude(d_ref, carrier) * 10.0 ** (-p.extra_loss_db / 20.0))
        inventory.append((d_ref, float(ref_amp), p.is_los))
    return ChannelRealization(H, carrier, tx, rx, tuple(inventory), ModelFlags(wavefront, f_eff))


def _as_matrix(h):
    return h.matrix if isinstance(h, ChannelRealization) else np.asarray(h, dtype=complex)


def channel_correlation(h1, h2):
    """|<vec H1, vec H2>| / (||H1||_F ||H2||_F), in [0, 1]."""
    a = _as_matrix(h1)
    b = _as_matrix(h2)
    if a.shape != b.shape:
        raise DomainError("channels must have equal dimensions")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DomainError("zero-norm channel")
    return float(min(1.0, abs(np.vdot(a, b)) / (na * nb)))


def orthogonal_sa_spacing(link_distance_m, frequency_hz, num_sas):
    """SA spacing making a broadside ULA-to-ULA LoS channel orthogonal.

    Matched spacing at both ends with spacing^2 = lambda d / N.
    """
    if link_distance_m <= 0 or frequency_hz <= 0 or num_sas < 1:
        raise DomainError("all arguments must be positive")
    return math.sqrt(SPEED_OF_LIGHT * link_distance_m / (frequency_hz * num_sas))


def channel_to_csv(h, fh):
    """Write a channel matrix as ``row,col,re,im`` lines (with a header)."""
    m = _as_matrix(h)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["row", "col", "re", "im"])
    for (i, j), v in np.ndenumerate(m):
        w.writerow([i, j, repr(float(v.real)), repr(float(v.imag))])


def channel_from_csv(fh):
    rows = list(csv.DictReader(fh))
    if not rows:
        raise DomainError("empty channel dump")
    nr = 1 + max(int(r["row"]) for r in rows)
    nc = 1 + max(int(r["col"]) for r in rows)
    m = np.zeros((nr, nc), dtype=complex)
    for r in rows:
        m[int(r["row"]), int(r["col"])] = complex(float(r["re"]), float(r["im"]))
    return m


def condition_number(h):
    s = np.linalg.svd(_as_matrix(h), compute_uv=False)
    return float(np.inf) if s[-1] == 0 else float(s[0] / s[-1])


def orthogonality_defect(h):
    """||H^H H - (||H||_F^2 / N) I||_F / ||H||_F^2 for an M x N channel."""
    m = _as_matrix(h)
    gram = m.conj().T @ m
    fro2 = np.linalg.norm(m) ** 2
    n = m.shape[1]
    return float(np.linalg.norm(gram - fro2 / n * np.eye(n)) / fro2)


# ---------------------------------------------------------------------------
# Channel ensembles for the multi-user precoding comparison
# ---------------------------------------------------------------------------

# Compact SA pitch (8x8 elements at half wavelength, 300 GHz) used where the
# arrays are not spatially tuned.
COMPACT_SA_SPACING_M = 4e-3


def _facing_ula(num_sas, spacing, position, toward):
    """ULA centred at ``position`` whose broadside points at ``toward``."""
    direction = np.asarray(toward, float) - np.asarray(position, float)
    direction[2] = 0.0
    axis = np.array([-direction[1], direction[0], 0.0])
    return ArrayGeometry.ula(num_sas, spacing, position, axis)


def _polar(r, az_deg):
    a = np.deg2rad(az_deg)
    return np.array([r * np.cos(a), r * np.sin(a), 0.0])


def correlated_pair_geometry(n_rx, n_tx, rng, near_m=1.0, far_m=5.0,
                             beam_half_width_deg=15.0, max_offset_deg=0.05,
                             spacing_m=COMPACT_SA_SPACING_M):
    """BS array plus two co-directional users sharing ``n_rx`` receive SAs.

    The first ceil(n_rx/2) rows belong to the near user, the rest to the
    far one.  Both sit in one beam with a small angular offset.
    """
    tx = ArrayGeometry.ula(n_tx, spacing_m, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    az = rng.uniform(-beam_half_width_deg, beam_half_width_deg)
    offset = rng.uniform(-max_offset_deg, max_offset_deg)
    n_near = (n_rx + 1) // 2
    near = _facing_ula(n_near, spacing_m, _polar(near_m, az), tx.reference_point)
    parts = [near.sa_positions]
    if n_rx - n_near:
        far = _facing_ula(n_rx - n_near, spacing_m, _polar(far_m, az + offset), tx.reference_point)
        parts.append(far.sa_positions)
    pos = np.vstack(parts)
    rx = ArrayGeometry(pos, pos.mean(axis=0))
    return tx, rx


def orthogonal_geometry(n, frequency_hz, rng, min_distance_m=1.0, max_distance_m=5.0):
    """Facing matched ULAs at a random distance, spaced for orthogonality."""
    d = rng.uniform(min_distance_m, max_distance_m)
    spacing = orthogonal_sa_spacing(d, frequency_hz, n)
    tx = ArrayGeometry.ula(n, spacing, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    rx = ArrayGeometry.ula(n, spacing, (d, 0.0, 0.0), (0.0, 1.0, 0.0))
    return tx, rx


def gen_ensemble(kind, dims, carrier, rng):
    """Draw one channel of the requested ensemble with shape ``dims`` (rx, tx).

    GaussianIID entries are unit-variance circular complex normal.  The THz
    ensembles are LoS SA-level channels from ``synth_channel`` at the
    correlated two-user geometry or at orthogonally tuned SA spacing.
    """
    kind = ChannelEnsembleKind(kind)
    n_rx, n_tx = int(dims[0]), int(dims[1])
    if n_rx < 1 or n_tx < 1:
        raise DomainError("dims must be at least 1 x 1")
    if kind == ChannelEnsembleKind.GAUSSIAN_IID:
        h = (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx))) / np.sqrt(2.0)
        return ChannelRealization(h, carrier)
    if kind == ChannelEnsembleKind.THZ_CORRELATED:
        tx, rx = correlated_pair_geometry(n_rx, n_tx, rng)
        return synth_channel(tx, rx, carrier)
    if n_rx != n_tx:
        raise DomainError("orthogonal tuning needs a square channel")
    tx, rx = orthogonal_geometry(n_tx, carrier.frequency_hz, rng)
    return synth_channel(tx, rx, carrier)
