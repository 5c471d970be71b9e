"""Cell geometry, user drops and beam partitioning."""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np

from .channel import BeamSpec, gain_from_beamwidth
from .errors import DomainError


@dataclass(frozen=True)
class CellSpec:
    radius_m: float = 10.0
    min_user_distance_m: float = 0.1
    bs_position: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius_m > 0:
            raise DomainError("cell radius must be positive")
        if not 0 <= self.min_user_distance_m < self.radius_m:
            raise DomainError("need 0 <= min_user_distance < radius")


@dataclass
class UserDrop:
    """Users in polar coordinates around the BS.

    Stored column-wise; ``users()`` yields per-user records.
    """

    ids: np.ndarray
    r_m: np.ndarray
    phi_deg: np.ndarray
    is_los: np.ndarray
    seed_record: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=int)
        self.r_m = np.asarray(self.r_m, dtype=float)
        self.phi_deg = np.asarray(self.phi_deg, dtype=float)
        self.is_los = np.asarray(self.is_los, dtype=bool)
        n = self.ids.size
        if not (self.r_m.size == self.phi_deg.size == self.is_los.size == n):
            raise DomainError("user columns must have equal length")
        if np.unique(self.ids).size != n:
            raise DomainError("user ids must be unique")

    def __len__(self):
        return self.ids.size

    def users(self):
        for i in range(len(self)):
            yield {"id": int(self.ids[i]), "r": float(self.r_m[i]),
                   "phi_deg": float(self.phi_deg[i]), "is_los": bool(self.is_los[i])}

    def positions_xy(self):
        a = np.deg2rad(self.phi_deg)
        return np.column_stack([self.r_m * np.cos(a), self.r_m * np.sin(a)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "r", "phi_deg", "is_los"])
        for u in self.users():
            w.writerow([u["id"], repr(u["r"]), repr(u["phi_deg"]), int(u["is_los"])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed_record=None):
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            [int(r["id"]) for r in rows],
            [float(r["r"]) for r in rows],
            [float(r["phi_deg"]) for r in rows],
            [bool(int(r["is_los"])) for r in rows],
            seed_record or {"source": "csv"},
        )


@dataclass(frozen=True)
class BeamPartition:
    beams: tuple
    beamwidth_deg: float
    assignment: dict = field(default_factory=dict)

    @property
    def num_beams(self) -> int:
        return len(self.beams)

    def sector(self, index):
        lo = index * self.beamwidth_deg
        return lo, min(lo + self.beamwidth_deg, 360.0)

    def members(self, index):
        return [uid for uid, b in self.assignment.items() if b == index]


def drop_users(cell, n, distribution="uniform_area", los_probability=1.0, rng=None, seed_record=None):
    """Drop ``n`` users uniformly in the cell annulus [min distance, radius].

    ``uniform_area`` gives density proportional to r; ``uniform_polar`` draws
    r uniformly.  Azimuths are uniform and LoS flags are Bernoulli.
    """
    if n < 1:
        raise DomainError("need at least one user")
    if not 0 <= los_probability <= 1:
        raise DomainError("los_probability must lie in [0, 1]")
    rng = np.random.default_rng() if rng is None else rng
    r0, r1 = cell.min_user_distance_m, cell.radius_m
    u = rng.random(n)
    if distribution == "uniform_area":
        r = np.sqrt(r0**2 + u * (r1**2 - r0**2))
    elif distribution == "uniform_polar":
        r = r0 + u * (r1 - r0)
    else:
        raise DomainError(f"unknown distribution {distribution!r}")
    phi = rng.uniform(0.0, 360.0, n)
    los = rng.random(n) < los_probability
    return UserDrop(np.arange(n), r, phi, los, seed_record or {})


def partition_beams(cell, beamwidth_deg, elevation_spread_deg=None):
    """Contiguous azimuth sectors from 0 degrees; the last one may be narrower."""
    if not beamwidth_deg > 0:
        raise DomainError("beamwidth must be positive")
    bw = min(float(beamwidth_deg), 360.0)
    n = math.ceil(360.0 / bw - 1e-9)
    el = bw if elevation_spread_deg is None else elevation_spread_deg
    el = min(el, 180.0)
    beams = tuple(
        BeamSpec(bw, el, gain_from_beamwidth(bw, el), i * bw + bw / 2.0)
        for i in range(n)
    )
    return BeamPartition(beams, bw)


def beam_index(phi_deg, beamwidth_deg, num_beams):
    """Sector index per azimuth; boundary azimuths go to the lower beam."""
    phi = np.mod(np.asarray(phi_deg, dtype=float), 360.0)
    idx = np.ceil(phi / beamwidth_deg).astype(int) - 1
    return np.clip(idx, 0, num_beams - 1)


def assign_users_to_beams(drop, partition):
    idx = beam_index(drop.phi_deg, partition.beamwidth_deg, partition.num_beams)
    assignment = {int(uid): int(b) for uid, b in zip(drop.ids, idx)}
    return BeamPartition(partition.beams, partition.beamwidth_deg, assignment)


def prob_k_users_in_beam(n, beamwidth_deg, k, trials, rng, chunk=100_000):
    """Monte Carlo P(exactly k of n azimuth-uniform users fall in one sector)."""
    if trials < 1:
        raise DomainError("trials must be positive")
    if not 0 <= k <= n:
        raise DomainError("need 0 <= k <= n")
    if n == 0:
        return 1.0
    frac = min(beamwidth_deg, 360.0)
    hits = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        phi = rng.uniform(0.0, 360.0, (m, n))
        hits += int(np.count_nonzero((phi < frac).sum(axis=1) == k))
        done += m
    return hits / trials
