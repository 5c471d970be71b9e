"""Experiment configuration: nested dataclasses loaded from YAML and validated."""

from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
import hashlib
import json

import numpy as np
import yaml

from .errors import ConfigError


@dataclass
class SnrGrid:
    min_db: float
    max_db: float
    step_db: float

    def values(self):
        n = int(np.floor((self.max_db - self.min_db) / self.step_db + 1e-9)) + 1
        return np.round(self.min_db + self.step_db * np.arange(n), 10)

    def validate(self, where):
        if not self.step_db > 0:
            raise ConfigError(f"{where}: snr step must be positive")
        if self.max_db < self.min_db:
            raise ConfigError(f"{where}: empty snr grid (max < min)")


@dataclass
class CellConfig:
    radius_m: float = 10.0
    min_user_distance_m: float = 0.1


@dataclass
class CarrierConfig:
    center_hz: float = 300e9
    window_hz: float = 10e9
    subband_hz: float = 1e9
    absorption_center_per_m: float = 0.0033
    absorption_edge_per_m: float = 0.0033


@dataclass
class BeamConfig:
    gain_dbi: float = 16.61
    beamwidth_deg: float = 30.0


@dataclass
class PowerExampleConfig:
    budget_w: float = 0.02
    distances_m: list = field(default_factory=lambda: [7.0, 1.2, 1.0])
    frequency_hz: float = 300e9
    gains_dbi: float = 0.0
    fraction: float = 0.5
    ftpa_alpha: float = 1.0


@dataclass
class FairnessConfig:
    user_counts: list = field(default_factory=lambda: [20, 50])
    drops: int = 200
    snr: SnrGrid = field(default_factory=lambda: SnrGrid(40.0, 120.0, 10.0))
    total_power_w: float = 1.0
    strong_radius_m: float = 5.0
    power_rule: str = "ftpa"
    fraction: float = 0.5
    ftpa_alpha: float = 1.0
    power_grid_step: float = 0.05
    los_probability: float = 1.0
    nlos_loss_db: float = 15.0
    distribution: str = "uniform_area"
    max_exhaustive_users: int = 8


@dataclass
class BerConfig:
    detectors: list = field(default_factory=lambda: ["lord", "nc"])
    csi_models: list = field(default_factory=lambda: ["perfect", "ignore_squint", "ignore_swp", "ignore_both"])
    drops: int = 50
    frames_per_drop: int = 256
    snr: SnrGrid = field(default_factory=lambda: SnrGrid(0.0, 30.0, 5.0))
    bandwidth_hz: float = 10e9
    num_sas: int = 4
    sa_spacing_m: float = 4e-3
    strong_distance_m: float = 1.0
    weak_distance_m: float = 5.0
    num_scatterers: int = 10
    scatterer_loss_db: float = 15.0
    power_split: list = field(default_factory=lambda: [0.8, 0.2])
    weak_order: int = 4
    strong_order: int = 4


@dataclass
class MulpConfig:
    ensembles: list = field(default_factory=lambda: ["gaussian", "thz_correlated", "thz_orthogonal"])
    trials: int = 500
    snr: SnrGrid = field(default_factory=lambda: SnrGrid(0.0, 25.0, 1.0))
    dump_channels: int = 0      # channel matrices written per ensemble (first trials)


@dataclass
class GainMapConfig:
    min_deg: float = 5.0
    max_deg: float = 60.0
    step_deg: float = 5.0
    extra_deg: list = field(default_factory=lambda: [11.42])

    def spreads(self):
        base = np.arange(self.min_deg, self.max_deg + 1e-9, self.step_deg)
        return np.unique(np.round(np.concatenate([base, self.extra_deg]), 10))


@dataclass
class BenchConfig:
    detectors: list = field(default_factory=lambda: ["zf", "nc", "lord"])
    orders: list = field(default_factory=lambda: [4, 16])
    dims: list = field(default_factory=lambda: [4, 4])
    duration_s: float = 0.5


@dataclass
class SystemConfig:
    seed: int = 2024
    threads: int = 1
    out_dir: str = "results"
    cell: CellConfig = field(default_factory=CellConfig)
    carrier: CarrierConfig = field(default_factory=CarrierConfig)
    beams: BeamConfig = field(default_factory=BeamConfig)
    power_example: PowerExampleConfig = field(default_factory=PowerExampleConfig)
    fairness: FairnessConfig = field(default_factory=FairnessConfig)
    ber: BerConfig = field(default_factory=BerConfig)
    mulp: MulpConfig = field(default_factory=MulpConfig)
    gain_map: GainMapConfig = field(default_factory=GainMapConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """sha256 of the canonical JSON form, ignoring threads and out_dir."""
        d = self.to_dict()
        d.pop("threads")
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self):
        _validate(self)
        return self


def _coerce(value, default, where):
    if is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return _update(default, value, where)
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(default, list):
            if not isinstance(value, list):
                raise TypeError
            return list(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot use {value!r} (expected {type(default).__name__})") from None
    return value


def _update(obj, data, where="config"):
    names = {f.name for f in fields(obj)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    updates = {}
    for k, v in data.items():
        updates[k] = _coerce(v, getattr(obj, k), f"{where}.{k}")
    return replace(obj, **updates)


def _validate(cfg: SystemConfig):
    def positive(where, *values):
        for v in values:
            if not (isinstance(v, (int, float)) and v > 0 and np.isfinite(v)):
                raise ConfigError(f"{where}: values must be positive, got {v!r}")

    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    positive("cell", cfg.cell.radius_m)
    if not 0 <= cfg.cell.min_user_distance_m < cfg.cell.radius_m:
        raise ConfigError("cell: need 0 <= min_user_distance_m < radius_m")
    c = cfg.carrier
    positive("carrier", c.center_hz, c.window_hz, c.subband_hz)
    if c.subband_hz > c.window_hz:
        raise ConfigError("carrier: sub-band wider than the window")
    if c.absorption_center_per_m < 0 or c.absorption_edge_per_m < 0:
        raise ConfigError("carrier: absorption must be nonnegative")
    positive("beams", cfg.beams.beamwidth_deg)
    pe = cfg.power_example
    positive("power_example", pe.budget_w, pe.frequency_hz, *pe.distances_m)
    if not 0 < pe.fraction < 1:
        raise ConfigError("power_example.fraction must lie in (0, 1)")
    if pe.ftpa_alpha < 0:
        raise ConfigError("power_example.ftpa_alpha must be nonnegative")
    f = cfg.fairness
    positive("fairness", f.drops, f.total_power_w, f.strong_radius_m, f.power_grid_step, *f.user_counts)
    if not f.user_counts:
        raise ConfigError("fairness.user_counts must not be empty")
    f.snr.validate("fairness")
    if f.power_rule not in ("ftpa", "fixed"):
        raise ConfigError("fairness.power_rule must be 'ftpa' or 'fixed'")
    if f.strong_radius_m >= cfg.cell.radius_m:
        raise ConfigError("fairness.strong_radius_m must be below the cell radius")
    if not 0 <= f.los_probability <= 1:
        raise ConfigError("fairness.los_probability must lie in [0, 1]")
    if not 0 < f.power_grid_step < 0.5:
        raise ConfigError("fairness.power_grid_step must lie in (0, 0.5)")
    b = cfg.ber
    positive("ber", b.drops, b.frames_per_drop, b.num_sas, b.sa_spacing_m,
             b.strong_distance_m, b.weak_distance_m)
    b.snr.validate("ber")
    if b.bandwidth_hz < 0:
        raise ConfigError("ber.bandwidth_hz must be nonnegative")
    if len(b.power_split) != 2 or min(b.power_split) < 0 or b.power_split[0] < b.power_split[1]:
        raise ConfigError("ber.power_split must be [p_weak, p_strong] with p_weak >= p_strong >= 0")
    unknown = set(b.detectors) - {"ml", "zf", "nc", "lord"}
    if unknown or not b.detectors:
        raise ConfigError(f"ber.detectors: unknown or empty {sorted(unknown)}")
    unknown = set(b.csi_models) - {"perfect", "ignore_squint", "ignore_swp", "ignore_both"}
    if unknown or not b.csi_models:
        raise ConfigError(f"ber.csi_models: unknown or empty {sorted(unknown)}")
    m = cfg.mulp
    positive("mulp", m.trials)
    if not 0 <= m.dump_channels <= m.trials:
        raise ConfigError("mulp.dump_channels must lie in [0, trials]")
    m.snr.validate("mulp")
    if len(m.snr.values()) < 2:
        raise ConfigError("mulp: need at least two SNR points")
    unknown = set(m.ensembles) - {"gaussian", "thz_correlated", "thz_orthogonal"}
    if unknown or not m.ensembles:
        raise ConfigError(f"mulp.ensembles: unknown or empty {sorted(unknown)}")
    g = cfg.gain_map
    positive("gain_map", g.min_deg, g.max_deg, g.step_deg, *g.extra_deg)
    if g.max_deg > 180 or any(x > 180 for x in g.extra_deg):
        raise ConfigError("gain_map: spreads above 180 degrees")
    positive("bench", cfg.bench.duration_s, *cfg.bench.dims, *cfg.bench.orders)


def load_config(path=None, overrides=None) -> SystemConfig:
    """Defaults, then the YAML file (if any), then dotted-key overrides; validated."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML in {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    for key, value in (overrides or {}).items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return _update(SystemConfig(), data).validate()
