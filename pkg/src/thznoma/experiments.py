"""Experiment commands: build inputs from a SystemConfig, run, write CSV and manifest."""

from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
import csv
import hashlib
import io
import json
import os
import platform
import time

import numpy as np

from . import __version__
from .channel import channel_power_gain, channel_to_csv, gain_from_beamwidth
from .config import SystemConfig
from .fairness import SCHEMES, FairnessSetup, run_fairness
from .geometry import CellSpec
from .link import LinkSetup, measure_detector_throughput, run_ber_experiment
from .mac import (
    allocate_power_fixed_fraction,
    allocate_power_ftpa,
    receive_power_dbm,
)
from .mulp import draw_two_user_channel, run_mulp_experiment
from .rng import stream


@contextmanager
def worker_map(threads):
    """Ordered map over a process pool (or the builtin map for one worker)."""
    if threads <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=threads) as ex:
        def pmap(fn, items):
            items = list(items)
            chunk = max(1, len(items) // (threads * 4))
            return ex.map(fn, items, chunksize=chunk)
        yield pmap


def fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Commands: each returns (header, rows)
# ---------------------------------------------------------------------------

def cmd_power_example(cfg: SystemConfig):
    pe = cfg.power_example
    d = np.asarray(pe.distances_m, dtype=float)
    order = np.argsort(-d, kind="stable")            # weakest (farthest) first
    fixed = np.empty_like(d)
    fixed[order] = allocate_power_fixed_fraction(pe.budget_w, pe.fraction, len(d))
    gains = channel_power_gain(d, pe.frequency_hz)
    ftpa = allocate_power_ftpa(pe.budget_w, np.atleast_1d(gains), pe.ftpa_alpha)
    rows = []
    for scheme, p in (("fixed_fraction", fixed), ("ftpa", ftpa)):
        for i in range(len(d)):
            rows.append((scheme, i, float(d[i]), float(p[i] * 1e3),
                         float(receive_power_dbm(p[i], d[i], pe.frequency_hz, pe.gains_dbi))))
    return ["scheme", "user", "distance_m", "power_mw", "receive_power_dbm"], rows


def fairness_setup(cfg: SystemConfig) -> FairnessSetup:
    f, c = cfg.fairness, cfg.carrier
    grid = tuple(np.round(np.arange(f.power_grid_step, 1.0 - 1e-9, f.power_grid_step), 10))
    return FairnessSetup(
        cell=CellSpec(cfg.cell.radius_m, cfg.cell.min_user_distance_m),
        beamwidth_deg=cfg.beams.beamwidth_deg,
        carrier_hz=c.center_hz, window_hz=c.window_hz, subband_hz=c.subband_hz,
        tx_gain_dbi=cfg.beams.gain_dbi, rx_gain_dbi=cfg.beams.gain_dbi,
        absorption_center_per_m=c.absorption_center_per_m,
        absorption_edge_per_m=c.absorption_edge_per_m,
        total_power_w=f.total_power_w, strong_radius_m=f.strong_radius_m,
        power_rule=f.power_rule, fraction=f.fraction, ftpa_alpha=f.ftpa_alpha,
        power_grid=grid, los_probability=f.los_probability, nlos_loss_db=f.nlos_loss_db,
        distribution=f.distribution, max_exhaustive_users=f.max_exhaustive_users,
    )


def cmd_fairness(cfg: SystemConfig, mapper=map):
    snr = cfg.fairness.snr.values()
    runs = run_fairness(fairness_setup(cfg), cfg.fairness.user_counts, snr,
                        cfg.fairness.drops, cfg.seed, mapper)
    rows = []
    for n, run in runs.items():
        ff, sr = run.mean_fairness(), run.mean_sum_rate()
        for k, scheme in enumerate(SCHEMES):
            for j, s in enumerate(snr):
                rows.append((scheme, n, float(s), float(ff[k, j]), float(sr[k, j])))
    return ["scheme", "n_users", "snr_db", "overall_ff", "mean_sum_rate_bps"], rows


def link_setup(cfg: SystemConfig) -> LinkSetup:
    b = cfg.ber
    return LinkSetup(
        carrier_hz=cfg.carrier.center_hz, bandwidth_hz=b.bandwidth_hz, num_sas=b.num_sas,
        sa_spacing_m=b.sa_spacing_m, strong_distance_m=b.strong_distance_m,
        weak_distance_m=b.weak_distance_m, beam_half_width_deg=cfg.beams.beamwidth_deg / 2.0,
        num_scatterers=b.num_scatterers, scatterer_loss_db=b.scatterer_loss_db,
        absorption_per_m=cfg.carrier.absorption_center_per_m,
        power_split=tuple(float(x) / sum(b.power_split) for x in b.power_split),
        weak_order=b.weak_order, strong_order=b.strong_order, frames_per_drop=b.frames_per_drop,
    )


def cmd_ber(cfg: SystemConfig, mapper=map):
    b = cfg.ber
    stats = run_ber_experiment(link_setup(cfg), b.detectors, b.csi_models, b.snr.values(),
                               b.drops, cfg.seed, mapper)
    rows = [(s.detector, s.csi_model, s.user_role, s.snr_db, s.bits, s.errors, s.ber, s.ci_halfwidth)
            for s in stats]
    return ["detector", "csi_model", "user_role", "snr_db", "bits", "errors", "ber", "ci_halfwidth"], rows


def cmd_mulp(cfg: SystemConfig, mapper=map):
    m = cfg.mulp
    curve = run_mulp_experiment(m.snr.values(), m.ensembles, m.trials, cfg.seed, mapper)
    rows = []
    for (ens, scheme), rates in curve.mean_rate.items():
        slope = curve.slopes[(ens, scheme)]
        for s, r in zip(curve.snr_db, rates):
            rows.append((ens, scheme, float(s), float(r), curve.trials, slope))
    return ["ensemble", "scheme", "snr_db", "mean_sum_rate_bps_hz", "trials", "slope_top_octave"], rows


def dump_mulp_channels(cfg: SystemConfig, out_dir):
    """Write the first ``mulp.dump_channels`` channels of each ensemble as row,col,re,im CSVs."""
    paths = []
    for ens in cfg.mulp.ensembles:
        for t in range(cfg.mulp.dump_channels):
            H = draw_two_user_channel(ens, stream(cfg.seed, "mulp", ens, t))
            path = os.path.join(out_dir, f"mulp_channel_{ens}_{t}.csv")
            with open(path, "w", newline="") as fh:
                channel_to_csv(H, fh)
            paths.append(path)
    return paths


def cmd_gain_map(cfg: SystemConfig):
    spreads = cfg.gain_map.spreads()
    rows = [(float(a), float(e), float(gain_from_beamwidth(a, e))) for a in spreads for e in spreads]
    return ["azimuth_spread_deg", "elevation_spread_deg", "gain_dbi"], rows


def cmd_bench(cfg: SystemConfig):
    b = cfg.bench
    dims = tuple(int(x) for x in b.dims)
    rows = []
    for det in b.detectors:
        for order in b.orders:
            bps = measure_detector_throughput(det, dims, int(order), b.duration_s)
            rows.append((det, f"{dims[0]}x{dims[1]}", int(order), bps))
    return ["detector", "dims", "order", "bits_per_second"], rows


NOTES = {
    "fairness": "snr_db = total BS power / noise power over the whole window",
    "ber": "snr_db = E||x||^2 * mean |H_weak|^2 / noise variance per receive SA; common noise for both users",
    "mulp": "snr_db = total transmit power / noise variance; THz channels scaled to ||H||_F^2 = rows * cols",
}

COMMANDS = {
    "power-example": (cmd_power_example, False),
    "fairness": (cmd_fairness, True),
    "ber": (cmd_ber, True),
    "mulp": (cmd_mulp, True),
    "gain-map": (cmd_gain_map, False),
    "bench": (cmd_bench, False),
}


def run_command(name, cfg: SystemConfig, out_dir=None):
    """Run one command, write ``<name>.csv`` and ``<name>.manifest.json``; return the CSV path."""
    fn, parallel = COMMANDS[name]
    out_dir = cfg.out_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    if parallel:
        with worker_map(cfg.threads) as mapper:
            header, rows = fn(cfg, mapper)
    else:
        header, rows = fn(cfg)
    elapsed = time.perf_counter() - t0
    text = csv_text(header, rows)
    path = os.path.join(out_dir, f"{name}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(text)
    outputs = {os.path.basename(path): hashlib.sha256(text.encode()).hexdigest()}
    if name == "mulp":
        for p in dump_mulp_channels(cfg, out_dir):
            with open(p, "rb") as fh:
                outputs[os.path.basename(p)] = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "command": name,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "outputs": outputs,
        "wall_clock_s": round(elapsed, 3),
    }
    if name in NOTES:
        manifest["snr_definition"] = NOTES[name]
    with open(os.path.join(out_dir, f"{name}.manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path, header, rows
