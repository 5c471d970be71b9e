import csv
import json
import os

import pytest

from thznoma.cli import main
from thznoma.config import SystemConfig, load_config
from thznoma.errors import ConfigError
from thznoma.experiments import run_command


def test_defaults_validate():
    cfg = load_config()
    assert cfg.seed == 2024
    assert list(cfg.fairness.snr.values()) == [40, 50, 60, 70, 80, 90, 100, 110, 120]


def test_yaml_and_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 7\nfairness:\n  drops: 3\n  snr:\n    min_db: 50\n")
    cfg = load_config(p, {"fairness.snr.max_db": 70})
    assert cfg.seed == 7 and cfg.fairness.drops == 3
    assert list(cfg.fairness.snr.values()) == [50, 60, 70]
    assert cfg.fairness.user_counts == [20, 50]


@pytest.mark.parametrize("text", [
    "bogus: 1\n",
    "fairness:\n  drops: -2\n",
    "fairness:\n  snr:\n    min_db: 100\n    max_db: 50\n",
    "ber:\n  detectors: [sphere]\n",
    "mulp:\n  trials: many\n",
    "- 1\n",
    "seed: [1\n",
])
def test_invalid_configs(tmp_path, text):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_digest_ignores_threads():
    a = load_config(overrides={"threads": 1})
    b = load_config(overrides={"threads": 8, "out_dir": "elsewhere"})
    c = load_config(overrides={"seed": 1})
    assert a.digest() == b.digest() != c.digest()
    assert isinstance(SystemConfig().to_dict(), dict)


def test_power_example_command(tmp_path):
    path, header, rows = run_command("power-example", load_config(), tmp_path)
    with open(path) as fh:
        table = list(csv.DictReader(fh))
    fixed = [float(r["power_mw"]) for r in table if r["scheme"] == "fixed_fraction"]
    assert fixed == pytest.approx([11.43, 5.71, 2.86], abs=0.01)
    man = json.loads((tmp_path / "power-example.manifest.json").read_text())
    assert man["config_sha256"] == load_config().digest()
    assert "power-example.csv" in man["outputs"]


def test_gain_map_command(tmp_path):
    _, header, rows = run_command("gain-map", load_config(), tmp_path)
    assert header == ["azimuth_spread_deg", "elevation_spread_deg", "gain_dbi"]
    g = {(a, e): v for a, e, v in rows}
    assert g[(30.0, 30.0)] == pytest.approx(16.61, abs=0.01)


def test_bench_command(tmp_path):
    cfg = load_config(overrides={"bench.duration_s": 0.05, "bench.orders": [4]})
    _, _, rows = run_command("bench", cfg, tmp_path)
    assert {r[0] for r in rows} == {"zf", "nc", "lord"}
    assert all(r[3] > 0 for r in rows)


def test_cli_success_and_errors(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["power-example", "--out-dir", out]) == 0
    assert "11.43" in capsys.readouterr().out
    assert os.path.exists(os.path.join(out, "power-example.csv"))
    assert main(["mulp", "--snr-min", "10", "--snr-max", "5", "--out-dir", out]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert main(["gain-map", "--trials", "3", "--out-dir", out]) == 2
    assert main(["fairness", "--config", str(tmp_path / "missing.yaml")]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_cli_small_mulp(tmp_path):
    out = str(tmp_path / "m")
    assert main(["mulp", "--trials", "4", "--snr-min", "0", "--snr-max", "6", "--snr-step", "3",
                 "--out-dir", out, "--seed", "3"]) == 0
    with open(os.path.join(out, "mulp.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 2 * 3
    assert {r["trials"] for r in rows} == {"4"}
