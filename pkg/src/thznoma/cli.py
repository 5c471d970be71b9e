"""Command-line entry point."""

import argparse
import sys

from .config import load_config
from .errors import ConfigError
from .experiments import COMMANDS, run_command

TRIAL_KEY = {"fairness": "fairness.drops", "ber": "ber.drops", "mulp": "mulp.trials"}
SNR_KEY = {"fairness": "fairness.snr", "ber": "ber.snr", "mulp": "mulp.snr"}


def build_parser():
    p = argparse.ArgumentParser(prog="thznoma", description="THz NOMA simulation experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, help="drops or channel draws for Monte Carlo commands")
    p.add_argument("--snr-min", type=float)
    p.add_argument("--snr-max", type=float)
    p.add_argument("--snr-step", type=float)
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int)
    return p


def overrides_from_args(args):
    ov = {}
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.threads is not None:
        ov["threads"] = args.threads
    if args.out_dir is not None:
        ov["out_dir"] = args.out_dir
    if args.trials is not None:
        if args.command not in TRIAL_KEY:
            raise ConfigError(f"--trials does not apply to {args.command}")
        ov[TRIAL_KEY[args.command]] = args.trials
    for flag, key in (("snr_min", "min_db"), ("snr_max", "max_db"), ("snr_step", "step_db")):
        v = getattr(args, flag)
        if v is None:
            continue
        if args.command not in SNR_KEY:
            raise ConfigError(f"--{flag.replace('_', '-')} does not apply to {args.command}")
        ov[f"{SNR_KEY[args.command]}.{key}"] = v
    return ov


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides_from_args(args))
        path, header, rows = run_command(args.command, cfg)
    except ConfigError as e:
        print(f"thznoma: configuration error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - report any runtime failure with a diagnostic
        print(f"thznoma: {args.command} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if args.command == "power-example":
        print(",".join(header))
        for r in rows:
            print(f"{r[0]},{r[1]},{r[2]:g},{r[3]:.2f},{r[4]:.1f}")
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
