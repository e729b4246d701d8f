"""Run every shipped config through its subcommand and collect the outputs under runs/."""
import argparse
import sys
from pathlib import Path

from phsplit.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
JOBS = [
    ("selftest", "selftest.cfg"),
    ("splitting", "splitting_cat.cfg"),
    ("bunching", "bunching_skew.cfg"),
    ("partial-derivative", "partial_perturbed.cfg"),
    ("holder", "holder_perturbed.cfg"),
    ("ddc", "ddc_cat.cfg"),
    ("param-derivative", "param_skew.cfg"),
    ("thmC-check", "thmC_cat.cfg"),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    status = 0
    for sub, cfg in JOBS:
        print(f"== {sub} ({cfg})")
        code = cli_main([sub, "--config", str(ROOT / "configs" / cfg), "--out", str(args.out / Path(cfg).stem),
                         "--threads", str(args.threads)])
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
