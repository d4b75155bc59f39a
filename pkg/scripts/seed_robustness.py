"""Run the acceptance suite for several assembly seeds and compare verdicts.

Usage: python scripts/seed_robustness.py [--seeds 0 1] [--json out.json]
Exits nonzero if the pass/fail pattern differs between seeds.
"""
import argparse
import json
import sys

from vpb_spectra import acceptance
from vpb_spectra.config import load_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    p.add_argument("--config")
    p.add_argument("--json")
    args = p.parse_args()
    verdicts, measured = {}, {}
    for seed in args.seeds:
        cfg = load_config(args.config, seed=seed)
        checks = acceptance.run_all(cfg)
        print(f"seed {seed}:")
        for c in checks:
            print("  " + c.line())
        verdicts[seed] = [c.passed for c in checks]
        measured[seed] = {c.number: c.measured for c in checks}
    same = len({tuple(v) for v in verdicts.values()}) == 1
    print("identical verdicts across seeds:", same)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"verdicts": verdicts, "measured": measured, "identical": same}, fh,
                      indent=2, default=str)
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
