"""Run every experiment config under configs/ and write the outputs to out/.

Usage: python scripts/run_configs.py [--only KIND ...]
"""

import argparse
import json
from pathlib import Path

from ranksel import cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--only", nargs="*", choices=cli.KINDS)
    args = parser.parse_args()
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        cfg = cli.load_config(path)
        kind = cfg["experiment"]
        if args.only and kind not in args.only:
            continue
        out = ROOT / cfg["output"]["path"]
        summary = cli.run(kind, cfg, None, str(out), None)
        print(json.dumps({"config": path.name, **summary}))


if __name__ == "__main__":
    main()
