"""
Online Functional Geometric Median Regression
Main Application Entry Point
"""

import argparse
import logging
import os
import sys

# Add the current directory to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from core import __version__
from core.errors import FosgmError
from core.experiments import run
from core.settings_manager import MODES, SettingsManager

DEFAULT_SETTINGS_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fosgm_settings.json")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fosgm",
        description="Streaming geometric-median regression of curves on scalars, with online bootstrap bands",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="mode", required=True)

    for mode in MODES:
        sub = commands.add_parser(mode)
        sub.add_argument("--config", help=f"JSON run configuration (default {os.path.basename(DEFAULT_SETTINGS_FILE)})")
        sub.add_argument("--seed", type=int, help="master seed")
        sub.add_argument("--threads", type=int, help="replication workers")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--verbose", action="store_true", help="debug logging")
        if mode == "fit":
            sub.add_argument("--input", help="input CSV")
            sub.add_argument("--snapshot", help="write a state snapshot here after the run")
            sub.add_argument("--resume-from", dest="resume_from", help="continue from this snapshot")
        elif mode == "infer":
            sub.add_argument("--snapshot", help="state snapshot to read")
    return parser


def main(argv=None):
    """Main function to run the application"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    print("📈 Online Functional Geometric Median Regression")
    print("=" * 50)
    print(f"🚀 Starting {args.mode}...")

    try:
        if args.config:
            manager = SettingsManager(args.config, required=True)
        else:
            manager = SettingsManager(DEFAULT_SETTINGS_FILE)
        overrides = {
            "mode": args.mode,
            "seed": args.seed,
            "threads": args.threads,
            "out": args.out,
            "input": getattr(args, "input", None),
            "snapshot": getattr(args, "snapshot", None),
            "resume_from": getattr(args, "resume_from", None),
        }
        settings = manager.apply_overrides(overrides)
        report = run(settings)

    except FosgmError as e:
        logging.getLogger("fosgm").error(f"❌ {e}")
        return 1

    print(f"✅ Done ({report['mode']}, seed {report['seed']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
