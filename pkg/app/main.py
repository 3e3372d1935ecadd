"""Command-line entry point: python -m app.main --preset fig4 --out sweep.csv"""
import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from app import __version__
from app.core import exceptions, settings
from app.harness.config import build_config, parse_config
from app.harness.report import emit_csv, emit_xlsx
from app.harness.runner import run_sweep

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamform-sweep",
        description="Seeded SNR sweeps comparing instantaneous and pathwise CSIT beamformer designs.",
    )
    parser.add_argument("--config", help="key = value sweep configuration file")
    parser.add_argument("--preset", choices=["fig2", "fig3", "fig4"], help="bundled scenario preset")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", default="sweep.csv", help="CSV output path (default: %(default)s)")
    parser.add_argument("--trials", type=int, help="Monte-Carlo trials per sweep cell")
    parser.add_argument("--snr", help="SNR points in dB, 'start:step:stop' or a comma list")
    parser.add_argument("--algos", help="comma list of wsmse, minorize_icsit, minorize_pwcsit")
    parser.add_argument("--geometries", type=int, help="number of slow-fading geometry draws")
    parser.add_argument("--xlsx", help="also write the rows to this workbook")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=settings.LOG_FORMAT)

    overrides = {
        "preset": args.preset,
        "seed": args.seed,
        "trials": args.trials,
        "snr_db": args.snr,
        "algorithms": args.algos,
        "geometry_draws": args.geometries,
    }
    try:
        if args.config:
            config = parse_config(args.config, overrides)
        else:
            config = build_config({}, overrides)
        rows = run_sweep(config)
        emit_csv(rows, args.out, config)
        if args.xlsx:
            emit_xlsx(rows, args.xlsx)
    except exceptions.BeamformAppException as e:
        return exceptions.handle_exception(e)

    print(f"{len(rows)} rows written to {args.out}")
    return exceptions.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
