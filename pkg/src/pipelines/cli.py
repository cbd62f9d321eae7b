"""
Command-line entry point: one subcommand per pipeline stage, plus `run`.
"""

import argparse
import sys
from typing import List, Optional

from rich.console import Console

from src.loading import ArtifactReader
from src.pipelines.config import load_config
from src.pipelines.experiment import run_pipeline
from src.pipelines.reporting import report_tables
from src.utils.errors import ConfigurationError, StageError
from src.utils.settings import load_settings

# Subcommand -> stage(s) the pipeline runs up to
COMMANDS = {
    'gen-data': 'data',
    'train-zoo': ('benign_zoo', 'baseline_zoo'),
    'pilot-defense': 'pilot_defense',
    'plan-ar': 'plan_ar',
    'train-lsp': 'lsp_zoo',
    'defend': 'defend',
    'evaluate': 'evaluate',
    'sweep': 'sweep',
    'run': 'report',
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='lsp-lab',
        description="Label-smoothing poisoning experiments against trigger-reversal defenses.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help="Path to an experiment config (JSON)")
    common.add_argument('--seed', type=int, default=None, help="Override the config seed")
    common.add_argument('--out-dir', type=str, default=None, help="Run directory (default: LSP_OUT_DIR)")
    common.add_argument('--jobs', type=int, default=None, help="Worker processes (default: LSP_JOBS)")

    subparsers = parser.add_subparsers(dest='command', required=True)
    for command, stage in COMMANDS.items():
        subparsers.add_parser(command, parents=[common], help=f"Run the pipeline up to {stage!r}")

    report = subparsers.add_parser('report', parents=[common],
                                   help="Render report tables of a completed run directory")
    report.add_argument('report_dir', type=str, nargs='?', default=None,
                        help="Run directory (default: --out-dir, then LSP_OUT_DIR)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs is not None and args.jobs < 1:
            raise ConfigurationError(f"--jobs must be >= 1, got {args.jobs}")
        if args.command == 'report':
            report_tables(args.report_dir or args.out_dir or load_settings().out_dir)
            return 0
        config = load_config(args.config).with_overrides(seed=args.seed)
        out_dir = run_pipeline(config, out_dir=args.out_dir, jobs=args.jobs, target=COMMANDS[args.command])
        if args.command == 'gen-data':
            Console().print(ArtifactReader(out_dir).read_json('reports/data.json'))
        return 0
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
