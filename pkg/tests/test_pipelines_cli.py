import pytest

from src.pipelines.cli import COMMANDS, build_parser, main


@pytest.mark.parametrize('command', [*COMMANDS, 'report'])
def test_every_subcommand_takes_the_shared_flags(command):
    args = build_parser().parse_args([command, '--config', 'c.json', '--seed', '3', '--out-dir', 'runs/x',
                                      '--jobs', '2'])
    assert (args.config, args.seed, args.out_dir, args.jobs) == ('c.json', 3, 'runs/x', 2)


def test_report_directory_falls_back_to_out_dir(tmp_path, monkeypatch):
    args = build_parser().parse_args(['report', '--out-dir', 'runs/x'])
    assert args.report_dir is None and args.out_dir == 'runs/x'

    # An empty run directory is incomplete, whichever way it is named
    assert main(['report', '--out-dir', str(tmp_path)]) == 1
    monkeypatch.setenv('LSP_OUT_DIR', str(tmp_path))
    assert main(['report']) == 1
    assert main(['report', '--jobs', '0', str(tmp_path)]) == 2
