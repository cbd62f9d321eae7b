"""
Full pipeline on a tiny synthetic problem. Marked slow: it trains a dozen models.
"""

import json

import numpy as np
import pandas as pd
import pytest

from src.evaluation import attack_success_rate, benign_accuracy
from src.loading import ArtifactReader
from src.pipelines import ExperimentConfig, ZooEntry, report_tables, run_pipeline
from src.pipelines.cli import main
from src.pipelines.experiment import read_verdict
from src.pipelines.manifest import RunManifest
from src.utils.errors import IncompleteReportError

pytestmark = pytest.mark.slow

TINY = {
    'seed': 7,
    'dataset': {'num_classes': 4, 'per_class': 30, 'height': 8, 'width': 8,
                'test_fraction': 0.25, 'defense_holdout': 8},
    'attack': {'size_pixels': 4, 'poison_fraction': 0.2, 'target_classes': [1, 2]},
    'zoo': {'n_benign': 2, 'n_baseline': 2, 'n_lsp': 2},
    'train': {'epochs': 2, 'batch_size': 32},
    'defense': {'methods': ['nc', 'abs'], 'steps': 5, 'batch_size': 16,
                'abs_steps': 5, 'abs_top_k': 3},
    'sweep': {'enabled': True, 'attack_rates': [2, 'inf'], 'lambdas': [0.001, 0.01]},
}


@pytest.fixture(scope='module')
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp('run')
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv('LSP_LOG_DIR', str(root / 'logs'))
        out_dir = run_pipeline(ExperimentConfig.from_dict(TINY), out_dir=root / 'out', jobs=1)
    return out_dir


def test_pipeline_writes_every_artifact(run_dir):
    for relative in ('config.json', 'manifest.json', 'reports/data.json', 'reports/pilot.json',
                     'reports/plan.json', 'reports/models.csv', 'reports/detection.csv',
                     'reports/norms.csv', 'reports/sweep.csv', 'reports/summary.json',
                     'tables/summary.md', 'tables/ar_sweep.csv', 'zoo/lsp.json'):
        assert (run_dir / relative).exists(), relative

    models = pd.read_csv(run_dir / 'reports/models.csv')
    assert len(models) == 6
    assert set(models['kind']) == {'benign', 'baseline', 'lsp'}
    assert models['ba'].between(0, 1).all()
    assert {'nc_reasr', 'abs_reasr', 'nc_flagged', 'abs_score'} <= set(models.columns)

    detection = pd.read_csv(run_dir / 'reports/detection.csv')
    assert len(detection) == 8
    sweep = pd.read_csv(run_dir / 'reports/sweep.csv')
    assert len(sweep) == 4

    plan = json.loads((run_dir / 'reports/plan.json').read_text())
    assert set(plan['targets']) == {'1', '2'}
    lsp = json.loads((run_dir / 'zoo/lsp.json').read_text())
    assert [entry['target_class'] for entry in lsp] == [1, 2]
    assert all(entry['metrics'] for entry in lsp)


def test_norm_ratios_are_reported_per_target(run_dir):
    summary = json.loads((run_dir / 'reports/summary.json').read_text())
    ratios = summary['norm_ratio_to_benign']
    assert set(ratios) == {'baseline', 'lsp'}
    for group in ratios.values():
        assert set(group['by_target']) == {'1', '2'}
        assert group['median'] > 0

    reader = ArtifactReader(run_dir)
    benign = [read_verdict(reader, ZooEntry.from_dict(doc), 'nc')
              for doc in json.loads((run_dir / 'zoo/benign.json').read_text())]
    for doc in json.loads((run_dir / 'zoo/lsp.json').read_text()):
        entry = ZooEntry.from_dict(doc)
        norm = read_verdict(reader, entry, 'nc').per_class_scores[entry.target_class]
        reference = np.median([v.per_class_scores[entry.target_class] for v in benign])
        assert ratios['lsp']['by_target'][str(entry.target_class)] == pytest.approx(norm / reference, rel=1e-4)


def test_rerun_skips_completed_stages(run_dir, monkeypatch):
    monkeypatch.setenv('LSP_LOG_DIR', str(run_dir.parent / 'logs'))
    before = RunManifest(run_dir).stages
    summary = (run_dir / 'reports/summary.json').read_text()
    run_pipeline(ExperimentConfig.from_dict(TINY), out_dir=run_dir, jobs=1)
    assert RunManifest(run_dir).stages == before
    assert (run_dir / 'reports/summary.json').read_text() == summary


def test_report_tables_on_completed_run(run_dir):
    written = report_tables(run_dir)
    assert set(written) == {'summary', 'detection', 'norms', 'ar_sweep'}
    assert written['summary'].read_text().startswith('| zoo')


def test_unit_attack_rate_is_reported_infeasible(tmp_path, monkeypatch):
    monkeypatch.setenv('LSP_LOG_DIR', str(tmp_path / 'logs'))
    doc = dict(TINY, zoo={'n_benign': 2, 'n_baseline': 1, 'n_lsp': 1},
               attack_rate={'mode': 'fixed', 'value': 1.0}, sweep={'enabled': False})
    out_dir = run_pipeline(ExperimentConfig.from_dict(doc), out_dir=tmp_path / 'out', target='plan_ar')
    plan = json.loads((out_dir / 'reports/plan.json').read_text())
    assert plan['targets']['1']['feasible'] is False
    assert plan['warnings'] and 'attack infeasible' in plan['warnings'][0]

    with pytest.raises(IncompleteReportError) as excinfo:
        report_tables(out_dir)
    assert 'evaluate' in excinfo.value.missing


def test_cli_exit_codes(tmp_path, monkeypatch):
    monkeypatch.setenv('LSP_LOG_DIR', str(tmp_path / 'logs'))
    config_path = tmp_path / 'tiny.json'
    config_path.write_text(json.dumps(TINY))
    assert main(['gen-data', '--config', str(config_path), '--out-dir', str(tmp_path / 'a')]) == 0
    assert (tmp_path / 'a/datasets/test/manifest.json').exists()

    assert main(['report', str(tmp_path / 'a')]) == 1
    assert main(['run', '--config', str(tmp_path / 'missing.json')]) == 2
    assert main(['gen-data', '--jobs', '0', '--out-dir', str(tmp_path / 'b')]) == 2

    broken = dict(TINY, dataset={'source': 'idx', 'images_path': str(tmp_path / 'x.idx'),
                                 'labels_path': str(tmp_path / 'y.idx'), 'num_classes': 4})
    broken_path = tmp_path / 'broken.json'
    broken_path.write_text(json.dumps(broken))
    assert main(['gen-data', '--config', str(broken_path), '--out-dir', str(tmp_path / 'c')]) == 1
    manifest = RunManifest(tmp_path / 'c')
    assert not manifest.is_complete('data')
    assert 'error' in manifest.stages['data']


def test_cached_zoo_metrics_match_checkpoints(run_dir):
    reader = ArtifactReader(run_dir)
    test = reader.read_dataset('test')
    trigger = reader.read_trigger('triggers/trigger.json')
    for doc in json.loads((run_dir / 'zoo/baseline.json').read_text()):
        entry = ZooEntry.from_dict(doc)
        model, _ = reader.read_checkpoint(entry.name)
        assert benign_accuracy(model, test) == entry.metrics['ba']
        assert attack_success_rate(model, test, trigger, entry.target_class) == entry.metrics['asr']


def test_cli_report_accepts_out_dir(run_dir):
    assert main(['report', '--out-dir', str(run_dir)]) == 0
    assert (run_dir / 'tables/summary.md').exists()
