"""
Report tables rendered from a completed run directory.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd
from rich.console import Console
from rich.table import Table

from src.loading import ArtifactReader, ArtifactWriter
from src.pipelines.manifest import RunManifest
from src.utils.errors import IncompleteReportError

logger = logging.getLogger(__name__)

TABLES_DIR = 'tables'
REQUIRED_STAGES = ('data', 'benign_zoo', 'baseline_zoo', 'pilot_defense', 'plan_ar', 'lsp_zoo', 'defend', 'evaluate')


def _format(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return '-'
        return f'{value:.4f}'
    return str(value)


def to_markdown(df: pd.DataFrame) -> str:
    """Pipe table with 4-decimal floats; missing cells render as '-'."""
    cells = df.astype(object).where(df.notna(), None)
    return cells.to_markdown(index=False, tablefmt='pipe', floatfmt='.4f', missingval='-') + '\n'


def summary_table(models: pd.DataFrame, detection: pd.DataFrame) -> pd.DataFrame:
    """Per-zoo means of BA, ASR and every ReASR column, with ACC and AP at the configured thresholds."""
    metric_cols = ['ba', 'asr'] + [c for c in models.columns if c.endswith('_reasr')]
    uncalibrated = detection[~detection['calibrated'].astype(bool)]
    rows = []
    for kind, part in models.groupby('kind', sort=False):
        row = {'zoo': kind, 'models': len(part)}
        row.update({col: float(part[col].mean()) for col in metric_cols})
        for record in uncalibrated[uncalibrated['group'] == kind].to_dict('records'):
            row[f"{record['method']}_acc"] = float(record['acc'])
            row[f"{record['method']}_ap"] = float(record['ap'])
        rows.append(row)
    return pd.DataFrame(rows)


def norms_table(norms: pd.DataFrame) -> pd.DataFrame:
    """Mean reversed-trigger norms per class; the target-class cell of each poisoned group is starred."""
    rows = []
    for record in norms.to_dict('records'):
        target = record['target_class']
        has_target = isinstance(target, (int, float)) and not (isinstance(target, float) and math.isnan(target))
        row = {'group': record['group'] if not has_target else f"{record['group']} (t={int(target)})"}
        for col, value in record.items():
            if not col.startswith('class_'):
                continue
            cell = f'{value:.3f}'
            if has_target and col == f'class_{int(target)}':
                cell += '*'
            row[col] = cell
        rows.append(row)
    return pd.DataFrame(rows)


def sweep_table(sweep: pd.DataFrame) -> pd.DataFrame:
    """Mean ASR and ReASR with norm quartiles per (attack rate, lambda)."""
    rows = []
    for (rate, lambda_weight), part in sweep.groupby(['attack_rate', 'lambda'], sort=False):
        quartiles = part['norm'].quantile([0.25, 0.5, 0.75])
        rows.append({
            'attack_rate': rate,
            'lambda': lambda_weight,
            'asr': float(part['asr'].mean()),
            'reasr': float(part['reasr'].mean()),
            'norm_q1': float(quartiles.loc[0.25]),
            'norm_median': float(quartiles.loc[0.5]),
            'norm_q3': float(quartiles.loc[0.75]),
        })
    return pd.DataFrame(rows)


def _print(console: Console, title: str, df: pd.DataFrame) -> None:
    table = Table(title=title)
    for col in df.columns:
        table.add_column(str(col))
    for row in df.itertuples(index=False):
        table.add_row(*[_format(v) for v in row])
    console.print(table)


def report_tables(report_dir: Union[str, Path], console: Optional[Console] = None) -> Dict[str, Path]:
    """
    Render the summary, detection, norm and sweep tables of a run as CSV and Markdown.

    Args:
        report_dir: Run directory
        console: Rich console to print to. Defaults to a new console.

    Returns:
        Dictionary of table name to Markdown path

    Raises:
        IncompleteReportError: If stages the tables depend on have not completed
    """
    report_dir = Path(report_dir)
    manifest = RunManifest(report_dir)
    missing = [stage for stage in REQUIRED_STAGES if not manifest.is_complete(stage)]
    if missing:
        raise IncompleteReportError(missing)

    reader, writer = ArtifactReader(report_dir), ArtifactWriter(report_dir)
    detection = reader.read_table('reports/detection.csv')
    tables = {
        'summary': summary_table(reader.read_table('reports/models.csv'), detection),
        'detection': detection,
    }
    if (report_dir / 'reports/norms.csv').exists():
        tables['norms'] = norms_table(reader.read_table('reports/norms.csv'))
    if (report_dir / 'reports/sweep.csv').exists():
        tables['ar_sweep'] = sweep_table(reader.read_table('reports/sweep.csv'))

    console = console or Console()
    written: Dict[str, Path] = {}
    for name, df in tables.items():
        writer.write_table(df, f'{TABLES_DIR}/{name}.csv')
        path = writer.ensure_dir(TABLES_DIR) / f'{name}.md'
        path.write_text(to_markdown(df))
        written[name] = path
        _print(console, name, df)

    warnings: List[str] = reader.read_json('reports/plan.json').get('warnings', [])
    for message in warnings:
        console.print(f"[yellow]warning:[/yellow] {message}")
    logger.info(f"Wrote {len(written)} tables to {report_dir / TABLES_DIR}")
    return written
