import math

import pandas as pd

from src.pipelines.reporting import norms_table, to_markdown


def test_to_markdown_formats_floats_and_missing_cells():
    df = pd.DataFrame({'zoo': ['benign', 'lsp'], 'ba': [0.5, 0.98765], 'ap': [math.nan, 1.0]})
    lines = to_markdown(df).splitlines()
    assert len(lines) == 4
    assert lines[0].startswith('| zoo')
    assert set(lines[1]) <= set('|:-')
    assert '0.5000' in lines[2] and lines[2].rstrip(' |').endswith('-')
    assert '0.9877' in lines[3] and '1.0000' in lines[3]


def test_norms_table_stars_the_target_class():
    norms = pd.DataFrame([
        {'group': 'benign', 'target_class': math.nan, 'class_0': 4.0, 'class_1': 5.0},
        {'group': 'lsp', 'target_class': 1.0, 'class_0': 4.5, 'class_1': 3.25},
    ])
    table = norms_table(norms)
    assert table['group'].tolist() == ['benign', 'lsp (t=1)']
    assert table['class_1'].tolist() == ['5.000', '3.250*']
