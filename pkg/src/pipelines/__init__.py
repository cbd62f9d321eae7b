"""
Pipeline package for experiment orchestration.

This package wires the library packages into a resumable, stage-by-stage
experiment: dataset preparation, model zoos, pilot defenses, attack-rate
planning, full defenses, evaluation and report tables.

Available functions:
    run_pipeline: Run the experiment up to a target stage, skipping stages
                  whose manifest hash is unchanged.
    report_tables: Render CSV and Markdown tables of a completed run.
    load_config: Parse an experiment configuration from JSON.
"""

from typing import List

from .config import ExperimentConfig, load_config
from .experiment import STAGES, ZooEntry, run_pipeline
from .reporting import report_tables

__all__: List[str] = [
    "ExperimentConfig",
    "load_config",
    "STAGES",
    "ZooEntry",
    "run_pipeline",
    "report_tables",
]
