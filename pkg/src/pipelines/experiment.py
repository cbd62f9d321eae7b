"""
Experiment pipeline for label-smoothing poisoning against trigger-reversal defenses.

Flow:
Stage data: draw or load the dataset, split train/test and benign/poison source, build the trigger
Stage benign_zoo, baseline_zoo: train clean models and one-hot poisoned models
Stage pilot_defense: train one pilot poisoned model per target, run NC on it and on the benign zoo
Stage plan_ar: compensatory bound -> attack rate per target class
Stage lsp_zoo: train models poisoned with smoothed labels at the planned rate
Stage defend: run every configured defense on every zoo model
Stage evaluate: BA, ASR, ReASR per model; ACC and AP per zoo
Stage sweep (optional): reversed-trigger norm and ReASR over attack rates and NC lambdas
Stage report: CSV and Markdown tables

Every stage records a content hash in the run manifest; a rerun skips stages
whose hash is unchanged.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.compensatory import deployment_attack_rate, plan_attack
from src.core.types import LabeledDataset, RngSeed
from src.core.splits import split_for_poisoning, train_test_split
from src.defense import (
    DefenseMethod,
    DetectionVerdict,
    ReversalResult,
    calibrate_threshold,
    detect,
    rethreshold,
    reverse_trigger_nc,
    split_benign_data,
)
from src.evaluation import (attack_success_rate, benign_accuracy, detection_metrics, norm_ratios,
                            reattack_success_rate)
from src.extraction import dataset_summary, generate_synthetic_dataset, load_idx_dataset
from src.loading import ArtifactReader, ArtifactWriter
from src.models import build_classifier, train
from src.pipelines.config import ExperimentConfig, encode_rate, parse_rate
from src.pipelines.manifest import RunManifest, stage_hash
from src.transformation import PoisonConfig, poison_dataset
from src.utils.errors import ConfigurationError, StageError, UndefinedMetricError
from src.utils.logger import setup_logger
from src.utils.settings import load_settings

logger = logging.getLogger(__name__)

TRIGGER_REF = 'triggers/trigger.json'
ZOO_KINDS = ('benign', 'baseline', 'lsp')
MAX_CALIBRATED_FPR = 1.0 / 6.0


@dataclass(frozen=True)
class StageSpec:
    name: str
    deps: Tuple[str, ...]
    config_paths: Tuple[str, ...]


# Config paths each stage reads. The seed and the dataset reach later stages through 'data'.
_TRIGGER = tuple(f'attack.{f}' for f in ('kind', 'size_pixels', 'corner', 'value', 'position_jitter',
                                         'color_jitter', 'alpha', 'channel_scale', 'channel_shift'))
_POISON = ('attack.target_classes', 'attack.poison_fraction', 'attack.clean_label')
_NC = tuple(f'defense.{f}' for f in ('lambda_weight', 'steps', 'step_size', 'restarts', 'lambda_schedule',
                                     'optimizer', 'batch_size')) + ('dataset.defense_holdout',)
_ABS = tuple(f'defense.{f}' for f in ('abs_weights', 'abs_size_budget', 'abs_layer_index', 'abs_top_k',
                                      'abs_steps', 'literal_ssim')) + ('attack.size_pixels',)
_VERDICT = ('defense.methods', 'defense.mad_threshold', 'defense.abs_threshold')
_DATASET = tuple(f'dataset.{f}' for f in ('source', 'num_classes', 'per_class', 'height', 'width', 'channels',
                                          'images_path', 'labels_path', 'max_samples', 'test_fraction'))

STAGES: Dict[str, StageSpec] = {spec.name: spec for spec in (
    StageSpec('data', (), ('seed',) + _DATASET + _TRIGGER + ('attack.poison_fraction',)),
    StageSpec('benign_zoo', ('data',), ('train', 'zoo.n_benign')),
    StageSpec('baseline_zoo', ('data',), ('train', 'zoo.n_baseline') + _POISON),
    StageSpec('pilot_defense', ('data', 'benign_zoo'), ('train',) + _POISON + _NC),
    StageSpec('plan_ar', ('pilot_defense',), ('attack_rate', 'defense.epsilon', 'attack.target_classes')),
    StageSpec('lsp_zoo', ('data', 'plan_ar'), ('train', 'zoo.n_lsp') + _POISON),
    StageSpec('defend', ('benign_zoo', 'baseline_zoo', 'lsp_zoo'), _NC + _ABS + _VERDICT),
    StageSpec('evaluate', ('defend',), _VERDICT + ('attack.target_classes',)),
    StageSpec('sweep', ('data', 'plan_ar'), ('sweep', 'train') + _POISON + _NC),
    StageSpec('report', ('evaluate',), ()),
)}


@dataclass(frozen=True)
class ZooEntry:
    """One trained model of a zoo and the facts needed to reproduce it."""

    name: str
    kind: str
    seed: int
    backdoored: bool
    target_class: Optional[int] = None
    trigger_ref: Optional[str] = None
    attack_rate: Optional[float] = None
    metrics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.backdoored != (self.trigger_ref is not None):
            raise ValueError(f"zoo entry {self.name}: backdoored must match the presence of a trigger")
        if self.backdoored and (self.target_class is None or self.attack_rate is None):
            raise ValueError(f"zoo entry {self.name}: backdoored entries need a target class and attack rate")

    @property
    def checkpoint(self) -> str:
        return f'models/{self.name}'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'kind': self.kind,
            'seed': self.seed,
            'backdoored': self.backdoored,
            'target_class': self.target_class,
            'trigger_ref': self.trigger_ref,
            'attack_rate': None if self.attack_rate is None else encode_rate(self.attack_rate),
            'checkpoint': self.checkpoint,
            'metrics': dict(self.metrics),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'ZooEntry':
        rate = doc.get('attack_rate')
        return cls(
            name=doc['name'],
            kind=doc['kind'],
            seed=int(doc['seed']),
            backdoored=bool(doc['backdoored']),
            target_class=doc.get('target_class'),
            trigger_ref=doc.get('trigger_ref'),
            attack_rate=None if rate is None else parse_rate(rate),
            metrics=dict(doc.get('metrics', {})),
        )


@dataclass(frozen=True)
class TrainJob:
    out_dir: str
    config: ExperimentConfig
    entry: ZooEntry


@dataclass(frozen=True)
class DefendJob:
    out_dir: str
    config: ExperimentConfig
    entry: ZooEntry
    method: str


@dataclass
class RunContext:
    """State shared by the stages of one pipeline invocation."""

    config: ExperimentConfig
    out_dir: Path
    jobs: int

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.writer = ArtifactWriter(self.out_dir)
        self.reader = ArtifactReader(self.out_dir)
        self.manifest = RunManifest(self.out_dir)

    @property
    def targets(self) -> Tuple[int, ...]:
        return tuple(self.config.attack.target_classes)

    def checked_targets(self) -> Tuple[int, ...]:
        """Target classes, validated against the class count of the stored dataset."""
        num_classes = self.reader.read_json('reports/data.json')['full']['num_classes']
        bad = [t for t in self.targets if not 0 <= t < num_classes]
        if bad:
            raise ConfigurationError(f"target classes {bad} out of range for {num_classes} classes")
        return self.targets

    def zoo(self, *kinds: str) -> List[ZooEntry]:
        entries = []
        for kind in kinds:
            entries.extend(ZooEntry.from_dict(doc) for doc in self.reader.read_json(f'zoo/{kind}.json'))
        return entries


def run_jobs(fn: Callable, items: Sequence, jobs: int, desc: str) -> List:
    """Map fn over items, in worker processes when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=None)]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=None))


def defense_pool(reader: ArtifactReader, config: ExperimentConfig) -> LabeledDataset:
    """Benign samples handed to the defender: the head of the shuffled test split."""
    test = reader.read_dataset('test')
    return test.head(config.defense.batch_size + config.dataset.defense_holdout)


def nc_seed(config: ExperimentConfig) -> RngSeed:
    return config.rng_seed.derive(0xdef)


def rate_label(attack_rate: float) -> str:
    return 'inf' if math.isinf(attack_rate) else f'{attack_rate:g}'


def train_zoo_member(job: TrainJob) -> ZooEntry:
    """
    Train one zoo model and write its checkpoint.

    Benign models see the poison source unchanged; backdoored models see it
    poisoned with the entry's target class and attack rate.
    """
    entry, config = job.entry, job.config
    reader, writer = ArtifactReader(job.out_dir), ArtifactWriter(job.out_dir)
    benign = reader.read_dataset('train_benign')
    source = reader.read_dataset('poison_source')
    seed = RngSeed(entry.seed)

    poison = None
    parts = [benign]
    if entry.backdoored:
        poison = PoisonConfig(entry.target_class, entry.attack_rate, config.attack.poison_fraction,
                              config.attack.clean_label, reader.read_trigger(entry.trigger_ref))
        if len(source):
            parts.append(poison_dataset(source, poison, seed.derive(0xd0)))
    elif len(source):
        parts.append(source)
    train_set = LabeledDataset.concat(parts)

    model = build_classifier(benign.image_shape, benign.num_classes, seed.derive(0x1d))
    train_config = config.train.build(seed.derive(0x5f))
    train(model, train_set, train_config)
    writer.write_checkpoint(model, entry.name, metadata={
        'entry': entry.to_dict(),
        'train': train_config.to_dict(),
        'poison': poison.to_dict() if poison else None,
    })
    return entry


def defend_zoo_member(job: DefendJob) -> str:
    """Run one defense on one zoo model and store the verdict with its reversed triggers."""
    config = job.config
    reader, writer = ArtifactReader(job.out_dir), ArtifactWriter(job.out_dir)
    model, _ = reader.read_checkpoint(job.entry.name)
    pool = defense_pool(reader, config)
    method = DefenseMethod(job.method)
    if method is DefenseMethod.NC:
        defense_config = config.defense.nc_config(nc_seed(config))
    else:
        defense_config = config.defense.abs_config(config.rng_seed.derive(0xab5), config.attack.size_pixels)
    verdict = detect(model, method, pool, defense_config,
                     mad_threshold=config.defense.mad_threshold,
                     abs_threshold=config.defense.abs_threshold)
    relative = f'reports/defense/{job.entry.name}_{method.value}.json'
    writer.write_json(relative, verdict.to_dict(include_arrays=True))
    return relative


def _train_zoo(ctx: RunContext, kind: str, entries: List[ZooEntry]) -> None:
    jobs = [TrainJob(str(ctx.out_dir), ctx.config, entry) for entry in entries]
    trained = run_jobs(train_zoo_member, jobs, ctx.jobs, f'{kind} zoo')
    ctx.writer.write_json(f'zoo/{kind}.json', [entry.to_dict() for entry in trained])
    logger.info(f"Trained {len(trained)} {kind} models")


def stage_data(ctx: RunContext) -> None:
    config, seed = ctx.config, ctx.config.rng_seed
    section = config.dataset

    if section.source == 'synthetic':
        full = generate_synthetic_dataset(section.num_classes, section.per_class, section.height,
                                          section.width, seed.derive(0xda7a), section.channels)
    else:
        full = load_idx_dataset(section.images_path, section.labels_path, section.num_classes)
        if section.max_samples and section.max_samples < len(full):
            full = full.subset(np.sort(seed.generator(0x5a).permutation(len(full))[:section.max_samples]))
        bad = [t for t in ctx.targets if not 0 <= t < full.num_classes]
        if bad:
            raise ConfigurationError(f"target classes {bad} out of range for {full.num_classes} classes")
    logger.info(f"Dataset Summary: {dataset_summary(full)}")

    train_part, test = train_test_split(full, section.test_fraction, seed.derive(0x7e))
    benign, source = split_for_poisoning(train_part, config.attack.poison_fraction, seed.derive(0x9e))
    test = test.subset(seed.generator(0xde).permutation(len(test)))

    trigger = config.attack.build_trigger(*full.image_shape, seed)
    for name, dataset in (('train_benign', benign), ('poison_source', source), ('test', test)):
        ctx.writer.write_dataset(dataset, name)
    ctx.writer.write_trigger(trigger, TRIGGER_REF)
    ctx.writer.write_json('reports/data.json', {
        'full': dataset_summary(full),
        'train_benign': len(benign),
        'poison_source': len(source),
        'test': len(test),
        'trigger': {'kind': trigger.kind.value, 'support_size': trigger.support_size},
    })


def stage_benign_zoo(ctx: RunContext) -> None:
    seed = ctx.config.rng_seed
    entries = [ZooEntry(f'benign_{i:02d}', 'benign', seed.derive(0xbe, i).seed, False)
               for i in range(ctx.config.zoo.n_benign)]
    _train_zoo(ctx, 'benign', entries)


def stage_baseline_zoo(ctx: RunContext) -> None:
    seed, targets = ctx.config.rng_seed, ctx.checked_targets()
    entries = [ZooEntry(f'baseline_{i:02d}', 'baseline', seed.derive(0xba, i).seed, True,
                        targets[i % len(targets)], TRIGGER_REF, math.inf)
               for i in range(ctx.config.zoo.n_baseline)]
    _train_zoo(ctx, 'baseline', entries)


def stage_pilot_defense(ctx: RunContext) -> None:
    """Pilot baseline models and NC runs at their targets, on them and on the benign zoo."""
    seed = ctx.config.rng_seed
    pilots = [ZooEntry(f'pilot_t{t}', 'pilot', seed.derive(0x9170, t).seed, True, t, TRIGGER_REF, math.inf)
              for t in ctx.checked_targets()]
    _train_zoo(ctx, 'pilot', pilots)

    config = ctx.config.defense.nc_config(nc_seed(ctx.config))
    batch, holdout = split_benign_data(defense_pool(ctx.reader, ctx.config), config.batch_size)
    benign_models = [ctx.reader.read_checkpoint(entry.name)[0] for entry in ctx.zoo('benign')]

    doc = {}
    for pilot in pilots:
        target = pilot.target_class
        pilot_model, _ = ctx.reader.read_checkpoint(pilot.name)
        poisoned = reverse_trigger_nc(pilot_model, target, batch, config, holdout)
        benign_runs = [reverse_trigger_nc(model, target, batch, config, holdout) for model in benign_models]
        logger.info(
            f"Pilot target {target}: poisoned norm {poisoned.l1_norm:.3f}, "
            f"benign norm {np.mean([r.l1_norm for r in benign_runs]):.3f}"
        )
        doc[str(target)] = {'poisoned': poisoned.to_dict(), 'benign': [r.to_dict() for r in benign_runs]}
    ctx.writer.write_json('reports/pilot.json', doc)


def stage_plan_ar(ctx: RunContext) -> None:
    pilot = ctx.reader.read_json('reports/pilot.json')
    num_classes = ctx.reader.read_dataset('test').num_classes
    section = ctx.config.attack_rate
    targets, warnings = {}, []

    for target in ctx.targets:
        runs = pilot[str(target)]
        bound = plan_attack([ReversalResult.from_dict(r) for r in runs['benign']],
                            ReversalResult.from_dict(runs['poisoned']),
                            ctx.config.defense.epsilon, num_classes)
        if section.mode == 'fixed':
            attack_rate = section.value
        else:
            attack_rate = deployment_attack_rate(bound, section.safety_factor)
        if attack_rate <= 1.0:
            message = f"attack infeasible for target {target}: planned attack rate {attack_rate:.4f} <= 1"
            logger.warning(message)
            warnings.append(message)
            attack_rate = 1.0
        logger.info(f"Target {target}: CE bound {bound.ce_lower_bound:.4f}, attack rate {attack_rate:.4f}")
        targets[str(target)] = {
            'bound': bound.to_dict(),
            'attack_rate': encode_rate(attack_rate),
            'feasible': attack_rate > 1.0,
        }
    ctx.writer.write_json('reports/plan.json', {'mode': section.mode, 'targets': targets, 'warnings': warnings})


def planned_rates(ctx: RunContext) -> Dict[int, float]:
    plan = ctx.reader.read_json('reports/plan.json')
    return {int(t): parse_rate(doc['attack_rate']) for t, doc in plan['targets'].items()}


def stage_lsp_zoo(ctx: RunContext) -> None:
    seed, targets = ctx.config.rng_seed, ctx.targets
    rates = planned_rates(ctx)
    entries = []
    for i in range(ctx.config.zoo.n_lsp):
        target = targets[i % len(targets)]
        entries.append(ZooEntry(f'lsp_{i:02d}', 'lsp', seed.derive(0x15b, i).seed, True,
                                target, TRIGGER_REF, rates[target]))
    _train_zoo(ctx, 'lsp', entries)


def stage_defend(ctx: RunContext) -> None:
    jobs = [DefendJob(str(ctx.out_dir), ctx.config, entry, method)
            for entry in ctx.zoo(*ZOO_KINDS) for method in ctx.config.defense.methods]
    written = run_jobs(defend_zoo_member, jobs, ctx.jobs, 'defend')
    logger.info(f"Stored {len(written)} defense verdicts")


def read_verdict(reader: ArtifactReader, entry: ZooEntry, method: str) -> DetectionVerdict:
    return DetectionVerdict.from_dict(reader.read_json(f'reports/defense/{entry.name}_{method}.json'))


def _model_row(ctx: RunContext, entry: ZooEntry, test: LabeledDataset, trigger, gt_mask) -> Dict[str, Any]:
    model, _ = ctx.reader.read_checkpoint(entry.name)
    target = entry.target_class if entry.backdoored else ctx.targets[0]
    row = {
        'model': entry.name,
        'kind': entry.kind,
        'backdoored': entry.backdoored,
        'target_class': target,
        'attack_rate': rate_label(entry.attack_rate) if entry.attack_rate is not None else '',
        'ba': benign_accuracy(model, test),
        'asr': attack_success_rate(model, test, trigger, target),
    }
    for method in ctx.config.defense.methods:
        verdict = read_verdict(ctx.reader, entry, method)
        row[f'{method}_flagged'] = verdict.is_backdoored
        row[f'{method}_score'] = verdict.score_for_ap
        row[f'{method}_target_score'] = float(verdict.per_class_scores[target])
        row[f'{method}_target_index'] = float(verdict.anomaly_indices[target])
        result = next((r for r in verdict.results if r.target_class == target), None)
        if gt_mask is not None and result is not None:
            row[f'{method}_reasr'] = reattack_success_rate(model, test, gt_mask, result.mask, result.pattern, target)
    return row


def _detection_rows(ctx: RunContext, verdicts: Dict[str, List[DetectionVerdict]], method: str) -> List[Dict[str, Any]]:
    benign = verdicts['benign']
    default = ctx.config.defense.mad_threshold if method == 'nc' else ctx.config.defense.abs_threshold
    thresholds = [(default, False), (calibrate_threshold(benign, MAX_CALIBRATED_FPR), True)]
    rows = []
    for group in ('baseline', 'lsp'):
        for threshold, calibrated in thresholds:
            pairs = ([(rethreshold(v, threshold), True) for v in verdicts[group]]
                     + [(rethreshold(v, threshold), False) for v in benign])
            try:
                acc, ap = detection_metrics(pairs)
            except UndefinedMetricError:
                acc, ap = float(np.mean([v.is_backdoored == truth for v, truth in pairs])), float('nan')
            rows.append({
                'method': method,
                'group': group,
                'threshold': threshold,
                'calibrated': calibrated,
                'n_models': len(pairs),
                'acc': acc,
                'ap': ap,
            })
    return rows


def _norm_rows(ctx: RunContext, entries: List[ZooEntry], verdicts: List[DetectionVerdict]) -> List[Dict[str, Any]]:
    """Mean NC norm per class, for the benign zoo and for each (zoo, target) group."""
    groups: Dict[Tuple[str, Any], List[np.ndarray]] = {}
    for entry, verdict in zip(entries, verdicts):
        key = (entry.kind, entry.target_class if entry.backdoored else '')
        groups.setdefault(key, []).append(verdict.per_class_scores)
    rows = []
    for (kind, target), norms in sorted(groups.items(), key=lambda item: (ZOO_KINDS.index(item[0][0]), str(item[0][1]))):
        mean = np.mean(norms, axis=0)
        row = {'group': kind, 'target_class': target}
        row.update({f'class_{c}': float(v) for c, v in enumerate(mean)})
        rows.append(row)
    return rows


def _rounded(value: Any, digits: int = 6) -> Any:
    if isinstance(value, float):
        return value if not math.isfinite(value) else round(value, digits)
    if isinstance(value, dict):
        return {k: _rounded(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v, digits) for v in value]
    return value


def stage_evaluate(ctx: RunContext) -> None:
    test = ctx.reader.read_dataset('test')
    trigger = ctx.reader.read_trigger(TRIGGER_REF)
    gt_mask = trigger.ground_truth_mask()
    entries = ctx.zoo(*ZOO_KINDS)
    methods = ctx.config.defense.methods

    rows = [_model_row(ctx, entry, test, trigger, gt_mask) for entry in tqdm(entries, desc='evaluate', disable=None)]
    models = pd.DataFrame(rows)
    ctx.writer.write_table(models, 'reports/models.csv')

    for kind in ZOO_KINDS:
        updated = []
        for entry in ctx.zoo(kind):
            row = models[models['model'] == entry.name].iloc[0]
            updated.append(replace(entry, metrics={'ba': float(row['ba']), 'asr': float(row['asr'])}).to_dict())
        ctx.writer.write_json(f'zoo/{kind}.json', updated)

    detection, norm_rows, ratios = [], [], {}
    for method in methods:
        by_kind = {kind: [read_verdict(ctx.reader, e, method) for e in entries if e.kind == kind] for kind in ZOO_KINDS}
        detection.extend(_detection_rows(ctx, by_kind, method))
        if method == 'nc':
            norm_rows = _norm_rows(ctx, entries, [v for kind in ZOO_KINDS for v in by_kind[kind]])
            ratios = norm_ratios(
                [v.per_class_scores for v in by_kind['benign']],
                {kind: [(e.target_class, float(v.per_class_scores[e.target_class]))
                        for e, v in zip([e for e in entries if e.kind == kind], by_kind[kind])]
                 for kind in ('baseline', 'lsp')},
            )
    ctx.writer.write_table(pd.DataFrame(detection), 'reports/detection.csv')
    if norm_rows:
        ctx.writer.write_table(pd.DataFrame(norm_rows), 'reports/norms.csv')

    groups = {}
    for kind in ZOO_KINDS:
        part = models[models['kind'] == kind]
        groups[kind] = {col: float(part[col].mean()) for col in part.columns
                        if col in ('ba', 'asr') or col.endswith('_reasr') or col.endswith('_target_score')}

    plan = ctx.reader.read_json('reports/plan.json')
    summary = {
        'num_models': len(entries),
        'methods': list(methods),
        'plan': plan['targets'],
        'warnings': plan['warnings'],
        'groups': groups,
        'norm_ratio_to_benign': ratios,
        'detection': detection,
    }
    ctx.writer.write_json('reports/summary.json', _rounded(summary))


def stage_sweep(ctx: RunContext) -> None:
    """Attack-rate sweep at the first target: reversed-trigger norm and ReASR per NC lambda."""
    config, seed = ctx.config, ctx.config.rng_seed
    target = ctx.checked_targets()[0]
    entries = [ZooEntry(f'sweep_ar{rate_label(rate)}_r{r}', 'sweep', seed.derive(0x5e, i, r).seed, True,
                        target, TRIGGER_REF, rate)
               for i, rate in enumerate(config.sweep.attack_rates) for r in range(config.sweep.replicas)]
    _train_zoo(ctx, 'sweep', entries)

    test = ctx.reader.read_dataset('test')
    trigger = ctx.reader.read_trigger(TRIGGER_REF)
    gt_mask = trigger.ground_truth_mask()
    batch, holdout = split_benign_data(defense_pool(ctx.reader, config), config.defense.batch_size)
    planned = planned_rates(ctx).get(target)

    rows = []
    for entry in tqdm(entries, desc='sweep', disable=None):
        model, _ = ctx.reader.read_checkpoint(entry.name)
        asr = attack_success_rate(model, test, trigger, target)
        for lambda_weight in config.sweep.lambdas:
            result = reverse_trigger_nc(model, target, batch, config.defense.nc_config(nc_seed(config), lambda_weight),
                                        holdout)
            rows.append({
                'attack_rate': rate_label(entry.attack_rate),
                'replica': int(entry.name.rsplit('_r', 1)[1]),
                'lambda': lambda_weight,
                'norm': result.l1_norm,
                'cls_term': result.cls_term,
                'reg_term': result.reg_term,
                'objective': result.objective,
                'asr': asr,
                'reasr': (reattack_success_rate(model, test, gt_mask, result.mask, result.pattern, target)
                          if gt_mask is not None else float('nan')),
                'planned_attack_rate': rate_label(planned) if planned is not None else '',
            })
    ctx.writer.write_table(pd.DataFrame(rows), 'reports/sweep.csv')


def stage_report(ctx: RunContext) -> None:
    from src.pipelines.reporting import report_tables

    report_tables(ctx.out_dir)


STAGE_FUNCS: Dict[str, Callable[[RunContext], None]] = {
    'data': stage_data,
    'benign_zoo': stage_benign_zoo,
    'baseline_zoo': stage_baseline_zoo,
    'pilot_defense': stage_pilot_defense,
    'plan_ar': stage_plan_ar,
    'lsp_zoo': stage_lsp_zoo,
    'defend': stage_defend,
    'evaluate': stage_evaluate,
    'sweep': stage_sweep,
    'report': stage_report,
}


def stage_deps(name: str, config: ExperimentConfig) -> Tuple[str, ...]:
    deps = STAGES[name].deps
    if name == 'report' and config.sweep.enabled:
        deps = deps + ('sweep',)
    return deps


def stage_plan(targets: Union[str, Sequence[str]], config: ExperimentConfig) -> List[str]:
    """Stages needed for the targets, dependencies first, in declaration order."""
    targets = (targets,) if isinstance(targets, str) else tuple(targets)
    unknown = [t for t in targets if t not in STAGES]
    if unknown:
        raise ConfigurationError(f"unknown stages {unknown}; expected names from {', '.join(STAGES)}")
    needed = set()

    def visit(name: str) -> None:
        if name in needed:
            return
        needed.add(name)
        for dep in stage_deps(name, config):
            visit(dep)

    for target in targets:
        visit(target)
    return [name for name in STAGES if name in needed]


def stage_hashes(targets: Union[str, Sequence[str]], config: ExperimentConfig) -> Dict[str, str]:
    """Content hash of every stage needed for the targets."""
    hashes: Dict[str, str] = {}
    for name in stage_plan(targets, config):
        hashes[name] = stage_hash(name, config.section_digest(*STAGES[name].config_paths),
                                  [hashes[dep] for dep in stage_deps(name, config)])
    return hashes


def run_stage(
ctx: RunContext, name: str, digest: str) -> None:
    """Run one stage, recording success or failure in the run manifest."""
    try:
        start_time = time.time()
        logger.info(f"Starting stage {name}...")
        STAGE_FUNCS[name](ctx)
        duration = time.time() - start_time
        ctx.manifest.mark_complete(name, digest, duration)
        logger.info(f"Stage {name} completed in {duration:.2f} seconds")
    except Exception as e:
        logger.error(f"Stage {name} failed: {e}", exc_info=True)
        ctx.manifest.mark_failed(name, digest, str(e))
        if isinstance(e, StageError):
            raise
        raise StageError(name, str(e), e) from e


def run_pipeline(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None,
                 jobs: Optional[int] = None, target: Union[str, Sequence[str]] = 'report') -> Path:
    """
    Run the experiment up to and including a target stage.

    Args:
        config: Experiment configuration
        out_dir: Run directory. Defaults to the LSP_OUT_DIR setting.
        jobs: Worker processes for zoo training and defenses. Defaults to LSP_JOBS.
        target: Last stage to run, or several

    Returns:
        Path of the run directory

    Raises:
        StageError: If a stage fails; the manifest records the failure
    """
    settings = load_settings()
    setup_logger('src')
    out_dir = Path(out_dir) if out_dir is not None else settings.out_dir
    ctx = RunContext(config, out_dir, jobs or settings.jobs)
    ctx.writer.write_json('config.json', config.to_dict())

    total_start_time = time.time()
    logger.info(f"Starting pipeline up to {target} in {out_dir}...")
    for name, digest in stage_hashes(target, config).items():
        if ctx.manifest.is_complete(name, digest):
            logger.info(f"Stage {name} is up to date, skipping")
            continue
        run_stage(ctx, name, digest)

    logger.info(f"Pipeline completed in {time.time() - total_start_time:.2f} seconds")
    for kind, info in ctx.writer.get_artifact_info().items():
        logger.info(f"{kind}: {info['count']} stored")
    return out_dir
