"""
Experiment configuration: a JSON document parsed into frozen section dataclasses.

Missing keys take their defaults, unknown keys are rejected, and attack rates
accept the string "inf".
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar, Union

from src.core.types import RngSeed
from src.defense.abs import AbsConfig
from src.defense.reversal import ReversalConfig
from src.models.training import TrainConfig
from src.transformation.triggers import (
    Corner,
    TriggerKind,
    TriggerSpec,
    make_badnets_spec,
    make_blend_spec,
    make_filter_spec,
    make_random_square_spec,
)
from src.utils.errors import ConfigurationError

T = TypeVar('T')


def parse_rate(value: Union[str, float, int]) -> float:
    """Attack rate from JSON: a number or the string 'inf'."""
    if isinstance(value, str):
        if value.strip().lower() in ('inf', 'infinity'):
            return math.inf
        raise ConfigurationError(f"attack rate must be a number or 'inf', got {value!r}")
    return float(value)


def encode_rate(value: float) -> Union[str, float]:
    return 'inf' if math.isinf(value) else value


@dataclass(frozen=True)
class DatasetSection:
    source: str = 'synthetic'
    num_classes: int = 10
    per_class: int = 300
    height: int = 16
    width: int = 16
    channels: int = 1
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    max_samples: Optional[int] = None
    test_fraction: float = 0.2
    defense_holdout: int = 200

    def __post_init__(self):
        if self.source not in ('synthetic', 'idx'):
            raise ConfigurationError(f"dataset.source must be 'synthetic' or 'idx', got {self.source!r}")
        if self.source == 'idx' and (not self.images_path or not self.labels_path):
            raise ConfigurationError("dataset.source 'idx' needs images_path and labels_path")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError(f"dataset.test_fraction must lie in (0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class AttackSection:
    kind: str = 'patch'
    size_pixels: int = 9
    corner: str = 'bottom_right'
    value: float = 1.0
    position_jitter: int = 2
    color_jitter: float = 0.2
    alpha: float = 0.1
    channel_scale: Optional[Tuple[float, ...]] = None
    channel_shift: Optional[Tuple[float, ...]] = None
    poison_fraction: float = 0.1
    clean_label: bool = False
    target_classes: Tuple[int, ...] = (0,)

    def __post_init__(self):
        try:
            TriggerKind(self.kind)
            Corner(self.corner)
        except ValueError as e:
            raise ConfigurationError(f"attack: {e}") from e
        if not 0.0 <= self.poison_fraction < 1.0:
            raise ConfigurationError(f"attack.poison_fraction must lie in [0, 1), got {self.poison_fraction}")
        if not self.target_classes:
            raise ConfigurationError("attack.target_classes must not be empty")

    def build_trigger(self, height: int, width: int, channels: int, seed: RngSeed) -> TriggerSpec:
        """Trigger-injecting function described by this section."""
        kind = TriggerKind(self.kind)
        if kind is TriggerKind.PATCH:
            return make_badnets_spec(height, width, channels, self.size_pixels, self.corner, self.value)
        if kind is TriggerKind.RANDOM_PATCH:
            return make_random_square_spec(height, width, channels, self.size_pixels, self.corner, self.value,
                                           self.position_jitter, self.color_jitter, seed.derive(0x7a).seed)
        if kind is TriggerKind.BLEND:
            return make_blend_spec(height, width, channels, self.alpha, seed.derive(0xb1).seed)
        scale = self.channel_scale or (1.2,) * channels
        shift = self.channel_shift or (-0.1,) * channels
        return make_filter_spec(scale, shift)


@dataclass(frozen=True)
class ZooSection:
    n_benign: int = 6
    n_baseline: int = 6
    n_lsp: int = 6

    def __post_init__(self):
        if min(self.n_benign, self.n_baseline, self.n_lsp) < 1:
            raise ConfigurationError("zoo sizes must be >= 1")


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = 'adam'

    def build(self, seed: RngSeed) -> TrainConfig:
        try:
            return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.optimizer, seed=seed)
        except ValueError as e:
            raise ConfigurationError(f"train: {e}") from e


@dataclass(frozen=True)
class DefenseSection:
    methods: Tuple[str, ...] = ('nc',)
    lambda_weight: float = 0.01
    steps: int = 200
    step_size: float = 0.1
    restarts: int = 1
    lambda_schedule: str = 'fixed'
    optimizer: str = 'adam'
    batch_size: int = 64
    mad_threshold: float = 2.0
    epsilon: float = 0.0
    abs_weights: Tuple[float, float, float] = (1.0, 0.1, 1.0)
    abs_size_budget: Optional[float] = None
    abs_layer_index: int = 1
    abs_top_k: int = 10
    abs_steps: int = 200
    abs_threshold: float = 0.85
    literal_ssim: bool = False

    def __post_init__(self):
        unknown = set(self.methods) - {'nc', 'abs'}
        if unknown or not self.methods:
            raise ConfigurationError(f"defense.methods must be drawn from 'nc' and 'abs', got {list(self.methods)}")
        if self.epsilon < 0:
            raise ConfigurationError(f"defense.epsilon must be >= 0, got {self.epsilon}")
        if len(self.abs_weights) != 3:
            raise ConfigurationError("defense.abs_weights needs three weights")

    def nc_config(self, seed: RngSeed, lambda_weight: Optional[float] = None) -> ReversalConfig:
        try:
            return ReversalConfig(
                lambda_weight=self.lambda_weight if lambda_weight is None else lambda_weight,
                steps=self.steps,
                step_size=self.step_size,
                restarts=self.restarts,
                lambda_schedule=self.lambda_schedule,
                optimizer=self.optimizer,
                batch_size=self.batch_size,
                seed=seed,
            )
        except ValueError as e:
            raise ConfigurationError(f"defense: {e}") from e

    def abs_config(self, seed: RngSeed, size_pixels: int) -> AbsConfig:
        w1, w2, w3 = self.abs_weights
        try:
            return AbsConfig(
                size_budget=self.abs_size_budget or 2.0 * size_pixels,
                w1=w1,
                w2=w2,
                w3=w3,
                layer_index=self.abs_layer_index,
                top_k_neurons=self.abs_top_k,
                steps=self.abs_steps,
                step_size=self.step_size,
                literal_ssim=self.literal_ssim,
                optimizer=self.optimizer,
                batch_size=self.batch_size,
                seed=seed,
            )
        except ValueError as e:
            raise ConfigurationError(f"defense: {e}") from e


@dataclass(frozen=True)
class AttackRateSection:
    mode: str = 'from_bound'
    value: float = math.inf
    safety_factor: float = 0.9

    def __post_init__(self):
        if self.mode not in ('fixed', 'from_bound'):
            raise ConfigurationError(f"attack_rate.mode must be 'fixed' or 'from_bound', got {self.mode!r}")
        object.__setattr__(self, 'value', parse_rate(self.value))
        if not 0.0 < self.safety_factor <= 1.0:
            raise ConfigurationError(f"attack_rate.safety_factor must lie in (0, 1], got {self.safety_factor}")


@dataclass(frozen=True)
class SweepSection:
    enabled: bool = False
    attack_rates: Tuple[float, ...] = (2.0, 4.0, 6.0, math.inf)
    lambdas: Tuple[float, ...] = (0.001,)
    replicas: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'attack_rates', tuple(parse_rate(v) for v in self.attack_rates))
        object.__setattr__(self, 'lambdas', tuple(float(v) for v in self.lambdas))
        if self.replicas < 1:
            raise ConfigurationError("sweep.replicas must be >= 1")


SECTIONS: Dict[str, Type] = {
    'dataset': DatasetSection,
    'attack': AttackSection,
    'zoo': ZooSection,
    'train': TrainSection,
    'defense': DefenseSection,
    'attack_rate': AttackRateSection,
    'sweep': SweepSection,
}


def _section(cls: Type[T], doc: Optional[Dict[str, Any]], name: str) -> T:
    doc = dict(doc or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigurationError(f"unknown keys in '{name}': {', '.join(unknown)}")
    values = {key: tuple(value) if isinstance(value, list) else value for key, value in doc.items()}
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigurationError(f"invalid '{name}' section: {e}") from e


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and math.isinf(value):
        return 'inf'
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment."""

    seed: int = 0
    dataset: DatasetSection = field(default_factory=DatasetSection)
    attack: AttackSection = field(default_factory=AttackSection)
    zoo: ZooSection = field(default_factory=ZooSection)
    train: TrainSection = field(default_factory=TrainSection)
    defense: DefenseSection = field(default_factory=DefenseSection)
    attack_rate: AttackRateSection = field(default_factory=AttackRateSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def __post_init__(self):
        try:
            RngSeed(self.seed)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        bad = [t for t in self.attack.target_classes if not 0 <= t < self.dataset.num_classes]
        if self.dataset.source == 'synthetic' and bad:
            raise ConfigurationError(f"target classes {bad} out of range for {self.dataset.num_classes} classes")

    @property
    def rng_seed(self) -> RngSeed:
        return RngSeed(self.seed)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'ExperimentConfig':
        unknown = sorted(set(doc) - set(SECTIONS) - {'seed'})
        if unknown:
            raise ConfigurationError(f"unknown top-level keys: {', '.join(unknown)}")
        sections = {name: _section(section_cls, doc.get(name), name) for name, section_cls in SECTIONS.items()}
        return cls(seed=int(doc.get('seed', 0)), **sections)

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {'seed': self.seed}
        for name in SECTIONS:
            section = getattr(self, name)
            doc[name] = {f.name: _jsonable(getattr(section, f.name)) for f in dataclasses.fields(section)}
        return doc

    def section_digest(self, *paths: str) -> str:
        """
        Content hash of the named config paths.

        A path is a whole section ('train'), 'seed', or a single field ('zoo.n_lsp').

        Raises:
            ConfigurationError: If a path names no section or field
        """
        full = self.to_dict()
        picked = {}
        for path in paths:
            section, _, field = path.partition('.')
            if section not in full:
                raise ConfigurationError(f"unknown config path: {path!r}")
            if not field:
                picked[path] = full[section]
            elif isinstance(full[section], dict) and field in full[section]:
                picked[path] = full[section][field]
            else:
                raise ConfigurationError(f"unknown config path: {path!r}")
        payload = json.dumps(picked, sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()

    def with_overrides(self, seed: Optional[int] = None) -> 'ExperimentConfig':
        return self if seed is None else dataclasses.replace(self, seed=seed)


def load_config(path: Optional[Union[str, Path]]) -> ExperimentConfig:
    """
    Load an experiment configuration from JSON; no path gives the defaults.

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigurationError: If the document is invalid
    """
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path) as file:
        try:
            doc = json.load(file)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(doc)
