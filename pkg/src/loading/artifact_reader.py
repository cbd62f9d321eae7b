import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import pandas as pd
import torch

from src.core.types import LABEL_DTYPE, LabeledDataset, SplitTag
from src.loading.artifact_writer import ARCHITECTURE_FILE, DATASETS_DIR, MANIFEST_FILE, MODELS_DIR
from src.models.classifier import ArchitectureSpec, Classifier
from src.transformation.triggers import TriggerSpec
from src.utils.errors import DatasetFormatError

logger = logging.getLogger(__name__)


def read_f32(path: Path, shape) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"Array file not found: {path}")
    array = np.fromfile(path, dtype='<f4')
    expected = int(np.prod(shape))
    if array.size != expected:
        raise DatasetFormatError(path.name, f"expected {expected} float32 values, got {array.size}")
    return array.reshape(shape)


def load_json(path: Path) -> Any:
    if not path.exists():
        raise FileNotFoundError(f"JSON file not found: {path}")
    with open(path) as file:
        return json.load(file)


class ArtifactReader:
    """Class to handle reading run artifacts from a directory tree."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def has_dataset(self, name: str) -> bool:
        return (self.root / DATASETS_DIR / name / MANIFEST_FILE).exists()

    def has_checkpoint(self, name: str) -> bool:
        return (self.root / MODELS_DIR / name / MANIFEST_FILE).exists()

    def read_dataset(self, name: str) -> LabeledDataset:
        """Read a stored dataset; labels are renormalised in float64."""
        try:
            path = self.root / DATASETS_DIR / name
            manifest = load_json(path / MANIFEST_FILE)
            count, k = manifest['count'], manifest['num_classes']
            images = read_f32(path / 'images.f32', (count, manifest['height'], manifest['width'], manifest['channels']))
            labels = read_f32(path / 'labels.f32', (count, k)).astype(LABEL_DTYPE)
            if count:
                labels /= labels.sum(axis=1, keepdims=True)
            return LabeledDataset(images, labels, k, SplitTag(manifest['split_tag']), manifest.get('seed', 0))
        except Exception as e:
            logger.error(f"Failed to read dataset {name}: {e}", exc_info=True)
            raise

    def read_checkpoint(self, name: str) -> Tuple[Classifier, Dict[str, Any]]:
        """Rebuild a classifier from its checkpoint; returns (model, manifest)."""
        try:
            path = self.root / MODELS_DIR / name
            architecture = ArchitectureSpec.from_dict(load_json(path / ARCHITECTURE_FILE))
            manifest = load_json(path / MANIFEST_FILE)
            model = Classifier(architecture)
            state = {}
            for param_name, tensor in model.state_dict().items():
                stored = tuple(manifest['parameters'].get(param_name, ()))
                if stored != tuple(tensor.shape):
                    raise DatasetFormatError(param_name, f"expected shape {tuple(tensor.shape)}, got {stored}")
                state[param_name] = torch.tensor(read_f32(path / f'{param_name}.f32', stored))
            model.load_state_dict(state)
            model.history = list(manifest.get('history', []))
            model.eval()
            return model, manifest
        except Exception as e:
            logger.error(f"Failed to read checkpoint {name}: {e}", exc_info=True)
            raise

    def read_trigger(self, relative: Union[str, Path]) -> TriggerSpec:
        return TriggerSpec.from_dict(load_json(self.root / relative))

    def read_json(self, relative: Union[str, Path]) -> Any:
        return load_json(self.root / relative)

    def read_table(self, relative: Union[str, Path]) -> pd.DataFrame:
        path = self.root / relative
        if not path.exists():
            raise FileNotFoundError(f"Table not found: {path}")
        return pd.read_csv(path)
