"""
Module for persisting datasets, model checkpoints, triggers and reports under a run directory.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from src.core.types import LabeledDataset
from src.models.classifier import Classifier
from src.transformation.triggers import TriggerSpec

logger = logging.getLogger(__name__)

DATASETS_DIR = 'datasets'
MODELS_DIR = 'models'
MANIFEST_FILE = 'manifest.json'
ARCHITECTURE_FILE = 'architecture.json'


def write_f32(path: Path, array: np.ndarray) -> None:
    """Raw little-endian float32 dump."""
    np.ascontiguousarray(array, dtype='<f4').tofile(path)


def dump_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as file:
        json.dump(doc, file, indent=2, sort_keys=True)


class ArtifactWriter:
    """Class to handle writing run artifacts to a directory tree."""

    def __init__(self, root: Union[str, Path]):
        """
        Args:
            root: Run directory; created on first write.
        """
        self.root = Path(root)
        logger.debug(f"Initialized ArtifactWriter at {self.root}")

    def ensure_dir(self, relative: Union[str, Path]) -> Path:
        """Create a directory under the root if it doesn't exist."""
        path = self.root / relative
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_dataset(self, dataset: LabeledDataset, name: str) -> Path:
        """
        Write a dataset as raw float32 arrays plus a manifest.

        Args:
            dataset: Dataset to store
            name: Directory name under datasets/

        Returns:
            Path of the dataset directory
        """
        try:
            path = self.ensure_dir(Path(DATASETS_DIR) / name)
            height, width, channels = dataset.image_shape
            write_f32(path / 'images.f32', dataset.images)
            write_f32(path / 'labels.f32', dataset.labels)
            dump_json(path / MANIFEST_FILE, {
                'height': height,
                'width': width,
                'channels': channels,
                'num_classes': dataset.num_classes,
                'count': len(dataset),
                'split_tag': dataset.split_tag.value,
                'seed': dataset.seed,
            })
            logger.info(f"Wrote {len(dataset)} samples to {path}")
            return path
        except Exception as e:
            logger.error(f"Failed to write dataset {name}: {e}", exc_info=True)
            raise

    def write_checkpoint(self, model: Classifier, name: str, metadata: Optional[Dict[str, Any]] = None) -> Path:
        """
        Write a model checkpoint: architecture descriptor, one float32 file per
        parameter tensor and a manifest with training metadata.

        Args:
            model: Classifier to store
            name: Directory name under models/
            metadata: Seed, training config, poisoning metadata

        Returns:
            Path of the checkpoint directory
        """
        try:
            path = self.ensure_dir(Path(MODELS_DIR) / name)
            dump_json(path / ARCHITECTURE_FILE, model.architecture.to_dict())
            shapes = {}
            for param_name, tensor in model.state_dict().items():
                array = tensor.detach().cpu().numpy()
                write_f32(path / f'{param_name}.f32', array)
                shapes[param_name] = list(array.shape)
            dump_json(path / MANIFEST_FILE, {
                'parameters': shapes,
                'history': model.history,
                'metadata': metadata or {},
            })
            logger.debug(f"Wrote checkpoint {name} ({model.parameter_count()} parameters)")
            return path
        except Exception as e:
            logger.error(f"Failed to write checkpoint {name}: {e}", exc_info=True)
            raise

    def write_trigger(self, spec: TriggerSpec, relative: Union[str, Path]) -> Path:
        path = self.root / relative
        dump_json(path, spec.to_dict())
        return path

    def write_json(self, relative: Union[str, Path], doc: Any) -> Path:
        path = self.root / relative
        dump_json(path, doc)
        logger.debug(f"Wrote {path}")
        return path

    def write_table(self, df: pd.DataFrame, relative: Union[str, Path]) -> Path:
        """Write a report table as CSV."""
        path = self.root / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False)
        logger.info(f"Wrote {len(df)} rows to {path}")
        return path

    def get_artifact_info(self) -> Dict[str, Dict[str, Any]]:
        """
        Get information about stored datasets and checkpoints.

        Returns:
            Dictionary keyed by artifact kind with names and counts
        """
        info = {}
        for kind in (DATASETS_DIR, MODELS_DIR):
            folder = self.root / kind
            names = sorted(p.name for p in folder.iterdir() if (p / MANIFEST_FILE).exists()) if folder.exists() else []
            info[kind] = {'count': len(names), 'names': names}
        return info
