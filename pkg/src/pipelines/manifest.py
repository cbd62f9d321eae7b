"""
Content-addressed stage manifest of a run directory.

Each stage's hash covers its own configuration sections and the hashes of
the stages it depends on, so a config change invalidates exactly the
downstream stages.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from src.loading.artifact_writer import MANIFEST_FILE, dump_json

logger = logging.getLogger(__name__)


def stage_hash(stage: str, config_digest: str, upstream: Iterable[str]) -> str:
    payload = json.dumps({'stage': stage, 'config': config_digest, 'upstream': list(upstream)})
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


class RunManifest:
    """Top-level manifest.json of a run directory."""

    def __init__(self, out_dir: Path):
        self.path = Path(out_dir) / MANIFEST_FILE
        self.stages: Dict[str, Dict[str, Any]] = {}
        if self.path.exists():
            with open(self.path) as file:
                self.stages = json.load(file).get('stages', {})

    def is_complete(self, stage: str, digest: Optional[str] = None) -> bool:
        record = self.stages.get(stage)
        if record is None or not record.get('completed'):
            return False
        return digest is None or record.get('hash') == digest

    def hash_of(self, stage: str) -> Optional[str]:
        record = self.stages.get(stage)
        return record.get('hash') if record else None

    def mark_complete(self, stage: str, digest: str, duration: float) -> None:
        self.stages[stage] = {'hash': digest, 'completed': True, 'duration_seconds': round(duration, 2)}
        self.save()

    def mark_failed(self, stage: str, digest: str, error: str) -> None:
        self.stages[stage] = {'hash': digest, 'completed': False, 'error': error}
        self.save()

    def save(self) -> None:
        dump_json(self.path, {'stages': self.stages})
