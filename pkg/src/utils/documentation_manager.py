"""
Documentation Manager - Handles structured saving of run outputs and the run manifest
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from src import __version__
from src.config.settings import settings
from src.utils.data_loaders import ResultLoader

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to rerun a command and check its outputs."""

    command: str
    config: Dict[str, Any]
    code_version: str = __version__
    created: str = field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    solver: Dict[str, Any] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    wall_times: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


class DocumentationManager:
    """
    Manages the directory layout, output files and manifest of one run
    """

    SUBDIRECTORIES = ("curves", "branches", "stats", "calibration")

    def __init__(self, run_name: str = None, base_directory=None):
        self.run_name = run_name or f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
        root = Path(base_directory) if base_directory else Path(settings.OUTPUT_DIR) / self.run_name
        self.base_directory = root
        self.manifest: Optional[RunManifest] = None
        self.ensure_directory_structure()

    def ensure_directory_structure(self):
        """Create the directory structure for the run"""
        for name in self.SUBDIRECTORIES:
            (self.base_directory / name).mkdir(parents=True, exist_ok=True)

    def start(self, command: str, config: Dict[str, Any], **extra) -> RunManifest:
        self.manifest = RunManifest(command=command, config=config, **extra)
        return self.manifest

    def _record(self, path: Path) -> Path:
        if self.manifest is not None:
            self.manifest.outputs[str(path.relative_to(self.base_directory))] = file_sha256(path)
        return path

    def save_table(self, frame: pd.DataFrame, category: str, name: str) -> Path:
        """Write a CSV under ``category`` and record its hash"""
        path = ResultLoader.save_frame(frame, self.base_directory / category / f"{name}.csv")
        return self._record(path)

    def save_document(self, data: Dict[str, Any], category: str, name: str) -> Path:
        path = ResultLoader.save_json(data, self.base_directory / category / f"{name}.json")
        return self._record(path)

    def record_input(self, label: str, path) -> None:
        if self.manifest is not None:
            self.manifest.inputs[label] = str(Path(path).resolve())
            self.manifest.inputs[label + "_sha256"] = file_sha256(path)

    def save_manifest(self) -> Path:
        """Save the manifest; outputs written so far are already hashed"""
        if self.manifest is None:
            raise RuntimeError("no manifest started for this run")
        path = ResultLoader.save_json(self.manifest.to_dict(), self.base_directory / MANIFEST_NAME)
        print(f"📁 Manifest saved to: {path}")
        return path

    @staticmethod
    def load_manifest(path) -> RunManifest:
        with open(path, "r", encoding="utf-8") as f:
            return RunManifest.from_dict(json.load(f))

    @staticmethod
    def verify_manifest(path) -> List[str]:
        """Output files that are missing or whose hash no longer matches"""
        path = Path(path)
        manifest = DocumentationManager.load_manifest(path)
        problems = []
        for relative, digest in manifest.outputs.items():
            target = path.parent / relative
            if not target.exists():
                problems.append(f"{relative}: missing")
            elif file_sha256(target) != digest:
                problems.append(f"{relative}: hash mismatch")
        return problems
