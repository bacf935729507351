"""
Result files for ghost-imaging runs.

Every command writes one CSV table and a JSON run manifest next to it
(`<stem>.manifest.json`). The manifest records the command, its flags, the fully
resolved scene in SI units, the grid sizes actually used and the headline numbers,
so a run can be reproduced from the manifest alone.
"""

import json
import math
import os
import tempfile
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import pandas as pd

from optics.scene import Scene, scene_from_dict, scene_to_dict

VERSION_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "VERSION")


def software_version() -> str:
    with open(VERSION_FILE) as f:
        return f.read().strip()


@dataclass
class RunManifest:
    """Everything needed to reproduce and interpret one CLI run"""
    command: str
    flags: Dict[str, Any]
    scene: Dict[str, Any]                # scene_to_dict output, SI units
    grid_sizes: Dict[str, int]
    results: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None           # oracle runs only
    realizations: Optional[int] = None   # oracle runs only
    software_version: str = field(default_factory=software_version)
    duration_s: float = 0.0
    run_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @classmethod
    def for_scene(cls, command: str, flags: Dict[str, Any], scene: Scene, **kwargs) -> "RunManifest":
        return cls(
            command=command,
            flags=flags,
            scene=scene_to_dict(scene),
            grid_sizes={
                "source": scene.source_grid.sample_count,
                "object": scene.object_grid.sample_count,
                "detector": scene.detector_grid.sample_count,
            },
            **kwargs,
        )

    def resolved_scene(self) -> Scene:
        return scene_from_dict(self.scene)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "command": self.command,
            "flags": self.flags,
            "scene": self.scene,
            "grid_sizes": self.grid_sizes,
            "results": self.results,
            "seed": self.seed,
            "realizations": self.realizations,
            "software_version": self.software_version,
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        return cls(**data)


def _json_ready(value: Any) -> Any:
    """Non-finite floats become null; JSON has no NaN or Infinity."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {key: _json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(item) for item in value]
    return value


def manifest_path_for(csv_path: str) -> str:
    stem, _ = os.path.splitext(csv_path)
    return f"{stem}.manifest.json"


def _atomic_write(path: str, write) -> None:
    """Write through a temp file in the destination directory, then rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


class ResultStore:
    """Writes result tables and manifests atomically"""

    def save_table(self, table: pd.DataFrame, path: str) -> str:
        _atomic_write(path, lambda f: table.to_csv(f, index=False, float_format="%.17g", lineterminator="\n"))
        return path

    def save_manifest(self, manifest: RunManifest, csv_path: str) -> str:
        path = manifest_path_for(csv_path)
        data = _json_ready(manifest.to_dict())
        _atomic_write(path, lambda f: json.dump(data, f, indent=2, sort_keys=True, allow_nan=False))
        return path

    def save_run(self, table: pd.DataFrame, manifest: RunManifest, csv_path: str) -> str:
        self.save_table(table, csv_path)
        return self.save_manifest(manifest, csv_path)

    def load_manifest(self, path: str) -> RunManifest:
        with open(path, encoding="utf-8") as f:
            return RunManifest.from_dict(json.load(f))

    def load_table(self, path: str) -> pd.DataFrame:
        return pd.read_csv(path, float_precision="round_trip")
