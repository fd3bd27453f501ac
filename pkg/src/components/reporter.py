"""Reporting and artifact management for the cell-process toolkit."""

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from models import CommandResult, RunConfig


TOOL_VERSION = "0.1.0"


def canonical(obj: Any) -> Any:
    """Plain JSON-ready structure; non-finite floats become strings."""
    if isinstance(obj, BaseModel):
        return canonical(obj.model_dump(mode="python"))
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [canonical(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


class Reporter:
    """Writes artifacts that all carry the tool version, the config and its hash."""

    def __init__(self, config: RunConfig, output_dir: Path, tool_version: str = TOOL_VERSION):
        self.config = config
        self.output_dir = Path(output_dir)
        self.tool_version = tool_version
        self.config_dict = canonical(config.model_dump(mode="json"))
        self.config_json = json.dumps(self.config_dict, sort_keys=True, separators=(",", ":"))
        self.config_hash = hashlib.sha256(self.config_json.encode("utf-8")).hexdigest()

    def metadata(self, command: str) -> Dict[str, Any]:
        return {
            "command": command,
            "config": self.config_dict,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
        }

    def path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def write_json(self, name: str, command: str, report: Any) -> Path:
        target = self.path(name)
        payload = {"metadata": self.metadata(command), "report": canonical(report)}
        target.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return target

    def write_csv(self, name: str, command: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """CSV preceded by '# key: value' metadata lines; floats as %.17g."""
        target = self.path(name)
        with target.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# tool_version: {self.tool_version}\n")
            fh.write(f"# config_hash: {self.config_hash}\n")
            fh.write(f"# command: {command}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return target

    def write_array(self, name: str, values: np.ndarray) -> Path:
        target = self.path(name)
        np.save(target, np.asarray(values, dtype=float), allow_pickle=False)
        return target

    def cached(self, name: str, metadata_name: str) -> Optional[Path]:
        """Artifact path if it exists and was produced from this exact config."""
        target = self.output_dir / name
        meta = self.output_dir / metadata_name
        if not target.exists() or not meta.exists():
            return None
        try:
            stored = json.loads(meta.read_text(encoding="utf-8"))["metadata"]["config_hash"]
        except (KeyError, ValueError):
            return None
        return target if stored == self.config_hash else None

    @staticmethod
    def generate_summary(result: CommandResult) -> str:
        """Create a human-readable summary of a command result."""
        status = "✓" if result.exit_code == 0 else "✗"
        summary = f"""
{status} {result.command}: {result.summary}
- Exit Code: {result.exit_code}
"""
        if result.artifacts:
            summary += "\nArtifacts:\n"
            for artifact in result.artifacts:
                summary += f"- {artifact}\n"
        if result.notes:
            summary += "\nNotes:\n"
            for note in result.notes:
                summary += f"- {note}\n"
        return summary
