"""Run manifests: a config snapshot plus input hashes, enough to replay a
command exactly and to skip recomputation when nothing changed."""

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from factqa import __version__


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def build_manifest(config_snapshot: dict, inputs: dict[str, Path]) -> dict:
    return {
        "tool_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "config": config_snapshot,
        "inputs": {
            name: {"path": str(path), "sha256": file_sha256(path)}
            for name, path in sorted(inputs.items())
        },
    }


def write_manifest(path: Path, config_snapshot: dict, inputs: dict[str, Path]) -> dict:
    manifest = build_manifest(config_snapshot, inputs)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    return manifest


def is_up_to_date(
    manifest_path: Path,
    config_snapshot: dict,
    inputs: dict[str, Path],
    outputs: Iterable[Path],
) -> bool:
    """True when the stored manifest matches the would-be manifest (modulo
    timestamp) and every declared output still exists."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        return False
    if not all(Path(p).exists() for p in outputs):
        return False
    try:
        stored = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    fresh = build_manifest(config_snapshot, inputs)
    for key in ("tool_version", "config", "inputs"):
        if stored.get(key) != fresh[key]:
            return False
    return True
