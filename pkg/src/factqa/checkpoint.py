"""Checkpoint files: a versioned magic string, a JSON header carrying the
encoder config plus stage/provenance metadata, then flat little-endian
float32 tensor blocks in the declared parameter order."""

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from factqa.errors import LoadError
from factqa.model import CheckpointStage, EncoderConfig, ModelParams, Stage, param_shapes

MAGIC = b"FACTQA-CKPT-v1\n"


def _stage_to_json(stage: Optional[CheckpointStage]) -> Optional[dict]:
    if stage is None:
        return None
    d = asdict(stage)
    d["stage"] = stage.stage.value
    d["parent"] = stage.parent.value if stage.parent else None
    d["lineage"] = list(stage.lineage)
    return d


def _stage_from_json(d: Optional[dict]) -> Optional[CheckpointStage]:
    if d is None:
        return None
    return CheckpointStage(
        stage=Stage(d["stage"]),
        parent=Stage(d["parent"]) if d.get("parent") else None,
        seed=int(d["seed"]),
        train_config_hash=d["train_config_hash"],
        lineage=tuple(d.get("lineage", ())),
    )


def save_checkpoint(params: ModelParams, path: Path) -> None:
    names = list(param_shapes(params.config))
    header = {
        "config": asdict(params.config),
        "stage": _stage_to_json(params.stage),
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in names],
        "dtype": "<f4",
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name in names:
            fh.write(np.ascontiguousarray(params.tensors[name], dtype="<f4").tobytes())


def load_checkpoint(path: Path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise LoadError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        config = EncoderConfig(**header["config"])
        expected = param_shapes(config)
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in expected or expected[name] != shape:
                raise LoadError(f"{path}: unexpected tensor {name} with shape {shape}")
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise LoadError(f"{path}: truncated tensor block for {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        missing = set(expected) - set(tensors)
        if missing:
            raise LoadError(f"{path}: missing tensors {sorted(missing)}")
    return ModelParams(config=config, tensors=tensors, stage=_stage_from_json(header["stage"]))
