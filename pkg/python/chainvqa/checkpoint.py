"""Versioned structured-text checkpoints of named parameter tensors."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from pydantic import BaseModel, ValidationError

from .errors import CheckpointError
from .logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "chainvqa-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointHeader(BaseModel):
    format: str
    version: int
    created: str
    model: str
    metadata: dict[str, Any] = {}


class TensorEntry(BaseModel):
    shape: list[int]
    data: list[float]


def save_checkpoint(
    path: str | Path,
    state: Mapping[str, np.ndarray],
    *,
    model: str,
    metadata: Mapping[str, Any] | None = None,
) -> Path:
    """Write ``state`` as JSON: a header followed by tensors in insertion order."""

    path = Path(path)
    header = CheckpointHeader(
        format=CHECKPOINT_FORMAT,
        version=CHECKPOINT_VERSION,
        created=datetime.now(timezone.utc).isoformat(),
        model=model,
        metadata=dict(metadata or {}),
    )
    tensors = {
        name: {"shape": list(array.shape), "data": np.asarray(array, dtype=np.float64).reshape(-1).tolist()}
        for name, array in state.items()
    }
    payload = {"header": header.model_dump(), "tensors": tensors}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, allow_nan=False), encoding="utf-8")
    logger.info("Saved %s checkpoint with %d tensors to %s", model, len(tensors), path)
    return path


def load_checkpoint(
    path: str | Path, *, model: str | None = None
) -> tuple[dict[str, np.ndarray], CheckpointHeader]:
    """Read a checkpoint; returns (state, header)."""

    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        header = CheckpointHeader.model_validate(payload["header"])
        entries = {name: TensorEntry.model_validate(raw) for name, raw in payload["tensors"].items()}
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
        raise CheckpointError(f"Could not read checkpoint {path}: {exc}") from exc

    if header.format != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a chainvqa checkpoint ({header.format!r})")
    if header.version > CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} has checkpoint version {header.version}; this build reads <= {CHECKPOINT_VERSION}"
        )
    if model is not None and header.model != model:
        raise CheckpointError(f"{path} holds a {header.model!r} model, expected {model!r}")

    state: dict[str, np.ndarray] = {}
    for name, entry in entries.items():
        array = np.asarray(entry.data, dtype=np.float64)
        expected = int(np.prod(entry.shape)) if entry.shape else 1
        if array.size != expected:
            raise CheckpointError(f"tensor {name!r} has {array.size} values for shape {entry.shape}")
        state[name] = array.reshape(entry.shape)
    return state, header
