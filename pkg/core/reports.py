"""
NumHTML - Reports

Run artifacts: key=value report blocks for the console, JSON and JSONL
files, and the per-run manifest with content hashes.
"""

import json
import math
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from utils.exceptions import ArtifactError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays into JSON-ready values; non-finite floats become None."""
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def format_value(value: Any) -> str:
    if value is None:
        return "NA"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def format_block(title: str, values: Mapping[str, Any]) -> str:
    """
    Render a report block::

        [title]
        key=value
        ...
    """
    lines = [f"[{title}]"]
    lines += [f"{key}={format_value(value)}" for key, value in values.items()]
    return "\n".join(lines)


def write_json(path: str | Path, data: Any) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}") from e
    return path


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e


def write_jsonl(path: str | Path, rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write one JSON object per line."""
    path = Path(path)
    count = 0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(json.dumps(_plain(row)) + "\n")
                count += 1
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {count} rows to {path}")
    return path


def git_blob_hash(path: str | Path) -> str:
    """SHA-1 of ``b"blob <size>\\0" + content``, as ``git hash-object`` computes it."""
    try:
        content = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactError(f"cannot hash {path}: {e}") from e
    header = f"blob {len(content)}\0".encode("ascii")
    return hashlib.sha1(header + content).hexdigest()


def _hashes(paths: Sequence[str | Path]) -> Dict[str, Optional[str]]:
    hashes = {}
    for p in paths:
        p = Path(p)
        hashes[str(p)] = git_blob_hash(p) if p.is_file() else None
    return hashes


def write_manifest(
    out_dir: str | Path,
    command: str,
    argv: Sequence[str],
    config_hash: str,
    inputs: Sequence[str | Path] = (),
    outputs: Sequence[str | Path] = (),
) -> Path:
    """
    Write ``<out>/manifest.json`` listing the command, its arguments, the
    configuration hash and blob hashes of inputs and produced artifacts
    (missing files hash to null).
    """
    manifest = {
        "command": command,
        "argv": list(argv),
        "config_hash": config_hash,
        "inputs": _hashes(inputs),
        "outputs": _hashes(outputs),
    }
    path = write_json(Path(out_dir) / MANIFEST_NAME, manifest)
    logger.info(f"Manifest written: {path}")
    return path
