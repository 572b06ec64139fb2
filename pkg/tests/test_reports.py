import json

import numpy as np
import pytest

from core.reports import (
    MANIFEST_NAME,
    format_block,
    format_value,
    git_blob_hash,
    read_json,
    write_json,
    write_jsonl,
    write_manifest,
)
from utils.exceptions import ArtifactError


def test_format_values():
    assert format_value(None) == "NA"
    assert format_value(0.123456789) == "0.123457"
    assert format_value(np.float64(2.5)) == "2.5"
    assert format_value(7) == "7"


def test_block_layout():
    text = format_block("simulate model tau=3", {"Profit": 1.25, "Sharpe Ratio": None})
    assert text.splitlines() == ["[simulate model tau=3]", "Profit=1.25", "Sharpe Ratio=NA"]


def test_json_handles_numpy_and_non_finite(tmp_path):
    path = write_json(tmp_path / "sub" / "r.json", {"a": np.float32(0.5), "b": np.arange(3), "c": float("nan")})
    assert read_json(path) == {"a": 0.5, "b": [0, 1, 2], "c": None}


def test_jsonl_rows(tmp_path):
    path = write_jsonl(tmp_path / "rows.jsonl", [{"k": 0}, {"k": np.int64(1)}])
    assert [json.loads(line) for line in path.read_text().splitlines()] == [{"k": 0}, {"k": 1}]


def test_git_blob_hash(tmp_path):
    path = tmp_path / "hello.txt"
    path.write_bytes(b"hello\n")
    assert git_blob_hash(path) == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_read_missing_json(tmp_path):
    with pytest.raises(ArtifactError):
        read_json(tmp_path / "absent.json")


def test_manifest_lists_hashes(tmp_path):
    produced = tmp_path / "hello.txt"
    produced.write_bytes(b"hello\n")
    path = write_manifest(tmp_path, "train", ["train", "--seed", "3"], "abc", outputs=[produced, tmp_path / "gone"])
    assert path.name == MANIFEST_NAME
    manifest = read_json(path)
    assert set(manifest) == {"command", "argv", "config_hash", "inputs", "outputs"}
    assert manifest["argv"] == ["train", "--seed", "3"]
    assert manifest["outputs"][str(produced)] == "ce013625030ba8dba906f756967f9e9ca394464a"
    assert manifest["outputs"][str(tmp_path / "gone")] is None
