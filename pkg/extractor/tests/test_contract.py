import json

import numpy as np
import pytest

from layerdump.contract import contract_check
from layerdump.extract import ExtractorConfig, extract
from layerdump.mtx import write_mtx

from conftest import TINY_HUBERT


@pytest.fixture
def dump_dir(tmp_path, tone_wav):
    extract(ExtractorConfig(model="hubert", arch=TINY_HUBERT, seed=0,
                            audio={"s": str(tone_wav)}, out=str(tmp_path),
                            layers=[0, 1], window_s=0.4, stride_s=0.01,
                            batch_size=64))
    return tmp_path


def test_valid_dump_passes(dump_dir):
    report = contract_check(dump_dir)
    assert report["files"] == 2
    assert report["violations"] == []
    meta = json.loads(next(dump_dir.glob("*.meta.json")).read_text())
    assert meta["validated"] is True


def test_rate_mismatch_flagged(dump_dir):
    report = contract_check(dump_dir, expected_rate_hz=50.0)
    kinds = {v["kind"] for v in report["violations"]}
    assert "rate mismatch" in kinds


def test_missing_causal_flag(tmp_path):
    write_mtx(tmp_path / "x.mtx", np.ones((5, 3), dtype=np.float32),
              {"kind": "feature", "rate_hz": 100.0})
    report = contract_check(tmp_path)
    assert any(v["kind"] == "causal flag" for v in report["violations"])


def test_nan_reports_row_index(tmp_path):
    data = np.ones((6, 2), dtype=np.float32)
    write_mtx(tmp_path / "x.mtx", data,
              {"kind": "feature", "rate_hz": 100.0, "causal": True})
    # poison one row on disk, bypassing the writer's finiteness check
    blob = bytearray((tmp_path / "x.mtx").read_bytes())
    import struct
    blob[24 + 2 * 4 * 2:24 + 2 * 4 * 2 + 4] = struct.pack("<f", np.nan)
    (tmp_path / "x.mtx").write_bytes(bytes(blob))
    report = contract_check(tmp_path)
    nf = [v for v in report["violations"] if v["kind"] == "non-finite"]
    assert nf and "row 2" in nf[0]["detail"]


def test_corrupt_header_flagged(tmp_path):
    (tmp_path / "bad.mtx").write_bytes(b"MTX0" + bytes(40))
    report = contract_check(tmp_path)
    assert any(v["kind"] == "format" for v in report["violations"])
