"""Post-extraction validation of a dump directory.

Checks every MTX1 file parses, has finite values, carries the causal
flag and the expected frame rate, and marks validated files in their
sidecars so strict consumers can require the stamp.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mtx import read_mtx


def contract_check(directory, expected_rate_hz=100.0, stamp=True):
    """Validate every .mtx file under ``directory``.

    Returns ``{"files": n, "violations": [...]}``; an empty violation
    list means the dump honors the exchange contract.  With ``stamp``
    set, clean files get ``"validated": true`` written into their
    sidecars.
    """
    directory = Path(directory)
    violations = []
    files = sorted(directory.glob("*.mtx"))
    for path in files:
        clean = True
        try:
            data, meta = read_mtx(path)
        except ValueError as exc:
            violations.append({"file": path.name, "kind": "format",
                               "detail": str(exc)})
            continue
        bad = ~np.isfinite(data)
        if bad.any():
            row = int(np.where(bad.any(axis=1))[0][0])
            violations.append({"file": path.name, "kind": "non-finite",
                               "detail": f"first bad row {row}"})
            clean = False
        rate = meta.get("rate_hz")
        if rate is None or abs(rate - expected_rate_hz) > 1e-9:
            violations.append({"file": path.name, "kind": "rate mismatch",
                               "detail": f"rate_hz={rate!r}, expected "
                                         f"{expected_rate_hz}"})
            clean = False
        if not meta.get("causal"):
            violations.append({"file": path.name, "kind": "causal flag",
                               "detail": "missing or false"})
            clean = False
        if (meta.get("rows"), meta.get("cols")) != data.shape:
            violations.append({"file": path.name, "kind": "shape",
                               "detail": "sidecar shape disagrees"})
            clean = False
        if clean and stamp:
            meta["validated"] = True
            Path(str(path) + ".meta.json").write_text(
                json.dumps(meta, indent=1))
    return {"files": len(files), "violations": violations}
