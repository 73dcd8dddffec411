"""Command line front end: ``layerdump extract`` and ``layerdump check``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .contract import contract_check
from .extract import ExtractorConfig, extract


def main(argv=None):
    parser = argparse.ArgumentParser(prog="layerdump")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ext = sub.add_parser("extract", help="dump per-layer hidden states")
    p_ext.add_argument("--config", required=True, help="JSON config")
    p_ext.add_argument("--out", help="output directory override")

    p_chk = sub.add_parser("check", help="validate a dump directory")
    p_chk.add_argument("--dir", required=True)
    p_chk.add_argument("--rate", type=float, default=100.0)

    args = parser.parse_args(argv)
    try:
        if args.command == "extract":
            doc = json.loads(Path(args.config).read_text())
            if args.out:
                doc["out"] = args.out
            written = extract(ExtractorConfig(**doc))
            print(json.dumps({"written": len(written)}))
            return 0
        report = contract_check(args.dir, expected_rate_hz=args.rate)
        print(json.dumps(report, indent=1))
        return 0 if not report["violations"] else 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFoundError", "message": str(exc)}),
              file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
