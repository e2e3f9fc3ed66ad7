#!/usr/bin/env python3
"""Generate every corpus fixture and tabulate stage results and sink exposure.

Usage: python3 scripts/run_corpus.py [NAME ...]   (names filter fixtures by directory name)
"""
import argparse
import json
import sys
import time
from pathlib import Path

from soupgen.engine import ResourceBudget
from soupgen.pipeline import generate, match_exposure

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*")
    ap.add_argument("--corpus", default=str(ROOT / "corpus"))
    ap.add_argument("--out", default="soupgen-out/corpus")
    args = ap.parse_args()

    corpus = Path(args.corpus)
    mismatches = 0
    for d in sorted(p.parent for p in corpus.rglob("fixture.json")):
        if args.names and d.name not in args.names:
            continue
        meta = json.loads((d / "fixture.json").read_text())
        out = Path(args.out) / d.relative_to(corpus)
        t = time.monotonic()
        res = generate(d, meta["entry"], ResourceBudget(max_file_depth=meta.get("scope_depth", 3)), out=out)
        if res.exit_code:
            print(f"{d.name:18} exit {res.exit_code}: {res.message}")
            continue
        s = res.snapshots[-1]
        pre = [str(x) for x in s.proof.env.all_preconditions()]
        line = (f"{d.name:18} level={s.proof.scope.level} {s.report.status:17} "
                f"bounds={s.proof.bounds.as_dict()} pre={pre} errors={len(res.errors)}")
        for sink in meta.get("sinks", []):
            doc = match_exposure(out / "errors.json", sink)
            line += f" {sink}:{doc.get('criterion') or doc.get('reason')}"
            if "expect" in meta and doc["exposed"] != (meta["expect"] == "exposed"):
                mismatches += 1
                line += " (UNEXPECTED)"
        print(f"{line} {time.monotonic() - t:.1f}s")
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
