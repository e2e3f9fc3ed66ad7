#!/usr/bin/env python3
"""Run the three stages on the two-file record_copy fixture and print a short summary."""
import argparse
import sys
import time
from pathlib import Path

from soupgen.pipeline import generate

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixture", default=str(ROOT / "corpus" / "record_copy"))
    ap.add_argument("--out", default="soupgen-out/record_copy")
    args = ap.parse_args()

    start = time.monotonic()
    res = generate(args.fixture, "process_record", out=args.out)
    for snap in res.snapshots:
        r = snap.report
        print(f"{snap.name}: {r.status:17} covered={r.covered_properties:3} verified={r.verified_properties:3} "
              f"bounds={snap.proof.bounds.as_dict()} {snap.wall_time:.2f}s")
    final = res.snapshots[-1].proof if res.snapshots else None
    if final:
        print("preconditions:", ", ".join(str(t) for t in final.env.all_preconditions()) or "-")
    for e in res.errors:
        print("error:", e.property.id)
    print(f"exit {res.exit_code} in {time.monotonic() - start:.1f}s, outputs in {args.out}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
