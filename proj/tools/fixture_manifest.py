#!/usr/bin/env python3
"""Regenerates fixtures/MANIFEST.csv (row counts and FNV-1a 64 checksums)."""
import csv
import pathlib
import sys

ENTRIES = [
    ("training_gt.csv", "training_gt", ""),
    ("mvm_gt.csv", "mvm_gt", ""),
    ("mvm_event_cases.csv", "event_cases", ""),
    ("table5.csv", "pooled_table", ""),
    ("submissions/Expert 1.csv", "submission", "Expert 1"),
    ("submissions/Expert 2.csv", "submission", "Expert 2"),
    ("submissions/Expert 3.csv", "submission", "Expert 3"),
    ("submissions/Team Indus.csv", "submission", "Team Indus"),
    ("submissions/VISILAB.csv", "submission", "VISILAB"),
    ("submissions/MUCS-1.csv", "submission", "MUCS-1"),
]


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def main() -> None:
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
    with open(root / "MANIFEST.csv", "w", newline="") as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["file", "kind", "team", "rows", "fnv1a64"])
        for name, kind, team in ENTRIES:
            data = (root / name).read_bytes()
            rows = sum(1 for line in data.decode().splitlines() if line.strip()) - 1
            w.writerow([name, kind, team, rows, f"{fnv1a64(data):016x}"])


if __name__ == "__main__":
    main()
