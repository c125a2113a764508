#!/usr/bin/env python3
"""Cross-validate the four-mode benchmark with jumps and dense coupling."""

import sys
from pathlib import Path

from spde_moments.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else str(ROOT / "out" / "multimode")
    rc = main(["validate", "--config", str(ROOT / "configs" / "multimode.json"), "--out", out])
    print(f"results in {out}")
    sys.exit(rc)
