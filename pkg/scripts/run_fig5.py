#!/usr/bin/env python3
"""Distance-sweep experiment: covert rate vs Alice-Bob separation.

The sweep relocates Bob to (d, 0) and the surface to (d/2, 0) at each
point and compares 16 against 64 reflecting elements.  Writes fig5.csv.
"""

import sys
from pathlib import Path

from covert_irs.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "fig5.json"

if __name__ == "__main__":
    sys.exit(main(["curves", "--config", str(CONFIG), "--out", "fig5.csv",
                   *sys.argv[1:]]))
