#!/usr/bin/env python3
"""Convenience wrapper so a checkout can run scenarios without
installing the console script: python3 scripts/run_scenario.py run t1_joint
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from parley.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
