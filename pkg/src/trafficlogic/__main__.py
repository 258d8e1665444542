"""Allow ``python -m trafficlogic`` to behave like the console script."""

from __future__ import annotations

import sys

from trafficlogic.cli import main

if __name__ == "__main__":
    sys.exit(main())
