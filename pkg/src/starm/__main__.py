"""Entry point for ``python -m starm``."""

import sys

from starm.cli import main

if __name__ == "__main__":
    sys.exit(main())
