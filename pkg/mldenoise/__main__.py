"""Entry point for running mldenoise as a module: python -m mldenoise."""

import sys

from mldenoise.cli import main

if __name__ == "__main__":
    sys.exit(main())
