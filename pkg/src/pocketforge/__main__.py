"""
PocketForge entry point.

Run with: python -m pocketforge
"""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
