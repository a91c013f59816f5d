"""
Launcher script for evoctl

This script sets up the Python path and runs the command-line tool from the
project root without installing the package.
"""

import os
import sys


def setup_environment() -> None:
    """Add the project root to Python's path to enable absolute imports"""
    current_dir = os.path.abspath(os.path.dirname(__file__))
    if current_dir not in sys.path:
        sys.path.insert(0, current_dir)


def main() -> int:
    """Entry point for launching evoctl from the project root"""
    setup_environment()
    from evoctl.main import main as evoctl_main

    return evoctl_main()


if __name__ == "__main__":
    sys.exit(main())
