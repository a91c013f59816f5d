"""
Main entry point for evoctl
This module wires signal handling to the command-line application.
"""

import signal
import sys
from types import FrameType
from typing import Optional, Sequence

from .cli.cli_app import run_cli


# Setup signal handling
def setup_signal_handlers() -> None:
    """Turn SIGTERM into KeyboardInterrupt so a run stops between records."""
    def handle_signal(signum: int, frame: Optional[FrameType]) -> None:
        raise KeyboardInterrupt(f"signal {signum}")

    signal.signal(signal.SIGTERM, handle_signal)


# Main entry point
def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main function: parse arguments, run the command and return its exit code.
    """
    setup_signal_handlers()
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
