"""
Command-line surface for evoctl
"""

from .cli_app import CliApp, build_parser

__all__ = ["CliApp", "build_parser"]
