"""Test package for evoctl."""
