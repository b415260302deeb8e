"""qbsense - Simulation engine and CLI for dual-use quantum batteries."""

from .cli import app

__version__ = "0.1.0"


def main() -> None:
    """Entry point for the CLI application."""
    app()


__all__ = ["__version__", "main"]
