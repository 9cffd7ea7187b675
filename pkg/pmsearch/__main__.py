#!/usr/bin/env python3
"""
Package entry point for pmsearch.

This enables running pmsearch as a module:
    python -m pmsearch index -c experiment.cfg
    python -m pmsearch run -c experiment.cfg --strategy heuristic
    python -m pmsearch eval -c experiment.cfg --plot
    python -m pmsearch --version
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence


def _show_version() -> None:
    """Display version information."""
    from pmsearch._version import __version__

    print(f"pmsearch version {__version__}")
    print("BM25 retrieval, knowledge-base query expansion and rerank for precision-medicine literature")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point for pmsearch.

    Parameters
    ----------
    argv : Sequence[str] | None
        Command-line arguments excluding the program name.
        If None, defaults to sys.argv[1:].

    Returns
    -------
    int
        Process exit code (0 success, 1 runtime error, 2 usage error).
    """
    if argv is None:
        argv = sys.argv[1:]

    # --help belongs to the subcommand parser
    parser = argparse.ArgumentParser(prog="pmsearch", add_help=False)
    parser.add_argument("--version", "-V", action="store_true")
    args, rest = parser.parse_known_args(list(argv))

    if args.version:
        _show_version()
        return 0

    from pmsearch.run_pmsearch import main as console_main

    return int(console_main(rest))


if __name__ == "__main__":
    raise SystemExit(main())
