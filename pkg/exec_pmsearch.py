#!/usr/bin/env python3
"""
Script entry point for pmsearch.

    python exec_pmsearch.py run -c experiment.cfg

is equivalent to ``python -m pmsearch run -c experiment.cfg``.
"""

from __future__ import annotations

from pmsearch.__main__ import main


if __name__ == "__main__":
    raise SystemExit(main())
