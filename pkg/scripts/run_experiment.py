#!/usr/bin/env python3
"""Run a federation experiment config; wrapper around the batch CLI.

    python scripts/run_experiment.py run configs/silo_adaptive.cfg --out results
"""

import sys

from fedfair.cli import main

if __name__ == "__main__":
    sys.exit(main())
