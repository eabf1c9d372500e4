#!/usr/bin/env python3
"""Reproduce the Branin study: the GP tuner vs all baselines, 30 replications.

Writes traces, per-algorithm distance curves and a summary under
results/branin/. Plot-ready CSVs only; no rendering here.
"""

import sys

from gp_autotune.cli import main

if __name__ == "__main__":
    sys.exit(
        main(
            [
                "tune",
                "--function", "branin",
                "--budget", "100",
                "--init-design", "9",
                "--learn-cycle", "10",
                "--kappa", "adaptive:0.1,2",
                "--algorithms", "bo4co,sa,hill,ps,drift,random",
                "--replications", "30",
                "--seed", "1234",
                "--jobs", "2",
                "--out", "results/branin",
            ]
        )
    )
