"""Waypoints, payload, compliance and endurance in one pass.

Run with ``python demos/experiments_overview.py [output_dir]``.  The
endurance run simulates about twelve minutes of air use and takes a few
seconds.
"""

import sys

from umarm.config import load_config
from umarm.experiments import ExperimentSpec, run_experiment

cfg = load_config()
out = sys.argv[1] if len(sys.argv) > 1 else None

for kind in ("waypoints", "payload_sweep", "compliance_demo", "endurance"):
    report = run_experiment(cfg, ExperimentSpec(kind, output=out))
    print(report.summary())
