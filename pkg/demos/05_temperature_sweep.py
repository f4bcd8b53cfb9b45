"""Full Q-tensor sweep over t on a coarse grid; prints the per-t table.

Run: python demos/05_temperature_sweep.py   (a few minutes)
"""
import logging
import tempfile

from ldglab.harness import ExperimentConfig, sweep

logging.basicConfig(level=logging.INFO, format="%(message)s")

with tempfile.TemporaryDirectory() as out:
    cfg = ExperimentConfig(n=33, t=[200.0, 800.0, 3200.0], mode="full", out=out)
    bundle = sweep(cfg)

for row in bundle["table"]:
    print(row)
for note in bundle["notices"]:
    print("notice:", note)
