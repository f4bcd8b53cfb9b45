"""Constrained uniaxial minimizer: isotropic core, hedgehog blow-up, instability.

Run: python demos/04_uniaxial_instability.py   (under a minute)
"""
import json
import logging
import tempfile

from ldglab.harness import ExperimentConfig, run

logging.basicConfig(level=logging.INFO, format="%(message)s")

with tempfile.TemporaryDirectory() as out:
    cfg = ExperimentConfig(n=33, t=[800.0], mode="stability", out=out)
    rep = run(cfg)

keep = {k: rep[k] for k in ("energy", "uniaxial", "blowup", "stability") if k in rep}
keep["stability"] = {k: v for k, v in keep["stability"].items() if k != "history"}
print(json.dumps(keep, indent=2, default=str))
