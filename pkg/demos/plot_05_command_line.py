"""
The full pipeline from the command line
=======================================

``surecal`` runs the same steps as the earlier demos and writes every
intermediate result under one output directory.  Here the entry point is
called in-process; the shell equivalent is shown in each comment.
"""
import json
import tempfile
from pathlib import Path

from _standin import dataset_path
from surecal.cli import main

workdir = Path(tempfile.mkdtemp())
cfg = workdir / "run.json"
cfg.write_text(json.dumps({
    "data": str(dataset_path(workdir)),
    "out": str(workdir / "runs"),
    "seed": 0,
    "train": {"alpha_mode": "complement"},
}))

###############################################################################
# surecal prepare --config run.json --features all
# surecal train --config run.json --model logreg

assert main(["prepare", "--config", str(cfg), "--features", "all"]) == 0
assert main(["train", "--config", str(cfg), "--model", "logreg"]) == 0

###############################################################################
# surecal calibrate --config run.json --model logreg --plan platt_sigmoid,...
# Leaving out --plan runs all single and stacked calibrators.

plan = "platt_sigmoid,sure_sigmoid,sure_sigmoid+platt_sigmoid"
code = main(["calibrate", "--config", str(cfg), "--model", "logreg", "--plan", plan])
print("calibrate exit code:", code)

###############################################################################
# surecal reliability --probs .../test.csv --bins 15 --out reliability

test_csv = workdir / "runs/all/logreg/calibration/platt_sigmoid/test.csv"
main(["reliability", "--probs", str(test_csv), "--bins", "15", "--out", str(workdir / "rel")])

###############################################################################
# surecal report --out runs

main(["report", "--out", str(workdir / "runs")])
for p in sorted((workdir / "runs").rglob("*.json"))[:8]:
    print(p.relative_to(workdir))
