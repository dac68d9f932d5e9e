"""
Stacked calibrators and reliability diagrams
============================================

Calibrators can be chained: the second is fitted on the output of the first.
Reliability bins compare each bin's mean confidence with its observed
default rate, summarized as ECE and MCE.
"""
import tempfile

import numpy as np

from _standin import dataset_path
from surecal import (CalibFunctionKind, TrainConfig, load_credit_csv, platt_fit,
                     predict, prepare, stack_fit, sure_fit, train)
from surecal.metrics import full_report, reliability_bins

prep = prepare(load_credit_csv(dataset_path(tempfile.mkdtemp())), "all", seed=0)
model = train("logreg", prep.x_train, prep.y_train, prep.x_val, prep.y_val,
              TrainConfig(seed=0, alpha_mode="complement"))
p_val = predict(model, prep.x_val)
p_test = predict(model, prep.x_test)

###############################################################################
# All calibrators are fitted on the validation split and scored on test.

K = CalibFunctionKind
cals = {
    "uncalibrated": None,
    "Platt": platt_fit(p_val, prep.y_val),
    "SURE (sigmoid)": sure_fit(p_val, prep.y_val, K.SURE_SIGMOID),
    "SURE (sigmoid) + Platt": stack_fit(K.SURE_SIGMOID, K.PLATT_SIGMOID, p_val, prep.y_val),
    "Platt + SURE (sigmoid)": stack_fit(K.PLATT_SIGMOID, K.SURE_SIGMOID, p_val, prep.y_val),
}

print(f"observed test rate {100 * prep.y_test.mean():.2f}%")
print(f"{'':26}{'MDR %':>8}{'BCE':>8}{'BS':>8}{'ECE':>8}")
for name, cal in cals.items():
    q = p_test if cal is None else cal.apply(p_test)
    r = full_report(prep.y_test, q, model.tau)
    print(f"{name:<26}{r.mdr_percent:8.2f}{r.bce:8.4f}{r.brier:8.4f}{r.ece:8.4f}")

###############################################################################
# Ten-bin reliability table for raw scores and for Platt.  Empty bins show
# as nan and do not enter ECE.

for name in ("uncalibrated", "Platt"):
    cal = cals[name]
    q = p_test if cal is None else cal.apply(p_test)
    bins = reliability_bins(prep.y_test, q, n_bins=10)
    print(f"\n{name}")
    for lo, hi, c, a, f in zip(bins.lower, bins.upper, bins.counts, bins.accuracy, bins.confidence):
        print(f"  ({lo:.1f}, {hi:.1f}]  n={c:5d}  rate={a:6.3f}  conf={f:6.3f}")

###############################################################################
# A thresholded variant scores each bin by how often ``p > tau`` matches
# the label instead of by its event rate.

thr = full_report(prep.y_test, p_test, model.tau, bin_accuracy="thresholded")
print(f"\nthresholded-accuracy ECE for raw scores: {thr.ece:.4f}")
