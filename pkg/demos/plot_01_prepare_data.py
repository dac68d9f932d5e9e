"""
Preparing the credit-default table
==================================

Load the 30,000-row credit table, derive the utilization columns, split it
60/20/20 with the default rate kept equal across parts, and standardize
using training rows only.

Set ``SURECAL_DATA`` to the real CSV to run on it.  Without it a synthetic
table with the same columns is written to a temporary directory.
"""
import tempfile

import numpy as np

from _standin import dataset_path
from surecal import FeatureSetKind, load_credit_csv, prepare
from surecal.data import derive_utilization_features, feature_names

workdir = tempfile.mkdtemp()
ds = load_credit_csv(dataset_path(workdir))
print(f"{ds.n_rows} rows, default rate {ds.labels.mean():.4f}")

###############################################################################
# Utilization is the bill divided by the credit limit, one column per month.

ds = derive_utilization_features(ds)
print("UTIL1 head:", np.round(ds.columns["UTIL1"][:5], 3))

###############################################################################
# Three feature sets.  Categorical columns become one-hot blocks later.

for kind in FeatureSetKind:
    print(f"{kind.value:>8}: {len(feature_names(kind))} columns")

###############################################################################
# Stratified split and standardization.  Mean and spread come from the
# training rows, so validation and test columns are only roughly centred.

prep = prepare(ds, FeatureSetKind.ALL, seed=0)
print("sizes:", prep.sizes)
for name, y in (("train", prep.y_train), ("val", prep.y_val), ("test", prep.y_test)):
    print(f"  {name:<5} default rate {y.mean():.4f}")

scaled = prep.standardizer.scaled
print("train column means ~0:", np.abs(prep.x_train[:, scaled].mean(axis=0)).max() < 1e-9)
print("test column means   :", np.round(prep.x_test[:, scaled].mean(axis=0)[:4], 3))
