"""A synthetic table in the UCI credit-default layout.

Used by the demos when the real CSV is not available.  Default odds rise
with the latest repayment delay and the credit utilization, roughly as in
the real data, so the pipeline has signal to find.
"""
import csv
import os
from pathlib import Path

import numpy as np
from scipy.special import expit

from surecal.data import LABEL_COLUMN, UCI_HEADER


def write_uci_csv(path, n=600, seed=0):
    rng = np.random.default_rng(seed)
    limit = rng.choice([10, 20, 50, 80, 100, 200, 360, 500], n) * 1000
    sex = rng.integers(1, 3, n)
    edu = rng.choice([1, 2, 3, 4], n, p=[0.35, 0.45, 0.17, 0.03])
    mar = rng.choice([1, 2, 3], n, p=[0.45, 0.53, 0.02])
    age = rng.integers(21, 70, n)
    pay = np.clip(rng.poisson(0.4, (n, 6)) - 1 + (rng.uniform(size=(n, 1)) < 0.2) * 2, -2, 8)
    util = np.clip(rng.beta(0.8, 1.5, (n, 1)) + rng.normal(0, 0.05, (n, 6)), -0.05, 1.2)
    bill = np.round(util * limit[:, None])
    paid = np.round(np.abs(rng.normal(0.05, 0.05, (n, 6))) * limit[:, None])
    z = -1.1 + 0.7 * pay[:, 0] + 0.6 * util[:, 0] - 0.3 * (limit / 1e5) + 0.1 * (sex == 1)
    y = (rng.uniform(size=n) < expit(z)).astype(int)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(UCI_HEADER + [LABEL_COLUMN])
        for i in range(n):
            w.writerow([i + 1, limit[i], sex[i], edu[i], mar[i], age[i], *pay[i], *bill[i].astype(int),
                        *paid[i].astype(int), y[i]])
    return path


def dataset_path(workdir, n=30000, seed=0):
    """``$SURECAL_DATA`` if set, otherwise a freshly written stand-in table."""
    real = os.environ.get("SURECAL_DATA")
    if real:
        return Path(real)
    path = Path(workdir) / "standin_credit.csv"
    if not path.exists():
        write_uci_csv(path, n=n, seed=seed)
    return path
