"""
Logistic regression and a small feed-forward network
====================================================

Both models minimize a class-weighted cross-entropy with Adam and early
stopping on validation loss.  The decision threshold is then chosen to
maximize F1 on the training split.
"""
import tempfile

from _standin import dataset_path
from surecal import TrainConfig, load_credit_csv, predict, prepare, train
from surecal.metrics import full_report

prep = prepare(load_credit_csv(dataset_path(tempfile.mkdtemp())), "all", seed=0)

# "complement" weights the rare class by 1 - n+/N
cfg = TrainConfig(seed=0, alpha_mode="complement")

###############################################################################
# Logistic regression is the network with no hidden layer.

models = {}
for kind in ("logreg", "ffnn"):
    m = train(kind, prep.x_train, prep.y_train, prep.x_val, prep.y_val, cfg)
    models[kind] = m
    print(f"{kind}: dims {m.network.dims}, best epoch {m.best_epoch}, "
          f"alpha {m.alpha:.3f}, tau* {m.tau:.4f}")

###############################################################################
# Held-out scores at the tuned threshold.

print(f"\n{'':8}{'F1':>8}{'recall':>8}{'prec':>8}{'AUC-ROC':>9}{'AUC-PR':>8}")
for kind, m in models.items():
    r = full_report(prep.y_test, predict(m, prep.x_test), m.tau)
    print(f"{kind:<8}{r.f1:8.3f}{r.recall:8.3f}{r.precision:8.3f}{r.auc_roc:9.3f}{r.auc_pr:8.3f}")

###############################################################################
# The weighted loss pulls scores upward for the minority class, so the mean
# predicted probability overshoots the observed default rate.  This is the
# miscalibration the next demos correct.

for kind, m in models.items():
    p = predict(m, prep.x_val)
    print(f"{kind}: mean prob {p.mean():.3f} vs observed {prep.y_val.mean():.3f}")
