"""Command-line pipeline: prepare -> train -> calibrate -> reliability / report.

Run artifacts live under ``--out``::

    <out>/<features>/prepared/          train.csv val.csv test.csv prepared.json
    <out>/<features>/<model>/           model.json history.csv metrics_<split>.json
    <out>/<features>/<model>/calibration/<entry>/
                                        calibrator.json val.csv test.csv metrics_<split>.json

Each subcommand writes the configuration it actually ran with as
``config.json`` beside its outputs.  Exit status is 0 on success, 1 when a
computation fails and 2 for usage, configuration or input-file problems.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


from . import calibration as cb
from . import data as dt
from . import metrics as mt
from . import models as md

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2

SINGLE_KINDS = [k.value for k in cb.CalibFunctionKind]
STACKS = [
    "sure_sigmoid+platt_sigmoid",
    "sure_kumaraswamy+platt_sigmoid",
    "platt_sigmoid+sure_sigmoid",
    "platt_sigmoid+sure_kumaraswamy",
]
DEFAULT_PLAN = SINGLE_KINDS + STACKS
LABELS = {
    "uncalibrated": "Uncalibrated",
    "platt_sigmoid": "Platt",
    "sure_sigmoid": "SURE (sigmoid)",
    "sure_kumaraswamy": "SURE (Kumaraswamy)",
}


class UsageError(Exception):
    """Bad flags, configuration or input files (exit status 2)."""


def entry_label(entry: str) -> str:
    return " + ".join(LABELS[part] for part in entry.split("+"))


@dataclass
class RunConfig:
    data: str | None = None
    features: str = "all"
    seed: int = 0
    out: str = "runs"
    model: str = "logreg"
    bins: int = 10
    train: dict = field(default_factory=dict)
    sure: dict = field(default_factory=dict)
    platt: dict = field(default_factory=dict)
    plan: list = field(default_factory=lambda: list(DEFAULT_PLAN))

    def validate(self) -> "RunConfig":
        try:
            dt.FeatureSetKind(self.features)
        except ValueError:
            raise UsageError(f"unknown feature set {self.features!r}") from None
        if self.model not in md.MODEL_KINDS:
            raise UsageError(f"unknown model {self.model!r}")
        if not isinstance(self.bins, int) or self.bins < 1:
            raise UsageError(f"bin count must be a positive integer, got {self.bins!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise UsageError(f"seed must be a nonnegative integer, got {self.seed!r}")
        for entry in self.plan:
            if entry not in DEFAULT_PLAN:
                raise UsageError(f"unknown calibration plan entry {entry!r}; choose from {DEFAULT_PLAN}")
        try:
            self.train_config()
            self.sure_config()
            self.platt_config()
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid solver settings: {exc}") from None
        return self

    def train_config(self) -> md.TrainConfig:
        return md.TrainConfig(**{**self.train, "seed": self.seed})

    def sure_config(self) -> cb.SureSolverConfig:
        return cb.SureSolverConfig(**{**self.sure, "seed": self.seed})

    def platt_config(self) -> cb.PlattConfig:
        return cb.PlattConfig(**self.platt)

    @property
    def feature_dir(self) -> Path:
        return Path(self.out) / self.features

    @property
    def prepared_dir(self) -> Path:
        return self.feature_dir / "prepared"

    @property
    def model_dir(self) -> Path:
        return self.feature_dir / self.model

    def resolved(self) -> dict:
        out = asdict(self)
        out["train"] = asdict(self.train_config())
        out["sure"] = asdict(self.sure_config())
        out["platt"] = asdict(self.platt_config())
        return out


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise UsageError(f"unknown config keys in {path}: {unknown}")
    return RunConfig(**doc)


def resolve_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {k: getattr(args, k) for k in ("data", "features", "seed", "out", "model", "bins")
                 if getattr(args, k, None) is not None}
    cfg = replace(cfg, **overrides)
    if getattr(args, "alpha_mode", None):
        cfg.train = {**cfg.train, "alpha_mode": args.alpha_mode}
    if getattr(args, "plan", None) is not None:
        cfg.plan = [p for p in args.plan.split(",") if p]
    return cfg.validate()


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(mt.dumps(obj) + "\n")


def _read_json(path: Path, what: str):
    if not path.is_file():
        raise UsageError(f"missing {what}: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None


def _load_prepared(cfg: RunConfig) -> dt.PreparedData:
    try:
        return dt.load_prepared(cfg.prepared_dir)
    except FileNotFoundError:
        raise UsageError(
            f"no prepared data under {cfg.prepared_dir}; run `surecal prepare` first"
        ) from None
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read prepared data in {cfg.prepared_dir}: {exc}") from None


def _load_model(cfg: RunConfig) -> md.TrainedModel:
    doc = _read_json(cfg.model_dir / "model.json", "trained model (run `surecal train` first)")
    try:
        return md.TrainedModel.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed model file {cfg.model_dir / 'model.json'}: {exc}") from None


# -- table rendering ------------------------------------------------------------

def _fmt(v, digits=2):
    return "n/a" if v is None else f"{v:.{digits}f}"


def performance_table(title: str, reports: dict) -> str:
    """Rows F1..Loss, columns train/validation/test."""
    rows = [
        ("F1", "f1"), ("Recall", "recall"), ("Precision", "precision"),
        ("AUC-ROC", "auc_roc"), ("AUC-PR", "auc_pr"), ("Loss", "loss"),
    ]
    cols = [("Training", "train"), ("Validation", "val"), ("Testing", "test")]
    lines = [title, f"{'':<10}" + "".join(f"{c:>12}" for c, _ in cols)]
    for label, key in rows:
        vals = []
        for _, split in cols:
            r = reports[split]
            vals.append(r["loss"] if key == "loss" else r["report"][key])
        lines.append(f"{label:<10}" + "".join(f"{_fmt(v):>12}" for v in vals))
    return "\n".join(lines)


def calibration_table(title: str, summary: list) -> str:
    head = f"{'':<34}" + "".join(f"{h:>9}" for h in ("MDR", "BCE", "BS") * 2)
    lines = [title, f"{'':<34}{'Validation':^27}{'Testing':^27}", head]
    for row in summary:
        if row["status"] != "ok":
            lines.append(f"{row['label']:<34}  failed: {row['error']}")
            continue
        vals = []
        for split in ("val", "test"):
            s = row[split]
            vals += [f"{s['mdr_percent']:.2f}", f"{s['bce']:.3f}", f"{s['brier']:.3f}"]
        lines.append(f"{row['label']:<34}" + "".join(f"{v:>9}" for v in vals))
    return "\n".join(lines)


# -- subcommands -------------------------------------------------------------------

def cmd_prepare(cfg: RunConfig) -> int:
    if not cfg.data:
        raise UsageError("prepare needs a dataset path (--data or \"data\" in the config)")
    try:
        raw = dt.load_credit_csv(cfg.data)
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {cfg.data}") from None
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    prep = dt.prepare(raw, cfg.features, seed=cfg.seed)

    dt.save_prepared(prep, cfg.prepared_dir)
    _write_json(cfg.prepared_dir / "config.json", cfg.resolved())
    print(f"prepared {cfg.features} features ({len(prep.columns)} columns) -> {cfg.prepared_dir}")
    for name, y in zip(("train", "val", "test"), (prep.y_train, prep.y_val, prep.y_test)):
        print(f"  {name:<5} {y.size:>6} rows  prevalence {y.mean():.4f}")
    return EXIT_OK


def _split_report(model, x, y, bins):
    p = md.predict(model, x)
    return {
        "loss": md.balanced_bce_loss(y, p, model.alpha),
        "alpha": model.alpha,
        "report": mt.full_report(y, p, model.tau, bins).to_dict(),
    }


def cmd_train(cfg: RunConfig) -> int:
    prep = _load_prepared(cfg)
    model = md.train(cfg.model, prep.x_train, prep.y_train, prep.x_val, prep.y_val, cfg.train_config())
    splits = {"train": (prep.x_train, prep.y_train), "val": (prep.x_val, prep.y_val),
              "test": (prep.x_test, prep.y_test)}
    reports = {name: _split_report(model, x, y, cfg.bins) for name, (x, y) in splits.items()}

    out = cfg.model_dir
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    model.write_history(out / "history.csv")
    for name, rep in reports.items():
        _write_json(out / f"metrics_{name}.json", rep)
    _write_json(out / "config.json", cfg.resolved())
    title = f"{cfg.model} on {cfg.features} features (tau* = {model.tau:.4f}, best epoch {model.best_epoch})"
    print(performance_table(title, reports))
    return EXIT_OK


def _fit_entry(entry, p_val, y_val, cfg):
    parts = entry.split("+")
    if len(parts) == 2:
        return cb.stack_fit(parts[0], parts[1], p_val, y_val, cfg.sure_config(), cfg.platt_config())
    return cb.fit_calibrator(parts[0], p_val, y_val, cfg.sure_config(), cfg.platt_config())


def cmd_calibrate(cfg: RunConfig) -> int:
    prep = _load_prepared(cfg)
    model = _load_model(cfg)
    if model.network.dims[0] != prep.x_val.shape[1]:
        raise UsageError(
            f"model expects {model.network.dims[0]} inputs but {cfg.prepared_dir} has {prep.x_val.shape[1]}"
        )
    p_val, p_test = md.predict(model, prep.x_val), md.predict(model, prep.x_test)
    ids = {"val": prep.split.validation, "test": prep.split.test}
    labels = {"val": prep.y_val, "test": prep.y_test}
    raw = {"val": p_val, "test": p_test}

    results = []  # (entry, calibrator or None, calibrated dict or None, error)
    results.append(("uncalibrated", None, raw, None))
    for entry in cfg.plan:
        try:
            cal = _fit_entry(entry, p_val, prep.y_val, cfg)
        except cb.CalibrationError as exc:
            results.append((entry, None, None, exc))
            continue
        results.append((entry, cal, {s: cal.apply(raw[s]) for s in raw}, None))

    root = cfg.model_dir / "calibration"
    summary = []
    for entry, cal, probs, err in results:
        row = {"entry": entry, "label": entry_label(entry)}
        if err is not None:
            row.update(status="failed", error=str(err))
            if isinstance(err, cb.SureFeasibilityError):
                row.update(best_theta=list(err.theta), best_abs_constraint=err.constraint, mu=err.mu)
            summary.append(row)
            continue
        row["status"] = "ok"
        # a monotone map moves the decision threshold with the scores
        tau = model.tau if cal is None else float(cal.apply([model.tau])[0])
        d = root / entry
        if cal is not None:
            _write_json(d / "calibrator.json", cal.to_dict())
            row["calibrator"] = cal.to_dict()
        for split in ("val", "test"):
            rep = mt.full_report(labels[split], probs[split], tau, cfg.bins).to_dict()
            _write_json(d / f"metrics_{split}.json", rep)
            cb.export_calibrated_csv(d / f"{split}.csv", raw[split], probs[split], labels[split], ids[split])
            row[split] = {k: rep[k] for k in ("mdr_percent", "bce", "brier", "ece", "mce")}
        summary.append(row)
    _write_json(root / "summary.json", summary)
    _write_json(root / "config.json", cfg.resolved())
    print(calibration_table(f"{cfg.model} calibration ({cfg.features} features)", summary))
    failed = [r["entry"] for r in summary if r["status"] != "ok"]
    if failed:
        print(f"calibration failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def cmd_reliability(cfg: RunConfig, probs_path: str, column: str, tau: float | None) -> int:
    try:
        _, raw, cal, y = cb.read_calibrated_csv(probs_path)
    except FileNotFoundError:
        raise UsageError(f"probability file not found: {probs_path}") from None
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if y.size == 0:
        raise UsageError(f"{probs_path} has no rows")
    p = cal if column == "calibrated" else raw
    bins = mt.reliability_bins(y, p, tau, cfg.bins)
    dest = Path(cfg.out) / f"{Path(probs_path).stem}.{column}.bins{cfg.bins}.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    bins.to_csv(dest)
    summary = {"source": str(probs_path), "column": column, "bins": cfg.bins, "tau": tau,
               "n": bins.n, "ece": mt.ece(bins), "mce": mt.mce(bins)}
    _write_json(dest.with_suffix(".json"), summary)
    print(f"{bins.n} rows in {cfg.bins} bins -> {dest}")
    print(f"ECE {summary['ece']:.4f}  MCE {summary['mce']:.4f}")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    root = Path(cfg.out)
    if not root.is_dir():
        raise UsageError(f"no run directory at {root}")
    collected = {}
    blocks = []
    for feat in [k.value for k in dt.FeatureSetKind]:
        for model in md.MODEL_KINDS:
            d = root / feat / model
            if not (d / "metrics_test.json").is_file():
                continue
            reports = {s: _read_json(d / f"metrics_{s}.json", "metrics") for s in ("train", "val", "test")}
            entry = {"performance": reports}
            blocks.append(performance_table(f"{model} on {feat} features", reports))
            if (d / "calibration" / "summary.json").is_file():
                summary = _read_json(d / "calibration" / "summary.json", "calibration summary")
                entry["calibration"] = summary
                blocks.append(calibration_table(f"{model} calibration ({feat} features)", summary))
            collected[f"{feat}/{model}"] = entry
    if not collected:
        raise UsageError(f"no trained models found under {root}")
    _write_json(root / "report.json", collected)
    print("\n\n".join(blocks))
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand's unset flag from clobbering one given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON run configuration; flags override its values")
    common.add_argument("--seed", type=_seed, help="seed for splitting, initialization and SURE starts")
    common.add_argument("--out", help="run directory (default: runs)")
    common.add_argument("--features", choices=[k.value for k in dt.FeatureSetKind])
    common.add_argument("--model", choices=list(md.MODEL_KINDS))
    common.add_argument("--bins", type=_positive_int, help="reliability bin count M")

    parser = argparse.ArgumentParser(
        prog="surecal", parents=[common],
        description="Credit-default classifiers with Platt and SURE probability calibration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("prepare", parents=[common], help="split, encode and standardize the dataset")
    p.add_argument("--data", help="UCI default-of-credit-card-clients CSV")
    t = sub.add_parser("train", parents=[common], help="train a classifier on prepared splits")
    t.add_argument("--alpha-mode", choices=["paper", "complement"],
                   help="positive-class weight: n+/N (paper) or 1 - n+/N (complement)")
    c = sub.add_parser("calibrate", parents=[common], help="fit and evaluate the calibration plan")
    c.add_argument("--plan", help="comma-separated plan entries (empty string for baseline only)")
    r = sub.add_parser("reliability", parents=[common], help="reliability bins, ECE and MCE")
    r.add_argument("--probs", required=True, help="calibrated-probability CSV from `calibrate`")
    r.add_argument("--column", choices=["calibrated", "raw"], default="calibrated")
    r.add_argument("--tau", type=float, default=None,
                   help="score bins by thresholded correctness instead of event rate")
    sub.add_parser("report", parents=[common], help="collect every table found in a run directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        if args.command == "reliability":
            return cmd_reliability(cfg, args.probs, args.column, args.tau)
        return cmd_report(cfg)
    except UsageError as exc:
        print(f"surecal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"surecal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"surecal: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
