"""Two-parameter probability calibration: Platt scaling and SURE minimization.

A calibration map ``G_theta`` sends a raw predicted probability ``p`` to a
calibrated one.  Two families are supported:

* sigmoid, ``G(p) = 1 / (1 + exp(-(theta1 * p + theta2)))``
* Kumaraswamy CDF, ``G(p) = 1 - (1 - p**theta1) ** theta2`` with both
  parameters positive.

Platt scaling fits the sigmoid by maximum likelihood against the labels.
SURE fitting treats the raw probabilities as Gaussian-corrupted versions of
the true probabilities and minimizes Stein's unbiased estimate of the
squared error, subject to the mean calibrated probability matching the
observed event rate.  The constraint is enforced with a quadratic penalty
whose weight grows tenfold until the constraint residual is small enough.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import expit

from .metrics import bce

KUMARASWAMY_DELTA = 1e-6
SIGMA2_FLOOR = 1e-6


class CalibFunctionKind(str, Enum):
    PLATT_SIGMOID = "platt_sigmoid"
    SURE_SIGMOID = "sure_sigmoid"
    SURE_KUMARASWAMY = "sure_kumaraswamy"

    @property
    def family(self) -> str:
        return "kumaraswamy" if self is CalibFunctionKind.SURE_KUMARASWAMY else "sigmoid"

    @property
    def is_sure(self) -> bool:
        return self is not CalibFunctionKind.PLATT_SIGMOID


class CalibrationError(RuntimeError):
    pass


class SureFeasibilityError(CalibrationError):
    """The penalty loop ran out of rounds with ``|C(theta)| > eps``.

    Carries the parameters with the smallest constraint residual seen.
    """

    def __init__(self, message, theta, constraint, mu):
        super().__init__(message)
        self.theta = theta
        self.constraint = constraint
        self.mu = mu


@dataclass(frozen=True)
class SureSolverConfig:
    outer_iterations: int = 10
    inner_iterations: int = 15000
    mu0: float = 10.0
    mu_growth: float = 10.0
    step: float = 1e-4
    tol: float = 1e-5
    eps: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("outer_iterations", "inner_iterations", "mu0", "mu_growth", "step", "tol", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PlattConfig:
    max_iter: int = 50000
    tol: float = 1e-6


@dataclass(frozen=True)
class DerivativeBundle:
    g: np.ndarray
    dg_dp: np.ndarray
    dg_dt1: np.ndarray
    dg_dt2: np.ndarray
    d2g_dp_dt1: np.ndarray
    d2g_dp_dt2: np.ndarray


# -- calibration functions -------------------------------------------------

def _check_kumaraswamy(theta):
    t1, t2 = float(theta[0]), float(theta[1])
    if not (t1 > 0 and t2 > 0):
        raise ValueError(f"Kumaraswamy parameters must be positive, got {(t1, t2)}")
    return t1, t2


def sigmoid_apply(theta, probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    return expit(theta[0] * p + theta[1])


def kumaraswamy_apply(theta, probs) -> np.ndarray:
    t1, t2 = _check_kumaraswamy(theta)
    p = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        return -np.expm1(t2 * np.log1p(-(p**t1)))


def sigmoid_derivatives(theta, probs) -> DerivativeBundle:
    t1 = float(theta[0])
    p = np.asarray(probs, dtype=float)
    g = sigmoid_apply(theta, p)
    s = g * (1 - g)
    curv = s * (1 - 2 * g)
    return DerivativeBundle(
        g=g,
        dg_dp=t1 * s,
        dg_dt1=p * s,
        dg_dt2=s,
        d2g_dp_dt1=s + t1 * p * curv,
        d2g_dp_dt2=t1 * curv,
    )


def kumaraswamy_derivatives(theta, probs) -> DerivativeBundle:
    """G and its first/mixed derivatives, with ``p`` clamped to [delta, 1-delta]."""
    t1, t2 = _check_kumaraswamy(theta)
    p = np.clip(np.asarray(probs, dtype=float), KUMARASWAMY_DELTA, 1 - KUMARASWAMY_DELTA)
    log_p = np.log(p)
    pa = np.exp(t1 * log_p)
    q = -np.expm1(t1 * log_p)  # 1 - p**t1, accurate near p**t1 ~ 1
    log_q = np.log(q)
    q_t2 = np.exp(t2 * log_q)
    q_t2m1 = np.exp((t2 - 1) * log_q)
    q_t2m2 = np.exp((t2 - 2) * log_q)
    pa_m1 = pa / p  # p**(t1-1)

    return DerivativeBundle(
        g=-np.expm1(t2 * log_q),
        dg_dp=t1 * t2 * pa_m1 * q_t2m1,
        dg_dt1=t2 * log_p * pa * q_t2m1,
        dg_dt2=-log_q * q_t2,
        d2g_dp_dt1=t2 * (
            pa_m1 * q_t2m1 * (1 + t1 * log_p)
            - t1 * pa * pa_m1 * (t2 - 1) * q_t2m2 * log_p
        ),
        d2g_dp_dt2=t1 * pa_m1 * q_t2m1 * (1 + t2 * log_q),
    )


def derivatives(theta, probs, kind) -> DerivativeBundle:
    kind = CalibFunctionKind(kind)
    if kind.family == "kumaraswamy":
        return kumaraswamy_derivatives(theta, probs)
    return sigmoid_derivatives(theta, probs)


# -- SURE objective ----------------------------------------------------------

def estimate_noise_variance(probs, labels) -> float:
    """Noise variance of the raw probabilities: residual MSE minus label variance.

    Floored at ``SIGMA2_FLOOR`` since the difference can go negative.
    """
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape:
        raise ValueError("probabilities and labels differ in length")
    raw = np.mean((p - y) ** 2) - np.mean((y - y.mean()) ** 2)
    return float(max(raw, SIGMA2_FLOOR))


def _sure_terms(theta, probs, kind):
    """Raw inputs, derivatives of the extended map, and the in-domain mask.

    The map is extended outside its domain by clamping, ``G(clip(x))``, which
    keeps it weakly differentiable with zero slope outside.  Stein's identity
    then holds exactly even for noisy inputs that leave [0, 1].  The sigmoid
    needs no clamp; the Kumaraswamy map is clamped to [delta, 1-delta].
    """
    kind = CalibFunctionKind(kind)
    x = np.asarray(probs, dtype=float)
    if kind.family == "kumaraswamy":
        lo, hi = KUMARASWAMY_DELTA, 1 - KUMARASWAMY_DELTA
        d = kumaraswamy_derivatives(theta, np.clip(x, lo, hi))
        inside = ((x >= lo) & (x <= hi)).astype(float)
    else:
        d = sigmoid_derivatives(theta, x)
        inside = np.ones_like(x)
    return x, d, inside


def sure_loss(theta, probs, sigma2: float, kind) -> float:
    x, d, inside = _sure_terms(theta, probs, kind)
    return float(-x.size * sigma2 + np.sum((d.g - x) ** 2) + 2 * sigma2 * np.sum(inside * d.dg_dp))


def constraint_value(theta, probs, labels, kind) -> float:
    """Mean calibrated probability minus the mean label."""
    _, d, _ = _sure_terms(theta, probs, kind)
    return float(np.mean(d.g) - np.mean(np.asarray(labels, dtype=float)))


def penalty_value(theta, mu, probs, labels, sigma2, kind) -> float:
    c = constraint_value(theta, probs, labels, kind)
    return sure_loss(theta, probs, sigma2, kind) + 0.5 * mu * c**2


def penalty_gradient(theta, mu, probs, labels, sigma2, kind) -> np.ndarray:
    """Gradient of ``SURE(theta) + mu/2 * C(theta)**2`` with respect to theta."""
    x, d, inside = _sure_terms(theta, probs, kind)
    y = np.asarray(labels, dtype=float)
    resid = d.g - x
    c = np.mean(d.g) - np.mean(y)
    g1 = 2 * resid @ d.dg_dt1 + 2 * sigma2 * (inside @ d.d2g_dp_dt1) + mu * c * d.dg_dt1.mean()
    g2 = 2 * resid @ d.dg_dt2 + 2 * sigma2 * (inside @ d.d2g_dp_dt2) + mu * c * d.dg_dt2.mean()
    return np.array([g1, g2])


# -- fitted calibrators --------------------------------------------------------

@dataclass(frozen=True)
class CalibratorParams:
    kind: CalibFunctionKind
    theta1: float
    theta2: float
    sigma2: float | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", CalibFunctionKind(self.kind))
        if self.kind.family == "kumaraswamy":
            _check_kumaraswamy(self.theta)
        if self.kind.is_sure and (self.sigma2 is None or self.sigma2 < SIGMA2_FLOOR):
            raise ValueError("SURE calibrators need sigma2 >= the variance floor")

    @property
    def theta(self) -> tuple[float, float]:
        return (self.theta1, self.theta2)

    def apply(self, probs) -> np.ndarray:
        return apply_calibrator(self, probs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratorParams":
        return cls(
            kind=d["kind"],
            theta1=float(d["theta1"]),
            theta2=float(d["theta2"]),
            sigma2=d.get("sigma2"),
            diagnostics=d.get("diagnostics", {}),
        )


@dataclass(frozen=True)
class StackedCalibrator:
    """Two calibrators chained; ``second`` was fitted on ``first``'s output."""

    first: CalibratorParams
    second: CalibratorParams

    @property
    def name(self) -> str:
        return f"{self.first.kind.value}+{self.second.kind.value}"

    def apply(self, probs) -> np.ndarray:
        return self.second.apply(self.first.apply(probs))

    def to_dict(self) -> dict:
        return {"kind": "stack", "first": self.first.to_dict(), "second": self.second.to_dict()}


def apply_calibrator(params, probs) -> np.ndarray:
    if isinstance(params, StackedCalibrator):
        return params.apply(probs)
    p = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    if params.kind.family == "kumaraswamy":
        return kumaraswamy_apply(params.theta, p)
    return sigmoid_apply(params.theta, p)


def _check_fit_inputs(probs, labels):
    p = np.clip(np.asarray(probs, dtype=float).ravel(), 0.0, 1.0)
    y = np.asarray(labels, dtype=float).ravel()
    if p.shape != y.shape:
        raise ValueError("probabilities and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("calibration needs both classes in the labels")
    return p, y


def platt_fit(probs, labels, config: PlattConfig = PlattConfig()) -> CalibratorParams:
    """Maximum-likelihood sigmoid fit by gradient descent.

    Descent runs on standardized inputs, where the mean log-loss has a
    Lipschitz gradient constant of 1/4, so a fixed step of 4 is safe.
    Convergence is judged on the gradient in the original parameters.
    """
    p, y = _check_fit_inputs(probs, labels)
    m, s = p.mean(), p.std()
    if s == 0:
        s = 1.0
    z = (p - m) / s
    a, b = 0.0, float(np.log(y.mean() / (1 - y.mean())))
    step = 4.0
    for it in range(1, config.max_iter + 1):
        r = expit(a * z + b) - y
        grad = np.array([r @ p, r.sum()]) / p.size
        if np.linalg.norm(grad) < config.tol:
            break
        a -= step * (r @ z) / p.size
        b -= step * r.mean()
    else:
        raise CalibrationError(
            f"Platt fit did not converge in {config.max_iter} iterations "
            f"(gradient norm {np.linalg.norm(grad):.3g})"
        )
    theta1 = a / s
    theta2 = b - a * m / s
    cal = sigmoid_apply((theta1, theta2), p)
    return CalibratorParams(
        CalibFunctionKind.PLATT_SIGMOID,
        float(theta1),
        float(theta2),
        diagnostics={"iterations": it, "grad_norm": float(np.linalg.norm(grad)), "bce": bce(y, cal)},
    )


def _initial_point(kind, rng):
    if kind.family == "kumaraswamy":
        return rng.uniform(-0.5, 0.5, size=2)  # log-parameters, theta near (1, 1)
    return rng.uniform(-1.0, 1.0, size=2)


def sure_fit(probs, labels, kind, config: SureSolverConfig = SureSolverConfig()) -> CalibratorParams:
    """Constrained SURE minimization by the quadratic penalty method.

    Each outer round runs fixed-step steepest descent on the penalized
    objective, warm-started from the previous round.  A round ends early
    when the gradient norm drops to ``tol``.  The fit is accepted as soon
    as ``|C(theta)| <= eps``; otherwise the penalty weight is multiplied by
    ``mu_growth``.  Kumaraswamy parameters are updated in log space.
    """
    kind = CalibFunctionKind(kind)
    if not kind.is_sure:
        raise ValueError(f"{kind.value} is not a SURE calibration kind")
    p, y = _check_fit_inputs(probs, labels)
    sigma2 = estimate_noise_variance(p, y)
    rng = np.random.default_rng(config.seed)
    log_space = kind.family == "kumaraswamy"

    z = _initial_point(kind, rng)
    mu = config.mu0
    total_iters = 0
    best = None
    for k in range(config.outer_iterations):
        for _ in range(config.inner_iterations):
            theta = np.exp(z) if log_space else z
            grad = penalty_gradient(theta, mu, p, y, sigma2, kind)
            if log_space:
                grad = grad * theta
            if not np.all(np.isfinite(grad)):
                raise CalibrationError(
                    f"non-finite gradient in SURE fit (round {k}, mu={mu:g}, theta={tuple(theta)})"
                )
            if np.linalg.norm(grad) <= config.tol:
                break
            z = z - config.step * grad
            total_iters += 1
        theta = np.exp(z) if log_space else z.copy()
        c = constraint_value(theta, p, y, kind)
        if best is None or abs(c) < best[1]:
            best = (tuple(float(t) for t in theta), abs(c))
        if abs(c) <= config.eps:
            return CalibratorParams(
                kind,
                float(theta[0]),
                float(theta[1]),
                sigma2=sigma2,
                diagnostics={
                    "sure": sure_loss(theta, p, sigma2, kind),
                    "abs_constraint": abs(c),
                    "mu": mu,
                    "outer_rounds": k + 1,
                    "iterations": total_iters,
                    "grad_norm": float(np.linalg.norm(grad)),
                },
            )
        mu *= config.mu_growth
    raise SureFeasibilityError(
        f"|C(theta)| stayed above {config.eps} after {config.outer_iterations} rounds "
        f"(best {best[1]:.4g} at theta={best[0]})",
        theta=best[0],
        constraint=best[1],
        mu=mu / config.mu_growth,
    )


def fit_calibrator(kind, probs, labels, sure_config=SureSolverConfig(), platt_config=PlattConfig()):
    kind = CalibFunctionKind(kind)
    if kind.is_sure:
        return sure_fit(probs, labels, kind, sure_config)
    return platt_fit(probs, labels, platt_config)


def stack_fit(first_kind, second_kind, probs, labels,
              sure_config=SureSolverConfig(), platt_config=PlattConfig()) -> StackedCalibrator:
    """Fit ``first`` on the raw probabilities, then ``second`` on its output.

    Exactly one of the two kinds must be Platt scaling.
    """
    first_kind, second_kind = CalibFunctionKind(first_kind), CalibFunctionKind(second_kind)
    if first_kind.is_sure == second_kind.is_sure:
        raise ValueError("a stack pairs Platt scaling with one SURE calibrator")
    first = fit_calibrator(first_kind, probs, labels, sure_config, platt_config)
    second = fit_calibrator(second_kind, first.apply(probs), labels, sure_config, platt_config)
    return StackedCalibrator(first, second)


# -- persistence ---------------------------------------------------------------

def calibrator_from_dict(d: dict):
    if d.get("kind") == "stack":
        return StackedCalibrator(
            CalibratorParams.from_dict(d["first"]), CalibratorParams.from_dict(d["second"])
        )
    return CalibratorParams.from_dict(d)


def save_calibrator(calibrator, path) -> None:
    Path(path).write_text(json.dumps(calibrator.to_dict(), indent=2) + "\n")


def load_calibrator(path):
    return calibrator_from_dict(json.loads(Path(path).read_text()))


def export_calibrated_csv(path, raw, calibrated, labels, row_ids=None) -> None:
    raw = np.asarray(raw, dtype=float)
    calibrated = np.asarray(calibrated, dtype=float)
    labels = np.asarray(labels)
    if row_ids is None:
        row_ids = np.arange(raw.size)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", "raw_prob", "calibrated_prob", "label"])
        for rid, r, c, y in zip(row_ids, raw, calibrated, labels):
            w.writerow([int(rid), repr(float(r)), repr(float(c)), int(y)])


def read_calibrated_csv(path):
    """Return ``(row_ids, raw, calibrated, labels)`` from an exported CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"row_id", "raw_prob", "calibrated_prob", "label"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    try:
        ids = np.array([int(r["row_id"]) for r in rows], dtype=int)
        raw = np.array([float(r["raw_prob"]) for r in rows])
        cal = np.array([float(r["calibrated_prob"]) for r in rows])
        y = np.array([int(r["label"]) for r in rows], dtype=int)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return ids, raw, cal, y
