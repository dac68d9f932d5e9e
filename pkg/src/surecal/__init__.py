"""Credit-default scoring with SURE-based probability calibration."""
from .calibration import (
    CalibFunctionKind,
    CalibratorParams,
    PlattConfig,
    StackedCalibrator,
    SureSolverConfig,
    apply_calibrator,
    platt_fit,
    stack_fit,
    sure_fit,
)
from .data import FeatureSetKind, load_credit_csv, prepare
from .metrics import full_report
from .models import TrainConfig, predict, train

__version__ = "0.1.0"
