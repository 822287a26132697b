"""Loop consistency test for correlated state-preparation errors.

Two parties send single-qubit states to an untrusted relay that announces
a click per round. Comparing the normalized maps obtained from two
overlapping preparation sets exposes relay behaviour that depends on
which state was sent.
"""

from .errors import (
    ConfigError,
    LabelError,
    LoopSpamError,
    ProtocolError,
    SiftError,
    SingularMatrixError,
)
from .looptest import LocalizationReport, TestReport, Trial, localize, pair_test, test_matrix
from .qcore import NEGATED_Y, STANDARD, get_basis
from .scenario import AliceCorrelated, BobCorrelated, DataMatrix, Honest, Noisy, PreparationSet, ShotPlan
from .stats import TrialDesign, calibrate_threshold, estimate_power

__version__ = "0.1.0"

__all__ = [
    "AliceCorrelated",
    "BobCorrelated",
    "ConfigError",
    "DataMatrix",
    "Honest",
    "LabelError",
    "LocalizationReport",
    "LoopSpamError",
    "NEGATED_Y",
    "Noisy",
    "PreparationSet",
    "ProtocolError",
    "STANDARD",
    "ShotPlan",
    "SiftError",
    "SingularMatrixError",
    "TestReport",
    "Trial",
    "TrialDesign",
    "calibrate_threshold",
    "estimate_power",
    "get_basis",
    "localize",
    "pair_test",
    "test_matrix",
]
