"""
Finite-statistics layer: threshold calibration and detection power.

The flagging threshold is the requested quantile of the null distribution
of the test score, estimated by parametric bootstrap under a declared
honest device. The score of one replica is the largest row deviation over
every pair in the design, so the false-positive rate is controlled jointly
over rows and pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import SingularMatrixError
from .looptest import EXACT_TOL, TestReport, Trial, exact_source, pair_test, sampled_source
from .scenario import DeviceModel, PreparationSet, ShotPlan, derive_seed, device_to_dict

__all__ = [
    "TrialDesign",
    "CalibrationResult",
    "PowerEstimate",
    "replica_reports",
    "replica_scores",
    "threshold_from_scores",
    "calibrate_threshold",
    "estimate_power",
]

#: lower bound on a calibrated threshold, reached only without sampling noise
TAU_FLOOR = 1e-13

REPORTED_QUANTILES = (0.5, 0.9, 0.95, 0.99, 0.999)


@dataclass(frozen=True, eq=False)
class TrialDesign:
    """Pairs of the testing party's preparation sets plus the fixed party's set."""

    pairs: tuple[tuple[PreparationSet, PreparationSet], ...]
    fixed: PreparationSet
    testing_party: str = "alice"

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("a design needs at least one pair of preparation sets")
        if self.testing_party not in ("alice", "bob"):
            raise ValueError(f"testing party must be 'alice' or 'bob', got {self.testing_party!r}")
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))

    @classmethod
    def single(cls, first: PreparationSet, second: PreparationSet, fixed: PreparationSet,
               testing_party: str = "alice") -> "TrialDesign":
        return cls(((first, second),), fixed, testing_party)

    @classmethod
    def substitution(cls, base: PreparationSet, extras: Mapping[str, object], fixed: PreparationSet,
                     testing_party: str = "alice") -> "TrialDesign":
        """Base against every single substitution by an extra state; singular subsets are dropped."""
        pairs = []
        for lb, psi in dict(extras).items():
            for k in range(4):
                try:
                    pairs.append((base, base.substitute(k, lb, psi)))
                except SingularMatrixError:
                    continue
        return cls(tuple(pairs), fixed, testing_party)

    def describe(self) -> dict:
        return {
            "testing_party": self.testing_party,
            "fixed": list(self.fixed.labels),
            "pairs": [[list(a.labels), list(b.labels)] for a, b in self.pairs],
            "basis": self.fixed.basis.name,
        }


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    threshold: float
    quantile: float
    replicas: int
    shots: int
    seed: int
    method: str
    null_quantiles: Mapping[str, float]
    scores: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "quantile": self.quantile,
            "replicas": self.replicas,
            "shots": self.shots,
            "seed": self.seed,
            "method": self.method,
            "null_quantiles": dict(self.null_quantiles),
        }


@dataclass(frozen=True)
class PowerEstimate:
    """Fraction of replicas whose flags match the exact-mode flags.

    When the device is consistent (nothing to detect) the statistic is
    instead the fraction of replicas with any flag, i.e. the false-positive
    rate.
    """

    estimate: float
    stderr: float
    replicas: int
    hits: int
    expected_rows: tuple[tuple[int, ...], ...]
    descriptor: Mapping = field(default_factory=dict, compare=False)


def _source(device: DeviceModel, design: TrialDesign, plan: ShotPlan):
    if plan.shots == 0:
        return exact_source(design.fixed, device, design.testing_party)
    return sampled_source(design.fixed, device, plan, design.testing_party)


def replica_reports(device: DeviceModel, design: TrialDesign, plan: ShotPlan,
                    tau: float | None = None, method: str = "auto") -> list[TestReport]:
    """One simulated run of every pair in the design.

    Label pairs shared between subsets draw identical data, as when the
    same recorded frequencies are regrouped.
    """
    source = _source(device, design, plan)
    if tau is None and plan.shots:
        tau = math.inf
    cache: dict[tuple[str, ...], Trial] = {}

    def trial(preps: PreparationSet) -> Trial:
        if preps.labels not in cache:
            cache[preps.labels] = Trial.from_data(preps, source(preps))
        return cache[preps.labels]

    return [pair_test(trial(a), trial(b), tau, method) for a, b in design.pairs]


def replica_scores(device: DeviceModel, design: TrialDesign, plan: ShotPlan, replicas: int,
                   method: str = "auto") -> np.ndarray:
    """Max row deviation per replica; replica ``r`` uses seed ``derive_seed(plan.seed, r)``."""
    scores = np.empty(replicas)
    for r in range(replicas):
        sub = ShotPlan(plan.shots, derive_seed(plan.seed, r))
        scores[r] = max(rep.score for rep in replica_reports(device, design, sub, method=method))
    return scores


def threshold_from_scores(scores: Sequence[float], quantile: float) -> float:
    q = float(np.quantile(np.asarray(scores, dtype=float), quantile, method="higher"))
    return max(q, TAU_FLOOR)


def calibrate_threshold(device: DeviceModel, design: TrialDesign, plan: ShotPlan,
                        replicas: int = 1000, quantile: float = 0.99,
                        method: str = "auto") -> CalibrationResult:
    """Threshold at the ``quantile`` of the null score distribution.

    ``device`` must treat every label pair alike; shots = 0 calibrates on
    exact probabilities and gives a threshold at floating-point level.
    """
    if not device.label_independent:
        raise ValueError("calibration needs an honest (label-independent) device")
    if replicas < 100:
        raise ValueError(f"calibration needs at least 100 replicas, got {replicas}")
    if not 0.5 < quantile < 1:
        raise ValueError(f"quantile must lie in (0.5, 1), got {quantile}")
    scores = replica_scores(device, design, plan, replicas, method)
    summary = {str(q): float(np.quantile(scores, q, method="higher")) for q in REPORTED_QUANTILES}
    return CalibrationResult(threshold_from_scores(scores, quantile), quantile, replicas,
                             plan.shots, plan.seed, method, summary, scores)


def estimate_power(device: DeviceModel, design: TrialDesign, plan: ShotPlan, tau: float,
                   replicas: int = 1000, method: str = "auto") -> PowerEstimate:
    exact = replica_reports(device, design, ShotPlan(0, plan.seed), EXACT_TOL, method)
    expected = tuple(rep.flagged for rep in exact)
    consistent = not any(expected)
    hits = 0
    for r in range(replicas):
        sub = ShotPlan(plan.shots, derive_seed(plan.seed, r))
        flags = tuple(rep.flagged for rep in replica_reports(device, design, sub, tau, method))
        hits += any(flags) if consistent else flags == expected
    p = hits / replicas
    descriptor = {"device": device_to_dict(device), "design": design.describe(),
                  "shots": plan.shots, "seed": plan.seed, "threshold": tau}
    return PowerEstimate(p, math.sqrt(p * (1 - p) / replicas), replicas, hits, expected, descriptor)
