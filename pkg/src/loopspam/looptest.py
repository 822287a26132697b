"""
Loop consistency test between two trials that share one party's states.

For a trial with preparation matrix ``A`` (Pauli coefficients as columns)
and data matrix ``S``, a single measurement effect with coefficient
matrix ``X`` predicts ``S = A^T (4X) B``. Two trials of the testing party
against the same fixed set are consistent iff their normalized maps
``(A^T)^{-1} S`` agree, or equivalently iff

    T = S1 S2^{-1} A2^T (A1^T)^{-1}

is the identity. A state whose measurement is treated differently shows
up in a single row of ``T - I``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import LabelError, SingularMatrixError
from .scenario import (
    INVERTIBILITY_TOL,
    DataMatrix,
    DeviceModel,
    PreparationSet,
    ShotPlan,
    exact_data_matrix,
    sample_data_matrix,
)

__all__ = [
    "EXACT_TOL",
    "Trial",
    "Residual",
    "TestReport",
    "PairOutcome",
    "LocalizationReport",
    "normalized_map",
    "consistency_residual",
    "test_matrix",
    "row_scores",
    "flag_rows",
    "pair_test",
    "substitution_schedule",
    "localize",
    "exact_source",
    "sampled_source",
]

#: threshold used when both trials carry exact probabilities
EXACT_TOL = 1e-10

METHODS = ("auto", "product", "residual")


@dataclass(frozen=True, eq=False)
class Trial:
    """One run of the testing party: its four states against a fixed set.

    ``fixed_label`` names the other party's set; two trials can only be
    compared when these match.
    """

    labels: tuple[str, ...]
    A: np.ndarray
    S: np.ndarray
    fixed_label: str
    exact: bool = True

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        S = np.array(self.S, dtype=float)
        if A.shape != (4, 4) or S.shape != (4, 4):
            raise ValueError("trial matrices must be 4x4")
        smin = np.linalg.svd(A, compute_uv=False)[-1]
        if smin <= INVERTIBILITY_TOL:
            raise SingularMatrixError(f"preparation matrix is singular (smallest singular value {smin:.3g})", smin)
        A.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_data(cls, preps: PreparationSet, data: DataMatrix | np.ndarray,
                  fixed_label: str | None = None) -> "Trial":
        if isinstance(data, DataMatrix):
            if data.row_labels and data.row_labels != preps.labels:
                raise LabelError(f"data rows {data.row_labels} do not match states {preps.labels}")
            if fixed_label is None:
                fixed_label = ",".join(data.col_labels)
            return cls(preps.labels, preps.matrix, data.values, fixed_label, data.exact)
        return cls(preps.labels, preps.matrix, data, fixed_label or "", True)

    def reparametrized(self, G) -> "Trial":
        """Same data with the preparation matrix mapped to ``G @ A``."""
        return Trial(self.labels, np.asarray(G, dtype=float) @ self.A, self.S, self.fixed_label, self.exact)

    def scaled(self, c: float) -> "Trial":
        return Trial(self.labels, self.A, c * self.S, self.fixed_label, self.exact)


def _check_pair(t1: Trial, t2: Trial) -> None:
    if t1.fixed_label != t2.fixed_label:
        raise LabelError(f"trials use different fixed sets: {t1.fixed_label!r} vs {t2.fixed_label!r}")


def normalized_map(trial: Trial) -> np.ndarray:
    """``(A^T)^{-1} S``; equals ``4 X B`` when one effect explains the data."""
    return np.linalg.solve(trial.A.T, trial.S)


@dataclass(frozen=True, eq=False)
class Residual:
    """Difference of the two normalized maps.

    ``pauli`` is indexed by Pauli component and mixes states; ``state`` is
    ``A1^T @ pauli = S1 - A1^T (A2^T)^{-1} S2``, whose rows line up with the
    first trial's states and which does not depend on the basis convention.
    """

    pauli: np.ndarray
    state: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.pauli)))

    @property
    def state_max_abs(self) -> float:
        return float(np.max(np.abs(self.state)))


def consistency_residual(t1: Trial, t2: Trial) -> Residual:
    _check_pair(t1, t2)
    pauli = normalized_map(t1) - normalized_map(t2)
    state = t1.S - t1.A.T @ np.linalg.solve(t2.A.T, t2.S)
    return Residual(pauli, state)


def test_matrix(t1: Trial, t2: Trial) -> np.ndarray:
    """Product-form check ``S1 S2^{-1} A2^T (A1^T)^{-1}``.

    Raises :class:`SingularMatrixError` when the singular values of ``S2``
    span more than ``1 / INVERTIBILITY_TOL``; :func:`consistency_residual` still works in that case.
    """
    _check_pair(t1, t2)
    sv = np.linalg.svd(t2.S, compute_uv=False)
    smin = float(sv[-1])
    # relative to the largest singular value so that rescaling S cannot flip the verdict
    if smin <= INVERTIBILITY_TOL * sv[0]:
        raise SingularMatrixError(
            f"second data matrix is near-singular (singular values {sv[0]:.3g}..{smin:.3g}); "
            "use consistency_residual instead", smin)
    s1_s2inv = np.linalg.solve(t2.S.T, t1.S.T).T
    w = s1_s2inv @ t2.A.T
    return np.linalg.solve(t1.A, w.T).T


test_matrix.__test__ = False  # not a pytest test


def row_scores(deviation) -> np.ndarray:
    """Largest absolute entry of each row."""
    return np.max(np.abs(np.asarray(deviation, dtype=float)), axis=1)


def flag_rows(deviation, tau: float) -> tuple[int, ...]:
    """0-based indices of rows whose max-abs entry exceeds ``tau``."""
    if not tau > 0:
        raise ValueError(f"threshold must be positive, got {tau}")
    return tuple(int(i) for i in np.flatnonzero(row_scores(deviation) > tau))


@dataclass(frozen=True, eq=False)
class TestReport:
    """Outcome of one pairwise test.

    ``source`` says which matrix the row scores come from: ``"product"``
    for ``T - I`` or ``"residual"`` for the state-aligned residual.
    Row indices in ``flagged`` are 0-based.
    """

    __test__ = False

    first: tuple[str, ...]
    second: tuple[str, ...]
    residual: Residual
    product: np.ndarray | None
    source: str
    scores: np.ndarray
    flagged: tuple[int, ...]
    threshold: float
    mode: str

    @property
    def score(self) -> float:
        return float(np.max(self.scores))

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def deviation(self) -> np.ndarray:
        if self.source == "product":
            return self.product - np.eye(4)
        return self.residual.state

    @property
    def flagged_labels(self) -> list[tuple[str, str]]:
        return [(self.first[i], self.second[i]) for i in self.flagged]

    def to_dict(self) -> dict:
        return {
            "first": list(self.first),
            "second": list(self.second),
            "normalized_residual": self.residual.pauli.tolist(),
            "state_residual": self.residual.state.tolist(),
            "product": None if self.product is None else self.product.tolist(),
            "source": self.source,
            "row_scores": self.scores.tolist(),
            "flagged_rows": [i + 1 for i in self.flagged],
            "flagged_states": [list(p) for p in self.flagged_labels],
            "threshold": self.threshold,
            "mode": self.mode,
        }


def pair_test(t1: Trial, t2: Trial, tau: float | None = None, method: str = "auto") -> TestReport:
    """Run both formulations and flag deviating rows.

    ``method="auto"`` scores ``T - I`` and falls back to the state-aligned
    residual when the second data matrix cannot be inverted. Without an
    explicit ``tau`` both trials must be exact and ``EXACT_TOL`` is used.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    exact = t1.exact and t2.exact
    if tau is None:
        if not exact:
            raise ValueError("sampled trials need an explicit threshold")
        tau = EXACT_TOL
    residual = consistency_residual(t1, t2)
    product = None
    if method != "residual":
        try:
            product = test_matrix(t1, t2)
        except SingularMatrixError:
            if method == "product":
                raise
    if product is not None:
        source, deviation = "product", product - np.eye(4)
    else:
        source, deviation = "residual", residual.state
    return TestReport(t1.labels, t2.labels, residual, product, source, row_scores(deviation),
                      flag_rows(deviation, tau), float(tau), "exact" if exact else "sampled")


# -- localization -------------------------------------------------------------


def substitution_schedule(base: Sequence[str], extras: Sequence[str]) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Pairs (base, base with position k replaced by extra e) for every k and e.

    For a five-state pool these are exactly the leave-one-out subsets,
    each compared against the base.
    """
    base = tuple(base)
    pairs = []
    for e in extras:
        for k in range(len(base)):
            swapped = base[:k] + (e,) + base[k + 1:]
            pairs.append((base, swapped))
    return pairs


@dataclass(frozen=True, eq=False)
class PairOutcome:
    first: tuple[str, ...]
    second: tuple[str, ...]
    status: str  # "pass", "fail" or "skipped"
    report: TestReport | None = None
    reason: str = ""

    @property
    def swapped(self) -> frozenset[str]:
        return frozenset(self.first) ^ frozenset(self.second)

    def to_dict(self) -> dict:
        out = {"first": list(self.first), "second": list(self.second), "status": self.status,
               "swapped": sorted(self.swapped)}
        if self.reason:
            out["reason"] = self.reason
        if self.report is not None:
            out["report"] = self.report.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class LocalizationReport:
    """Per-state verdicts over the testing party's pool.

    Every pool label gets exactly one of ``implicated``, ``cleared`` or
    ``undetermined``.
    """

    pool: tuple[str, ...]
    verdicts: Mapping[str, str]
    outcomes: tuple[PairOutcome, ...] = field(default_factory=tuple)
    unattributed: int = 0

    def states(self, verdict: str) -> list[str]:
        return [lb for lb in self.pool if self.verdicts[lb] == verdict]

    @property
    def implicated(self) -> list[str]:
        return self.states("implicated")

    @property
    def cleared(self) -> list[str]:
        return self.states("cleared")

    @property
    def undetermined(self) -> list[str]:
        return self.states("undetermined")

    def to_dict(self) -> dict:
        return {
            "pool": list(self.pool),
            "verdicts": {lb: self.verdicts[lb] for lb in self.pool},
            "implicated": self.implicated,
            "cleared": self.cleared,
            "undetermined": self.undetermined,
            "unattributed_failures": self.unattributed,
            "schedule": [o.to_dict() for o in self.outcomes],
        }


def _minimum_hitting_sets(sets: list[frozenset[str]], order: Sequence[str]) -> list[frozenset[str]]:
    universe = [lb for lb in order if any(lb in s for s in sets)]
    for size in range(1, len(universe) + 1):
        hits = [frozenset(c) for c in itertools.combinations(universe, size)
                if all(s & set(c) for s in sets)]
        if hits:
            return hits
    return []


def _verdicts(pool: Sequence[str], outcomes: Sequence[PairOutcome]) -> tuple[dict[str, str], int]:
    tested: set[str] = set()
    cleared_direct: set[str] = set()
    failing: list[PairOutcome] = []
    for o in outcomes:
        if o.status == "skipped":
            continue
        tested.update(o.first, o.second)
        if o.status == "pass":
            cleared_direct |= o.swapped
        else:
            failing.append(o)

    suspects = [o.swapped - cleared_direct for o in failing]
    explained = [s for s in suspects if s]
    unattributed = [o for o, s in zip(failing, suspects) if not s]

    verdicts = {lb: ("cleared" if lb in tested else "undetermined") for lb in pool}
    if explained:
        hitting = _minimum_hitting_sets(explained, pool)
        always = frozenset.intersection(*hitting)
        sometimes = frozenset.union(*hitting)
        for lb in sometimes:
            verdicts[lb] = "implicated" if lb in always else "undetermined"
    # a failure whose swapped states were all cleared elsewhere cannot be pinned down
    for o in unattributed:
        for lb in set(o.first) | set(o.second):
            if lb not in cleared_direct and verdicts[lb] == "cleared":
                verdicts[lb] = "undetermined"
    return verdicts, len(unattributed)


def localize(base: PreparationSet, extras: Mapping[str, object] | Sequence[tuple[str, object]],
             fixed_label: str | None, data_source: Callable[[PreparationSet], DataMatrix | np.ndarray],
             *, tau: float | None = None, method: str = "auto",
             schedule: Sequence[tuple[Sequence[str], Sequence[str]]] | None = None) -> LocalizationReport:
    """Localize a correlated state by testing pairs of 4-state subsets.

    A failing pair points at the states swapped between its two subsets; a
    passing pair clears them. States present in every minimal explanation
    of the failures are implicated, states in some but not all are
    undetermined, and every other tested state is cleared. Subsets whose
    states are linearly dependent are skipped.

    ``data_source`` maps a preparation set to its data matrix and may
    replay recorded data; each distinct subset is requested once.
    """
    extras = dict(extras)
    pool = dict(base.as_pool())
    for lb, psi in extras.items():
        if lb in pool:
            raise LabelError(f"label {lb!r} appears twice in the pool")
        pool[lb] = psi
    if len(pool) < 5:
        raise ValueError(f"localization needs at least 5 states in the pool, got {len(pool)}")
    if schedule is None:
        schedule = substitution_schedule(base.labels, list(extras))

    cache: dict[tuple[str, ...], Trial] = {}

    def trial_for(labels: tuple[str, ...]) -> Trial:
        if labels not in cache:
            preps = PreparationSet.from_pool(pool, labels, base.basis)
            cache[labels] = Trial.from_data(preps, data_source(preps), fixed_label)
        return cache[labels]

    outcomes = []
    for first, second in schedule:
        first, second = tuple(first), tuple(second)
        try:
            t1, t2 = trial_for(first), trial_for(second)
        except SingularMatrixError as exc:
            outcomes.append(PairOutcome(first, second, "skipped", reason=str(exc)))
            continue
        report = pair_test(t1, t2, tau, method)
        outcomes.append(PairOutcome(first, second, "pass" if report.passed else "fail", report))

    order = tuple(pool)
    verdicts, unattributed = _verdicts(order, outcomes)
    return LocalizationReport(order, verdicts, tuple(outcomes), unattributed)


# -- data sources -------------------------------------------------------------


def exact_source(fixed: PreparationSet, device: DeviceModel, testing_party: str = "alice"):
    """Data source returning exact probabilities against ``fixed``."""
    if testing_party == "alice":
        return lambda preps: exact_data_matrix(preps, fixed, device)
    if testing_party == "bob":
        return lambda preps: exact_data_matrix(fixed, preps, device).transpose()
    raise ValueError(f"testing party must be 'alice' or 'bob', got {testing_party!r}")


def sampled_source(fixed: PreparationSet, device: DeviceModel, plan: ShotPlan, testing_party: str = "alice"):
    """Data source drawing binomial frequencies; shared label pairs reuse the same draws."""
    if testing_party == "alice":
        return lambda preps: sample_data_matrix(preps, fixed, device, plan)
    if testing_party == "bob":
        return lambda preps: sample_data_matrix(fixed, preps, device, plan).transpose()
    raise ValueError(f"testing party must be 'alice' or 'bob', got {testing_party!r}")
