"""
Three-party session harness: Alice and Bob send labeled qubits to an
untrusted relay, which announces one click bit per round.

Each round runs in a fixed order: Alice commits a choice, Bob commits a
choice, the relay announces the outcome and both parties acknowledge it.
A party refuses to start round t+1 before it has seen the announcement
for round t, and the relay refuses to announce before both choices are in.

Session logs serialize to line-delimited JSON: one header object with the
configurations and seeds, then one ``[round, alice_label, bob_label, bit]``
array per round.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ProtocolError, SiftError
from .looptest import LocalizationReport, TestReport, Trial, exact_source, localize
from .qcore import STANDARD, Basis, born_probability_direct, check_ket, get_basis
from .scenario import (
    DataMatrix,
    DeviceModel,
    PreparationSet,
    derive_seed,
    device_from_dict,
    device_to_dict,
)
from .stats import REPORTED_QUANTILES, CalibrationResult, threshold_from_scores

__all__ = [
    "PartyConfig",
    "RelayConfig",
    "Choice",
    "Announcement",
    "RoundRecord",
    "Party",
    "Relay",
    "CountTables",
    "SessionLog",
    "VerificationResult",
    "run_session",
    "sift_to_data_matrices",
    "verify_subset",
    "session_loop_test",
    "simulate_tables",
    "calibrate_session_threshold",
]

LOG_FORMAT = "loopspam-session"
LOG_VERSION = 1

_CHUNK = 8192
_SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class PartyConfig:
    """A party's state pool, choice distribution and private seed.

    ``weights`` default to uniform over the pool.
    """

    name: str
    pool: Mapping[str, np.ndarray]
    seed: int
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        pool = {}
        for lb, psi in dict(self.pool).items():
            try:
                v = check_ket(psi).copy()
            except ValueError as exc:
                raise ValueError(f"{self.name} state {lb!r}: {exc}") from None
            v.setflags(write=False)
            pool[str(lb)] = v
        if len(pool) < 4:
            raise ValueError(f"{self.name} needs at least 4 states, got {len(pool)}")
        object.__setattr__(self, "pool", pool)
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(pool) or min(w) < 0 or not math.isclose(sum(w), 1.0, abs_tol=1e-12):
                raise ValueError(f"{self.name} weights must be {len(pool)} non-negative numbers summing to 1")
            object.__setattr__(self, "weights", w)
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.pool)

    @property
    def probabilities(self) -> np.ndarray:
        n = len(self.pool)
        return np.full(n, 1 / n) if self.weights is None else np.array(self.weights)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "states": {lb: [[float(z.real), float(z.imag)] for z in v] for lb, v in self.pool.items()},
            "weights": None if self.weights is None else list(self.weights),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PartyConfig":
        pool = {lb: np.array([complex(*z) for z in amps]) for lb, amps in d["states"].items()}
        w = d.get("weights")
        return cls(d["name"], pool, int(d["seed"]), None if w is None else tuple(w))


@dataclass(frozen=True, eq=False)
class RelayConfig:
    device: DeviceModel
    seed: int

    def to_dict(self) -> dict:
        return {"device": device_to_dict(self.device), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RelayConfig":
        return cls(device_from_dict(d["device"]), int(d["seed"]))


class Choice(NamedTuple):
    round: int
    party: str
    index: int
    label: str
    ket: np.ndarray


class Announcement(NamedTuple):
    round: int
    outcome: int


class RoundRecord(NamedTuple):
    round: int
    alice: str
    bob: str
    outcome: int


class Party:
    """Sender state machine: idle -> committed -> (announcement) -> idle."""

    def __init__(self, config: PartyConfig):
        self.config = config
        self.name = config.name
        self._labels = config.labels
        self._kets = list(config.pool.values())
        self._p = config.probabilities
        self._rng = np.random.default_rng(config.seed)
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0
        self.round = 0
        self.committed: Choice | None = None
        self.clicks = 0

    def _draw(self) -> int:
        if self._pos == len(self._buf):
            self._buf = self._rng.choice(len(self._labels), size=_CHUNK, p=self._p)
            self._pos = 0
        k = int(self._buf[self._pos])
        self._pos += 1
        return k

    def choose(self, round_index: int) -> Choice:
        if self.committed is not None:
            raise ProtocolError(f"{self.name} has not seen the announcement for round {self.round}")
        if round_index != self.round:
            raise ProtocolError(f"{self.name} expected round {self.round}, asked for {round_index}")
        k = self._draw()
        self.committed = Choice(round_index, self.name, k, self._labels[k], self._kets[k])
        return self.committed

    def receive(self, ann: Announcement) -> None:
        if self.committed is None or ann.round != self.round:
            raise ProtocolError(f"{self.name} got an announcement for round {ann.round} out of turn")
        self.clicks += ann.outcome
        self.committed = None
        self.round += 1


class Relay:
    """Untrusted measurement node.

    It measures the received qubits; labels reach it only through the
    device model's correlation map.
    """

    def __init__(self, config: RelayConfig):
        self.config = config
        self._rng = np.random.default_rng(config.seed)
        self._buf = np.empty(0)
        self._pos = 0
        self._cache: dict[tuple[str, str], float] = {}
        self.round = 0
        self._alice: Choice | None = None
        self._bob: Choice | None = None

    def receive(self, choice: Choice) -> None:
        if choice.round != self.round:
            raise ProtocolError(f"relay is in round {self.round}, got a round-{choice.round} choice")
        if choice.party == "alice":
            if self._alice is not None:
                raise ProtocolError("Alice already committed this round")
            self._alice = choice
        elif choice.party == "bob":
            if self._alice is None:
                raise ProtocolError("Bob's choice arrived before Alice's")
            if self._bob is not None:
                raise ProtocolError("Bob already committed this round")
            self._bob = choice
        else:
            raise ProtocolError(f"unknown party {choice.party!r}")

    def click_probability(self, a: Choice, b: Choice) -> float:
        key = (a.label, b.label)
        p = self._cache.get(key)
        if p is None:
            xi = self.config.device.effect_for(a.label, b.label)
            p = born_probability_direct(a.ket, b.ket, xi)
            p = 0.0 if p < _SNAP else 1.0 if p > 1 - _SNAP else p
            self._cache[key] = p
        return p

    def announce(self) -> Announcement:
        if self._alice is None or self._bob is None:
            raise ProtocolError(f"relay cannot announce round {self.round} before both choices")
        if self._pos == len(self._buf):
            self._buf = self._rng.random(_CHUNK)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        ann = Announcement(self.round, int(u < self.click_probability(self._alice, self._bob)))
        self._alice = self._bob = None
        self.round += 1
        return ann


# -- logs ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CountTables:
    """Rounds and clicks per (Alice label, Bob label)."""

    alice_labels: tuple[str, ...]
    bob_labels: tuple[str, ...]
    counts: np.ndarray
    clicks: np.ndarray

    def data_matrix(self, rows: Sequence[str], cols: Sequence[str], testing_party: str = "alice") -> DataMatrix:
        """Click frequencies with the testing party's labels as rows."""
        if testing_party == "alice":
            row_pool, col_pool, counts, clicks = self.alice_labels, self.bob_labels, self.counts, self.clicks
        elif testing_party == "bob":
            row_pool, col_pool, counts, clicks = self.bob_labels, self.alice_labels, self.counts.T, self.clicks.T
        else:
            raise ValueError(f"testing party must be 'alice' or 'bob', got {testing_party!r}")
        for lb in (*rows, *cols):
            if lb not in row_pool and lb not in col_pool:
                raise SiftError(f"label {lb!r} never occurs in the log", [])
        ri = [row_pool.index(lb) if lb in row_pool else -1 for lb in rows]
        ci = [col_pool.index(lb) if lb in col_pool else -1 for lb in cols]
        missing = [(r, c) for r, i in zip(rows, ri) for c, j in zip(cols, ci)
                   if i < 0 or j < 0 or counts[i, j] == 0]
        if missing:
            shown = ", ".join(f"({a}, {b})" for a, b in missing)
            raise SiftError(f"no rounds recorded for label pairs {shown}", missing)
        n = counts[np.ix_(ri, ci)]
        c = clicks[np.ix_(ri, ci)]
        return DataMatrix(c / n, n, tuple(rows), tuple(cols), c)

    def source(self, fixed_labels: Sequence[str], testing_party: str = "alice"):
        return lambda preps: self.data_matrix(preps.labels, fixed_labels, testing_party)


@dataclass(frozen=True, eq=False)
class SessionLog:
    alice: PartyConfig
    bob: PartyConfig
    relay: RelayConfig
    alice_index: np.ndarray
    bob_index: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        for name in ("alice_index", "bob_index", "outcomes"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not len(self.alice_index) == len(self.bob_index) == len(self.outcomes):
            raise ValueError("log columns have different lengths")

    @property
    def rounds(self) -> int:
        return len(self.outcomes)

    def records(self) -> Iterator[RoundRecord]:
        la, lb = self.alice.labels, self.bob.labels
        for t, (i, j, o) in enumerate(zip(self.alice_index.tolist(), self.bob_index.tolist(), self.outcomes.tolist())):
            yield RoundRecord(t, la[i], lb[j], o)

    def tables(self) -> CountTables:
        na, nb = len(self.alice.pool), len(self.bob.pool)
        flat = self.alice_index * nb + self.bob_index
        counts = np.bincount(flat, minlength=na * nb).reshape(na, nb)
        clicks = np.bincount(flat, weights=self.outcomes, minlength=na * nb).reshape(na, nb).astype(np.int64)
        return CountTables(self.alice.labels, self.bob.labels, counts, clicks)

    def permuted(self, order) -> "SessionLog":
        """Same records in a different order (round indices are reassigned)."""
        order = np.asarray(order)
        return SessionLog(self.alice, self.bob, self.relay, self.alice_index[order],
                          self.bob_index[order], self.outcomes[order])

    def header(self) -> dict:
        return {"format": LOG_FORMAT, "version": LOG_VERSION, "rounds": self.rounds,
                "alice": self.alice.to_dict(), "bob": self.bob.to_dict(), "relay": self.relay.to_dict()}

    def write(self, fh) -> None:
        fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
        qa = [json.dumps(lb) for lb in self.alice.labels]
        qb = [json.dumps(lb) for lb in self.bob.labels]
        fh.writelines(f"[{t},{qa[i]},{qb[j]},{o}]\n" for t, (i, j, o) in
                      enumerate(zip(self.alice_index.tolist(), self.bob_index.tolist(), self.outcomes.tolist())))

    def dumps(self) -> str:
        buf = io.StringIO()
        self.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            self.write(fh)

    @classmethod
    def loads(cls, text: str) -> "SessionLog":
        return cls._read(io.StringIO(text))

    @classmethod
    def load(cls, path) -> "SessionLog":
        with open(path, encoding="utf-8") as fh:
            return cls._read(fh)

    @classmethod
    def _read(cls, fh) -> "SessionLog":
        header = json.loads(fh.readline())
        if header.get("format") != LOG_FORMAT or header.get("version") != LOG_VERSION:
            raise ValueError("not a session log of a supported version")
        alice = PartyConfig.from_dict(header["alice"])
        bob = PartyConfig.from_dict(header["bob"])
        relay = RelayConfig.from_dict(header["relay"])
        ia = {lb: i for i, lb in enumerate(alice.labels)}
        ib = {lb: i for i, lb in enumerate(bob.labels)}
        ai, bi, out = [], [], []
        for t, line in enumerate(fh):
            r, a, b, o = json.loads(line)
            if r != t:
                raise ValueError(f"record {t} carries round index {r}")
            ai.append(ia[a])
            bi.append(ib[b])
            out.append(int(o))
        if len(out) != header["rounds"]:
            raise ValueError(f"header announces {header['rounds']} rounds, found {len(out)}")
        return cls(alice, bob, relay, ai, bi, out)


def run_session(alice: PartyConfig, bob: PartyConfig, relay: RelayConfig, rounds: int) -> SessionLog:
    if rounds < 1:
        raise ValueError("a session needs at least one round")
    pa, pb, node = Party(alice), Party(bob), Relay(relay)
    ai = np.empty(rounds, dtype=np.int64)
    bi = np.empty(rounds, dtype=np.int64)
    out = np.empty(rounds, dtype=np.int64)
    for t in range(rounds):
        ca = pa.choose(t)
        node.receive(ca)
        cb = pb.choose(t)
        node.receive(cb)
        ann = node.announce()
        pa.receive(ann)
        pb.receive(ann)
        ai[t], bi[t], out[t] = ca.index, cb.index, ann.outcome
    return SessionLog(alice, bob, relay, ai, bi, out)


# -- analysis -----------------------------------------------------------------


def _roles(alice: PartyConfig, bob: PartyConfig, testing_party: str):
    if testing_party == "alice":
        return alice, bob
    if testing_party == "bob":
        return bob, alice
    raise ValueError(f"testing party must be 'alice' or 'bob', got {testing_party!r}")


def _fixed_labels(fixed: PartyConfig, fixed_labels) -> tuple[str, ...]:
    if fixed_labels is None:
        if len(fixed.pool) != 4:
            raise ValueError(f"{fixed.name} has {len(fixed.pool)} states; name the 4 fixed labels explicitly")
        return fixed.labels
    fixed_labels = tuple(fixed_labels)
    if len(fixed_labels) != 4:
        raise ValueError("the fixed party contributes exactly 4 labels")
    return fixed_labels


def sift_to_data_matrices(log: SessionLog, testing_party: str, subset1: Sequence[str], subset2: Sequence[str],
                          fixed_labels: Sequence[str] | None = None,
                          basis: Basis | str = STANDARD) -> tuple[Trial, Trial]:
    """Regroup logged rounds into the two trials of a loop test."""
    tester, fixed = _roles(log.alice, log.bob, testing_party)
    fixed_labels = _fixed_labels(fixed, fixed_labels)
    tables = log.tables()
    tag = f"{fixed.name}:{','.join(fixed_labels)}"
    trials = []
    for subset in (subset1, subset2):
        unknown = [lb for lb in subset if lb not in tester.pool]
        if unknown:
            raise SiftError(f"labels {unknown} are not in {tester.name}'s pool", [(lb, "*") for lb in unknown])
        preps = PreparationSet.from_pool(tester.pool, subset, basis)
        trials.append(Trial.from_data(preps, tables.data_matrix(preps.labels, fixed_labels, testing_party), tag))
    return trials[0], trials[1]


@dataclass(frozen=True)
class VerificationResult:
    passed: bool
    violations: tuple[int, ...]
    checked: int
    matched: int
    fraction: float
    seed: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "violations": list(self.violations), "checked": self.checked,
                "matched": self.matched, "fraction": self.fraction, "seed": self.seed}


def verify_subset(log: SessionLog, fraction: float, seed: int) -> VerificationResult:
    """Spot-check a random fraction of rounds using disclosed indices only.

    Rounds in which both parties used the same pool position must never
    click when the relay is an honest singlet projector and equal positions
    hold equal states.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = log.rounds
    if fraction == 1:
        chosen = np.ones(n, dtype=bool)
    else:
        chosen = np.random.default_rng(seed).random(n) < fraction
    same = chosen & (log.alice_index == log.bob_index)
    bad = np.flatnonzero(same & (log.outcomes == 1))
    return VerificationResult(not len(bad), tuple(int(t) for t in bad), int(chosen.sum()),
                              int(same.sum()), float(fraction), int(seed))


def session_loop_test(log: SessionLog, testing_party: str = "alice", base: Sequence[str] | None = None,
                      extras: Sequence[str] | None = None, tau: float | None = None, *,
                      method: str = "auto", schedule=None, fixed_labels: Sequence[str] | None = None,
                      basis: Basis | str = STANDARD, exact: bool = False) -> tuple[TestReport, LocalizationReport]:
    """Loop test over a session, without any state disclosure by the fixed party.

    ``base`` defaults to the first four labels of the testing party's pool
    and ``extras`` to the rest. With ``exact=True`` the logged rounds are
    ignored and the relay's exact click probabilities are used instead.
    Returns the first evaluated pair's report and the localization.
    """
    tester, fixed = _roles(log.alice, log.bob, testing_party)
    fixed_labels = _fixed_labels(fixed, fixed_labels)
    base = tuple(tester.labels[:4] if base is None else base)
    if extras is None:
        extras = [lb for lb in tester.labels if lb not in base]
    basis = get_basis(basis)
    base_set = PreparationSet.from_pool(tester.pool, base, basis)
    extra_states = {lb: tester.pool[lb] for lb in extras}
    if exact:
        fixed_set = PreparationSet.from_pool(fixed.pool, fixed_labels, basis, require_invertible=False)
        source = exact_source(fixed_set, log.relay.device, testing_party)
    else:
        if tau is None:
            raise ValueError("a sampled session needs an explicit threshold")
        source = log.tables().source(fixed_labels, testing_party)
    tag = f"{fixed.name}:{','.join(fixed_labels)}"
    loc = localize(base_set, extra_states, tag, source, tau=tau, method=method, schedule=schedule)
    evaluated = [o.report for o in loc.outcomes if o.report is not None]
    if not evaluated:
        raise ValueError("every subset in the schedule is linearly dependent")
    return evaluated[0], loc


# -- session-level calibration ------------------------------------------------


def simulate_tables(alice: PartyConfig, bob: PartyConfig, device: DeviceModel, rounds: int,
                    rng: np.random.Generator) -> CountTables:
    """Aggregate tables with the same distribution as a full session.

    Label-pair counts are multinomial in the product choice distribution
    and clicks binomial given the counts.
    """
    pa, pb = alice.probabilities, bob.probabilities
    probs = np.empty((len(pa), len(pb)))
    for i, (la, ka) in enumerate(alice.pool.items()):
        for j, (lb, kb) in enumerate(bob.pool.items()):
            p = born_probability_direct(ka, kb, device.effect_for(la, lb))
            probs[i, j] = min(max(p, 0.0), 1.0)
    counts = rng.multinomial(rounds, np.outer(pa, pb).ravel()).reshape(probs.shape)
    clicks = rng.binomial(counts, probs)
    return CountTables(alice.labels, bob.labels, counts, clicks)


def calibrate_session_threshold(alice: PartyConfig, bob: PartyConfig, device: DeviceModel, rounds: int, *,
                                testing_party: str = "alice", base: Sequence[str] | None = None,
                                extras: Sequence[str] | None = None, fixed_labels: Sequence[str] | None = None,
                                replicas: int = 1000, quantile: float = 0.99, seed: int = 0,
                                method: str = "auto", basis: Basis | str = STANDARD) -> CalibrationResult:
    """Null threshold for :func:`session_loop_test` under an honest relay.

    The replica score is the largest row score over every evaluated pair
    of the localization schedule.
    """
    if not device.label_independent:
        raise ValueError("calibration needs an honest (label-independent) device")
    if replicas < 100:
        raise ValueError(f"calibration needs at least 100 replicas, got {replicas}")
    if not 0.5 < quantile < 1:
        raise ValueError(f"quantile must lie in (0.5, 1), got {quantile}")
    tester, fixed = _roles(alice, bob, testing_party)
    fixed_labels = _fixed_labels(fixed, fixed_labels)
    base = tuple(tester.labels[:4] if base is None else base)
    if extras is None:
        extras = [lb for lb in tester.labels if lb not in base]
    basis = get_basis(basis)
    base_set = PreparationSet.from_pool(tester.pool, base, basis)
    extra_states = {lb: tester.pool[lb] for lb in extras}
    tag = f"{fixed.name}:{','.join(fixed_labels)}"

    scores = np.empty(replicas)
    for r in range(replicas):
        rng = np.random.default_rng(derive_seed(seed, r))
        tables = simulate_tables(alice, bob, device, rounds, rng)
        loc = localize(base_set, extra_states, tag, tables.source(fixed_labels, testing_party),
                       tau=math.inf, method=method)
        scores[r] = max(o.report.score for o in loc.outcomes if o.report is not None)
    summary = {str(q): float(np.quantile(scores, q, method="higher")) for q in REPORTED_QUANTILES}
    return CalibrationResult(threshold_from_scores(scores, quantile), quantile, replicas,
                             rounds, seed, method, summary, scores)
