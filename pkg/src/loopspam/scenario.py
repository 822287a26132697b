"""
Preparation sets, device models and data-matrix generation.

A data matrix holds raw click probabilities (exact mode) or click
frequencies (sampled mode), indexed by (Alice state, Bob state). Values
are not divided by four; a common scale cancels in every consistency
check downstream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import LabelError, SingularMatrixError
from .qcore import (
    PRESET_EFFECTS,
    STANDARD,
    Basis,
    born_probability_direct,
    check_effect,
    check_ket,
    density,
    get_basis,
    pauli_expand,
    projector,
)

__all__ = [
    "INVERTIBILITY_TOL",
    "PreparationSet",
    "Honest",
    "AliceCorrelated",
    "BobCorrelated",
    "Noisy",
    "DeviceModel",
    "DataMatrix",
    "ShotPlan",
    "effective_effect",
    "exact_data_matrix",
    "sample_data_matrix",
    "label_key",
    "derive_seed",
    "cell_rng",
    "device_to_dict",
    "device_from_dict",
    "effect_to_spec",
    "effect_from_spec",
]

INVERTIBILITY_TOL = 1e-8


class PreparationSet:
    """Four labeled single-qubit states and their Pauli coefficient matrix.

    ``matrix`` has the coefficient vector of state ``k`` as column ``k``.
    With ``require_invertible`` (the default) a set whose matrix has a
    singular value at or below ``INVERTIBILITY_TOL`` is rejected.
    """

    __slots__ = ("labels", "kets", "basis", "matrix", "smallest_singular_value")

    def __init__(self, labels: Sequence[str], kets: Sequence, basis: Basis | str = STANDARD,
                 require_invertible: bool = True):
        labels = tuple(str(lb) for lb in labels)
        if len(labels) != 4 or len(kets) != 4:
            raise ValueError(f"a preparation set needs exactly 4 states, got {len(labels)}")
        if len(set(labels)) != 4:
            raise LabelError(f"duplicate labels in preparation set {labels}")
        basis = get_basis(basis)
        checked = []
        for lb, psi in zip(labels, kets):
            try:
                v = check_ket(psi).copy()
            except ValueError as exc:
                raise ValueError(f"state {lb!r}: {exc}") from None
            v.setflags(write=False)
            checked.append(v)
        mat = np.column_stack([pauli_expand(density(v), basis) for v in checked])
        mat.setflags(write=False)
        smin = float(np.linalg.svd(mat, compute_uv=False)[-1])
        if require_invertible and smin <= INVERTIBILITY_TOL:
            raise SingularMatrixError(
                f"states {labels} are linearly dependent as operators "
                f"(smallest singular value {smin:.3g})", smin)
        self.labels = labels
        self.kets = tuple(checked)
        self.basis = basis
        self.matrix = mat
        self.smallest_singular_value = smin

    @classmethod
    def from_pool(cls, pool: Mapping[str, object], labels: Sequence[str],
                  basis: Basis | str = STANDARD, require_invertible: bool = True) -> "PreparationSet":
        missing = [lb for lb in labels if lb not in pool]
        if missing:
            raise LabelError(f"labels {missing} are not in the state pool")
        return cls(labels, [pool[lb] for lb in labels], basis, require_invertible)

    def substitute(self, position: int, label: str, psi) -> "PreparationSet":
        labels = list(self.labels)
        kets = list(self.kets)
        labels[position] = label
        kets[position] = psi
        return PreparationSet(labels, kets, self.basis)

    def with_basis(self, basis: Basis | str) -> "PreparationSet":
        return PreparationSet(self.labels, self.kets, basis, require_invertible=False)

    def as_pool(self) -> dict[str, np.ndarray]:
        return dict(zip(self.labels, self.kets))

    def __iter__(self):
        return iter(zip(self.labels, self.kets))

    def __repr__(self):
        return f"PreparationSet({list(self.labels)}, basis={self.basis.name!r})"


# -- device models ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Honest:
    """Applies the same effect whatever was sent."""

    effect: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "effect", _frozen_effect(self.effect))

    def effect_for(self, alice_label: str, bob_label: str) -> np.ndarray:
        return self.effect

    @property
    def label_independent(self) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class AliceCorrelated:
    """Applies ``substitutes[label]`` when Alice sent ``label``, ``default`` otherwise."""

    default: np.ndarray
    substitutes: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "default", _frozen_effect(self.default))
        object.__setattr__(self, "substitutes",
                           {str(k): _frozen_effect(v) for k, v in self.substitutes.items()})

    def effect_for(self, alice_label: str, bob_label: str) -> np.ndarray:
        return self.substitutes.get(alice_label, self.default)

    @property
    def label_independent(self) -> bool:
        return all(np.array_equal(v, self.default) for v in self.substitutes.values())


@dataclass(frozen=True, eq=False)
class BobCorrelated(AliceCorrelated):
    """Mirror image of :class:`AliceCorrelated`, keyed by Bob's label."""

    def effect_for(self, alice_label: str, bob_label: str) -> np.ndarray:
        return self.substitutes.get(bob_label, self.default)


@dataclass(frozen=True, eq=False)
class Noisy:
    """Depolarizes an inner device: ``p * I/2 + (1 - p) * xi``."""

    inner: "DeviceModel"
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"depolarizing weight must lie in [0, 1], got {self.p}")

    def effect_for(self, alice_label: str, bob_label: str) -> np.ndarray:
        xi = self.inner.effect_for(alice_label, bob_label)
        return self.p * np.eye(4) / 2 + (1 - self.p) * xi

    @property
    def label_independent(self) -> bool:
        return self.p == 1.0 or self.inner.label_independent


DeviceModel = Union[Honest, AliceCorrelated, BobCorrelated, Noisy]


def _frozen_effect(xi) -> np.ndarray:
    m = check_effect(xi).copy()
    m.setflags(write=False)
    return m


def effective_effect(device: DeviceModel, alice_label: str, bob_label: str,
                     alice_labels=None, bob_labels=None) -> np.ndarray:
    """Effect the device applies for one label pair.

    When the label collections are given, labels outside them are rejected.
    """
    if alice_labels is not None and alice_label not in alice_labels:
        raise LabelError(f"unknown Alice label {alice_label!r}")
    if bob_labels is not None and bob_label not in bob_labels:
        raise LabelError(f"unknown Bob label {bob_label!r}")
    return device.effect_for(alice_label, bob_label)


# -- data matrices ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """Click probabilities or frequencies, rows = Alice's states, columns = Bob's.

    ``shots`` holds the number of runs behind each cell; all zeros marks an
    exact-probability matrix.
    """

    values: np.ndarray
    shots: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    clicks: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        shots = np.broadcast_to(np.asarray(self.shots, dtype=np.int64), vals.shape).copy()
        if vals.shape != (4, 4):
            raise ValueError(f"data matrix must be 4x4, got {vals.shape}")
        if np.any(vals < 0) or np.any(vals > 1):
            raise ValueError("data matrix entries must lie in [0, 1]")
        if np.any(shots < 0):
            raise ValueError("shot counts must be non-negative")
        for arr in (vals, shots):
            arr.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "shots", shots)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        if self.clicks is not None:
            clicks = np.array(self.clicks, dtype=np.int64)
            clicks.setflags(write=False)
            object.__setattr__(self, "clicks", clicks)

    @property
    def exact(self) -> bool:
        return not self.shots.any()

    def transpose(self) -> "DataMatrix":
        """Swap the roles of the two parties."""
        return DataMatrix(self.values.T, self.shots.T, self.col_labels, self.row_labels,
                          None if self.clicks is None else self.clicks.T)


@dataclass(frozen=True)
class ShotPlan:
    shots: int
    seed: int = 0

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 0:
            raise ValueError(f"shots must be a non-negative integer, got {self.shots!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:4], "big")


def derive_seed(seed: int, *keys: int) -> int:
    """Stable 64-bit child seed for a tuple of non-negative integer keys."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def cell_rng(seed: int, alice_label: str, bob_label: str) -> np.random.Generator:
    """Generator for one (Alice label, Bob label) cell.

    Keyed by labels rather than positions, so a label pair shared by two
    trials draws exactly the same data in both.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(label_key(alice_label), label_key(bob_label)))
    return np.random.default_rng(ss)


def _probabilities(preps_a: PreparationSet, preps_b: PreparationSet, device: DeviceModel) -> np.ndarray:
    probs = np.empty((4, 4))
    for k, (la, psi_a) in enumerate(preps_a):
        for l, (lb, psi_b) in enumerate(preps_b):
            xi = effective_effect(device, la, lb, preps_a.labels, preps_b.labels)
            probs[k, l] = born_probability_direct(psi_a, psi_b, xi)
    return probs


def exact_data_matrix(preps_a: PreparationSet, preps_b: PreparationSet,
                      device: DeviceModel) -> DataMatrix:
    probs = np.clip(_probabilities(preps_a, preps_b, device), 0.0, 1.0)
    return DataMatrix(probs, 0, preps_a.labels, preps_b.labels)


def sample_data_matrix(preps_a: PreparationSet, preps_b: PreparationSet,
                       device: DeviceModel, plan: ShotPlan) -> DataMatrix:
    """Binomial click frequencies, one independent substream per label pair."""
    if plan.shots < 1:
        raise ValueError("sampling needs at least one shot per cell")
    probs = np.clip(_probabilities(preps_a, preps_b, device), 0.0, 1.0)
    clicks = np.empty((4, 4), dtype=np.int64)
    for k, la in enumerate(preps_a.labels):
        for l, lb in enumerate(preps_b.labels):
            clicks[k, l] = cell_rng(plan.seed, la, lb).binomial(plan.shots, probs[k, l])
    return DataMatrix(clicks / plan.shots, plan.shots, preps_a.labels, preps_b.labels, clicks)


# -- serialization ------------------------------------------------------------


def effect_to_spec(xi) -> str | dict:
    m = np.asarray(xi, dtype=complex)
    for name, preset in PRESET_EFFECTS.items():
        if np.array_equal(m, preset):
            return name
    return {"matrix": [[[float(z.real), float(z.imag)] for z in row] for row in m]}


def effect_from_spec(spec) -> np.ndarray:
    """Effect from a preset name, ``{"matrix": 4x4 [re, im]}`` or ``{"projector": 4 amplitudes}``."""
    if isinstance(spec, str):
        try:
            return PRESET_EFFECTS[spec]
        except KeyError:
            raise ValueError(f"unknown effect preset {spec!r}; choose from {sorted(PRESET_EFFECTS)}") from None
    if isinstance(spec, Mapping) and "matrix" in spec:
        rows = spec["matrix"]
        m = np.array([[_complex(z) for z in row] for row in rows], dtype=complex)
        return check_effect(m)
    if isinstance(spec, Mapping) and "projector" in spec:
        amps = [_complex(z) for z in spec["projector"]]
        if len(amps) != 4 or not np.any(amps):
            raise ValueError("projector needs 4 amplitudes, not all zero")
        return projector(amps)
    raise ValueError(f"cannot interpret effect specification {spec!r}")


def _complex(z) -> complex:
    if isinstance(z, (list, tuple)):
        if len(z) != 2:
            raise ValueError(f"complex amplitude must be [re, im], got {z!r}")
        return complex(float(z[0]), float(z[1]))
    if isinstance(z, (int, float)) and not isinstance(z, bool):
        return complex(z)
    raise ValueError(f"cannot read {z!r} as a complex number")


def device_to_dict(device: DeviceModel) -> dict:
    if isinstance(device, Noisy):
        return {"type": "noisy", "p": device.p, "inner": device_to_dict(device.inner)}
    if isinstance(device, BobCorrelated):
        kind = "bob-correlated"
    elif isinstance(device, AliceCorrelated):
        kind = "alice-correlated"
    elif isinstance(device, Honest):
        return {"type": "honest", "effect": effect_to_spec(device.effect)}
    else:
        raise TypeError(f"not a device model: {device!r}")
    return {"type": kind, "default": effect_to_spec(device.default),
            "map": {k: effect_to_spec(v) for k, v in device.substitutes.items()}}


def device_from_dict(spec: Mapping) -> DeviceModel:
    kind = spec.get("type")
    if kind == "honest":
        return Honest(effect_from_spec(spec["effect"]))
    if kind in ("alice-correlated", "bob-correlated"):
        cls = AliceCorrelated if kind == "alice-correlated" else BobCorrelated
        subs = {str(k): effect_from_spec(v) for k, v in dict(spec.get("map", {})).items()}
        return cls(effect_from_spec(spec["default"]), subs)
    if kind == "noisy":
        return Noisy(device_from_dict(spec["inner"]), float(spec["p"]))
    raise ValueError(f"unknown device type {kind!r}")
