"""
The five-state worked example: fixtures and pinned expected matrices.

Bob prepares psi1..psi4, Alice draws from psi1..psi5. The device projects
onto the singlet except when Alice sends psi5, where it projects onto
(|00> + |11>)/sqrt(2). Trial 1 uses Alice's psi1..psi4; trial 2 replaces
psi4 by psi5.

Expected matrices are given in the ``negated-y`` convention; use
:func:`expected_matrices` for the standard one. The product matrix row 4
is the recomputed ``(1, 0, 1, -1)``. ``REFERENCE_PRODUCT_ROW4`` keeps the
value ``(1, 0, 1, 1)`` usually quoted with this example; the S and A
matrices above do not reproduce it.
"""

from __future__ import annotations

import numpy as np

from .qcore import NEGATED_Y, PRESET_EFFECTS, PRESET_KETS, Basis, get_basis
from .scenario import AliceCorrelated, Honest, PreparationSet

BOB_LABELS = ("psi1", "psi2", "psi3", "psi4")
TRIAL1_LABELS = ("psi1", "psi2", "psi3", "psi4")
TRIAL2_LABELS = ("psi1", "psi2", "psi3", "psi5")
EXTRA_LABELS = ("psi5",)
CORRELATED_STATE = "psi5"

_S = np.array([
    [0, 1 / 4, 1 / 2, 1 / 4],
    [1 / 4, 0, 1 / 4, 1 / 4],
    [1 / 2, 1 / 4, 0, 1 / 4],
    [1 / 4, 1 / 4, 1 / 4, 0],
])

EXPECTED = {
    "S1": _S,
    "A1": np.array([
        [1 / 2, 1 / 2, 1 / 2, 1 / 2],
        [1 / 2, 0, -1 / 2, 0],
        [0, -1 / 2, 0, 0],
        [0, 0, 0, 1 / 2],
    ]),
    "A1T_inv_S1": np.array([
        [1 / 2, 1 / 2, 1 / 2, 1 / 2],
        [-1 / 2, 0, 1 / 2, 0],
        [0, 1 / 2, 0, 0],
        [0, 0, 0, -1 / 2],
    ]),
    "S2": _S,
    "A2": np.array([
        [1 / 2, 1 / 2, 1 / 2, 1 / 2],
        [1 / 2, 0, -1 / 2, 0],
        [0, -1 / 2, 0, 0],
        [0, 0, 0, -1 / 2],
    ]),
    "A2T_inv_S2": np.array([
        [1 / 2, 1 / 2, 1 / 2, 1 / 2],
        [-1 / 2, 0, 1 / 2, 0],
        [0, 1 / 2, 0, 0],
        [0, 0, 0, 1 / 2],
    ]),
    "T": np.array([
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 0, 1, 0],
        [1, 0, 1, -1],
    ], dtype=float),
}

REFERENCE_PRODUCT_ROW4 = np.array([1.0, 0.0, 1.0, 1.0])

#: flagged rows (1-based) of the product matrix
EXPECTED_FLAGGED_ROWS = (4,)

_Y_FLIP = np.diag([1.0, 1.0, -1.0, 1.0])


def expected_matrices(basis: Basis | str = NEGATED_Y) -> dict[str, np.ndarray]:
    """Pinned matrices in the requested convention.

    Switching conventions flips the sign of the y row of every A and of
    every normalized map; data and product matrices are unaffected.
    """
    basis = get_basis(basis)
    out = {k: v.copy() for k, v in EXPECTED.items()}
    if basis.name != NEGATED_Y.name:
        for key in ("A1", "A2", "A1T_inv_S1", "A2T_inv_S2"):
            out[key] = _Y_FLIP @ out[key]
    return out


def alice_pool() -> dict[str, np.ndarray]:
    return {lb: PRESET_KETS[lb] for lb in TRIAL1_LABELS + EXTRA_LABELS}


def bob_set(basis: Basis | str = NEGATED_Y) -> PreparationSet:
    return PreparationSet(BOB_LABELS, [PRESET_KETS[lb] for lb in BOB_LABELS], basis)


def trial_sets(basis: Basis | str = NEGATED_Y) -> tuple[PreparationSet, PreparationSet]:
    pool = alice_pool()
    return (PreparationSet.from_pool(pool, TRIAL1_LABELS, basis),
            PreparationSet.from_pool(pool, TRIAL2_LABELS, basis))


def correlated_device() -> AliceCorrelated:
    return AliceCorrelated(PRESET_EFFECTS["singlet"], {CORRELATED_STATE: PRESET_EFFECTS["symmetric"]})


def honest_device() -> Honest:
    return Honest(PRESET_EFFECTS["singlet"])
