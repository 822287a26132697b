import numpy as np
import pytest

from loopspam import worked_example as we
from loopspam.errors import SingularMatrixError
from loopspam.looptest import Trial
from loopspam.qcore import random_effect, random_ket
from loopspam.scenario import INVERTIBILITY_TOL, AliceCorrelated, Honest, PreparationSet, exact_data_matrix

# Condition-number caps. Exact-mode errors scale with kappa(A) * kappa(S2) times
# double rounding, so floating-point-level bounds only hold on capped instances.
WELL_POSED = {"prep_cond": 1e3, "data_cond": 1e5}
TIGHT = {"prep_cond": 30.0, "data_cond": 1e3}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def bob_set():
    return we.bob_set()


@pytest.fixture
def trial_sets():
    return we.trial_sets()


def random_preps(rng, prefix="s", basis="standard", max_cond=None):
    """Random invertible preparation set labelled prefix0..prefix3."""
    while True:
        try:
            preps = PreparationSet([f"{prefix}{k}" for k in range(4)], [random_ket(rng) for _ in range(4)], basis)
        except SingularMatrixError:
            continue
        if max_cond is None or np.linalg.cond(preps.matrix) <= max_cond:
            return preps


def random_instance(rng, max_cond=None):
    """(Alice set 1, Alice set 2, Bob set, effect) with fresh random labels."""
    return (random_preps(rng, "a", max_cond=max_cond), random_preps(rng, "c", max_cond=max_cond),
            random_preps(rng, "b", max_cond=max_cond), random_effect(rng))


def _data_ok(S, data_cond) -> bool:
    sv = np.linalg.svd(S, compute_uv=False)
    if sv[-1] <= INVERTIBILITY_TOL * sv[0]:
        return False
    return data_cond is None or sv[0] / sv[-1] <= data_cond


def honest_trials(rng, prep_cond=None, data_cond=None):
    """Two trials of one honest device with an invertible second data matrix."""
    while True:
        a1, a2, b, xi = random_instance(rng, prep_cond)
        d = Honest(xi)
        t1 = Trial.from_data(a1, exact_data_matrix(a1, b, d))
        t2 = Trial.from_data(a2, exact_data_matrix(a2, b, d))
        if _data_ok(t2.S, data_cond):
            return t1, t2


def correlated_trials(rng, prep_cond=None, data_cond=None):
    """Base set against the same set with one state swapped for a correlated one.

    Returns the two trials and the 0-based position of the swapped state.
    """
    while True:
        base = random_preps(rng, "a", max_cond=prep_cond)
        k = int(rng.integers(4))
        try:
            second = base.substitute(k, "e", random_ket(rng))
        except SingularMatrixError:
            continue
        if prep_cond and np.linalg.cond(second.matrix) > prep_cond:
            continue
        fixed = random_preps(rng, "b", max_cond=prep_cond)
        d = AliceCorrelated(random_effect(rng), {"e": random_effect(rng)})
        t1 = Trial.from_data(base, exact_data_matrix(base, fixed, d))
        t2 = Trial.from_data(second, exact_data_matrix(second, fixed, d))
        if _data_ok(t2.S, data_cond):
            return t1, t2, k
