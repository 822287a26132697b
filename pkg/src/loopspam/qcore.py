"""
Exact one- and two-qubit operator algebra.

States are plain length-2 complex arrays, single-qubit operators are 2x2
complex arrays and joint measurement effects are 4x4 complex arrays.
Party A is always the left tensor factor.

Pauli coefficients follow ``op = sum_i c_i sigma_i`` with
``c_i = Tr(op sigma_i) / 2``; joint effects expand as
``xi = sum_ij x_ij sigma_i (x) sigma_j`` with ``x_ij = Tr(xi sigma_i (x) sigma_j) / 4``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Basis",
    "STANDARD",
    "NEGATED_Y",
    "get_basis",
    "IDENTITY",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "ket",
    "check_ket",
    "check_hermitian",
    "check_effect",
    "density",
    "projector",
    "kron",
    "pauli_expand",
    "pauli_reconstruct",
    "pauli_expand_joint",
    "pauli_reconstruct_joint",
    "born_probability_direct",
    "born_probability_expanded",
    "random_ket",
    "random_hermitian",
    "random_effect",
    "PRESET_KETS",
    "SINGLET",
    "SYMMETRIC",
    "PRESET_EFFECTS",
]

KET_TOL = 1e-12
HERMITIAN_TOL = 1e-12
EFFECT_TOL = 1e-10

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class Basis:
    """Ordered expansion basis (identity, x, y, z) for one qubit.

    Two conventions ship: ``standard`` Pauli matrices and ``negated-y``,
    identical except that the y generator is ``-sigma_y``. The second one
    reproduces the sign pattern of the worked-example preparation matrices.
    """

    name: str
    elements: np.ndarray

    def __post_init__(self):
        els = np.asarray(self.elements, dtype=complex)
        if els.shape != (4, 2, 2):
            raise ValueError(f"basis needs shape (4, 2, 2), got {els.shape}")
        gram = np.einsum("aij,bji->ab", els, els)
        if not np.allclose(gram, 2 * np.eye(4), atol=HERMITIAN_TOL):
            raise ValueError("basis elements must satisfy Tr(s_i s_j) = 2 delta_ij")
        for el in els:
            check_hermitian(el)
        els.setflags(write=False)
        object.__setattr__(self, "elements", els)

    @property
    def joint(self) -> np.ndarray:
        """The 16 products ``s_i (x) s_j`` as an array of shape (4, 4, 4, 4)."""
        return np.einsum("aij,bkl->abikjl", self.elements, self.elements).reshape(4, 4, 4, 4)

    def __repr__(self):
        return f"Basis({self.name!r})"


def get_basis(basis: Basis | str) -> Basis:
    if isinstance(basis, Basis):
        return basis
    try:
        return _BASES[basis]
    except KeyError:
        raise ValueError(f"unknown basis convention {basis!r}; choose from {sorted(_BASES)}") from None


# -- validation ---------------------------------------------------------------


def check_ket(psi) -> np.ndarray:
    """Return ``psi`` as a complex array, rejecting anything not a unit 2-vector."""
    v = np.asarray(psi, dtype=complex)
    if v.shape != (2,):
        raise ValueError(f"single-qubit ket needs 2 amplitudes, got shape {v.shape}")
    norm2 = float(np.vdot(v, v).real)
    if abs(norm2 - 1.0) > KET_TOL:
        raise ValueError(f"ket is not normalized (squared norm {norm2!r})")
    return v


def ket(a: complex, b: complex) -> np.ndarray:
    return check_ket([a, b])


def check_hermitian(op, tol: float = HERMITIAN_TOL) -> np.ndarray:
    m = np.asarray(op, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"operator must be square, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > tol:
        raise ValueError(f"operator is not Hermitian (max |op - op^H| = {dev:.3g})")
    return m


def check_effect(xi, tol: float = EFFECT_TOL) -> np.ndarray:
    """Validate a two-qubit measurement effect: Hermitian with spectrum in [0, 1]."""
    m = check_hermitian(xi)
    if m.shape != (4, 4):
        raise ValueError(f"two-qubit effect must be 4x4, got {m.shape}")
    ev = np.linalg.eigvalsh(m)
    if ev[0] < -tol or ev[-1] > 1 + tol:
        raise ValueError(f"effect eigenvalues {ev.min():.3g}..{ev.max():.3g} leave [0, 1]")
    return m


STANDARD = Basis("standard", np.stack([IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z]))
NEGATED_Y = Basis("negated-y", np.stack([IDENTITY, SIGMA_X, -SIGMA_Y, SIGMA_Z]))

_BASES = {b.name: b for b in (STANDARD, NEGATED_Y)}


# -- construction -------------------------------------------------------------


def density(psi) -> np.ndarray:
    v = check_ket(psi)
    return np.outer(v, v.conj())


def projector(psi) -> np.ndarray:
    """Rank-one projector onto an arbitrary normalized vector."""
    v = np.asarray(psi, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def kron(lhs, rhs) -> np.ndarray:
    """Tensor product with ``lhs`` (party A) as the left factor."""
    return np.kron(np.asarray(lhs, dtype=complex), np.asarray(rhs, dtype=complex))


# -- Pauli expansion ----------------------------------------------------------


def pauli_expand(op, basis: Basis | str = STANDARD) -> np.ndarray:
    """Real coefficients ``c_i = Tr(op s_i) / 2`` of a Hermitian 2x2 operator."""
    m = check_hermitian(op)
    if m.shape != (2, 2):
        raise ValueError(f"single-qubit operator must be 2x2, got {m.shape}")
    b = get_basis(basis)
    return np.einsum("ij,aji->a", m, b.elements).real / 2


def pauli_reconstruct(coeffs, basis: Basis | str = STANDARD) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return np.einsum("a,aij->ij", c, get_basis(basis).elements)


def pauli_expand_joint(xi, basis: Basis | str = STANDARD) -> np.ndarray:
    """Coefficient matrix ``x_ij = Tr(xi s_i (x) s_j) / 4`` of a two-qubit effect."""
    m = check_effect(xi)
    return np.einsum("ij,abji->ab", m, get_basis(basis).joint).real / 4


def pauli_reconstruct_joint(x, basis: Basis | str = STANDARD) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.einsum("ab,abij->ij", x, get_basis(basis).joint)


# -- Born rule ----------------------------------------------------------------


def born_probability_direct(psi_a, psi_b, xi) -> float:
    """Click probability ``Tr((rho_A (x) rho_B) xi)`` for product input states."""
    v = np.kron(check_ket(psi_a), check_ket(psi_b))
    m = np.asarray(xi, dtype=complex)
    return float(np.vdot(v, m @ v).real)


def born_probability_expanded(a, b, x) -> float:
    """Same probability from Pauli data: ``4 a^T x b``.

    All three arguments must come from the same basis convention.
    """
    return float(4.0 * np.asarray(a, dtype=float) @ np.asarray(x, dtype=float) @ np.asarray(b, dtype=float))


# -- random instances ---------------------------------------------------------


def random_ket(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def random_hermitian(rng: np.random.Generator, dim: int = 2, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(scale=scale, size=(dim, dim)) + 1j * rng.normal(scale=scale, size=(dim, dim))
    return (g + g.conj().T) / 2


def _random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_effect(rng: np.random.Generator) -> np.ndarray:
    """Haar-rotated two-qubit effect with eigenvalues drawn uniformly from [0, 1]."""
    u = _random_unitary(rng, 4)
    ev = rng.uniform(0.0, 1.0, size=4)
    m = (u * ev) @ u.conj().T
    return (m + m.conj().T) / 2


# -- presets ------------------------------------------------------------------

_R = 1 / np.sqrt(2)

PRESET_KETS: dict[str, np.ndarray] = {
    "psi1": np.array([_R, _R], dtype=complex),
    "psi2": np.array([_R, 1j * _R], dtype=complex),
    "psi3": np.array([_R, -_R], dtype=complex),
    "psi4": np.array([1, 0], dtype=complex),
    "psi5": np.array([0, 1], dtype=complex),
}

SINGLET = np.array([0, _R, -_R, 0], dtype=complex)
SYMMETRIC = np.array([_R, 0, 0, _R], dtype=complex)

PRESET_EFFECTS: dict[str, np.ndarray] = {
    "singlet": projector(SINGLET),
    "symmetric": projector(SYMMETRIC),
    "identity": np.eye(4, dtype=complex),
    "zero": np.zeros((4, 4), dtype=complex),
    "half": np.eye(4, dtype=complex) / 2,
}

for _arr in (*PRESET_KETS.values(), SINGLET, SYMMETRIC, *PRESET_EFFECTS.values()):
    _arr.setflags(write=False)
