"""
Finite-dimensional measurement models and the POVMs they induce.

A model couples an ``n_s``-dimensional system to an ``n_p``-dimensional
pointer through a unitary ``U`` on the product space; composite index
``i_s * n_p + i_p``.  With the pointer prepared in ``ready_state`` the
isometry ``V = U (1 x Phi0)`` maps system states to final states, and an
outcome alpha is read off the pointer index set ``G_alpha``.  The effect of
alpha is ``O_alpha = sum_{g in G_alpha} K_g^dag K_g`` where ``K_g`` is the
block of rows of ``V`` with pointer index ``g``.  When the final state
factorizes per outcome this reduces to ``R_alpha^dag R_alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .errors import InvalidModelError, ZeroNormError

__all__ = [
    "MeasurementModel",
    "PovmElementSet",
    "derive_povm",
    "effect_operators",
    "outcome_probabilities",
    "born_probabilities",
    "nonlinearity_demo",
    "projective_operator",
    "von_neumann_model",
    "cnot_model",
    "identity_model",
    "random_model",
    "model_to_dict",
    "model_from_dict",
]

MAX_DIM = 4096
UNITARY_TOL = 1e-10
NORM_TOL = 1e-12
STATE_NORM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    dim_system: int
    dim_pointer: int
    unitary: np.ndarray
    ready_state: np.ndarray
    partition: tuple[tuple[int, ...], ...]
    labels: tuple[float, ...]

    def __post_init__(self):
        n_s, n_p = int(self.dim_system), int(self.dim_pointer)
        if n_s < 1 or n_p < 1:
            raise InvalidModelError("dimensions must be positive")
        n = n_s * n_p
        if n > MAX_DIM:
            raise InvalidModelError(f"product dimension {n} exceeds {MAX_DIM}")
        U = np.asarray(self.unitary, dtype=complex)
        if U.shape != (n, n):
            raise InvalidModelError(f"unitary has shape {U.shape}, expected {(n, n)}")
        dev = np.abs(U.conj().T @ U - np.eye(n)).max()
        if not dev <= UNITARY_TOL:
            raise InvalidModelError(f"unitary deviates from unitarity by {dev:.3g}")
        phi = np.asarray(self.ready_state, dtype=complex).ravel()
        if phi.size != n_p:
            raise InvalidModelError(f"ready state has {phi.size} entries, expected {n_p}")
        if not abs(np.linalg.norm(phi) - 1.0) <= NORM_TOL:
            raise InvalidModelError("ready state is not normalized")
        parts = tuple(tuple(int(i) for i in g) for g in self.partition)
        flat = sorted(i for g in parts for i in g)
        if flat != list(range(n_p)) or any(len(g) == 0 for g in parts):
            raise InvalidModelError("partition must cover every pointer index exactly once with nonempty sets")
        labels = tuple(float(x) for x in self.labels)
        if len(labels) != len(parts):
            raise InvalidModelError("one label per partition set is required")
        if len(set(labels)) != len(labels):
            raise InvalidModelError("labels must be distinct")
        object.__setattr__(self, "dim_system", n_s)
        object.__setattr__(self, "dim_pointer", n_p)
        object.__setattr__(self, "unitary", U)
        object.__setattr__(self, "ready_state", phi)
        object.__setattr__(self, "partition", parts)
        object.__setattr__(self, "labels", labels)

    @property
    def isometry(self) -> np.ndarray:
        """V = U (1 x Phi0), shape (n_s * n_p, n_s)."""
        embed = np.kron(np.eye(self.dim_system), self.ready_state[:, None])
        return self.unitary @ embed

    def final_state(self, psi0) -> np.ndarray:
        """Psi_T = U (psi0 x Phi0) on the product space."""
        return self.unitary @ np.kron(np.asarray(psi0, dtype=complex), self.ready_state)


@dataclass(frozen=True, eq=False)
class PovmElementSet:
    labels: tuple[float, ...]
    elements: tuple[np.ndarray, ...]
    meta: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(zip(self.labels, self.elements))

    def __len__(self):
        return len(self.elements)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def min_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(O).min() for O in self.elements))

    def completeness_error(self) -> float:
        return float(np.abs(sum(self.elements) - np.eye(self.dim)).max())

    def is_projective(self, tol: float = 1e-10) -> bool:
        for a, Oa in enumerate(self.elements):
            if np.abs(Oa @ Oa - Oa).max() > tol:
                return False
            for Ob in self.elements[a + 1:]:
                if np.abs(Oa @ Ob).max() > tol:
                    return False
        return True


def effect_operators(model: MeasurementModel) -> dict[float, list[np.ndarray]]:
    """Per label, the n_s x n_s blocks K_g of V for each pointer index g in G_alpha."""
    V = model.isometry.reshape(model.dim_system, model.dim_pointer, model.dim_system)
    return {lab: [V[:, g, :] for g in grp] for lab, grp in zip(model.labels, model.partition)}


def derive_povm(model: MeasurementModel) -> PovmElementSet:
    elements = []
    for blocks in effect_operators(model).values():
        O = sum(K.conj().T @ K for K in blocks)
        elements.append(0.5 * (O + O.conj().T))
    povm = PovmElementSet(model.labels, tuple(elements))
    min_eig, compl = povm.min_eigenvalue(), povm.completeness_error()
    if min_eig < -1e-10 or compl > 1e-10:
        raise InvalidModelError(f"derived elements violate positivity ({min_eig:.3g}) "
                                f"or completeness ({compl:.3g})")
    povm.meta.update({"min_eigenvalue": min_eig, "completeness_error": compl,
                      "projective": povm.is_projective()})
    return povm


def projective_operator(povm: PovmElementSet, tol: float = 1e-10) -> np.ndarray | None:
    """sum_alpha lambda_alpha O_alpha when the elements are orthogonal projectors, else None."""
    if not povm.is_projective(tol):
        return None
    return sum(lab * O for lab, O in povm)


def _check_normalized(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    if not abs(np.linalg.norm(psi) - 1.0) <= STATE_NORM_TOL:
        raise ZeroNormError(f"input state has norm {np.linalg.norm(psi):.12g}, expected 1")
    return psi


def outcome_probabilities(povm: PovmElementSet, psi0) -> list[tuple[float, float]]:
    psi = _check_normalized(psi0)
    if psi.size != povm.dim:
        raise ValueError(f"state has dimension {psi.size}, POVM acts on {povm.dim}")
    return [(lab, float(np.vdot(psi, O @ psi).real)) for lab, O in povm]


def born_probabilities(model: MeasurementModel, psi0) -> list[tuple[float, float]]:
    """Pointer-region Born probabilities of the final state, without the POVM."""
    psi = _check_normalized(psi0)
    final = model.final_state(psi).reshape(model.dim_system, model.dim_pointer)
    weight = (np.abs(final) ** 2).sum(axis=0)
    return [(lab, float(weight[list(grp)].sum())) for lab, grp in zip(model.labels, model.partition)]


def nonlinearity_demo(psi1, psi2, povm: PovmElementSet, tol: float = 1e-12) -> dict:
    """Outcome statistics of psi1, psi2 and their normalized superposition.

    The superposition's distribution is fixed by the POVM through
    P_+ = (P_1 + P_2 + 2 Re<psi1|O psi2>) / |psi1 + psi2|^2, so its support
    never leaves the labels whose elements are nonzero; no linear
    measurement can assign it a label of its own.
    """
    a = _check_normalized(psi1)
    b = _check_normalized(psi2)
    s = a + b
    norm2 = float(np.vdot(s, s).real)
    active = [lab for lab, O in povm if np.abs(O).max() > tol]
    p1 = outcome_probabilities(povm, a)
    p2 = outcome_probabilities(povm, b)
    record = {
        "psi1": p1,
        "psi2": p2,
        "support_psi1": [lab for lab, p in p1 if p > tol],
        "support_psi2": [lab for lab, p in p2 if p > tol],
        "active_labels": active,
    }
    if norm2 <= tol:
        record.update({"superposition": None, "support_superposition": [],
                       "interference": None, "within_active_labels": True,
                       "note": "psi1 + psi2 vanishes"})
        return record
    ps = outcome_probabilities(povm, s / np.sqrt(norm2))
    interference = [(lab, float(2.0 * np.vdot(a, O @ b).real)) for lab, O in povm]
    support = [lab for lab, p in ps if p > tol]
    record.update({
        "superposition": ps,
        "support_superposition": support,
        "interference": interference,
        "within_active_labels": set(support) <= set(active),
    })
    return record


# -- builders ---------------------------------------------------------------

def von_neumann_model(n: int, labels=None) -> MeasurementModel:
    """Ideal measurement in the system basis: |s, p> -> |s, (p + s) mod n>."""
    U = np.zeros((n * n, n * n), dtype=complex)
    for s in range(n):
        for p in range(n):
            U[s * n + (p + s) % n, s * n + p] = 1.0
    phi = np.zeros(n, dtype=complex)
    phi[0] = 1.0
    labels = tuple(range(n)) if labels is None else labels
    return MeasurementModel(n, n, U, phi, tuple((i,) for i in range(n)), labels)


def cnot_model() -> MeasurementModel:
    return von_neumann_model(2)


def identity_model(n_s: int, n_p: int, n_outcomes: int = 2) -> MeasurementModel:
    phi = np.zeros(n_p, dtype=complex)
    phi[0] = 1.0
    groups = np.array_split(np.arange(n_p), n_outcomes)
    return MeasurementModel(n_s, n_p, np.eye(n_s * n_p), phi, tuple(tuple(g) for g in groups),
                            tuple(range(n_outcomes)))


def random_model(n_s: int, n_p: int, n_outcomes: int | None = None, seed=None) -> MeasurementModel:
    """Haar-random unitary, random normalized ready state and random partition."""
    rng = np.random.default_rng(seed)
    if n_outcomes is None:
        n_outcomes = int(rng.integers(1, n_p + 1))
    if not 1 <= n_outcomes <= n_p:
        raise ValueError("need between 1 and dim_pointer outcomes")
    U = unitary_group.rvs(n_s * n_p, random_state=rng) if n_s * n_p > 1 else np.eye(1)
    phi = rng.normal(size=n_p) + 1j * rng.normal(size=n_p)
    phi /= np.linalg.norm(phi)
    perm = rng.permutation(n_p)
    cuts = np.sort(rng.choice(np.arange(1, n_p), size=n_outcomes - 1, replace=False)) if n_outcomes > 1 else []
    groups = tuple(tuple(int(i) for i in sorted(g)) for g in np.split(perm, cuts))
    return MeasurementModel(n_s, n_p, U, phi, groups, tuple(range(n_outcomes)))


# -- serialization ----------------------------------------------------------

def _pairs(a: np.ndarray):
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _unpairs(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise InvalidModelError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def model_to_dict(model: MeasurementModel) -> dict:
    return {
        "dim_system": model.dim_system,
        "dim_pointer": model.dim_pointer,
        "unitary": _pairs(model.unitary),
        "ready_state": _pairs(model.ready_state),
        "partition": [list(g) for g in model.partition],
        "labels": list(model.labels),
    }


def model_from_dict(d: dict) -> MeasurementModel:
    try:
        return MeasurementModel(int(d["dim_system"]), int(d["dim_pointer"]), _unpairs(d["unitary"]),
                                _unpairs(d["ready_state"]), tuple(tuple(g) for g in d["partition"]),
                                tuple(d["labels"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModelError(f"malformed measurement model: {exc}") from exc
