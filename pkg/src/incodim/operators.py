"""Dense Hermitian operator arithmetic: states, effects, POVMs and processing maps.

Everything is stored as small dense complex numpy arrays (dimensions up to
about 8 are the intended regime; the qubit case d = 2 is the fast path).
All containers are immutable after construction and all operations are pure,
so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BlochOutOfBall,
    DimensionMismatch,
    InvalidEffect,
    InvalidObservable,
    InvalidState,
    NotHermitian,
    NotStochastic,
    NotTracePreserving,
)

HERMITICITY_REJECT = 1e-8
STATE_TOL = 1e-12
EFFECT_TOL = 1e-12
POVM_SUM_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def hermitian(entries) -> np.ndarray:
    """Coerce a square array to Hermitian form by symmetrisation.

    The anti-Hermitian part absorbs floating-point drift; anything larger
    than ``HERMITICITY_REJECT`` in max-norm is treated as a genuine input
    error and raises ``NotHermitian``.
    """
    a = np.asarray(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {a.shape}")
    skew = 0.5 * (a - a.conj().T)
    if np.abs(skew).max() > HERMITICITY_REJECT:
        raise NotHermitian(
            f"anti-Hermitian part {np.abs(skew).max():.3e} exceeds {HERMITICITY_REJECT:.0e}"
        )
    return 0.5 * (a + a.conj().T)


def eigvals_hermitian(h: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, ascending.

    2x2 matrices use the closed form (exact on the dominant code path);
    larger ones fall back to LAPACK.
    """
    if h.shape == (2, 2):
        half_tr = 0.5 * (h[0, 0].real + h[1, 1].real)
        radius = np.hypot(0.5 * (h[0, 0].real - h[1, 1].real), abs(h[0, 1]))
        return np.array([half_tr - radius, half_tr + radius])
    return np.linalg.eigvalsh(h)


def eig_interval_check(h: np.ndarray, lo: float, hi: float, tol: float = 1e-10) -> bool:
    """True iff every eigenvalue of ``h`` lies in [lo - tol, hi + tol]."""
    ev = eigvals_hermitian(hermitian(h))
    return bool(ev[0] >= lo - tol and ev[-1] <= hi + tol)


@dataclass(frozen=True, eq=False)
class State:
    """Density operator: Hermitian, unit trace, positive semidefinite."""

    matrix: np.ndarray

    def __post_init__(self):
        m = hermitian(self.matrix)
        if abs(np.trace(m).real - 1.0) > STATE_TOL:
            raise InvalidState(f"trace {np.trace(m).real!r} != 1")
        if eigvals_hermitian(m)[0] < -STATE_TOL:
            raise InvalidState("negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def bloch(self) -> np.ndarray:
        """Bloch vector (tr[rho sigma_i]) of a qubit state."""
        if self.dim != 2:
            raise DimensionMismatch("Bloch vector is defined for qubits only")
        return np.array([np.trace(self.matrix @ s).real for s in PAULI])


@dataclass(frozen=True, eq=False)
class Effect:
    """POVM element: Hermitian with spectrum inside [0, 1]."""

    matrix: np.ndarray

    def __post_init__(self):
        m = hermitian(self.matrix)
        ev = eigvals_hermitian(m)
        if ev[0] < -EFFECT_TOL or ev[-1] > 1.0 + EFFECT_TOL:
            raise InvalidEffect(f"spectrum [{ev[0]:.3e}, {ev[-1]:.3e}] leaves [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def complement(self) -> "Effect":
        return Effect(identity(self.dim) - self.matrix)


@dataclass(frozen=True, eq=False)
class Observable:
    """Finite-outcome POVM: ordered outcome labels and one effect per label."""

    outcomes: tuple
    effects: dict

    def __post_init__(self):
        labels = tuple(str(x) for x in self.outcomes)
        effs = {}
        for raw_label, x in zip(self.outcomes, labels):
            e = self.effects[raw_label] if raw_label in self.effects else self.effects[x]
            effs[x] = e if isinstance(e, Effect) else Effect(e)
        dims = {e.dim for e in effs.values()}
        if len(dims) != 1:
            raise DimensionMismatch("effects of one observable must share a dimension")
        total = sum(effs[x].matrix for x in labels)
        if np.abs(total - identity(effs[labels[0]].dim)).max() > POVM_SUM_TOL:
            raise InvalidObservable("effects do not sum to the identity")
        object.__setattr__(self, "outcomes", labels)
        object.__setattr__(self, "effects", effs)

    @property
    def dim(self) -> int:
        return self.effects[self.outcomes[0]].dim

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    def effect(self, outcome) -> Effect:
        return self.effects[str(outcome)]

    def matrices(self) -> list:
        return [self.effects[x].matrix for x in self.outcomes]


@dataclass(frozen=True, eq=False)
class BinaryQubitObservable:
    """Two-outcome qubit observable in (bias, Bloch vector) form.

    The "+" effect is ((1 + bias) * id + bloch . sigma) / 2.  Validity of
    both effects is equivalent to |bloch| <= min(1 + bias, 1 - bias).
    """

    bias: float
    bloch: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.bloch, dtype=float).reshape(3)
        norm = float(np.linalg.norm(v))
        if norm > min(1.0 + self.bias, 1.0 - self.bias) + 1e-12:
            raise InvalidEffect(
                f"|bloch| = {norm:.12f} exceeds min(1 +/- bias) for bias {self.bias:.12f}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "bloch", v)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.bloch))

    def plus_effect(self) -> Effect:
        m = 0.5 * ((1.0 + self.bias) * identity(2) + np.einsum("i,ijk->jk", self.bloch, PAULI))
        return Effect(m)

    def as_observable(self) -> Observable:
        plus = self.plus_effect()
        return Observable(("+", "-"), {"+": plus, "-": plus.complement()})


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Column-stochastic matrix describing classical post-processing."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2:
            raise NotStochastic(f"expected a matrix, got shape {m.shape}")
        if m.min() < 0.0:
            raise NotStochastic("negative entry")
        col_sums = m.sum(axis=0)
        if np.abs(col_sums - 1.0).max() > 1e-12:
            raise NotStochastic(f"column sums {col_sums} deviate from 1")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


def state_from_bloch(r) -> State:
    """Qubit state (id + r . sigma) / 2 for a Bloch vector r with |r| <= 1."""
    v = np.asarray(r, dtype=float).reshape(3)
    if np.linalg.norm(v) > 1.0 + 1e-12:
        raise BlochOutOfBall(f"|r| = {np.linalg.norm(v):.12f} > 1")
    return State(0.5 * (identity(2) + np.einsum("i,ijk->jk", v, PAULI)))


def unbiased_qubit_observable(a) -> Observable:
    """Binary qubit observable with effects (id +/- a . sigma) / 2."""
    v = np.asarray(a, dtype=float).reshape(3)
    if np.linalg.norm(v) > 1.0 + 1e-12:
        raise BlochOutOfBall(f"|a| = {np.linalg.norm(v):.12f} > 1")
    return BinaryQubitObservable(0.0, v).as_observable()


def outcome_probability(rho: State, effect: Effect) -> float:
    """tr[rho E], clamped to [0, 1]."""
    if rho.dim != effect.dim:
        raise DimensionMismatch(f"state dim {rho.dim} vs effect dim {effect.dim}")
    p = np.trace(rho.matrix @ effect.matrix).real
    if p < -1e-10 or p > 1.0 + 1e-10:
        raise InvalidEffect(f"probability {p!r} outside [0, 1] beyond tolerance")
    return float(min(max(p, 0.0), 1.0))


def post_process(obs: Observable, nu) -> Observable:
    """Classical post-processing: new effect x' is sum_x nu[x', x] * old effect x."""
    if not isinstance(nu, StochasticMatrix):
        nu = StochasticMatrix(nu)
    if nu.cols != obs.n_outcomes:
        raise DimensionMismatch(
            f"matrix has {nu.cols} columns but observable has {obs.n_outcomes} outcomes"
        )
    old = obs.matrices()
    effects = {}
    for row in range(nu.rows):
        effects[str(row)] = sum(nu.entries[row, col] * old[col] for col in range(nu.cols))
    return Observable(tuple(str(r) for r in range(nu.rows)), effects)


def pre_process(obs: Observable, kraus: Sequence[np.ndarray]) -> Observable:
    """Heisenberg-picture pre-processing of every effect by a channel in Kraus form."""
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    d = obs.dim
    total = sum(k.conj().T @ k for k in ks)
    if np.abs(total - identity(d)).max() > 1e-10:
        raise NotTracePreserving("Kraus operators do not sum to the identity")
    effects = {
        x: sum(k.conj().T @ obs.effect(x).matrix @ k for k in ks) for x in obs.outcomes
    }
    return Observable(obs.outcomes, effects)


def depolarizing_kraus(p: float, dim: int = 2) -> list:
    """Kraus operators of rho -> p * rho + (1 - p) * tr[rho] * id / dim."""
    if not 0.0 <= p <= 1.0:
        raise NotTracePreserving(f"p = {p!r} outside [0, 1]")
    ops = [np.sqrt(p) * identity(dim)]
    unit = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            e = unit.copy()
            e[i, j] = np.sqrt((1.0 - p) / dim)
            ops.append(e)
    return ops


def unitary_kraus(u: np.ndarray) -> list:
    """Single-element Kraus family of a unitary conjugation."""
    return [np.asarray(u, dtype=complex)]


def random_state(dim: int, rng: np.random.Generator) -> State:
    """Haar-ish random full-rank state (normalised Wishart sample)."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    w = g @ g.conj().T
    return State(w / np.trace(w).real)


def random_observable(dim: int, n_outcomes: int, rng: np.random.Generator) -> Observable:
    """Random POVM via symmetric normalisation of Wishart samples."""
    raw = []
    for _ in range(n_outcomes):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        raw.append(g @ g.conj().T)
    total = sum(raw)
    ev, vec = np.linalg.eigh(total)
    inv_sqrt = vec @ np.diag(ev ** -0.5) @ vec.conj().T
    effects = {str(i): inv_sqrt @ m @ inv_sqrt for i, m in enumerate(raw)}
    return Observable(tuple(str(i) for i in range(n_outcomes)), effects)
