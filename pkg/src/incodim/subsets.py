"""State-subset machinery: affine dimension, constructive compatible
extensions, the two-projection incompatibility detector and dimension bounds.

Subsets of mutually commuting states are the benign case throughout: they
are simultaneously diagonalisable, so the read-out-then-resample joint of
``distinguishable_extension`` reproduces any device tuple on them (for the
identity channel pair this is also the largest compatible family, which is
why commuting subsets cap the compatibility dimension at d there).  Deciding
the broadcastability of general noncommuting subsets is out of scope.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CommutingProjections,
    DimensionMismatch,
    EmptySet,
    NotIncompatible,
    NotOrthonormal,
    OracleAmbiguous,
)
from .feasibility import (
    FeasibilityProblem,
    SolverOptions,
    Status,
    joint_feasible,
)
from .operators import Effect, Observable, State, hermitian, identity

AFFINE_RANK_CUTOFF = 1e-10


def affine_dimension(states: Sequence[State]) -> int:
    """Affine dimension of a state list: rank of the differences to the first.

    Singular values below ``AFFINE_RANK_CUTOFF`` count as zero, which
    separates structural degeneracy from floating-point noise on the
    unit-scale state set.
    """
    states = list(states)
    if not states:
        raise EmptySet("affine dimension of an empty set")
    d = states[0].dim
    if any(s.dim != d for s in states):
        raise DimensionMismatch("states must share a dimension")
    if len(states) == 1:
        return 0
    diffs = np.stack([(s.matrix - states[0].matrix).ravel() for s in states[1:]])
    sv = np.linalg.svd(diffs, compute_uv=False)
    return int(np.sum(sv > AFFINE_RANK_CUTOFF))


@dataclass(frozen=True, eq=False)
class StateSubset:
    """Ordered list of density operators with cached affine dimension."""

    states: tuple

    def __post_init__(self):
        states = tuple(self.states)
        if not states:
            raise EmptySet("subset needs at least one state")
        affine_dimension(states)  # validates dimensions agree
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    @property
    def affine_dim(self) -> int:
        return affine_dimension(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)


@dataclass(frozen=True)
class DimensionBounds:
    """Integer bracket [lower, upper] with an optional certified exact value."""

    lower: int
    upper: int
    exact: Optional[int] = None
    certificate: Optional[str] = None

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} > upper {self.upper}")
        if self.exact is not None and not self.lower <= self.exact <= self.upper:
            raise ValueError(f"exact {self.exact} outside [{self.lower}, {self.upper}]")


def distinguishable_extension(observables: Sequence[Observable], basis: np.ndarray) -> Observable:
    """Joint observable that first reads out a basis, then samples each
    observable's statistics conditioned on the identified basis state.

    Its marginals agree with every input observable on all states diagonal
    in the given basis.
    """
    obs = list(observables)
    d = obs[0].dim
    b = np.asarray(basis, dtype=complex)
    if b.shape != (d, d):
        raise NotOrthonormal(f"basis must be {d} column vectors of length {d}")
    if np.abs(b.conj().T @ b - identity(d)).max() > 1e-10:
        raise NotOrthonormal("columns are not orthonormal")
    projectors = [np.outer(b[:, i], b[:, i].conj()) for i in range(d)]

    labels = []
    effects = {}
    for combo in itertools.product(*[o.outcomes for o in obs]):
        label = ",".join(combo)
        block = np.zeros((d, d), dtype=complex)
        for proj in projectors:
            weight = 1.0
            for o, x in zip(obs, combo):
                weight *= np.trace(proj @ o.effect(x).matrix).real
            block += weight * proj
        labels.append(label)
        effects[label] = Effect(block)
    return Observable(tuple(labels), effects)


def fixed_marginal_construction(a: Observable, b: Observable, rho0: State) -> Observable:
    """Joint observable G(x, y) = tr[rho0 A(x)] * B(y).

    The B-marginal is exactly B; the A-marginal is the constant-statistics
    observable tr[rho0 A(x)] * id, so both inputs are reproduced on every
    state whose A-statistics equal those of rho0.
    """
    if a.dim != b.dim or rho0.dim != a.dim:
        raise DimensionMismatch("observables and state must share a dimension")
    labels = []
    effects = {}
    for x in a.outcomes:
        px = np.trace(rho0.matrix @ a.effect(x).matrix).real
        for y in b.outcomes:
            label = f"{x},{y}"
            labels.append(label)
            effects[label] = Effect(px * b.effect(y).matrix)
    return Observable(tuple(labels), effects)


def _is_rank1_projection(p: np.ndarray, tol: float = 1e-9) -> bool:
    return (
        np.abs(p @ p - p).max() <= tol and abs(np.trace(p).real - 1.0) <= tol
    )


def pq_detector(p: Effect, q: Effect) -> StateSubset:
    """Two-state subset on which a pair of noncommuting rank-one projective
    observables is already infeasible: {(id - P)/(d-1), (id - Q)/(d-1)}."""
    pm, qm = hermitian(p.matrix), hermitian(q.matrix)
    if pm.shape != qm.shape:
        raise DimensionMismatch("projections must share a dimension")
    if not (_is_rank1_projection(pm) and _is_rank1_projection(qm)):
        raise CommutingProjections("inputs must be rank-one projections")
    if np.abs(pm @ qm - qm @ pm).max() <= 1e-8:
        raise CommutingProjections("projections commute; detector needs noncommutativity")
    d = pm.shape[0]
    return StateSubset(
        (
            State((identity(d) - pm) / (d - 1)),
            State((identity(d) - qm) / (d - 1)),
        )
    )


def projective_pair(p: Effect, q: Effect) -> tuple:
    """Dichotomic observables {P, id-P} and {Q, id-Q} as Observable objects."""
    d = p.dim
    return (
        Observable(("1", "0"), {"1": p, "0": Effect(identity(d) - p.matrix)}),
        Observable(("1", "0"), {"1": q, "0": Effect(identity(d) - q.matrix)}),
    )


def _traceless_rank(obs: Observable) -> int:
    d = obs.dim
    rows = []
    for x in obs.outcomes:
        e = obs.effect(x).matrix
        rows.append((e - np.trace(e).real / d * identity(d)).ravel())
    sv = np.linalg.svd(np.stack(rows), compute_uv=False)
    return int(np.sum(sv > AFFINE_RANK_CUTOFF))


def chi_bounds(observables: Sequence[Observable], opts: SolverOptions = SolverOptions()) -> tuple:
    """Bracket the incompatibility and compatibility dimensions of a tuple.

    Requires the tuple to be incompatible on the full state space (checked
    with the feasibility oracle).  Exact values are filled in only when a
    certificate establishes them:

    * the two-projection detector pins the incompatibility dimension at 2;
    * a fixed-statistics hyperplane of affine dimension d^2 - 2 (one
      independent traceless effect direction) pins the compatibility
      dimension at d^2 - 1;
    * coinciding bounds are exact trivially.
    """
    obs = list(observables)
    n = len(obs)
    d = obs[0].dim
    full = joint_feasible(FeasibilityProblem(tuple(obs), ()), opts)
    if full.status is Status.FEASIBLE:
        raise NotIncompatible("observables are compatible; dimensions undefined")
    if full.status is Status.AMBIGUOUS:
        raise OracleAmbiguous("full-space feasibility undecided at tolerance")

    m_sum = sum(o.n_outcomes for o in obs)
    incomp = DimensionBounds(2, min(d * d, m_sum - n + 1))
    comp = DimensionBounds(d, d * d - 1)

    if incomp.lower == incomp.upper:
        incomp = DimensionBounds(incomp.lower, incomp.upper, incomp.lower, "bounds coincide")
    elif n == 2 and all(o.n_outcomes == 2 for o in obs):
        picks = []
        for o in obs:
            for x in o.outcomes:
                e = o.effect(x).matrix
                if _is_rank1_projection(hermitian(e)):
                    picks.append(e)
                    break
        if len(picks) == 2 and np.abs(picks[0] @ picks[1] - picks[1] @ picks[0]).max() > 1e-8:
            subset = pq_detector(Effect(picks[0]), Effect(picks[1]))
            two = joint_feasible(FeasibilityProblem(tuple(obs), tuple(subset)), opts)
            if two.status is Status.INFEASIBLE:
                incomp = DimensionBounds(2, incomp.upper, 2, "two-projection detector")

    if comp.lower == comp.upper:
        comp = DimensionBounds(comp.lower, comp.upper, comp.lower, "bounds coincide")
    elif n == 2 and (_traceless_rank(obs[0]) == 1 or _traceless_rank(obs[1]) == 1):
        comp = DimensionBounds(
            comp.lower, comp.upper, d * d - 1, "fixed-statistics hyperplane"
        )
    return incomp, comp
