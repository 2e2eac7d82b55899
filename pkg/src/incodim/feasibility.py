"""Joint-measurability decisions: closed forms for qubit pairs and a generic
convex-feasibility oracle for statistics restricted to a state subset.

The oracle looks for a joint POVM G on the product outcome set whose
marginal statistics reproduce each given observable on every supplied test
state.  The constraint set is the intersection of the product PSD cone with
an affine subspace (normalisation plus trace-pairing rows), attacked with
Dykstra-corrected alternating projections.  A nonempty intersection drives
the projection gap to zero; an empty one makes the gap stabilise at the
positive distance between the two sets, which is the infeasibility signal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BlochOutOfBall,
    DimensionMismatch,
    NonConvergent,
    ParamOutOfRange,
    TooLarge,
)
from .operators import (
    BinaryQubitObservable,
    Effect,
    Observable,
    State,
    hermitian,
    identity,
    state_from_bloch,
)

MAX_PRODUCT_OUTCOMES = 4096


class Status(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and iteration budget of the alternating-projection oracle.

    Infeasibility is declared when the projection gap stabilises above
    ``tol_gap``: either the gap is flat to ``stall_rtol`` over the stall
    window, or an optimistic linear extrapolation of the window's decrease
    cannot reach ``tol_gap`` within the remaining budget (for linearly
    converging projection sequences the per-window decrease only decays, so
    the extrapolation overestimates future progress and the rule is safe).
    """

    tol_marginal: float = 1e-9
    tol_psd: float = 1e-9
    tol_gap: float = 1e-6
    max_iterations: int = 200_000
    stall_window: int = 500
    stall_rtol: float = 1e-9


@dataclass(frozen=True, eq=False)
class FeasibilityProblem:
    """Observables plus the test states their statistics must be matched on.

    An empty state list means the full state space and is encoded by a
    spanning (informationally complete) set of d^2 states.
    """

    observables: tuple
    states: tuple

    def __post_init__(self):
        obs = tuple(self.observables)
        if len(obs) < 2:
            raise DimensionMismatch("need at least two observables")
        d = obs[0].dim
        if any(o.dim != d for o in obs):
            raise DimensionMismatch("observables must share a dimension")
        states = tuple(self.states) if self.states else tuple(spanning_states(d))
        if any(s.dim != d for s in states):
            raise DimensionMismatch("states must match the observable dimension")
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.observables[0].dim

    @property
    def outcome_counts(self) -> tuple:
        return tuple(o.n_outcomes for o in self.observables)


@dataclass(frozen=True, eq=False)
class FeasibilityResult:
    status: Status
    joint: Optional[Observable]
    residual: float
    iterations: int

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


def spanning_states(dim: int) -> list:
    """Informationally complete list of d^2 states whose span is all of state space."""
    if dim == 2:
        return [
            State(identity(2) / 2),
            state_from_bloch([1.0, 0.0, 0.0]),
            state_from_bloch([0.0, 1.0, 0.0]),
            state_from_bloch([0.0, 0.0, 1.0]),
        ]
    states = []
    for i in range(dim):
        v = np.zeros(dim, dtype=complex)
        v[i] = 1.0
        states.append(State(np.outer(v, v.conj())))
    for i in range(dim):
        for j in range(i + 1, dim):
            for phase in (1.0, 1.0j):
                v = np.zeros(dim, dtype=complex)
                v[i] = 1.0 / np.sqrt(2)
                v[j] = phase / np.sqrt(2)
                states.append(State(np.outer(v, v.conj())))
    return states


def busch_compatible(a, b) -> bool:
    """Compatibility of two unbiased qubit observables: |a+b| + |a-b| <= 2."""
    va = np.asarray(a, dtype=float).reshape(3)
    vb = np.asarray(b, dtype=float).reshape(3)
    for v in (va, vb):
        if np.linalg.norm(v) > 1.0 + 1e-12:
            raise BlochOutOfBall(f"|v| = {np.linalg.norm(v):.12f} > 1")
    return float(np.linalg.norm(va + vb) + np.linalg.norm(va - vb)) <= 2.0 + 1e-12


def _parallel(u: np.ndarray, v: np.ndarray, tol: float = 1e-9) -> bool:
    return float(np.linalg.norm(np.cross(u, v))) <= tol


def binary_pair_compatible(a: BinaryQubitObservable, b: BinaryQubitObservable) -> bool:
    """Exact compatibility decision for two biased binary qubit observables.

    Uses the closed-form criterion
        (1 - F1^2 - F2^2) (1 - w1^2/F1^2 - w2^2/F2^2) <= (m1.m2 - w1 w2)^2
    with Fj = (sqrt((1+wj)^2 - Cj^2) + sqrt((1-wj)^2 - Cj^2)) / 2 and
    Cj = |mj|.  Sharp observables (Cj = 1, the only case with Fj = 0) are
    dispatched to the exact rule: a sharp observable is compatible with
    another binary observable iff the Bloch parts are parallel.
    """
    w1, m1, c1 = a.bias, a.bloch, a.norm
    w2, m2, c2 = b.bias, b.bloch, b.norm
    sharp1 = c1 >= 1.0 - 1e-12
    sharp2 = c2 >= 1.0 - 1e-12
    if sharp1 or sharp2:
        return _parallel(m1, m2)
    f1 = 0.5 * (np.sqrt(max((1 + w1) ** 2 - c1 ** 2, 0.0)) + np.sqrt(max((1 - w1) ** 2 - c1 ** 2, 0.0)))
    f2 = 0.5 * (np.sqrt(max((1 + w2) ** 2 - c2 ** 2, 0.0)) + np.sqrt(max((1 - w2) ** 2 - c2 ** 2, 0.0)))
    lhs = (1.0 - f1 ** 2 - f2 ** 2) * (1.0 - (w1 / f1) ** 2 - (w2 / f2) ** 2)
    rhs = (float(m1 @ m2) - w1 * w2) ** 2
    return bool(lhs <= rhs + 1e-12)


def channel_obs_threshold(p: float) -> float:
    """Largest |a| compatible with a partially depolarizing channel of strength p."""
    if not 0.0 <= p <= 1.0:
        raise ParamOutOfRange(f"p = {p!r} outside [0, 1]")
    return 0.5 * (1.0 - p + np.sqrt((1.0 - p) * (1.0 + 3.0 * p)))


def project_psd(h) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalue clipping)."""
    m = hermitian(h)
    ev, vec = np.linalg.eigh(m)
    clipped = np.clip(ev, 0.0, None)
    return hermitian((vec * clipped) @ vec.conj().T)


def _psd_clip_batch(stack: np.ndarray) -> np.ndarray:
    """Clip a (... , d, d) stack of Hermitian matrices to the PSD cone."""
    d = stack.shape[-1]
    if d == 2:
        a = stack[..., 0, 0].real
        c = stack[..., 1, 1].real
        b = stack[..., 0, 1]
        mean = 0.5 * (a + c)
        radius = np.hypot(0.5 * (a - c), np.abs(b))
        lo = mean - radius
        hi = mean + radius
        lo_c = np.clip(lo, 0.0, None)
        hi_c = np.clip(hi, 0.0, None)
        safe = np.where(radius > 1e-300, radius, 1.0)
        scale = np.where(radius > 1e-300, (hi_c - lo_c) / (2.0 * safe), 0.0)
        eye = np.eye(2)
        out = scale[..., None, None] * (stack - lo[..., None, None] * eye)
        out += lo_c[..., None, None] * eye
        # radius ~ 0: multiple of the identity, clip the scalar
        flat = np.where(radius <= 1e-300)
        if flat[0].size:
            out[flat] = np.clip(mean[flat], 0.0, None)[..., None, None] * eye
        return out
    ev, vec = np.linalg.eigh(stack)
    ev = np.clip(ev, 0.0, None)
    return np.einsum("...ij,...j,...kj->...ik", vec, ev, vec.conj())


def _vec(stack: np.ndarray) -> np.ndarray:
    """Isometric real vectorisation, one contiguous [re | im] chunk per block."""
    k = stack.shape[0]
    return np.concatenate(
        [stack.real.reshape(k, -1), stack.imag.reshape(k, -1)], axis=1
    ).ravel()


def _unvec(x: np.ndarray, k: int, d: int) -> np.ndarray:
    per = x.reshape(k, 2 * d * d)
    m = per[:, : d * d].reshape(k, d, d) + 1j * per[:, d * d:].reshape(k, d, d)
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


class _AffineProjector:
    """Orthogonal projection onto {sum_k G_k = id} intersected with the
    trace-pairing rows tr[rho marginal_j(G)(x)] = tr[rho A_j(x)] for every
    test state rho.  Least squares via pseudoinverse, cutoff 1e-10."""

    def __init__(self, problem: FeasibilityProblem):
        d = problem.dim
        counts = problem.outcome_counts
        k_total = int(np.prod(counts))
        n_real = 2 * d * d
        width = k_total * n_real

        rows = []
        rhs = []
        # normalisation: sum of blocks equals the identity, coordinate-wise
        eye_vec = _vec(identity(d)[None, :, :])
        for coord in range(n_real):
            row = np.zeros(width)
            row[coord::n_real] = 1.0
            rows.append(row)
            rhs.append(eye_vec[coord])
        # marginal statistics on each test state
        index_grid = list(itertools.product(*[range(m) for m in counts]))
        for j, obs in enumerate(problem.observables):
            for x in range(counts[j]):
                members = [k for k, combo in enumerate(index_grid) if combo[j] == x]
                for rho in problem.states:
                    rvec = _vec(rho.matrix[None, :, :])
                    row = np.zeros(width)
                    for k in members:
                        row[k * n_real:(k + 1) * n_real] = rvec
                    rows.append(row)
                    target = np.trace(rho.matrix @ obs.effect(obs.outcomes[x]).matrix).real
                    rhs.append(target)

        self.matrix = np.asarray(rows)
        self.rhs = np.asarray(rhs)
        self.pinv = np.linalg.pinv(self.matrix, rcond=1e-10)
        self.k_total = k_total
        self.dim = d
        self.index_grid = index_grid

    def project_vec(self, x: np.ndarray) -> np.ndarray:
        return x - self.pinv @ (self.matrix @ x - self.rhs)

    def residual(self, x: np.ndarray) -> float:
        return float(np.abs(self.matrix @ x - self.rhs).max())


def project_marginal_affine(blocks: Sequence[np.ndarray], problem: FeasibilityProblem) -> list:
    """Frobenius-nearest tuple of Hermitian blocks satisfying the linear constraints."""
    proj = _AffineProjector(problem)
    stack = np.stack([hermitian(b) for b in blocks])
    out = _unvec(proj.project_vec(_vec(stack)), proj.k_total, proj.dim)
    return [out[k] for k in range(proj.k_total)]


def joint_outcome_labels(problem: FeasibilityProblem) -> list:
    """Product outcome labels of a joint observable, joined by commas."""
    grids = [
        [problem.observables[j].outcomes[x] for x in range(m)]
        for j, m in enumerate(problem.outcome_counts)
    ]
    return [",".join(combo) for combo in itertools.product(*grids)]


def _joint_observable(problem: FeasibilityProblem, stack: np.ndarray) -> Observable:
    """Package solver blocks as an Observable, renormalising exactly.

    The symmetric correction S^(-1/2) G S^(-1/2) with S = sum(G) turns an
    almost-normalised PSD tuple into an exact POVM without disturbing the
    marginals beyond the solver tolerance.
    """
    total = hermitian(stack.sum(axis=0))
    ev, vec = np.linalg.eigh(total)
    inv_sqrt = (vec * (ev ** -0.5)) @ vec.conj().T
    labels = joint_outcome_labels(problem)
    effects = {
        combo: Effect(inv_sqrt @ block @ inv_sqrt) for combo, block in zip(labels, stack)
    }
    return Observable(tuple(labels), effects)


def joint_feasible(problem: FeasibilityProblem, opts: SolverOptions = SolverOptions()) -> FeasibilityResult:
    """Decide whether some joint POVM reproduces all observables on the test states.

    Returns FEASIBLE with an explicit joint observable, INFEASIBLE when the
    projection gap stabilises above ``tol_gap``, or AMBIGUOUS when the run
    ends inside the undecided gap band.
    """
    k_total = int(np.prod(problem.outcome_counts))
    if k_total > MAX_PRODUCT_OUTCOMES:
        raise TooLarge(f"product outcome count {k_total} exceeds {MAX_PRODUCT_OUTCOMES}")
    d = problem.dim
    proj = _AffineProjector(problem)

    # feasible-side exit must be tight enough that the returned POVM passes
    # the Effect/Observable invariants after the exact renormalisation
    exit_res = min(opts.tol_marginal, 1e-10)

    x = _vec(np.stack([identity(d) / k_total] * k_total))
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    gap_hist = []
    gap = np.inf

    for it in range(1, opts.max_iterations + 1):
        y = proj.project_vec(x + p)
        p = x + p - y
        stack = _unvec(y + q, k_total, d)
        clipped = _psd_clip_batch(stack)
        x_new = _vec(clipped)
        q = _vec(stack) - x_new
        gap = float(np.linalg.norm(y - x_new))
        x = x_new

        res = proj.residual(x)
        if res <= exit_res:
            joint = _joint_observable(problem, clipped)
            return FeasibilityResult(Status.FEASIBLE, joint, res, it)

        gap_hist.append(gap)
        if len(gap_hist) > opts.stall_window:
            gap_hist.pop(0)
            if gap > opts.tol_gap:
                lo, hi = min(gap_hist), max(gap_hist)
                if hi - lo <= opts.stall_rtol * max(hi, 1e-300):
                    return FeasibilityResult(Status.INFEASIBLE, None, gap, it)
                window_drop = max(gap_hist[0] - gap, 0.0)
                remaining = (opts.max_iterations - it) / opts.stall_window
                if gap > 10.0 * opts.tol_gap and window_drop * remaining < 0.5 * (
                    gap - opts.tol_gap
                ):
                    return FeasibilityResult(Status.INFEASIBLE, None, gap, it)

    if 1e-9 <= gap <= opts.tol_gap:
        return FeasibilityResult(Status.AMBIGUOUS, None, gap, opts.max_iterations)
    raise NonConvergent(
        f"iteration cap {opts.max_iterations} hit with gap {gap:.3e} still shrinking"
    )
