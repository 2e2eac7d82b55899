"""Incompatibility witnesses for observable tuples.

A witness is an affine functional

    xi(A_1, ..., A_n) = delta - sum_j sum_x c[j,x] tr[rho[j,x] A_j(x)]

that is nonnegative on every compatible tuple; a negative value detects
incompatibility, and the witness states themselves form a test subset on
which the detected tuple is already infeasible.

The numerical search separates the target tuple's statistics (read on the
subset's states) from the convex compact set of compatible statistics: a
cutting-plane master problem proposes coefficient vectors, and the support
of the compatible set in each proposed direction is evaluated by projected
gradient ascent over joint POVMs, whose repaired maximisers feed back into
the master as cuts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DegenerateBlock,
    OracleAmbiguous,
    PreconditionViolated,
    ShapeMismatch,
)
from .feasibility import (
    FeasibilityProblem,
    SolverOptions,
    Status,
    _psd_clip_batch,
    joint_feasible,
)
from .operators import Observable, State, hermitian, identity
from .subsets import StateSubset

DETECTION_MARGIN = 1e-6


@dataclass(frozen=True, eq=False)
class RawWitness:
    """Operator-coefficient form: delta and one Hermitian F[j][x] per slot."""

    delta: float
    operators: tuple

    def __post_init__(self):
        ops = tuple(tuple(hermitian(f) for f in per_obs) for per_obs in self.operators)
        if not ops or any(len(per_obs) < 2 for per_obs in ops):
            raise ShapeMismatch("need at least two outcomes per observable")
        object.__setattr__(self, "operators", ops)

    @property
    def shape(self) -> tuple:
        return tuple(len(per_obs) for per_obs in self.operators)


@dataclass(frozen=True, eq=False)
class StateFormWitness:
    """Standard form: delta, real coefficients and a state per slot."""

    delta: float
    coeffs: tuple
    states: tuple

    def __post_init__(self):
        coeffs = tuple(tuple(float(c) for c in per_obs) for per_obs in self.coeffs)
        states = tuple(tuple(per_obs) for per_obs in self.states)
        if tuple(len(c) for c in coeffs) != tuple(len(s) for s in states):
            raise ShapeMismatch("coefficient and state shapes disagree")
        if any(not isinstance(s, State) for per_obs in states for s in per_obs):
            raise ShapeMismatch("states entries must be State instances")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "states", states)

    @property
    def shape(self) -> tuple:
        return tuple(len(per_obs) for per_obs in self.coeffs)


def _check_shape(w_shape: tuple, observables: Sequence[Observable]):
    obs_shape = tuple(o.n_outcomes for o in observables)
    if w_shape != obs_shape:
        raise ShapeMismatch(f"witness shape {w_shape} vs observables {obs_shape}")


def evaluate(w: StateFormWitness, observables: Sequence[Observable]) -> float:
    """Witness value on a tuple; negative means the tuple is detected."""
    _check_shape(w.shape, observables)
    total = 0.0
    for per_c, per_s, obs in zip(w.coeffs, w.states, observables):
        for c, rho, x in zip(per_c, per_s, obs.outcomes):
            total += c * np.trace(rho.matrix @ obs.effect(x).matrix).real
    return float(w.delta - total)


def detected_subset(w: StateFormWitness) -> StateSubset:
    """Witness states as a test subset, deduplicated at 1e-10."""
    unique = []
    for per_obs in w.states:
        for s in per_obs:
            if all(np.abs(s.matrix - u.matrix).max() > 1e-10 for u in unique):
                unique.append(s)
    return StateSubset(tuple(unique))


def normalize(raw: RawWitness, target_shape: Optional[tuple] = None) -> StateFormWitness:
    """Rewrite an operator-coefficient witness in the standard state form.

    Three value-preserving moves per observable block: shift by a multiple
    of the identity so the block traces sum to zero, recentre so the block
    operators sum to zero, then lift by the smallest alpha_j >= 0 making
    every operator positive.  The lifted operators G[j][x] normalise to
    states and satisfy sum_x tr[G[j][x]] rho[j][x] = m_j alpha_j id, which
    caps the affine dimension of the induced state set at sum_j m_j - n.
    """
    if target_shape is not None and raw.shape != tuple(target_shape):
        raise ShapeMismatch(f"raw shape {raw.shape} vs target {tuple(target_shape)}")
    d = raw.operators[0][0].shape[0]
    delta = float(raw.delta)
    coeffs = []
    states = []
    for per_obs in raw.operators:
        m = len(per_obs)
        eps = -sum(np.trace(f).real for f in per_obs) / (d * m)
        shifted = [f + eps * identity(d) for f in per_obs]
        centre = -sum(shifted) / m
        centred = [f + centre for f in shifted]
        alpha = max(0.0, -min(np.linalg.eigvalsh(f).min() for f in centred)) + 1e-12
        for _ in range(2):
            lifted = [f + alpha * identity(d) for f in centred]
            traces = [np.trace(g).real for g in lifted]
            if min(traces) >= 1e-12:
                break
            alpha += 1e-9
        else:
            raise DegenerateBlock("vanishing block trace after lift retry")
        delta += d * (eps + alpha)
        coeffs.append(tuple(float(tr) for tr in traces))
        states.append(tuple(State(g / tr) for g, tr in zip(lifted, traces)))
    return StateFormWitness(delta, tuple(coeffs), tuple(states))


@dataclass(frozen=True)
class WitnessSearchOptions:
    """Budgets for the cutting-plane search and the ascent-based verifier."""

    rounds: int = 50
    loop_starts: int = 16
    loop_steps: int = 600
    verify_starts: int = 64
    verify_steps: int = 2000
    step_size: float = 1e-2
    seed: int = 0


@dataclass(frozen=True)
class WitnessVerification:
    """Outcome of probing a witness against the compatible set."""

    value_on_target: float
    max_on_compatible: float
    n_starts: int

    @property
    def sound(self) -> bool:
        return self.max_on_compatible >= -DETECTION_MARGIN

    @property
    def detects(self) -> bool:
        return self.value_on_target < -DETECTION_MARGIN


class _StatsSpace:
    """Statistics of observable tuples on fixed slot states.

    ``slot_states`` carries one state per (observable, outcome) slot in
    row-major order.  With subset states assigned cyclically over outcomes,
    two-state subsets and binary observables span every functional on the
    subset's linear hull.
    """

    def __init__(self, observables: Sequence[Observable], slot_states: Sequence[State]):
        self.observables = list(observables)
        self.dim = self.observables[0].dim
        self.counts = [o.n_outcomes for o in self.observables]
        self.k_total = int(np.prod(self.counts))
        self.slots = []
        it = iter(slot_states)
        for j, obs in enumerate(self.observables):
            for x in range(obs.n_outcomes):
                self.slots.append((j, x, next(it)))
        self.n_slots = len(self.slots)

        index_grid = list(itertools.product(*[range(m) for m in self.counts]))
        picker = np.zeros((self.n_slots, self.k_total, self.dim, self.dim), dtype=complex)
        for s, (j, x, rho) in enumerate(self.slots):
            for k, combo in enumerate(index_grid):
                if combo[j] == x:
                    picker[s, k] = rho.matrix
        self.picker = picker

    def target_stats(self) -> np.ndarray:
        out = np.empty(self.n_slots)
        for s, (j, x, rho) in enumerate(self.slots):
            obs = self.observables[j]
            out[s] = np.trace(rho.matrix @ obs.effect(obs.outcomes[x]).matrix).real
        return out

    def joint_stats(self, joints: np.ndarray) -> np.ndarray:
        """Statistics vectors of a (batch, k, d, d) stack of joint POVMs."""
        return np.einsum("skij,bkji->bs", self.picker, joints).real

    def weight_blocks(self, c: np.ndarray) -> np.ndarray:
        """Gradient blocks W_k = sum_s c_s rho_{s,k} of c . stats(marginals of G)."""
        return np.einsum("s,skij->kij", c, self.picker)

    def random_joints(self, n: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.normal(size=(n, self.k_total, self.dim, self.dim)) + 1j * rng.normal(
            size=(n, self.k_total, self.dim, self.dim)
        )
        raw = np.einsum("bkij,bklj->bkil", g, g.conj())
        return _repair_joints(raw)


def _cyclic_slot_states(observables: Sequence[Observable], subset: StateSubset) -> list:
    out = []
    for obs in observables:
        for x in range(obs.n_outcomes):
            out.append(subset.states[x % len(subset)])
    return out


def _repair_joints(stack: np.ndarray) -> np.ndarray:
    """Exact renormalisation of PSD block stacks into joint POVMs."""
    stack = _psd_clip_batch(stack)
    total = stack.sum(axis=1)
    total = 0.5 * (total + np.conj(np.swapaxes(total, -1, -2)))
    ev, vec = np.linalg.eigh(total)
    ev = np.clip(ev, 1e-12, None)
    inv_sqrt = np.einsum("bij,bj,bkj->bik", vec, ev ** -0.5, vec.conj())
    return np.einsum("bij,bkjl,blm->bkim", inv_sqrt, stack, inv_sqrt)


def _psd_sqrt_batch(stack: np.ndarray) -> np.ndarray:
    ev, vec = np.linalg.eigh(stack)
    ev = np.sqrt(np.clip(ev, 0.0, None))
    return np.einsum("...ij,...j,...kj->...ik", vec, ev, vec.conj())


def _pairwise_polish(joints: np.ndarray, w: np.ndarray, sweeps: int) -> np.ndarray:
    """Monotone block-pair sweeps towards the support maximiser.

    For a fixed pair sum R = G_k + G_l, the exact optimum of
    tr[W_k G_k] + tr[W_l G_l] over 0 <= G_k <= R is R^(1/2) P R^(1/2) with P
    the positive-eigenspace projector of R^(1/2) (W_k - W_l) R^(1/2); sweeping
    over all pairs never decreases the objective and snaps the iterate onto
    the optimal face that plain projected ascent orbits around.
    """
    k_total = joints.shape[1]
    for _ in range(sweeps):
        for k in range(k_total):
            for l in range(k + 1, k_total):
                r = joints[:, k] + joints[:, l]
                r = 0.5 * (r + np.conj(np.swapaxes(r, -1, -2)))
                root = _psd_sqrt_batch(r)
                m = np.einsum("bij,jl,blm->bim", root, w[k] - w[l], root)
                m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
                ev, vec = np.linalg.eigh(m)
                pos = (ev > 0.0).astype(float)
                proj = np.einsum("bij,bj,bkj->bik", vec, pos, vec.conj())
                g_k = np.einsum("bij,bjl,blm->bim", root, proj, root)
                g_k = 0.5 * (g_k + np.conj(np.swapaxes(g_k, -1, -2)))
                joints[:, k] = g_k
                joints[:, l] = r - g_k
    return joints


def _support_ascent(
    space: _StatsSpace,
    c: np.ndarray,
    n_starts: int,
    steps: int,
    step_size: float,
    rng: np.random.Generator,
    extra_starts: Optional[np.ndarray] = None,
) -> tuple:
    """Maximise c . stats over compatible tuples by projected gradient ascent
    on joint POVMs; returns (support estimate, argmax statistics vector).

    The step halves on a fixed schedule so the iterates settle onto the
    optimal face instead of orbiting it; the batch keeps a running best over
    exactly repaired (hence feasible) snapshots, so the estimate is always a
    lower bound on the true support.
    """
    w = space.weight_blocks(c)
    k = space.k_total
    d = space.dim
    joints = space.random_joints(n_starts, rng)
    if extra_starts is not None:
        joints = np.concatenate([joints, extra_starts], axis=0)
    eye = identity(d)

    best_val = -np.inf
    best_stats = None
    eta = step_size
    snapshot_every = max(steps // 5, 1)
    for step in range(1, steps + 1):
        joints = joints + eta * w[None, :, :, :]
        excess = (joints.sum(axis=1) - eye) / k
        joints = joints - excess[:, None, :, :]
        joints = _psd_clip_batch(joints)
        if step % snapshot_every == 0 or step == steps:
            eta *= 0.5
            polished = _pairwise_polish(_repair_joints(joints), w, sweeps=8)
            stats = space.joint_stats(polished)
            values = stats @ c
            top = int(np.argmax(values))
            if values[top] > best_val:
                best_val = float(values[top])
                best_stats = stats[top]
    return best_val, best_stats


def verify_witness(
    w: StateFormWitness,
    observables: Sequence[Observable],
    opts: WitnessSearchOptions = WitnessSearchOptions(),
    rng: Optional[np.random.Generator] = None,
) -> WitnessVerification:
    """Probe a witness against the compatible set with a multistart ascent."""
    _check_shape(w.shape, observables)
    rng = rng if rng is not None else np.random.default_rng(opts.seed + 1)
    flat_states = [s for per_obs in w.states for s in per_obs]
    space = _StatsSpace(observables, flat_states)
    c = np.array([c for per_obs in w.coeffs for c in per_obs])
    support, _ = _support_ascent(
        space, c, opts.verify_starts, opts.verify_steps, opts.step_size, rng
    )
    return WitnessVerification(
        value_on_target=evaluate(w, observables),
        max_on_compatible=float(w.delta - support),
        n_starts=opts.verify_starts,
    )


def search_witness(
    observables: Sequence[Observable],
    subset: StateSubset,
    opts: WitnessSearchOptions = WitnessSearchOptions(),
    solver_opts: SolverOptions = SolverOptions(),
) -> Optional[StateFormWitness]:
    """Search for a witness supported on the subset's states that detects the
    tuple; returns None when the budget is exhausted without one.

    Precondition: the tuple must be infeasible on the subset (checked with
    the oracle), otherwise no witness can exist.
    """
    oracle = joint_feasible(FeasibilityProblem(tuple(observables), tuple(subset)), solver_opts)
    if oracle.status is Status.FEASIBLE:
        raise PreconditionViolated("tuple is feasible on the subset; no witness exists")
    if oracle.status is Status.AMBIGUOUS:
        raise OracleAmbiguous("subset feasibility undecided at tolerance")

    rng = np.random.default_rng(opts.seed)
    space = _StatsSpace(observables, _cyclic_slot_states(observables, subset))
    s_target = space.target_stats()
    n_slots = space.n_slots

    seeds = _sequential_joints(observables, space)
    probes = list(space.joint_stats(space.random_joints(8, rng)))
    probes.extend(space.joint_stats(seeds))
    uniform = np.stack([identity(space.dim) / space.k_total] * space.k_total)[None]
    probes.append(space.joint_stats(uniform)[0])

    candidates = []
    for _ in range(opts.rounds):
        a_ub = np.column_stack([np.stack(probes), -np.ones(len(probes))])
        cost = np.concatenate([-s_target, [1.0]])
        bounds = [(-1.0, 1.0)] * n_slots + [(-(n_slots + 1.0), n_slots + 1.0)]
        lp = linprog(cost, A_ub=a_ub, b_ub=np.zeros(len(probes)), bounds=bounds, method="highs")
        if not lp.success:
            break
        c = lp.x[:n_slots]
        delta_lp = float(lp.x[-1])
        optimistic = float(s_target @ c - delta_lp)
        if optimistic <= DETECTION_MARGIN / 10.0:
            break
        support, p_star = _support_ascent(
            space, c, opts.loop_starts, opts.loop_steps, opts.step_size, rng, seeds
        )
        # the LP bound max over probes is itself a valid support lower bound
        support = max(support, delta_lp)
        margin = float(s_target @ c - support)
        candidates.append((margin, c.copy()))
        if p_star is not None:
            probes.append(p_star)
        if optimistic - margin <= 1e-9:
            break

    candidates.sort(key=lambda mc: -mc[0])
    for margin, c in candidates[:3]:
        if margin <= DETECTION_MARGIN:
            break
        scale = float(np.abs(c).max())
        if scale <= 0.0:
            continue
        c = c / scale
        support, _ = _support_ascent(
            space, c, opts.verify_starts, opts.verify_steps, opts.step_size, rng, seeds
        )
        witness = _package(space, c, support + 1e-9)
        check = verify_witness(witness, observables, opts)
        if not check.sound:
            # the verifier's ascent found a stronger compatible point; its
            # support estimate becomes the new baseline for delta
            witness = _package(space, c, witness.delta - check.max_on_compatible + 1e-9)
        if evaluate(witness, observables) < -DETECTION_MARGIN:
            return witness
    return None


def _sequential_joints(observables: Sequence[Observable], space: _StatsSpace) -> np.ndarray:
    """Measure-then-measure joint POVMs of a pair, in both orders; their
    marginals sit close to a nearly compatible target and make strong cuts."""
    if len(observables) != 2:
        return space.random_joints(2, np.random.default_rng(0))
    a, b = observables
    d = a.dim
    joints = []
    for first, second, transpose in ((a, b, False), (b, a, True)):
        blocks = {}
        for x in first.outcomes:
            ex = first.effect(x).matrix
            ev, vec = np.linalg.eigh(ex)
            root = (vec * np.sqrt(np.clip(ev, 0.0, None))) @ vec.conj().T
            for y in second.outcomes:
                blocks[(x, y)] = root @ second.effect(y).matrix @ root
        stack = []
        for x in a.outcomes:
            for y in b.outcomes:
                stack.append(blocks[(y, x)] if transpose else blocks[(x, y)])
        joints.append(np.stack(stack))
    return np.stack(joints)


def _package(space: _StatsSpace, c: np.ndarray, delta: float) -> StateFormWitness:
    coeffs = []
    states = []
    s = 0
    for obs in space.observables:
        per_c = []
        per_s = []
        for _ in range(obs.n_outcomes):
            per_c.append(float(c[s]))
            per_s.append(space.slots[s][2])
            s += 1
        coeffs.append(tuple(per_c))
        states.append(tuple(per_s))
    return StateFormWitness(float(delta), tuple(coeffs), tuple(states))
