import math

import numpy as np
import pytest

from incodim.errors import PreconditionViolated, ShapeMismatch
from incodim.feasibility import FeasibilityProblem, Status, joint_feasible
from incodim.mub import Segment, mub_pair
from incodim.operators import (
    Effect,
    State,
    identity,
    random_observable,
    random_state,
    state_from_bloch,
    unbiased_qubit_observable,
)
from incodim.subsets import StateSubset, affine_dimension, pq_detector, projective_pair
from incodim.witness import (
    RawWitness,
    StateFormWitness,
    WitnessSearchOptions,
    _StatsSpace,
    detected_subset,
    evaluate,
    normalize,
    search_witness,
    verify_witness,
)


def sharp_pair():
    p = Effect(np.diag([1.0, 0.0]).astype(complex))
    q = Effect(0.5 * np.array([[1, 1], [1, 1]], dtype=complex))
    return p, q, projective_pair(p, q)


def rand_raw(rng, n_obs=2, n_out=2, d=2, delta=None):
    ops = []
    for _ in range(n_obs):
        per = []
        for _ in range(n_out):
            g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            per.append(0.5 * (g + g.conj().T))
        ops.append(tuple(per))
    return RawWitness(rng.normal() if delta is None else delta, tuple(ops))


def raw_value(raw, observables):
    total = 0.0
    for per, obs in zip(raw.operators, observables):
        for f, x in zip(per, obs.outcomes):
            total += np.trace(f @ obs.effect(x).matrix).real
    return raw.delta - total


def test_evaluate_constant_witness():
    mixed = State(identity(2) / 2)
    w = StateFormWitness(1.0, ((0.0, 0.0), (0.0, 0.0)), ((mixed, mixed), (mixed, mixed)))
    obs = mub_pair(0.9)
    assert evaluate(w, obs) == 1.0


def test_evaluate_affine_calibration():
    rng = np.random.default_rng(1)
    obs = mub_pair(0.5)
    states = ((random_state(2, rng), random_state(2, rng)),) * 2
    coeffs = ((0.7, -0.3), (0.2, 1.1))
    probe = StateFormWitness(0.0, coeffs, states)
    delta = -evaluate(probe, obs)
    calibrated = StateFormWitness(delta, coeffs, states)
    assert evaluate(calibrated, obs) == pytest.approx(0.0, abs=1e-12)


def test_evaluate_affine_in_tuples():
    rng = np.random.default_rng(8)
    w = StateFormWitness(
        0.4,
        ((0.5, -0.2), (0.3, 0.9)),
        ((random_state(2, rng), random_state(2, rng)),) * 2,
    )
    a1, b1 = random_observable(2, 2, rng), random_observable(2, 2, rng)
    a2, b2 = random_observable(2, 2, rng), random_observable(2, 2, rng)
    for lam in (0.0, 0.25, 0.8, 1.0):
        from incodim.operators import Observable

        mixed = tuple(
            Observable(
                o1.outcomes,
                {
                    x: lam * o1.effect(x).matrix + (1 - lam) * o2.effect(y).matrix
                    for x, y in zip(o1.outcomes, o2.outcomes)
                },
            )
            for o1, o2 in ((a1, a2), (b1, b2))
        )
        direct = evaluate(w, mixed)
        mixture = lam * evaluate(w, (a1, b1)) + (1 - lam) * evaluate(w, (a2, b2))
        assert direct == pytest.approx(mixture, abs=1e-12)


def test_evaluate_shape_mismatch():
    mixed = State(identity(2) / 2)
    w = StateFormWitness(0.0, ((0.0, 0.0),), ((mixed, mixed),))
    with pytest.raises(ShapeMismatch):
        evaluate(w, mub_pair(0.9))


def test_detected_subset_dedupes():
    mixed = State(identity(2) / 2)
    w = StateFormWitness(0.0, ((1.0, 1.0), (1.0, 1.0)), ((mixed, mixed), (mixed, mixed)))
    sub = detected_subset(w)
    assert len(sub) == 1 and sub.affine_dim == 0


def test_detected_subset_generic_affine_dim():
    rng = np.random.default_rng(12)
    states = tuple(random_state(2, rng) for _ in range(4))
    w = StateFormWitness(0.0, ((1.0, 1.0), (1.0, 1.0)), ((states[0], states[1]), (states[2], states[3])))
    assert detected_subset(w).affine_dim == 3


def test_normalize_preserves_value_on_random_tuples():
    rng = np.random.default_rng(5)
    raw = rand_raw(rng)
    std = normalize(raw)
    for _ in range(100):
        obs = (random_observable(2, 2, rng), random_observable(2, 2, rng))
        assert evaluate(std, obs) == pytest.approx(raw_value(raw, obs), abs=1e-9)


def test_normalize_constraint_and_affine_dimension():
    rng = np.random.default_rng(23)
    for _ in range(10):
        raw = rand_raw(rng)
        std = normalize(raw)
        for per_c, per_s in zip(std.coeffs, std.states):
            lhs = sum(c * s.matrix for c, s in zip(per_c, per_s))
            # weighted state sum must be a multiple of the identity
            assert np.abs(lhs - (np.trace(lhs).real / 2) * identity(2)).max() < 1e-9
        flat = [s for per in std.states for s in per]
        assert affine_dimension(flat) <= 2


def test_normalize_zero_raw_gives_maximally_mixed():
    raw = RawWitness(1.0, ((np.zeros((2, 2)), np.zeros((2, 2))),) * 2)
    std = normalize(raw)
    for per in std.states:
        for s in per:
            assert np.allclose(s.matrix, identity(2) / 2, atol=1e-12)
    obs = mub_pair(0.8)
    assert evaluate(std, obs) == pytest.approx(1.0, abs=1e-12)


def test_normalize_fixpoint_on_state_built_raw():
    # raw operators already of the form c * (pure state) with the block sums
    # proportional to the identity come back unchanged up to the epsilon lift
    c = 0.8
    plus = state_from_bloch([1.0, 0.0, 0.0])
    minus = state_from_bloch([-1.0, 0.0, 0.0])
    raw = RawWitness(
        0.2,
        ((c * plus.matrix, c * minus.matrix), (c * minus.matrix, c * plus.matrix)),
    )
    std = normalize(raw)
    assert np.allclose(std.states[0][0].matrix, plus.matrix, atol=1e-9)
    assert np.allclose(std.states[0][1].matrix, minus.matrix, atol=1e-9)
    assert std.coeffs[0][0] == pytest.approx(c, abs=1e-9)
    obs = mub_pair(0.75)
    assert evaluate(std, obs) == pytest.approx(raw_value(raw, obs), abs=1e-9)


def test_search_witness_on_sharp_pair():
    p, q, obs = sharp_pair()
    subset = pq_detector(p, q)
    witness = search_witness(obs, subset)
    assert witness is not None
    value = evaluate(witness, obs)
    assert value < -1e-6
    # the obstruction is real: the off-diagonal joint blocks would have to
    # add up to P + Q, which exceeds the identity
    overshoot = np.linalg.eigvalsh(p.matrix + q.matrix).max() - 1.0
    assert overshoot > 0.1
    check = verify_witness(witness, obs)
    assert check.sound and check.detects
    sub = detected_subset(witness)
    assert joint_feasible(FeasibilityProblem(obs, tuple(sub))).status is Status.INFEASIBLE


def test_search_witness_precondition():
    pair = (
        unbiased_qubit_observable([0.5, 0.0, 0.0]),
        unbiased_qubit_observable([0.0, 0.5, 0.0]),
    )
    subset = StateSubset((State(identity(2) / 2), state_from_bloch([0, 0, 1])))
    with pytest.raises(PreconditionViolated):
        search_witness(pair, subset)


def test_search_witness_on_noisy_segment():
    t = 0.9
    seg = Segment(t, 0.75, 0.1)
    subset = StateSubset(seg.endpoint_states())
    witness = search_witness(mub_pair(t), subset)
    assert witness is not None
    assert evaluate(witness, mub_pair(t)) < -1e-6
    flat = [s for per in witness.states for s in per]
    for s in flat:
        assert any(np.allclose(s.matrix, u.matrix, atol=1e-12) for u in subset)


def test_search_witness_deterministic_with_fixed_seed():
    p, q, obs = sharp_pair()
    subset = pq_detector(p, q)
    w1 = search_witness(obs, subset, WitnessSearchOptions(seed=7))
    w2 = search_witness(obs, subset, WitnessSearchOptions(seed=7))
    assert w1 is not None and w2 is not None
    assert w1.delta == w2.delta
    assert w1.coeffs == w2.coeffs


def test_witness_sound_against_random_compatible_tuples():
    p, q, obs = sharp_pair()
    witness = search_witness(obs, pq_detector(p, q))
    rng = np.random.default_rng(3)
    space = _StatsSpace(obs, [s for per in witness.states for s in per])
    joints = space.random_joints(1000, rng)
    stats = space.joint_stats(joints)
    cvec = np.array([c for per in witness.coeffs for c in per])
    values = witness.delta - stats @ cvec
    assert values.min() >= -1e-6
