"""Noisy mutually unbiased qubit pair on the equatorial Bloch disk.

For the pair measuring along x and y with common noise t, this module
computes the admissible deviation-angle ranges of all binary observables
that agree with the pair on a chord of the disk, decides chord-restricted
compatibility, evaluates the incompatibility dimension, and locates the
noise threshold where that dimension jumps between 3 and 2.

A chord is parameterised by the half-sum phi0 and half-difference psi0 of
its endpoint angles; the normalisation 0 < phi0 < pi/2, 0 < psi0 < pi/2
places it above the origin.  The "+" effect of an agreeing observable with
deviation angle xi has Bloch length

    C(xi) = t sin(phi0) / sin(phi0 - xi)

and bias

    w(xi) = -t cos(psi0) sin(xi) / sin(phi0 - xi),

and the admissible xi interval is pinned by effect positivity:
1 - w = C at the lower end, 1 + w = C at the upper end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    CompatiblePair,
    DegenerateChord,
    NonConvergent,
    NonMonotoneWitness,
    NoSolution,
    ParamOutOfRange,
    SingularDirection,
)
from .feasibility import FeasibilityProblem, Status, joint_feasible
from .operators import BinaryQubitObservable, state_from_bloch, unbiased_qubit_observable

SQRT2_INV = 1.0 / math.sqrt(2.0)
BOUNDARY_EPS = 1e-9
SHARP_EPS = 1e-12


@dataclass(frozen=True)
class Segment:
    """Chord of the Bloch disk in the regime where the pair is incompatible."""

    t: float
    phi0: float
    psi0: float

    def __post_init__(self):
        if not SQRT2_INV - 1e-12 < self.t <= 1.0:
            raise ParamOutOfRange(f"t = {self.t!r} outside (1/sqrt(2), 1]")
        if not 0.0 <= self.phi0 <= math.pi / 2:
            raise ParamOutOfRange(f"phi0 = {self.phi0!r} outside [0, pi/2]")
        if not 0.0 < self.psi0 <= math.pi / 2:
            raise ParamOutOfRange(f"psi0 = {self.psi0!r} outside (0, pi/2]")

    @property
    def phi1(self) -> float:
        return self.phi0 - self.psi0

    @property
    def phi2(self) -> float:
        return self.phi0 + self.psi0

    @property
    def r1(self) -> np.ndarray:
        return np.array([math.cos(self.phi1), math.sin(self.phi1)])

    @property
    def r2(self) -> np.ndarray:
        return np.array([math.cos(self.phi2), math.sin(self.phi2)])

    def endpoint_states(self) -> tuple:
        return (
            state_from_bloch([*self.r1, 0.0]),
            state_from_bloch([*self.r2, 0.0]),
        )


@dataclass(frozen=True)
class XiRange:
    """Admissible deviation-angle interval; always contains zero."""

    xi_min: float
    xi_max: float

    def __post_init__(self):
        if not self.xi_min <= 1e-15 or not self.xi_max >= -1e-15:
            raise NoSolution(f"range [{self.xi_min}, {self.xi_max}] does not contain 0")

    @property
    def width(self) -> float:
        return self.xi_max - self.xi_min


@dataclass(frozen=True, eq=False)
class LambdaFamily:
    """Line of effect coefficient vectors (1, t, 0) + lambda (1, n) matching
    the x-direction observable on both chord endpoints, with the lambda
    interval carved out by effect positivity."""

    base: np.ndarray
    direction: np.ndarray
    lambda_lo: float
    lambda_hi: float

    def member(self, lam: float) -> BinaryQubitObservable:
        c0, cx, cy = self.base + lam * self.direction
        return BinaryQubitObservable(c0 - 1.0, np.array([cx, cy, 0.0]))


@dataclass(frozen=True)
class SearchOptions:
    """Grid-then-refine controls for the incompatible-segment search."""

    grid_n: int = 64
    refine_cells: int = 8
    refine_rounds: int = 2
    golden_iters: int = 16
    oracle_check: bool = True


def mub_pair(t: float) -> tuple:
    """The noisy pair measuring along x and y at noise level t."""
    if not 0.0 <= t <= 1.0:
        raise ParamOutOfRange(f"t = {t!r} outside [0, 1]")
    return (
        unbiased_qubit_observable([t, 0.0, 0.0]),
        unbiased_qubit_observable([0.0, t, 0.0]),
    )


def chord_effect_params(t: float, phi0: float, psi0: float, xi: float) -> tuple:
    """(Bloch length, bias) of the agreeing effect at deviation angle xi."""
    den = math.sin(phi0 - xi)
    if den <= 1e-12:
        raise SingularDirection(f"sin(phi0 - xi) = {den!r} not positive")
    return t * math.sin(phi0) / den, -t * math.cos(psi0) * math.sin(xi) / den


def _domain_check(t, phi0, psi0):
    if not 0.0 < t <= 1.0:
        raise NoSolution(f"t = {t!r} outside (0, 1]")
    if not 0.0 < phi0 < math.pi / 2 or not 0.0 < psi0 < math.pi / 2:
        raise NoSolution("phi0 and psi0 must lie strictly inside (0, pi/2)")


def _xi_min_vec(t, phi0, psi0):
    """Lower range ends: negative root of the quadratic for sin(xi), then a
    Newton polish on the exact defining equation 1 - w = C."""
    phi0 = np.asarray(phi0, dtype=float)
    psi0 = np.asarray(psi0, dtype=float)
    sin_p, cos_p = np.sin(phi0), np.cos(phi0)
    cos_s = np.cos(psi0)
    a = t * t * cos_s * cos_s - 2.0 * t * cos_p * cos_s + 1.0
    b = 2.0 * t * sin_p * (t * cos_s - cos_p)
    c = (t * t - 1.0) * sin_p * sin_p
    disc = np.sqrt(np.clip(b * b - 4.0 * a * c, 0.0, None))
    # roots of a s^2 - b s + c = 0; product c/a <= 0, pick the nonpositive one
    big = np.where(b >= 0.0, (b + disc) / (2.0 * a), (b - disc) / (2.0 * a))
    with np.errstate(divide="ignore", invalid="ignore"):
        other = np.where(np.abs(big) > 0.0, c / (a * big), 0.0)
    s = np.minimum(np.minimum(big, other), 0.0)
    s = np.clip(s, -1.0, 0.0)

    cand_a = np.arcsin(s)
    cand_b = -np.pi - cand_a
    h1 = (t * cos_s - cos_p) / (t * sin_p)

    def g(x):
        return np.cos(x) / t + h1 * np.sin(x) - 1.0

    in_dom_b = cand_b > -np.pi + phi0
    xi = np.where(in_dom_b & (np.abs(g(cand_b)) < np.abs(g(cand_a))), cand_b, cand_a)
    for _ in range(3):
        dg = -np.sin(xi) / t + h1 * np.cos(xi)
        step = np.where(np.abs(dg) > 1e-14, g(xi) / np.where(np.abs(dg) > 1e-14, dg, 1.0), 0.0)
        xi = xi - np.clip(step, -0.1, 0.1)
    return np.minimum(xi, 0.0)


def _xi_max_vec(t, phi0, psi0, iters: int = 80):
    """Upper range ends by bisection of p(xi) = sin(phi0-xi) - t cos(psi0) sin(xi)
    - t sin(phi0), which is strictly decreasing on [0, phi0]."""
    phi0 = np.asarray(phi0, dtype=float)
    psi0 = np.asarray(psi0, dtype=float)
    cos_s = np.cos(psi0)
    sin_p = np.sin(phi0)

    def p(x):
        return np.sin(phi0 - x) - t * cos_s * np.sin(x) - t * sin_p

    lo = np.zeros_like(phi0)
    hi = phi0.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = p(mid) < 0.0
        hi = np.where(neg, mid, hi)
        lo = np.where(neg, lo, mid)
    xi = 0.5 * (lo + hi)
    # secant polish against the residual of 1 + w = C
    for _ in range(2):
        f0 = p(xi)
        f1 = p(xi + 1e-9)
        slope = (f1 - f0) / 1e-9
        step = np.where(np.abs(slope) > 1e-14, f0 / np.where(np.abs(slope) > 1e-14, slope, 1.0), 0.0)
        xi = np.clip(xi - step, 0.0, phi0)
    return np.maximum(xi, 0.0)


def xi_range_first(t: float, phi0: float, psi0: float) -> XiRange:
    """Admissible deviation-angle range for observables agreeing with the
    x-direction member of the pair on the chord."""
    _domain_check(t, phi0, psi0)
    xi_min = float(_xi_min_vec(t, np.array([phi0]), np.array([psi0]))[0])
    xi_max = float(_xi_max_vec(t, np.array([phi0]), np.array([psi0]))[0])
    if not (-math.pi + phi0 < xi_min <= 1e-12):
        raise NoSolution(f"xi_min = {xi_min!r} outside (-pi + phi0, 0]")
    c_min, w_min = chord_effect_params(t, phi0, psi0, xi_min)
    c_max, w_max = chord_effect_params(t, phi0, psi0, xi_max)
    if abs(1.0 - w_min - c_min) > 1e-10 or abs(1.0 + w_max - c_max) > 1e-10:
        raise NoSolution("range equations failed to converge to tolerance")
    return XiRange(min(xi_min, 0.0), max(xi_max, 0.0))


def xi_range_second(t: float, phi0: float, psi0: float) -> XiRange:
    """Range for the y-direction member: the first-range formulas at pi/2 - phi0."""
    return xi_range_first(t, math.pi / 2 - phi0, psi0)


def xi_min_limit(phi0: float) -> float:
    """psi0 -> 0 limit of the lower range end at the critical noise 1/sqrt(2).

    Closed form -arccos((4 - 3 sqrt(2) cos(phi0)) / (sqrt(2) (3 - 2 sqrt(2) cos(phi0)))).
    """
    if not 0.0 < phi0 < math.pi / 2:
        raise ParamOutOfRange(f"phi0 = {phi0!r} outside (0, pi/2)")
    c = math.cos(phi0)
    arg = (4.0 - 3.0 * math.sqrt(2.0) * c) / (math.sqrt(2.0) * (3.0 - 2.0 * math.sqrt(2.0) * c))
    return -math.acos(min(max(arg, -1.0), 1.0))


def z_value(t: float, phi0: float, psi0: float) -> float:
    """Incompatibility indicator at the extreme admissible pair of angles.

    Z > 0 is necessary for the extreme pair of agreeing observables to be
    incompatible; Z <= 0 certifies their compatibility.
    """
    r1 = xi_range_first(t, phi0, psi0)
    r2 = xi_range_second(t, phi0, psi0)
    _, w1 = chord_effect_params(t, phi0, psi0, r1.xi_min)
    _, w2 = chord_effect_params(t, math.pi / 2 - phi0, psi0, r2.xi_min)
    s = math.sin(r1.xi_min + r2.xi_min)
    return (1.0 + s) * (1.0 + w1 + w2) - (1.0 - s) * w1 * w2


def _pair_margin_grid(t, phi0, psi0, xi1, xi2):
    """Compatibility margin (>= 0 means compatible) for all angle pairs.

    Vectorised form of the closed pair criterion; sharp members (Bloch
    length 1) fall back to the parallel-direction test.
    """
    xi1 = np.asarray(xi1, dtype=float)[:, None]
    xi2 = np.asarray(xi2, dtype=float)[None, :]
    c1 = t * np.sin(phi0) / np.sin(phi0 - xi1)
    w1 = -t * np.cos(psi0) * np.sin(xi1) / np.sin(phi0 - xi1)
    pbar = np.pi / 2 - phi0
    c2 = t * np.sin(pbar) / np.sin(pbar - xi2)
    w2 = -t * np.cos(psi0) * np.sin(xi2) / np.sin(pbar - xi2)

    f1 = 0.5 * (
        np.sqrt(np.clip((1 + w1) ** 2 - c1 ** 2, 0.0, None))
        + np.sqrt(np.clip((1 - w1) ** 2 - c1 ** 2, 0.0, None))
    )
    f2 = 0.5 * (
        np.sqrt(np.clip((1 + w2) ** 2 - c2 ** 2, 0.0, None))
        + np.sqrt(np.clip((1 - w2) ** 2 - c2 ** 2, 0.0, None))
    )
    s12 = np.sin(xi1 + xi2)
    sharp = (c1 >= 1.0 - SHARP_EPS) | (c2 >= 1.0 - SHARP_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = (1.0 - f1 ** 2 - f2 ** 2) * (1.0 - (w1 / f1) ** 2 - (w2 / f2) ** 2)
    rhs = (c1 * c2 * s12 - w1 * w2) ** 2
    margin = rhs - lhs
    return np.where(sharp, np.abs(s12) - 1.0, margin)


def _batch_ranges(t: float, phi0: np.ndarray, psi0: np.ndarray) -> tuple:
    """(xi1_min, xi1_max, xi2_min, xi2_max) arrays for chord-parameter arrays."""
    xi1_min = _xi_min_vec(t, phi0, psi0)
    xi1_max = _xi_max_vec(t, phi0, psi0)
    pbar = math.pi / 2 - phi0
    xi2_min = _xi_min_vec(t, pbar, psi0)
    xi2_max = _xi_max_vec(t, pbar, psi0)
    return xi1_min, xi1_max, xi2_min, xi2_max


def _scan_slack(t, phi0, psi0, lo1, hi1, lo2, hi2, grid_n: int) -> float:
    """Best compatibility margin over the admissible angle rectangle, with one
    local refinement pass around the best coarse cell."""
    xi1 = np.linspace(lo1, hi1, grid_n)
    xi2 = np.linspace(lo2, hi2, grid_n)
    margins = _pair_margin_grid(t, phi0, psi0, xi1, xi2)
    best = float(margins.max())
    if best >= -1e-12:
        return best

    i, j = np.unravel_index(int(margins.argmax()), margins.shape)
    h1 = (hi1 - lo1) / max(grid_n - 1, 1)
    h2 = (hi2 - lo2) / max(grid_n - 1, 1)
    f1 = np.linspace(max(xi1[i] - h1, lo1), min(xi1[i] + h1, hi1), grid_n)
    f2 = np.linspace(max(xi2[j] - h2, lo2), min(xi2[j] + h2, hi2), grid_n)
    fine = _pair_margin_grid(t, phi0, psi0, f1, f2)
    return max(best, float(fine.max()))


def _segment_slack(t: float, phi0: float, psi0: float, grid_n: int) -> float:
    """Best compatibility margin for one chord.

    +inf encodes segments settled without scanning (boundary chords and the
    antipodal shortcut xi1_min + xi2_min <= -pi/2).  A negative value after
    the local refinement pass marks the segment incompatible.
    """
    if psi0 >= math.pi / 2 - BOUNDARY_EPS:
        return math.inf
    if phi0 <= BOUNDARY_EPS or phi0 >= math.pi / 2 - BOUNDARY_EPS:
        return math.inf
    lo1, hi1, lo2, hi2 = (
        float(v[0]) for v in _batch_ranges(t, np.array([phi0]), np.array([psi0]))
    )
    if lo1 + lo2 <= -math.pi / 2:
        return math.inf
    return _scan_slack(t, phi0, psi0, lo1, hi1, lo2, hi2, grid_n)


def segment_compatible(seg: Segment, grid_n: int = 64) -> bool:
    """True iff some pair of observables agreeing with the noisy pair on the
    segment is compatible."""
    if grid_n < 16:
        raise ParamOutOfRange(f"grid_n = {grid_n} < 16")
    return _segment_slack(seg.t, seg.phi0, seg.psi0, grid_n) >= -1e-12


def _oracle_confirms_incompatible(t: float, phi0: float, psi0: float) -> bool:
    """Cross-check a claimed incompatible segment against the generic oracle
    on its two endpoint states; only a cleanly feasible verdict vetoes."""
    seg = Segment(t, phi0, psi0)
    problem = FeasibilityProblem(mub_pair(t), seg.endpoint_states())
    try:
        return joint_feasible(problem).status is not Status.FEASIBLE
    except NonConvergent:
        return True


def _golden_min(fun, lo: float, hi: float, iters: int) -> tuple:
    """Golden-section minimisation; returns (argmin, min)."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


def chi_incomp_mub(t: float, opts: SearchOptions = SearchOptions()) -> int:
    """Incompatibility dimension (2 or 3) of the noisy pair at noise level t.

    Scans chords on a (phi0, psi0) grid for one on which every agreeing pair
    of observables is incompatible; refines the most promising cells by
    golden-section before settling on 3.
    """
    if t <= SQRT2_INV + 1e-9:
        raise CompatiblePair(f"t = {t!r} is in the compatible regime")
    if t > 1.0 + 1e-12:
        raise ParamOutOfRange(f"t = {t!r} > 1")
    t = min(t, 1.0)
    n = opts.grid_n
    half_pi = math.pi / 2
    centers = (np.arange(n) + 0.5) / n * half_pi

    pp, ss = np.meshgrid(centers, centers, indexing="ij")
    lo1, hi1, lo2, hi2 = _batch_ranges(t, pp.ravel(), ss.ravel())
    shortcut = (lo1 + lo2 <= -half_pi).reshape(n, n)

    slacks = np.full((n, n), math.inf)
    for i in range(n):
        for j in range(n):
            if shortcut[i, j]:
                continue
            k = i * n + j
            slacks[i, j] = _scan_slack(
                t, float(centers[i]), float(centers[j]),
                float(lo1[k]), float(hi1[k]), float(lo2[k]), float(hi2[k]), n,
            )
            if slacks[i, j] < -1e-12:
                if not opts.oracle_check or _oracle_confirms_incompatible(
                    t, float(centers[i]), float(centers[j])
                ):
                    return 2

    flat = np.argsort(slacks, axis=None)[: opts.refine_cells]
    cell = half_pi / n
    for idx in flat:
        if not np.isfinite(slacks.flat[idx]):
            break
        i, j = np.unravel_index(int(idx), slacks.shape)
        phi0, psi0 = float(centers[i]), float(centers[j])
        for _ in range(opts.refine_rounds):
            phi0, _ = _golden_min(
                lambda p: _segment_slack(t, p, psi0, n),
                max(phi0 - cell, 1e-6),
                min(phi0 + cell, half_pi - 1e-6),
                opts.golden_iters,
            )
            psi0, best = _golden_min(
                lambda p: _segment_slack(t, phi0, p, n),
                max(psi0 - cell, 1e-6),
                min(psi0 + cell, half_pi - 1e-6),
                opts.golden_iters,
            )
        if best < -1e-12:
            if not opts.oracle_check or _oracle_confirms_incompatible(t, phi0, psi0):
                return 2
    return 3


def find_threshold(
    tol: float,
    opts: SearchOptions = SearchOptions(),
    trace: Optional[list] = None,
) -> float:
    """Noise level where the incompatibility dimension steps from 3 to 2.

    Bisects on the noise interval using the monotone step established by
    post-processing; the returned point carries dimension 3 by convention.
    """
    if tol < 1e-5:
        raise ParamOutOfRange(f"tol = {tol!r} < 1e-5")

    def chi(t):
        value = chi_incomp_mub(t, opts)
        if trace is not None:
            trace.append((t, value))
        return value

    lo = SQRT2_INV + 1e-5
    hi = 1.0
    if chi(lo) != 3 or chi(hi) != 2:
        raise NonMonotoneWitness("endpoint dimensions disagree with the expected step")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if chi(mid) == 2:
            hi = mid
        else:
            lo = mid
    t0 = 0.5 * (lo + hi)
    if chi_incomp_mub(max(t0 - tol, SQRT2_INV + 1e-5), opts) != 3 or chi_incomp_mub(
        min(t0 + tol, 1.0), opts
    ) != 2:
        raise NonMonotoneWitness("threshold neighbourhood fails the 3 -> 2 step")
    return t0


def lambda_family(t: float, r1, r2) -> LambdaFamily:
    """Effect family matching the x-direction member on both endpoint states,
    parameterised along the line (1, t, 0) + lambda (1, n) with n the polar
    vector of the chord (n . r1 = n . r2 = -1)."""
    v1 = np.asarray(r1, dtype=float).reshape(2)
    v2 = np.asarray(r2, dtype=float).reshape(2)
    for v in (v1, v2):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ParamOutOfRange("endpoints must be unit vectors")
    cross = v1[0] * v2[1] - v1[1] * v2[0]
    if abs(cross) < 1e-9:
        raise DegenerateChord("endpoints are parallel or antipodal")
    if abs(v1[0] - v2[0]) < 1e-9:
        raise DegenerateChord("endpoints share an x-coordinate")
    n = np.linalg.solve(np.stack([v1, v2]), np.array([-1.0, -1.0]))
    if np.linalg.norm(n) <= 1.0 or n[0] >= 0.0 or n[1] >= 0.0:
        raise DegenerateChord("chord must satisfy the above-origin normalisation")

    nsq = float(n @ n)
    nx = float(n[0])
    lam_lo = (1.0 - nx * t - math.sqrt((1.0 - nx * t) ** 2 + (nsq - 1.0) * (1.0 - t * t))) / (
        nsq - 1.0
    )
    lam_hi = min(
        1.0,
        (-1.0 - nx * t + math.sqrt((1.0 + nx * t) ** 2 + (nsq - 1.0) * (1.0 - t * t)))
        / (nsq - 1.0),
    )
    return LambdaFamily(
        base=np.array([1.0, t, 0.0]),
        direction=np.array([1.0, n[0], n[1]]),
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
    )


def sweep_rows(t: float, grid_n: int = 64) -> list:
    """Chord-grid diagnostics at one noise level, one dict per (phi0, psi0).

    Columns: t, phi0, psi0, xi1_min, xi1_max, xi2_min, xi2_max, Z, compatible.
    """
    if grid_n < 16:
        raise ParamOutOfRange(f"grid_n = {grid_n} < 16")
    half_pi = math.pi / 2
    centers = (np.arange(grid_n) + 0.5) / grid_n * half_pi
    pp, ss = np.meshgrid(centers, centers, indexing="ij")
    phis, psis = pp.ravel(), ss.ravel()
    lo1, hi1, lo2, hi2 = _batch_ranges(t, phis, psis)

    den1 = np.sin(phis - lo1)
    w1 = -t * np.cos(psis) * np.sin(lo1) / den1
    den2 = np.sin(half_pi - phis - lo2)
    w2 = -t * np.cos(psis) * np.sin(lo2) / den2
    s12 = np.sin(lo1 + lo2)
    z = (1.0 + s12) * (1.0 + w1 + w2) - (1.0 - s12) * w1 * w2

    rows = []
    for k in range(phis.size):
        if lo1[k] + lo2[k] <= -half_pi:
            compatible = True
        else:
            slack = _scan_slack(
                t, float(phis[k]), float(psis[k]),
                float(lo1[k]), float(hi1[k]), float(lo2[k]), float(hi2[k]), grid_n,
            )
            compatible = slack >= -1e-12
        rows.append(
            {
                "t": t,
                "phi0": float(phis[k]),
                "psi0": float(psis[k]),
                "xi1_min": float(lo1[k]),
                "xi1_max": float(hi1[k]),
                "xi2_min": float(lo2[k]),
                "xi2_max": float(hi2[k]),
                "Z": float(z[k]),
                "compatible": bool(compatible),
            }
        )
    return rows
