"""Empirical measures of particle states and 1-D optimal-transport metrics.

A particle state induces two families of measures: the species measures
mu+/mu- built from the *initial* charges (their masses n+/n and n-/n are
conserved forever, annihilated particles included), and the signed measure
kappa built from the *current* charges, whose positive and negative parts
carry exactly the not-yet-annihilated populations.  Distances between
species measures are exact 1-D quadratic-cost optimal transport computed by
monotone quantile matching with unnormalised cost (masses enter as weights);
the distance between pairs is the species-wise upper bound, which dominates
the joint transport distance on R x {+-1} and is the working metric
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ParticleState

__all__ = [
    "WeightedAtoms",
    "SignedAtoms",
    "EmpiricalPair",
    "BlockStructure",
    "from_state",
    "wasserstein2",
    "pair_distance_upper",
    "coupling_bound",
    "block_structure",
    "supports_separated",
]

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class WeightedAtoms:
    """A nonnegative atomic measure: positions with positive weights."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.shape != w.shape or p.ndim != 1:
            raise ValueError("positions and weights must be 1-D arrays of equal length")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def size(self) -> int:
        return self.positions.size

    def sorted_merged(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms sorted by position with duplicates merged (stable order)."""
        order = np.argsort(self.positions, kind="stable")
        p = self.positions[order]
        w = self.weights[order]
        if p.size == 0:
            return p, w
        keep = np.concatenate([[True], np.diff(p) != 0.0])
        idx = np.cumsum(keep) - 1
        merged_w = np.zeros(int(idx[-1]) + 1)
        np.add.at(merged_w, idx, w)
        return p[keep], merged_w

    @classmethod
    def empty(cls) -> "WeightedAtoms":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def of(cls, positions, weights) -> "WeightedAtoms":
        """Build, silently dropping zero-weight atoms."""
        p = np.asarray(positions, dtype=float)
        w = np.asarray(weights, dtype=float)
        keep = w > 0
        return cls(p[keep].copy(), w[keep].copy())


@dataclass(frozen=True)
class SignedAtoms:
    """A finite signed atomic measure; weights of any sign (zeros allowed)."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.shape != w.shape or p.ndim != 1:
            raise ValueError("positions and weights must be 1-D arrays of equal length")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "weights", w)

    @property
    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    def positive_part(self) -> WeightedAtoms:
        return WeightedAtoms.of(self.positions, np.maximum(self.weights, 0.0))

    def negative_part(self) -> WeightedAtoms:
        return WeightedAtoms.of(self.positions, np.maximum(-self.weights, 0.0))


@dataclass(frozen=True)
class EmpiricalPair:
    """The pair (mu+, mu-), a probability on R x {+-1}; m = mass of mu+."""

    plus: WeightedAtoms
    minus: WeightedAtoms

    def __post_init__(self):
        total = self.plus.mass + self.minus.mass
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pair must have total mass 1, got {total}")

    @property
    def mass_plus(self) -> float:
        return self.plus.mass


@dataclass(frozen=True)
class BlockStructure:
    """Alternating-sign interval cover: 2L+1 boundaries, positives in the
    odd-numbered intervals, negatives in the even-numbered ones."""

    boundaries: np.ndarray
    L: int

    def __post_init__(self):
        object.__setattr__(self, "boundaries", np.asarray(self.boundaries, dtype=float))
        if self.L > 0 and self.boundaries.size != 2 * self.L + 1:
            raise ValueError("need 2L+1 boundaries")
        if np.any(np.diff(self.boundaries) < 0):
            raise ValueError("boundaries must be nondecreasing")


def from_state(state: ParticleState):
    """Empirical measures of a state.

    Returns ``(pair, kappa, kappa_plus, kappa_minus)``: the species pair
    keyed by initial charges (conserved masses), the signed measure keyed by
    current charges, and its positive/negative parts, which by construction
    are the unit atoms of the still-active positive/negative particles.
    """
    n = state.n
    w = 1.0 / n
    plus = WeightedAtoms.of(state.x[state.b_init == 1],
                            np.full(int(np.sum(state.b_init == 1)), w))
    minus = WeightedAtoms.of(state.x[state.b_init == -1],
                             np.full(int(np.sum(state.b_init == -1)), w))
    kappa = SignedAtoms(state.x.copy(), state.b.astype(float) * w)
    kplus = WeightedAtoms.of(state.x[state.b == 1], np.full(int(np.sum(state.b == 1)), w))
    kminus = WeightedAtoms.of(state.x[state.b == -1], np.full(int(np.sum(state.b == -1)), w))
    return EmpiricalPair(plus, minus), kappa, kplus, kminus


def wasserstein2(a: WeightedAtoms, b: WeightedAtoms) -> float:
    """Quadratic-cost optimal transport distance between equal-mass atomic
    measures on R.

    Computed by the monotone coupling: both atom lists are sorted (duplicate
    positions merged) and mass is matched quantile by quantile.  The cost is
    unnormalised, so W2(m*delta_0, m*delta_1) = sqrt(m).
    """
    ma, mb = a.mass, b.mass
    if abs(ma - mb) > _MASS_TOL * max(1.0, ma, mb):
        raise ValueError(f"mass mismatch: {ma} vs {mb}")
    pa, wa = a.sorted_merged()
    pb, wb = b.sorted_merged()
    i = j = 0
    ra = wa[0] if wa.size else 0.0
    rb = wb[0] if wb.size else 0.0
    cost = 0.0
    while i < pa.size and j < pb.size:
        m = min(ra, rb)
        d = pa[i] - pb[j]
        cost += m * d * d
        ra -= m
        rb -= m
        if ra <= 0.0 and i + 1 <= pa.size:
            i += 1
            ra = wa[i] if i < wa.size else 0.0
        if rb <= 0.0 and j + 1 <= pb.size:
            j += 1
            rb = wb[j] if j < wb.size else 0.0
    return float(np.sqrt(cost))


def pair_distance_upper(a: EmpiricalPair, b: EmpiricalPair) -> float:
    """Species-wise upper bound for the transport distance between pairs:
    sqrt(W2(a+, b+)^2 + W2(a-, b-)^2).

    Both pairs must sit in the same mass class m (the bound requires a
    coupling that never flips charge).
    """
    if abs(a.mass_plus - b.mass_plus) > 1e-9:
        raise ValueError(f"mass class mismatch: {a.mass_plus} vs {b.mass_plus}")
    dp = wasserstein2(a.plus, b.plus)
    dm = wasserstein2(a.minus, b.minus)
    return float(np.hypot(dp, dm))


def coupling_bound(state_s: ParticleState, state_t: ParticleState) -> float:
    """Identity-coupling transport bound sqrt((1/n) sum_i (x_i(s)-x_i(t))^2).

    Dominates the species-wise quantile costs because each particle keeps
    its initial charge label along the whole trajectory.
    """
    if state_s.n != state_t.n or not np.array_equal(state_s.b_init, state_t.b_init):
        raise ValueError("states must share n and initial charges")
    d = state_s.x - state_t.x
    return float(np.sqrt(np.mean(d * d)))


def block_structure(state: ParticleState) -> BlockStructure:
    """Minimal alternating interval cover of the active particles.

    Boundaries start one unit left of the first active particle, take the
    midpoint of every adjacent opposite-sign active pair, and close one unit
    right of the last; degenerate (empty) leading or trailing intervals are
    encoded by repeated boundary values.  With no active particles left the
    structure is empty (L = 0).
    """
    act = state.active
    if act.size == 0:
        return BlockStructure(np.zeros(0), 0)
    xs = state.x[act]
    bs = state.b[act]
    order = np.argsort(xs, kind="stable")
    xs, bs = xs[order], bs[order]
    bounds = [xs[0] - 1.0]
    if bs[0] == -1:
        bounds.append(xs[0] - 1.0)
    for i in range(xs.size - 1):
        if bs[i] * bs[i + 1] == -1:
            bounds.append(0.5 * (xs[i] + xs[i + 1]))
    ell = len(bounds) - 1
    if ell % 2 == 1:
        L = (ell + 1) // 2
        bounds.append(xs[-1] + 1.0)
    else:
        L = (ell + 2) // 2
        bounds.append(xs[-1] + 1.0)
        bounds.append(xs[-1] + 1.0)
    return BlockStructure(np.asarray(bounds), L)


def supports_separated(a: WeightedAtoms, b: WeightedAtoms) -> bool:
    """True iff the support of ``a`` lies (weakly) to the left of ``b``'s."""
    if a.size == 0 or b.size == 0:
        return True
    return float(np.max(a.positions)) <= float(np.min(b.positions))
