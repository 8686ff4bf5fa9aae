"""Measures and 1-D optimal transport, validated against an LP oracle."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from annihilate.dynamics import ParticleState, SimConfig, run
from annihilate.measures import (EmpiricalPair, WeightedAtoms,
                                 block_structure, coupling_bound, from_state,
                                 pair_distance_upper, supports_separated,
                                 wasserstein2)


def atoms(pos, w):
    return WeightedAtoms.of(np.asarray(pos, float), np.asarray(w, float))


def lp_transport_cost(a: WeightedAtoms, b: WeightedAtoms) -> float:
    """Independent oracle: the transport LP over all couplings."""
    na, nb = a.size, b.size
    C = (a.positions[:, None] - b.positions[None, :]) ** 2
    A_eq, b_eq = [], []
    for i in range(na):
        row = np.zeros(na * nb)
        row[i * nb:(i + 1) * nb] = 1.0
        A_eq.append(row)
        b_eq.append(a.weights[i])
    for j in range(nb):
        row = np.zeros(na * nb)
        row[j::nb] = 1.0
        A_eq.append(row)
        b_eq.append(b.weights[j])
    res = linprog(C.ravel(), A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                  bounds=(0, None), method="highs")
    assert res.success
    return math.sqrt(max(res.fun, 0.0))


def exhaustive_assignment_cost(a: WeightedAtoms, b: WeightedAtoms) -> float:
    """Second oracle for equal uniform weights: enumerate all assignments."""
    assert a.size == b.size
    w = a.weights[0]
    best = math.inf
    for perm in itertools.permutations(range(b.size)):
        cost = sum(w * (a.positions[i] - b.positions[j]) ** 2
                   for i, j in enumerate(perm))
        best = min(best, cost)
    return math.sqrt(best)


# ---------------------------------------------------------------------------
# wasserstein2
# ---------------------------------------------------------------------------

def test_w2_single_atoms():
    assert wasserstein2(atoms([0.0], [1.0]), atoms([1.0], [1.0])) == 1.0


def test_w2_two_atom_example():
    # monotone matching: cost 1/2 * 1 + 1/2 * 1 = 1 (verified by both oracles)
    a = atoms([0.0, 2.0], [0.5, 0.5])
    b = atoms([1.0, 3.0], [0.5, 0.5])
    d = wasserstein2(a, b)
    assert d == pytest.approx(1.0, abs=1e-14)
    assert d == pytest.approx(lp_transport_cost(a, b), abs=1e-10)
    assert d == pytest.approx(exhaustive_assignment_cost(a, b), abs=1e-12)


def test_w2_identity_and_mass_mismatch():
    a = atoms([0.0, 1.0, 5.0], [0.2, 0.3, 0.5])
    assert wasserstein2(a, a) == 0.0
    with pytest.raises(ValueError):
        wasserstein2(a, atoms([0.0], [0.9]))


def test_w2_unnormalized_convention():
    # masses enter as weights: W2(m d0, m d1) = sqrt(m)
    m = 0.5
    assert wasserstein2(atoms([0.0], [m]), atoms([1.0], [m])) == pytest.approx(math.sqrt(m))


def test_w2_merges_duplicates():
    a = atoms([0.0, 0.0, 1.0], [0.25, 0.25, 0.5])
    b = atoms([0.0, 1.0], [0.5, 0.5])
    assert wasserstein2(a, b) == 0.0


@pytest.mark.parametrize("trial", range(40))
def test_w2_matches_lp_oracle(trial):
    rng = np.random.default_rng(1000 + trial)
    na, nb = rng.integers(1, 7, size=2)
    a = atoms(rng.uniform(-5, 5, na), rng.uniform(0.1, 1.0, na))
    wb = rng.uniform(0.1, 1.0, nb)
    b = atoms(rng.uniform(-5, 5, nb), wb * (a.mass / wb.sum()))
    assert wasserstein2(a, b) == pytest.approx(lp_transport_cost(a, b), abs=1e-10)


positions_strategy = st.lists(
    st.floats(min_value=-3.0, max_value=3.0, allow_nan=False), min_size=1, max_size=5)


@settings(max_examples=80, deadline=None)
@given(pa=positions_strategy, pb=positions_strategy, pc=positions_strategy)
def test_w2_triangle_inequality(pa, pb, pc):
    mk = lambda p: atoms(p, np.full(len(p), 1.0 / len(p)))
    a, b, c = mk(pa), mk(pb), mk(pc)
    assert wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-10


@settings(max_examples=80, deadline=None)
@given(pa=positions_strategy, pb=positions_strategy, shift=st.floats(-2.0, 2.0))
def test_w2_nonneg_symmetric_translation_covariant(pa, pb, shift):
    mk = lambda p: atoms(p, np.full(len(p), 1.0 / len(p)))
    a, b = mk(pa), mk(pb)
    d = wasserstein2(a, b)
    assert d >= 0.0
    assert d == pytest.approx(wasserstein2(b, a), abs=1e-12)
    # translating both measures leaves the distance unchanged
    a2 = mk([p + shift for p in pa])
    b2 = mk([p + shift for p in pb])
    assert wasserstein2(a2, b2) == pytest.approx(d, abs=1e-9)


# ---------------------------------------------------------------------------
# pairs, coupling bound, from_state
# ---------------------------------------------------------------------------

def test_pair_distance_upper_examples():
    half0 = atoms([0.0], [0.5])
    half1 = atoms([1.0], [0.5])
    a = EmpiricalPair(half0, half0)
    b = EmpiricalPair(half1, half1)
    assert pair_distance_upper(a, a) == 0.0
    # each species costs W2^2 = 1/2, total 1, root 1 (unnormalised convention)
    assert pair_distance_upper(a, b) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        pair_distance_upper(a, EmpiricalPair(atoms([0.0], [0.25]), atoms([0.0], [0.75])))


def test_coupling_bound_examples():
    s = ParticleState.initial([0.0, 1.0, 2.0, 3.0], [1, 1, -1, -1])
    t = s.copy()
    assert coupling_bound(s, t) == 0.0
    t.x = t.x.copy()
    t.x[2] += 0.8
    assert coupling_bound(s, t) == pytest.approx(0.8 / 2.0)   # h / sqrt(n) = h/2


def test_pair_distance_below_coupling_bound(attract_pair, rng):
    st = ParticleState.initial(np.sort(rng.uniform(-1, 1, 12)),
                               rng.choice([-1, 1], 12))
    traj = run(st, attract_pair, SimConfig(T=0.5, tol_step=1e-9, eps_annihilate=1e-7))
    for _ in range(50):
        i, j = sorted(rng.integers(0, len(traj.states), 2))
        a = from_state(traj.states[i])[0]
        b = from_state(traj.states[j])[0]
        assert pair_distance_upper(a, b) <= coupling_bound(traj.states[i],
                                                           traj.states[j]) + 1e-12


def test_from_state_examples():
    st = ParticleState.initial([0.0, 1.0], [1, -1])
    pair, kappa, kp, km = from_state(st)
    assert pair.plus.positions.tolist() == [0.0] and pair.plus.weights.tolist() == [0.5]
    assert pair.minus.positions.tolist() == [1.0]
    assert kp.positions.tolist() == [0.0] and km.positions.tolist() == [1.0]
    assert pair.mass_plus == 0.5

    st.b[:] = 0   # after annihilation: species measures unchanged, parts empty
    pair2, kappa2, kp2, km2 = from_state(st)
    assert pair2.plus.positions.tolist() == [0.0]
    assert kp2.size == 0 and km2.size == 0
    assert kappa2.total_variation == 0.0

    st3 = ParticleState.initial([0.0, 1.0, 2.0], [1, 1, -1])
    assert from_state(st3)[0].mass_plus == pytest.approx(2.0 / 3.0)


def test_mass_conserved_and_kappa_decreasing(attract_pair):
    st = ParticleState.initial([-0.45, -0.2, 0.1, 0.5], [1, -1, 1, -1])
    traj = run(st, attract_pair, SimConfig(T=6.0, eps_annihilate=1e-8))
    assert len(traj.events) == 2
    m_plus = [from_state(s)[0].mass_plus for s in traj.states]
    assert all(m == 0.5 for m in m_plus)
    tv = [from_state(s)[1].total_variation for s in traj.states]
    assert all(b <= a + 1e-15 for a, b in zip(tv, tv[1:]))
    assert tv[-1] == 0.0


# ---------------------------------------------------------------------------
# block structure
# ---------------------------------------------------------------------------

def test_block_structure_example():
    st = ParticleState.initial([0.0, 1.0, 2.0], [1, 1, -1])
    bs = block_structure(st)
    assert bs.L == 1
    assert bs.boundaries.tolist() == [-1.0, 1.5, 3.0]


def test_block_structure_single_sign():
    st = ParticleState.initial([0.0, 1.0], [1, 1])
    assert block_structure(st).L == 1
    st2 = ParticleState.initial([0.0, 1.0], [-1, -1])
    assert block_structure(st2).L == 1


def test_block_structure_alternating():
    st = ParticleState.initial([0.0, 1.0, 2.0, 3.0], [1, -1, 1, -1])
    assert block_structure(st).L == 2


def test_block_structure_empty():
    st = ParticleState.initial([0.0, 1.0], [1, -1])
    st.b[:] = 0
    assert block_structure(st).L == 0


def minimal_L(signs):
    """Brute-force oracle: the alternating cover needs ceil(B/2) interval
    pairs when the first run is positive, ceil((B+1)/2) otherwise."""
    runs = [k for k, _ in itertools.groupby(signs)]
    B = len(runs)
    return (B + 1) // 2 if runs[0] == 1 else (B + 2) // 2


@settings(max_examples=120, deadline=None)
@given(signs=st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=10))
def test_block_structure_minimal(signs):
    state = ParticleState.initial(np.arange(len(signs), dtype=float), signs)
    bs = block_structure(state)
    assert bs.L == minimal_L(signs)
    # atoms land in their intervals: positives in odd ones, negatives in even
    for x, s in zip(state.x, signs):
        j = int(np.searchsorted(bs.boundaries, x, side="right"))
        assert 1 <= j <= 2 * bs.L
        assert (j % 2 == 1) == (s == 1)


def test_supports_separated():
    a = atoms([0.0, 1.0], [0.5, 0.5])
    b = atoms([2.0, 3.0], [0.5, 0.5])
    assert supports_separated(a, b)
    assert not supports_separated(b, a)
    touching = atoms([1.0, 2.0], [0.5, 0.5])
    assert supports_separated(a, touching)   # weak inequality
    overlapping = atoms([0.5, 3.0], [0.5, 0.5])
    assert not supports_separated(overlapping, a)
