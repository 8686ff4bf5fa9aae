"""Gradient-flow dynamics of signed particles on the line with annihilation.

The state is (x, b): positions and charges in {-1, 0, +1}.  Active particles
move by the pairwise force field (same sign through V, opposite through W,
both scaled by 1/n); when two adjacent particles of opposite charge come
within the collision threshold, both charges are set to zero and their
positions freeze forever.  Annihilated particles stay in the arrays: they
carry no interaction and no velocity, which keeps the bookkeeping of the
empirical measures exact.

Between events the flow is integrated with an embedded Dormand-Prince 5(4)
pair; event times are located by bisection on the integrator's dense
output, while the dissipation integral is accumulated with the integrator's
own stage quadrature everywhere, partial event steps included.  Systems of
up to a handful of particles run on a plain-float engine with identical
arithmetic, which keeps long stiff two-particle runs (tens of thousands of
steps) well under a second.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelPair

__all__ = [
    "ParticleState",
    "SimConfig",
    "AnnihilationEvent",
    "EventLog",
    "Trajectory",
    "StepUnderflowError",
    "energy",
    "velocity",
    "step",
    "detect_and_annihilate",
    "run",
    "moments",
]

_SMALL_N = 6  # particle counts up to this use the scalar engine


class StepUnderflowError(RuntimeError):
    """The adaptive step fell below ``dt_min``; carries a state dump."""

    def __init__(self, message: str, state: "ParticleState"):
        x = state.x
        head = np.array2string(x[:8], precision=17)
        super().__init__(
            f"{message} (t={state.t!r}, n={state.n}, active={state.active.size}, "
            f"x[:8]={head})"
        )
        self.state = state


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass
class ParticleState:
    """Positions, charges, and collision times of the n-particle system.

    ``b`` holds the current charges, ``b_init`` the initial ones (always
    +-1), and ``tau`` the collision time of each particle (+inf while
    alive).  The consistency rule is b_i = b_init_i while t < tau_i and
    b_i = 0 from tau_i on; a zero-charge particle keeps the position it had
    at tau_i, bitwise.
    """

    x: np.ndarray
    b: np.ndarray
    b_init: np.ndarray
    tau: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, positions, charges) -> "ParticleState":
        x = np.asarray(positions, dtype=float).copy()
        b = np.asarray(charges, dtype=np.int8).copy()
        if x.ndim != 1 or x.shape != b.shape:
            raise ValueError("positions and charges must be 1-D arrays of equal length")
        if not np.all(np.abs(b) == 1):
            raise ValueError("initial charges must all be +1 or -1")
        tau = np.full(x.shape, np.inf)
        return cls(x=x, b=b, b_init=b.copy(), tau=tau, t=0.0)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.b != 0)

    def copy(self) -> "ParticleState":
        return ParticleState(self.x.copy(), self.b.copy(), self.b_init.copy(),
                             self.tau.copy(), self.t)

    def charges_consistent(self) -> bool:
        """b equals b_init * H(tau - t) with H(0) = 0, H(+inf) = 1."""
        expected = np.where(self.tau > self.t, self.b_init, 0).astype(np.int8)
        return bool(np.array_equal(self.b, expected))


@dataclass(frozen=True)
class SimConfig:
    """Integration controls.

    ``tol_step`` is the relative local-error tolerance, ``atol`` the
    absolute floor of the error weights (0 gives pure relative control,
    which is what lets the solver track exponentially shrinking gaps).
    ``eps_annihilate`` is the collision threshold (0 studies the
    non-collision regime of a regular W); ``eps_bisect`` the event-location
    tolerance in time.  ``fixed_dt``, when set, switches to an open-loop
    fixed-step RK4 with no error control and no ordering guard: it exists
    for brute-force oracles and adversarial negative controls.
    """

    T: float
    dt_init: float = 1e-3
    dt_min: float = 1e-14
    tol_step: float = 1e-8
    atol: float = 0.0
    eps_annihilate: float = 1e-9
    eps_bisect: float = 1e-12
    record_every: int = 1
    fixed_dt: float | None = None
    fixed_method: str = "rk4"
    max_steps: int = 20_000_000

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not (0 < self.dt_min <= self.dt_init):
            raise ValueError("need 0 < dt_min <= dt_init")
        if not self.eps_bisect > 0:
            raise ValueError("eps_bisect must be positive")
        if self.eps_annihilate < 0:
            raise ValueError("eps_annihilate must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.fixed_method not in ("rk4", "euler"):
            raise ValueError("fixed_method must be 'rk4' or 'euler'")


@dataclass(frozen=True)
class AnnihilationEvent:
    """One collision time t_k with everything that annihilated there."""

    t: float
    indices: tuple[int, ...]               # all particles annihilated at t_k
    pairs: tuple[tuple[int, int], ...]     # (positive-initial index, negative)
    energy_before: float
    energy_after: float

    @property
    def gamma(self) -> int:
        return len(self.indices)

    @property
    def degenerate(self) -> bool:
        """A cluster collision: more than one pair resolved greedily."""
        return len(self.pairs) > 1


@dataclass
class EventLog:
    events: list[AnnihilationEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def times(self) -> list[float]:
        return [e.t for e in self.events]

    @property
    def total_annihilated(self) -> int:
        return sum(e.gamma for e in self.events)

    def validate(self, state: "ParticleState") -> None:
        """Assert the structural event-log invariants.

        Times strictly increase, every gamma_k is even, the pairings are a
        bijection matching positive-initial to negative-initial indices, the
        index sets are disjoint, and at most n particles (n/2 pairs) ever
        annihilate.
        """
        times = self.times
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise AssertionError("event times are not strictly increasing")
        seen: set[int] = set()
        for ev in self.events:
            if ev.gamma % 2 != 0:
                raise AssertionError(f"odd gamma at t={ev.t}")
            flat = [i for pq in ev.pairs for i in pq]
            if sorted(flat) != sorted(ev.indices):
                raise AssertionError("pairing does not cover the event's index set")
            for i_pos, j_neg in ev.pairs:
                if state.b_init[i_pos] != 1 or state.b_init[j_neg] != -1:
                    raise AssertionError("pairing does not match initial charges")
            if seen.intersection(ev.indices):
                raise AssertionError("particle annihilated twice")
            seen.update(ev.indices)
        if self.total_annihilated > state.n:
            raise AssertionError("more annihilated particles than particles")

    def as_json(self) -> list[dict]:
        return [
            {
                "t_k": ev.t,
                "Gamma_k": list(ev.indices),
                "pairs": [list(p) for p in ev.pairs],
                "energy_before": ev.energy_before,
                "energy_after": ev.energy_after,
                "degenerate": ev.degenerate,
            }
            for ev in self.events
        ]


# ---------------------------------------------------------------------------
# energy and forces (vectorised engine)
# ---------------------------------------------------------------------------

class _Forces:
    """Force/energy evaluator specialised to one charge configuration.

    Rebuilt after every annihilation event; between events the species
    partition is fixed, so the pairwise difference matrices are assembled
    with a fixed summation order and runs stay bit-reproducible.
    """

    def __init__(self, b: np.ndarray, pair: KernelPair):
        self.pair = pair
        self.n = b.size
        self.ip = np.flatnonzero(b == 1)
        self.im = np.flatnonzero(b == -1)
        self.act = np.flatnonzero(b != 0)
        ba = b[self.act]
        self.opp_adjacent = (ba[:-1] * ba[1:] == -1) if self.act.size > 1 else np.zeros(0, bool)
        self.has_opp = bool(self.opp_adjacent.any())

    def _vprime_same(self, xs: np.ndarray) -> np.ndarray:
        """Row sums of V'(x_i - x_j) over one species, self term zero."""
        D = xs[:, None] - xs[None, :]
        V = self.pair.V
        if V.family == "log":
            # diagonal -> inf so that -1/D lands exactly on the V'(0) = 0
            # convention; an off-diagonal coincidence yields +-inf and the
            # step is rejected by the error/ordering guards.
            np.fill_diagonal(D, math.inf)
            np.divide(-1.0, D, out=D)
            return D.sum(axis=1)
        from .kernels import eval_prime
        return eval_prime(V, D).sum(axis=1)

    def _wprime(self, D: np.ndarray) -> np.ndarray:
        W = self.pair.W
        if W.family == "reglog":
            return D / (D * D + W.delta**2)
        from .kernels import eval_prime
        return eval_prime(W, D)

    def velocity(self, x: np.ndarray) -> np.ndarray:
        v = np.zeros_like(x)
        ip, im = self.ip, self.im
        acc_p = self._vprime_same(x[ip]) if ip.size > 1 else np.zeros(ip.size)
        acc_m = self._vprime_same(x[im]) if im.size > 1 else np.zeros(im.size)
        if ip.size and im.size and self.pair.W.family != "zero":
            Wp = self._wprime(x[ip][:, None] - x[im][None, :])
            acc_p = acc_p + Wp.sum(axis=1)
            acc_m = acc_m - Wp.sum(axis=0)   # W' is odd
        v[ip] = acc_p
        v[im] = acc_m
        v *= -1.0 / self.n
        return v

    def same_sign_coincident(self, x: np.ndarray) -> bool:
        for idx in (self.ip, self.im):
            if idx.size > 1:
                xs = np.sort(x[idx])
                if np.any(np.diff(xs) == 0.0):
                    return True
        return False

    def energy(self, x: np.ndarray) -> float:
        if self.same_sign_coincident(x):
            return math.inf
        from .kernels import eval_kernel
        E = 0.0
        for idx in (self.ip, self.im):
            if idx.size > 1:
                xs = x[idx]
                D = xs[:, None] - xs[None, :]
                np.fill_diagonal(D, 1.0)           # V(1) added k times, removed below
                E += float(np.sum(eval_kernel(self.pair.V, D))) \
                    - idx.size * eval_kernel(self.pair.V, 1.0)
        if self.ip.size and self.im.size and self.pair.W.family != "zero":
            from .kernels import eval_kernel as ek
            D = x[self.ip][:, None] - x[self.im][None, :]
            E += 2.0 * float(np.sum(ek(self.pair.W, D)))
        return E / (2.0 * self.n**2)

    def order_ok(self, x: np.ndarray) -> bool:
        for idx in (self.ip, self.im):
            if idx.size > 1 and not np.all(np.diff(x[idx]) > 0.0):
                return False
        return True

    def gap_guard(self, x: np.ndarray, factor: float = 0.05) -> float:
        """Step cap c * n * g_min^2 / ||rV'|| from the smallest same-sign gap.

        The partner-induced gap velocity is at most 2|V'(g)|/n <= 2B/(n g),
        so this cap keeps one step from moving a tight pair by more than a
        fixed fraction of its own gap.
        """
        g = math.inf
        for idx in (self.ip, self.im):
            if idx.size > 1:
                g = min(g, float(np.min(np.diff(x[idx]))))
        if not math.isfinite(g) or self.pair.bound_rVprime == 0.0:
            return math.inf
        return factor * self.n * g * g / self.pair.bound_rVprime

    def trigger(self, x: np.ndarray, eps: float) -> bool:
        """Any adjacent opposite-sign active pair with gap <= eps (or crossed)."""
        if not self.has_opp:
            return False
        gaps = np.diff(x[self.act])
        return bool(np.any(gaps[self.opp_adjacent] <= eps))


# ---------------------------------------------------------------------------
# scalar engine for small systems (identical arithmetic, no array overhead)
# ---------------------------------------------------------------------------

class _ForcesSmall:
    """Plain-float twin of :class:`_Forces` for n <= _SMALL_N particles."""

    def __init__(self, b: np.ndarray, pair: KernelPair):
        self.pair = pair
        self.n = b.size
        self.ip = [int(i) for i in np.flatnonzero(b == 1)]
        self.im = [int(i) for i in np.flatnonzero(b == -1)]
        self.act = [int(i) for i in np.flatnonzero(b != 0)]
        bl = [int(v) for v in b]
        self.opp_adjacent = [bl[a] * bl[c] == -1
                             for a, c in zip(self.act, self.act[1:])]
        self.has_opp = any(self.opp_adjacent)
        self.w_family = pair.W.family
        self.d2 = pair.W.delta**2 if pair.W.family == "reglog" else 0.0
        self.v_family = pair.V.family

    def _vp(self, r: float) -> float:
        if r == 0.0:
            return 0.0
        if self.v_family == "log":
            return -1.0 / r
        s = math.sinh(abs(r))                      # wall
        out = -4.0 * abs(r) * math.exp(-2.0 * abs(r)) if abs(r) > 20.0 else -abs(r) / (s * s)
        return out if r > 0 else -out

    def _wp(self, r: float) -> float:
        if self.w_family == "zero":
            return 0.0
        return r / (r * r + self.d2)

    def velocity(self, x: list[float]) -> list[float]:
        v = [0.0] * self.n
        for grp in (self.ip, self.im):
            for i in grp:
                s = 0.0
                xi = x[i]
                for j in grp:
                    if j != i:
                        s += self._vp(xi - x[j])
                v[i] = s
        if self.ip and self.im:
            for i in self.ip:
                xi = x[i]
                s = v[i]
                for j in self.im:
                    s += self._wp(xi - x[j])
                v[i] = s
            for j in self.im:
                xj = x[j]
                s = v[j]
                for i in self.ip:
                    s += self._wp(xj - x[i])
                v[j] = s
        inv = -1.0 / self.n
        return [inv * vi for vi in v]

    def order_ok(self, x: list[float]) -> bool:
        for grp in (self.ip, self.im):
            for a, c in zip(grp, grp[1:]):
                if not x[c] - x[a] > 0.0:
                    return False
        return True

    def gap_guard(self, x: list[float], factor: float = 0.05) -> float:
        g = math.inf
        for grp in (self.ip, self.im):
            for a, c in zip(grp, grp[1:]):
                g = min(g, x[c] - x[a])
        if not math.isfinite(g) or self.pair.bound_rVprime == 0.0:
            return math.inf
        return factor * self.n * g * g / self.pair.bound_rVprime

    def trigger(self, x: list[float], eps: float) -> bool:
        if not self.has_opp:
            return False
        for (a, c), opp in zip(zip(self.act, self.act[1:]), self.opp_adjacent):
            if opp and x[c] - x[a] <= eps:
                return True
        return False


def energy(state: ParticleState, pair: KernelPair) -> float:
    """Total interaction energy; +inf iff two same-sign active particles
    coincide."""
    return _Forces(state.b, pair).energy(state.x)


def velocity(state: ParticleState, pair: KernelPair) -> np.ndarray:
    """Velocity field of the flow; zero for annihilated particles.

    Raises if the energy is infinite (same-sign coincidence), where the
    force is undefined.
    """
    f = _Forces(state.b, pair)
    if f.same_sign_coincident(state.x):
        raise ValueError("infinite energy: same-sign particles coincide")
    return f.velocity(state.x)


def moments(state: ParticleState, k: int) -> float:
    """k-th absolute moment (1/n) sum |x_i|^k over all particles, including
    annihilated ones."""
    if k < 1:
        raise ValueError("moment order must be >= 1")
    return float(np.mean(np.abs(state.x) ** k))


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) pair with dense output
# ---------------------------------------------------------------------------

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)
_DP_E = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))
_DP_B5_ARR = np.array(_DP_B5)
_DP_E_ARR = np.array(_DP_E)
# Dense-output polynomial: x(t + th*h) = x + h * sum_i K_i * sum_m P[i,m] th^(m+1)
_DP_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class _Dopri5Step:
    """One trial step: solution, error vector, stage dissipation, dense output."""

    __slots__ = ("x_new", "err_vec", "diss", "k_last", "K", "h", "x0")

    def __init__(self, forces, x: np.ndarray, h: float, k1: np.ndarray | None):
        K = [forces.velocity(x) if k1 is None else k1]
        for row in _DP_A[1:]:
            xi = x + h * sum(a * k for a, k in zip(row, K))
            K.append(forces.velocity(xi))
        x5 = x + h * sum(b * k for b, k in zip(_DP_B5[:6], K))
        K.append(forces.velocity(x5))
        Karr = np.array(K)
        self.x_new = x5
        self.err_vec = h * (_DP_E_ARR @ Karr)
        # (1/n) integral of |xdot|^2 over the step, by the propagating weights.
        self.diss = h * float(_DP_B5_ARR[:6] @ (Karr[:6] ** 2).sum(axis=1)) / forces.n
        self.k_last = Karr[6]
        self.K = Karr
        self.h = h
        self.x0 = x

    def dense(self, theta: float) -> np.ndarray:
        powers = np.array([theta, theta**2, theta**3, theta**4])
        return self.x0 + self.h * ((_DP_P @ powers) @ self.K)


class _Dopri5StepSmall:
    """Scalar twin of :class:`_Dopri5Step` on plain float lists."""

    __slots__ = ("x_new", "err_vec", "diss", "k_last", "K", "h", "x0")

    def __init__(self, forces: _ForcesSmall, x: list[float], h: float,
                 k1: list[float] | None):
        n = len(x)
        rng = range(n)
        K = [forces.velocity(x) if k1 is None else k1]
        for row in _DP_A[1:]:
            xi = [x[i] + h * sum(a * K[m][i] for m, a in enumerate(row)) for i in rng]
            K.append(forces.velocity(xi))
        x5 = [x[i] + h * (_DP_B5[0] * K[0][i] + _DP_B5[2] * K[2][i]
                          + _DP_B5[3] * K[3][i] + _DP_B5[4] * K[4][i]
                          + _DP_B5[5] * K[5][i]) for i in rng]
        K.append(forces.velocity(x5))
        self.x_new = x5
        self.err_vec = [h * sum(_DP_E[m] * K[m][i] for m in range(7)) for i in rng]
        self.diss = h * sum(_DP_B5[m] * sum(k * k for k in K[m]) for m in range(6)) / forces.n
        self.k_last = K[6]
        self.K = K
        self.h = h
        self.x0 = x

    def dense(self, theta: float) -> list[float]:
        w = [sum(_DP_P[m, p] * theta ** (p + 1) for p in range(4)) for m in range(7)]
        return [self.x0[i] + self.h * sum(w[m] * self.K[m][i] for m in range(7))
                for i in range(len(self.x0))]


def _error_norm(err_vec, x_old, x_new, rtol, atol) -> float:
    # The step displacement enters the scale so that a particle passing
    # through the origin keeps a finite error weight under pure relative
    # control; for a particle whose position itself decays, the displacement
    # is a small fraction of |x| and relative control is unaffected.
    if isinstance(err_vec, np.ndarray):
        scale = atol + rtol * np.maximum(np.maximum(np.abs(x_old), np.abs(x_new)),
                                         np.abs(x_new - x_old))
        ok = scale > 0.0
        if not ok.all() and np.any(err_vec[~ok] != 0.0):
            return math.inf
        ratio = np.zeros_like(err_vec)
        np.divide(err_vec, scale, out=ratio, where=ok)
        return float(np.sqrt(np.mean(ratio * ratio)))
    acc = 0.0
    for e, a, b in zip(err_vec, x_old, x_new):
        scale = atol + rtol * max(abs(a), abs(b), abs(b - a))
        if scale == 0.0:
            if e != 0.0:
                return math.inf
            continue
        r = e / scale
        acc += r * r
    return math.sqrt(acc / len(err_vec))


def _rk4_trial(forces, x, h: float):
    """Fixed-step classic RK4 with Simpson-weight dissipation quadrature."""
    plus = _axpy_factory(x)
    k1 = forces.velocity(x)
    k2 = forces.velocity(plus(x, 0.5 * h, k1))
    k3 = forces.velocity(plus(x, 0.5 * h, k2))
    k4 = forces.velocity(plus(x, h, k3))
    if isinstance(x, np.ndarray):
        x_new = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        sq = [float(k @ k) for k in (k1, k2, k3, k4)]
    else:
        x_new = [x[i] + (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
                 for i in range(len(x))]
        sq = [sum(v * v for v in k) for k in (k1, k2, k3, k4)]
    diss = (h / 6.0) * (sq[0] + 2 * sq[1] + 2 * sq[2] + sq[3]) / forces.n
    return x_new, diss


def _euler_trial(forces, x, h: float):
    """Fixed-step forward Euler (adversarial/open-loop use only)."""
    k1 = forces.velocity(x)
    if isinstance(x, np.ndarray):
        x_new = x + h * k1
        diss = h * float(k1 @ k1) / forces.n
    else:
        x_new = [x[i] + h * k1[i] for i in range(len(x))]
        diss = h * sum(v * v for v in k1) / forces.n
    return x_new, diss


def _axpy_factory(x):
    if isinstance(x, np.ndarray):
        return lambda x0, c, k: x0 + c * k
    return lambda x0, c, k: [x0[i] + c * k[i] for i in range(len(x0))]


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

def _greedy_annihilate(x, b, b_init, tau, t, eps):
    """Zero all within-threshold opposite adjacent pairs, greedily from the
    left, repeating until no trigger remains (annihilation of a cluster can
    create new adjacencies).  Mutates b and tau; returns the pair list."""
    pairs: list[tuple[int, int]] = []
    changed = True
    while changed:
        changed = False
        act = np.flatnonzero(b != 0)
        i = 0
        while i < act.size - 1:
            a, c = int(act[i]), int(act[i + 1])
            if b[a] * b[c] == -1 and x[c] - x[a] <= eps:
                b[a] = 0
                b[c] = 0
                tau[a] = t
                tau[c] = t
                pairs.append((a, c) if b_init[a] == 1 else (c, a))
                changed = True
                i += 2
            else:
                i += 1
    return pairs


def _make_event(state: ParticleState, pair: KernelPair, eps: float) -> AnnihilationEvent | None:
    """Apply the annihilation rule to ``state`` in place at its current time."""
    e_before = energy(state, pair)
    pairs = _greedy_annihilate(state.x, state.b, state.b_init, state.tau, state.t, eps)
    if not pairs:
        return None
    indices = tuple(sorted(i for pq in pairs for i in pq))
    e_after = energy(state, pair)
    return AnnihilationEvent(t=state.t, indices=indices, pairs=tuple(pairs),
                             energy_before=e_before, energy_after=e_after)


def _locate_event(forces, state: ParticleState, trial, config: SimConfig):
    """Bisect the earliest trigger time inside an accepted step.

    Bisection runs on the step's dense output, and the event state is the
    dense interpolant at the located time, so the trigger is guaranteed to
    hold there (a recomputed sub-step could land a hair outside the
    threshold and stall the run).  The dissipation increment does come from
    a genuine sub-step of the same length, keeping the quadrature on the
    integrator's own stages.  Returns (event_state, dissipation_increment).
    """
    eps = config.eps_annihilate
    h = trial.h
    lo, hi = 0.0, 1.0
    tol = max(config.eps_bisect / h, 1e-15)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if forces.trigger(trial.dense(mid), eps):
            hi = mid
        else:
            lo = mid
    h_star = hi * h
    cls = _Dopri5StepSmall if isinstance(forces, _ForcesSmall) else _Dopri5Step
    sub = cls(forces, trial.x0, h_star, trial.K[0])
    out = state.copy()
    out.x = np.asarray(trial.dense(hi), dtype=float)
    out.t = state.t + h_star
    return out, sub.diss


def detect_and_annihilate(state_before: ParticleState, state_after: ParticleState,
                          pair: KernelPair, config: SimConfig):
    """Locate and apply annihilations inside one accepted step.

    Returns ``(event_state, events)``: the state at the bisected event time
    with charges zeroed and positions frozen, or ``(None, [])`` when no
    opposite-sign adjacent pair reached the threshold during the step.
    """
    forces = _Forces(state_before.b, pair)
    h = state_after.t - state_before.t
    if h <= 0:
        raise ValueError("state_after must be later than state_before")
    if not forces.trigger(state_after.x, config.eps_annihilate):
        return None, []
    trial = _Dopri5Step(forces, state_before.x, h, None)
    ev_state, _ = _locate_event(forces, state_before, trial, config)
    event = _make_event(ev_state, pair, config.eps_annihilate)
    return ev_state, ([event] if event else [])


# ---------------------------------------------------------------------------
# trajectory container and driver
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Recorded samples of one run.

    ``times``/``states``/``energies``/``dissipation`` are aligned:
    ``dissipation[m]`` is the cumulative (1/n) integral of |xdot|^2 up to
    ``times[m]``, accumulated with the integrator's own stage quadrature.
    Samples at event times hold the post-event state; the pre-event energy
    lives in the event record.
    """

    times: np.ndarray
    states: list[ParticleState]
    events: EventLog
    energies: np.ndarray
    dissipation: np.ndarray
    pair: KernelPair
    config: SimConfig

    @property
    def samples(self) -> list[tuple[float, ParticleState]]:
        return list(zip(self.times.tolist(), self.states))

    @property
    def energy_trace(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.energies.tolist()))

    @property
    def dissipation_integral(self) -> float:
        return float(self.dissipation[-1])

    @property
    def n(self) -> int:
        return self.states[0].n

    def state_at(self, t: float) -> ParticleState:
        """Recorded state at sample time t (must be one of ``times``)."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"{t} is not a recorded sample time")
        return self.states[idx]

    def event_index(self) -> dict[float, AnnihilationEvent]:
        return {ev.t: ev for ev in self.events}

    def to_csv(self, path) -> None:
        """Columns: t, x_1..x_n, b_1..b_n, E_n, M2, M4."""
        n = self.n
        with open(path, "w", encoding="utf-8", newline="") as fh:
            cols = (["t"] + [f"x_{i+1}" for i in range(n)]
                    + [f"b_{i+1}" for i in range(n)] + ["E_n", "M2", "M4"])
            fh.write(",".join(cols) + "\n")
            for t, st, E in zip(self.times, self.states, self.energies):
                row = [repr(float(t))]
                row += [repr(float(v)) for v in st.x]
                row += [str(int(v)) for v in st.b]
                row += [repr(float(E)), repr(moments(st, 2)), repr(moments(st, 4))]
                fh.write(",".join(row) + "\n")

    def events_to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.events.as_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def step(state: ParticleState, pair: KernelPair, config: SimConfig,
         dt: float | None = None):
    """One accepted adaptive step (no event handling).

    Shrinks the trial step until the local error passes tolerance and the
    same-sign ordering is preserved; returns ``(new_state, dt_used,
    local_error_estimate)``.  Raises :class:`StepUnderflowError` if that
    requires a step below ``dt_min``.
    """
    forces = _Forces(state.b, pair)
    if forces.same_sign_coincident(state.x):
        raise ValueError("infinite energy: same-sign particles coincide")
    h = min(dt if dt is not None else config.dt_init,
            forces.gap_guard(state.x), config.T - state.t)
    if h <= 0:
        raise ValueError("no time left to integrate")
    while True:
        if h < config.dt_min:
            raise StepUnderflowError("step size underflow", state)
        trial = _Dopri5Step(forces, state.x, h, None)
        err = _error_norm(trial.err_vec, state.x, trial.x_new, config.tol_step, config.atol)
        if err > 1.0:
            h *= max(0.1, 0.9 * err ** -0.2)
            continue
        if not forces.order_ok(trial.x_new):
            h *= 0.5
            continue
        out = state.copy()
        out.x = trial.x_new
        out.t = state.t + h
        return out, h, err


def run(initial: ParticleState, pair: KernelPair, config: SimConfig,
        checkpoints=()) -> Trajectory:
    """Integrate to the horizon, applying the annihilation rule at events.

    ``checkpoints`` are times the integrator lands on exactly (and records),
    so different runs can be compared at identical instants.  Samples are
    recorded at every ``record_every``-th accepted step, at every checkpoint
    and event, and at 0 and T.
    """
    if not np.all(np.abs(initial.b) == 1):
        raise ValueError("run() expects all initial charges +-1")
    if not np.all(np.diff(initial.x) > 0):
        raise ValueError("initial positions must be strictly increasing")
    state = initial.copy()
    state.t = 0.0
    T = config.T
    targets = sorted({float(c) for c in checkpoints if 0.0 < float(c) <= T} | {T})
    small = state.n <= _SMALL_N

    def make_forces():
        return _ForcesSmall(state.b, pair) if small else _Forces(state.b, pair)

    def as_engine(xarr):
        return [float(v) for v in xarr] if small else xarr

    log = EventLog()
    forces = make_forces()
    nforces = _Forces(state.b, pair)    # numpy twin, used for energies

    # A pair already inside the threshold at t = 0 annihilates immediately.
    if forces.trigger(as_engine(state.x), config.eps_annihilate):
        event = _make_event(state, pair, config.eps_annihilate)
        if event is not None:
            log.events.append(event)
            forces = make_forces()
            nforces = _Forces(state.b, pair)

    times = [0.0]
    states = [state.copy()]
    energies = [nforces.energy(state.x)]
    diss = [0.0]
    d_cum = 0.0

    def record():
        times.append(state.t)
        states.append(state.copy())
        energies.append(nforces.energy(state.x))
        diss.append(d_cum)

    fixed = config.fixed_dt is not None
    dt = config.dt_init
    x = as_engine(state.x)
    k1 = None
    tiny = 1e-14 * max(1.0, T)
    stepper = _Dopri5StepSmall if small else _Dopri5Step
    steps = accepted = 0

    while state.t < T - tiny:
        steps += 1
        if steps > config.max_steps:
            raise RuntimeError(f"exceeded max_steps={config.max_steps} at t={state.t}")
        idx = np.searchsorted(targets, state.t + tiny)
        next_target = targets[min(idx, len(targets) - 1)]
        budget = next_target - state.t

        if fixed:
            h = min(config.fixed_dt, budget)
            trial_fn = _euler_trial if config.fixed_method == "euler" else _rk4_trial
            x_new, d_inc = trial_fn(forces, x, h)
            k_next = None
            trial = None
        else:
            h_ctrl = min(dt, forces.gap_guard(x))
            if h_ctrl < config.dt_min:
                raise StepUnderflowError("step size underflow", state)
            h = min(h_ctrl, budget)
            trial = stepper(forces, x, h, k1)
            err = _error_norm(trial.err_vec, x, trial.x_new,
                              config.tol_step, config.atol)
            if err > 1.0:
                dt = h * max(0.1, 0.9 * err ** -0.2)
                if dt < config.dt_min:
                    raise StepUnderflowError("local error cannot be met", state)
                continue
            if not forces.order_ok(trial.x_new):
                dt = 0.5 * h
                if dt < config.dt_min:
                    raise StepUnderflowError("ordering cannot be preserved", state)
                continue
            x_new, d_inc, k_next = trial.x_new, trial.diss, trial.k_last
            dt = h * (5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2)))

        if forces.trigger(x_new, config.eps_annihilate):
            if trial is None:
                trial = stepper(forces, x, h, None)
            ev_state, d_inc = _locate_event(forces, state, trial, config)
            d_cum += d_inc
            state = ev_state
            event = _make_event(state, pair, config.eps_annihilate)
            if event is not None:
                log.events.append(event)
                forces = make_forces()
                nforces = _Forces(state.b, pair)
                dt = config.dt_init        # the field is discontinuous: restart
            x = as_engine(state.x)
            k1 = None
            record()
            continue

        t_new = state.t + h
        if abs(t_new - next_target) < tiny:
            t_new = next_target
        state.t = t_new
        x = x_new
        state.x = np.asarray(x, dtype=float) if small else x_new
        d_cum += d_inc
        k1 = k_next
        accepted += 1
        if accepted % config.record_every == 0 or t_new == next_target:
            record()

    if times[-1] != state.t:
        record()

    return Trajectory(
        times=np.asarray(times),
        states=states,
        events=log,
        energies=np.asarray(energies),
        dissipation=np.asarray(diss),
        pair=pair,
        config=config,
    )
