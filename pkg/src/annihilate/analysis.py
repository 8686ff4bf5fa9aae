"""Automated checks of the discrete theory and the continuum-limit study.

Every estimate the dynamics is supposed to satisfy becomes a
:class:`CheckReport`: a named inequality with the measured value, the bound
it must stay under, and the slack between them.  Constants are assembled
from the kernel bounds the way the estimates derive them (they are reported,
not certified: the theory never names its constants).  The convergence
study runs the same block scenario at a ladder of particle counts and
reports the uniform-in-time transport distance between consecutive
resolutions, optionally also against the finite-volume reference.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .continuum import run_continuum, to_measure
from .dynamics import ParticleState, Trajectory, moments, run
from .kernels import KernelPair
from .measures import (EmpiricalPair, block_structure, coupling_bound,
                       from_state, pair_distance_upper)
from .scenario import Scenario

__all__ = [
    "CheckReport",
    "ConvergenceRow",
    "ConvergenceTable",
    "BumpTestFunction",
    "default_test_functions",
    "check_energy_monotone",
    "check_edi",
    "check_moments",
    "check_metric_bound",
    "check_block_monotone",
    "weak_form_residual",
    "weak_form_residuals",
    "standard_checks",
    "convergence_study",
    "annihilated_mass",
    "edi_constant",
]


@dataclass(frozen=True)
class CheckReport:
    """One verified inequality: pass iff measured <= bound + tolerance."""

    name: str
    measured: float
    bound: float
    tolerance: float = 0.0
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "measured", float(self.measured))
        object.__setattr__(self, "bound", float(self.bound))
        object.__setattr__(self, "tolerance", float(self.tolerance))

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return bool(self.slack >= -self.tolerance)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "bound": self.bound,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "context": self.context,
        }


# ---------------------------------------------------------------------------
# inequality checks along one trajectory
# ---------------------------------------------------------------------------

def check_energy_monotone(traj: Trajectory, tol: float | None = None,
                          context: dict | None = None) -> CheckReport:
    """Energy may not increase between collision events.

    Compares consecutive recorded energies inside each smooth segment; at an
    event time the left comparison uses the pre-event energy stored in the
    event record, so the (legitimately signed) collision jump is excluded.
    """
    tol = 10.0 * traj.config.tol_step if tol is None else tol
    ev_at = traj.event_index()
    worst = -math.inf
    for m in range(len(traj.times) - 1):
        t_right = traj.times[m + 1]
        e_left = traj.energies[m]
        if traj.times[m] in ev_at:
            e_left = ev_at[traj.times[m]].energy_after
        e_right = ev_at[t_right].energy_before if t_right in ev_at else traj.energies[m + 1]
        worst = max(worst, e_right - e_left)
    return CheckReport("energy_monotone", measured=worst, bound=tol,
                       context={"samples": len(traj.times), **(context or {})})


def edi_constant(pair: KernelPair) -> float:
    """Constant of the energy-dissipation bound, assembled from the kernel
    bounds.

    A single annihilation at position y can raise the energy by at most
    (1/n^2) [sum_j |b_j| C_quad (x_j - y)^2 + |W(0)|]; summing over at most
    n/2 pairs and bounding the second moments by their drift estimate gives
    a total jump budget C (T + M2(0) + 1) with
    C = max(2 C_quad max(1, C_2), |W(0)|/2), C_2 = 2(||rV'|| + ||rW'||).
    """
    c2 = 2.0 * (pair.bound_rVprime + pair.bound_rWprime)
    return max(2.0 * pair.quad_lower_const * max(1.0, c2), abs(pair.bound_W0) / 2.0)


def check_edi(traj: Trajectory, context: dict | None = None) -> CheckReport:
    """Energy-dissipation inequality:
    E(T) - E(0) + (1/n) int |xdot|^2 <= C (T + M2(0) + 1)."""
    measured = float(traj.energies[-1] - traj.energies[0] + traj.dissipation[-1])
    m2_0 = moments(traj.states[0], 2)
    T = float(traj.times[-1])
    C = edi_constant(traj.pair)
    bound = C * (T + m2_0 + 1.0)
    return CheckReport("energy_dissipation", measured=measured, bound=bound,
                       tolerance=10.0 * traj.config.tol_step + 1e-12,
                       context={"C": C, "M2_0": m2_0, "T": T,
                                "dissipation": traj.dissipation_integral,
                                **(context or {})})


def check_moments(traj: Trajectory, context: dict | None = None) -> list[CheckReport]:
    """Moment drift: M2(t) <= M2(0) + C2 t with C2 = 2(||rV'|| + ||rW'||),
    and M4(t) <= M4(0) + 6B t (M2(0) + B t) with B = ||rV'|| + ||rW'||."""
    B = traj.pair.bound_rVprime + traj.pair.bound_rWprime
    c2 = 2.0 * B
    m2_0 = moments(traj.states[0], 2)
    m4_0 = moments(traj.states[0], 4)
    viol2 = viol4 = -math.inf
    for t, st in zip(traj.times.tolist(), traj.states):
        viol2 = max(viol2, moments(st, 2) - (m2_0 + c2 * t))
        viol4 = max(viol4, moments(st, 4) - (m4_0 + 6.0 * B * t * (m2_0 + B * t)))
    ctx = {"C2": c2, "B": B, "M2_0": m2_0, "M4_0": m4_0, **(context or {})}
    return [
        CheckReport("moment_drift_m2", measured=viol2, bound=0.0, tolerance=1e-8, context=ctx),
        CheckReport("moment_drift_m4", measured=viol4, bound=0.0, tolerance=1e-8, context=ctx),
    ]


def check_metric_bound(traj: Trajectory, n_pairs: int = 100, seed: int = 0,
                       context: dict | None = None) -> CheckReport:
    """Transport-metric chain on random sample-time pairs (s, t):
    pair_distance^2 <= coupling_bound^2 <= (t - s) * dissipation(s, t)."""
    rng = np.random.default_rng(seed)
    m = len(traj.times)
    pairs_cache: dict[int, EmpiricalPair] = {}

    def emp(i: int) -> EmpiricalPair:
        if i not in pairs_cache:
            pairs_cache[i] = from_state(traj.states[i])[0]
        return pairs_cache[i]

    worst = -math.inf
    for _ in range(n_pairs):
        i, j = sorted(rng.integers(0, m, size=2).tolist())
        if i == j:
            continue
        d_upper = pair_distance_upper(emp(i), emp(j))
        cb = coupling_bound(traj.states[i], traj.states[j])
        budget = (traj.times[j] - traj.times[i]) * (traj.dissipation[j] - traj.dissipation[i])
        worst = max(worst, d_upper**2 - cb**2, cb**2 - budget)
    return CheckReport("metric_bound_chain", measured=worst, bound=0.0, tolerance=1e-8,
                       context={"n_pairs": n_pairs, "seed": seed, **(context or {})})


def check_block_monotone(traj: Trajectory, context: dict | None = None) -> CheckReport:
    """The alternating-block count L_t never increases (exact integers)."""
    Ls = [block_structure(st).L for st in traj.states]
    worst = max((b - a for a, b in zip(Ls, Ls[1:])), default=0)
    return CheckReport("block_count_monotone", measured=float(worst), bound=0.0,
                       context={"L_initial": Ls[0] if Ls else 0,
                                "L_final": Ls[-1] if Ls else 0, **(context or {})})


def standard_checks(traj: Trajectory, seed: int = 0, context: dict | None = None) -> list[CheckReport]:
    """The full per-trajectory battery."""
    out = [check_energy_monotone(traj, context=context),
           check_edi(traj, context=context)]
    out += check_moments(traj, context=context)
    out.append(check_metric_bound(traj, seed=seed, context=context))
    out.append(check_block_monotone(traj, context=context))
    return out


# ---------------------------------------------------------------------------
# weak-form residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpTestFunction:
    """phi(t, x) = eta(t) * x^degree * bump((x - center)/width).

    ``eta`` is a smooth bump supported on (t0, t1), so phi is compactly
    supported in time and space with analytic time and space derivatives:
    no numerical differentiation enters the residual.
    """

    name: str
    t0: float
    t1: float
    center: float
    width: float
    degree: int = 0

    @staticmethod
    def _bump(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
        return out

    @staticmethod
    def _bump_prime(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        d = 1.0 - ui * ui
        out[inside] = np.exp(-1.0 / d) * (-2.0 * ui / (d * d))
        return out

    def _eta(self, t: float) -> float:
        mid, half = 0.5 * (self.t0 + self.t1), 0.5 * (self.t1 - self.t0)
        return float(self._bump(np.array((t - mid) / half)))

    def _eta_dt(self, t: float) -> float:
        mid, half = 0.5 * (self.t0 + self.t1), 0.5 * (self.t1 - self.t0)
        return float(self._bump_prime(np.array((t - mid) / half))) / half

    def _psi(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.width
        return np.asarray(x, dtype=float) ** self.degree * self._bump(u)

    def _psi_dx(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.width
        b, bp = self._bump(u), self._bump_prime(u) / self.width
        if self.degree == 0:
            return bp
        return self.degree * x ** (self.degree - 1) * b + x**self.degree * bp

    def value(self, t: float, x):
        return self._eta(t) * self._psi(x)

    def dt(self, t: float, x):
        return self._eta_dt(t) * self._psi(x)

    def dx(self, t: float, x):
        return self._eta(t) * self._psi_dx(x)

    # The product structure eta(t) psi(x) is exposed so the residual can
    # integrate the time-derivative term exactly (it telescopes in eta).
    def time_factor(self, t: float) -> float:
        return self._eta(t)

    def space_value(self, x):
        return self._psi(x)

    def space_dx(self, x):
        return self._psi_dx(x)


def default_test_functions(T: float, x_lo: float, x_hi: float) -> list[BumpTestFunction]:
    """Five bump test functions spanning the run's time and space extent."""
    c = 0.5 * (x_lo + x_hi)
    w = 0.6 * (x_hi - x_lo)
    return [
        BumpTestFunction("const_bump", 0.05 * T, 0.95 * T, c, w, degree=0),
        BumpTestFunction("linear_bump", 0.05 * T, 0.95 * T, c, w, degree=1),
        BumpTestFunction("quadratic_bump", 0.10 * T, 0.90 * T, c, 0.8 * w, degree=2),
        BumpTestFunction("left_window", 0.05 * T, 0.70 * T, c - 0.25 * w, 0.7 * w, degree=1),
        BumpTestFunction("late_window", 0.30 * T, 0.95 * T, c + 0.25 * w, 0.7 * w, degree=0),
    ]


def _space_terms(phi: BumpTestFunction, st: ParticleState, pair: KernelPair,
                 sign: int) -> tuple[float, float]:
    """Spatial parts of the weak form at one sample: the species mean of psi
    and the force bracket against psi'."""
    from .kernels import eval_prime

    n = st.n
    mu_idx = np.flatnonzero(st.b_init == sign)
    mean_psi = float(np.sum(phi.space_value(st.x[mu_idx]))) / n

    force = 0.0
    own = np.flatnonzero(st.b == sign)
    other = np.flatnonzero(st.b == -sign)
    if own.size:
        xo = st.x[own]
        po = phi.space_dx(xo)
        if own.size > 1:
            D = xo[:, None] - xo[None, :]
            Vp = eval_prime(pair.V, D)
            force -= 0.5 * float(np.sum((po[:, None] - po[None, :]) * Vp)) / n**2
        if other.size:
            Wp = eval_prime(pair.W, xo[:, None] - st.x[other][None, :])
            force -= float(po @ Wp.sum(axis=1)) / n**2
    return mean_psi, force


def weak_form_residuals(traj: Trajectory, test_functions, stride: int = 1) -> dict[str, float]:
    """Weak-form residual of the recorded curve, per test function.

    The time-derivative term telescopes exactly through the time bump (the
    sampled measure is held constant on each recording interval), while the
    force brackets are assembled exactly over the atoms and integrated with
    the left-endpoint rectangle rule in time.  The residual measures how far
    the sampled curve is from satisfying the transport identity; it shrinks
    at first order in the recording stride, and vanishes identically for a
    static (fully annihilated) state.
    """
    idx = list(range(0, len(traj.times), stride))
    if idx[-1] != len(traj.times) - 1:
        idx.append(len(traj.times) - 1)
    out: dict[str, float] = {}
    for phi in test_functions:
        resid = 0.0
        for sign in (1, -1):
            if not np.any(traj.states[0].b_init == sign):
                continue
            acc = 0.0
            for a, b in zip(idx, idx[1:]):
                t_a, t_b = float(traj.times[a]), float(traj.times[b])
                if t_b <= t_a:
                    continue
                mean_psi, force = _space_terms(phi, traj.states[a], traj.pair, sign)
                acc += (phi.time_factor(t_b) - phi.time_factor(t_a)) * mean_psi
                acc += (t_b - t_a) * phi.time_factor(t_a) * force
            resid = max(resid, abs(acc))
        out[phi.name] = resid
    return out


def weak_form_residual(traj: Trajectory, test_functions=None, stride: int = 1,
                       tol: float | None = None) -> CheckReport:
    """Largest weak-form residual over the test-function family."""
    if test_functions is None:
        x0 = traj.states[0].x
        span = float(np.ptp(x0)) + 1.0
        mid = float(np.mean(x0))
        test_functions = default_test_functions(float(traj.times[-1]),
                                                mid - span, mid + span)
    res = weak_form_residuals(traj, test_functions, stride=stride)
    mean_dt = float(np.mean(np.diff(traj.times))) * stride
    bound = tol if tol is not None else 10.0 * mean_dt
    worst = max(res.values())
    return CheckReport("weak_form_residual", measured=worst, bound=bound,
                       context={"per_function": res, "stride": stride,
                                "mean_sample_dt": mean_dt})


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    n_ref: int | str
    sup_distance: float
    ratio: float   # to the previous row; nan for the first

    def as_dict(self) -> dict:
        return {"n": self.n, "reference": self.n_ref,
                "sup_distance": self.sup_distance, "ratio": self.ratio}


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[ConvergenceRow, ...]
    checkpoints: tuple[float, ...]
    reference: str
    distances: tuple[tuple[int, object, float, float], ...] = ()   # (n, ref, t, d)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("n,reference,sup_distance,ratio\n")
            for r in self.rows:
                fh.write(f"{r.n},{r.n_ref},{float(r.sup_distance)!r},{float(r.ratio)!r}\n")

    def distances_to_csv(self, path) -> None:
        """Long-format distance matrix: one row per (n, reference, time)."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("n,reference,t,distance\n")
            for n, ref, t, d in self.distances:
                fh.write(f"{n},{ref},{float(t)!r},{float(d)!r}\n")

    @property
    def strictly_decreasing(self) -> bool:
        d = [r.sup_distance for r in self.rows]
        return all(b < a for a, b in zip(d, d[1:]))


def _run_for_n(args):
    scenario, n, checkpoints = args
    state = scenario.build_state(n)
    traj = run(state, scenario.pair, scenario.sim, checkpoints=checkpoints)
    return n, traj


def _distance_profile(traj_a: Trajectory, traj_b: Trajectory, checkpoints):
    out = []
    for t in checkpoints:
        ea = from_state(traj_a.state_at(t))[0]
        eb = from_state(traj_b.state_at(t))[0]
        out.append((t, pair_distance_upper(ea, eb)))
    return out


def _continuum_pair(snapshot) -> EmpiricalPair:
    return EmpiricalPair(to_measure(snapshot, "+"), to_measure(snapshot, "-"))


def annihilated_mass(traj: Trajectory) -> float:
    """Fraction of total mass annihilated along the run."""
    return traj.events.total_annihilated / traj.n


def convergence_study(scenario: Scenario, n_list=None, reference: str = "self-doubling",
                      n_checkpoints: int = 16, jobs: int = 1) -> ConvergenceTable:
    """Uniform-in-time transport distances across a resolution ladder.

    ``self-doubling`` compares each n against the next entry of the ladder
    (no continuum solver involved); ``continuum`` compares each n against
    the finite-volume solution on the scenario's grid.  Distances are taken
    at shared checkpoint times that every run lands on exactly.
    """
    ns = list(n_list if n_list is not None else scenario.n_list)
    if len(ns) < 2 and reference == "self-doubling":
        raise ValueError("self-doubling needs at least two particle counts")
    T = scenario.sim.T
    checkpoints = tuple((k + 1) * T / n_checkpoints for k in range(n_checkpoints))

    tasks = [(scenario, n, checkpoints) for n in ns]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_run_for_n, tasks))
    else:
        results = dict(map(_run_for_n, tasks))

    rows: list[ConvergenceRow] = []
    dists: list[tuple[int, object, float, float]] = []
    if reference == "self-doubling":
        for na, nb in zip(ns, ns[1:]):
            profile = _distance_profile(results[na], results[nb], checkpoints)
            dists += [(na, nb, t, d) for t, d in profile]
            worst = max(d for _, d in profile)
            ratio = worst / rows[-1].sup_distance if rows else math.nan
            rows.append(ConvergenceRow(na, nb, worst, ratio))
    elif reference == "continuum":
        snaps = run_continuum(scenario.continuum_initial(), scenario.pair, T,
                              cfl=scenario.cfl, snapshot_times=checkpoints)
        by_time = {round(s.t, 12): s for s in snaps}
        for n in ns:
            profile = []
            for t in checkpoints:
                emp = from_state(results[n].state_at(t))[0]
                profile.append((t, pair_distance_upper(
                    emp, _continuum_pair(by_time[round(t, 12)]))))
            dists += [(n, "continuum", t, d) for t, d in profile]
            worst = max(d for _, d in profile)
            ratio = worst / rows[-1].sup_distance if rows else math.nan
            rows.append(ConvergenceRow(n, "continuum", worst, ratio))
    else:
        raise ValueError("reference must be 'self-doubling' or 'continuum'")
    return ConvergenceTable(tuple(rows), checkpoints, reference, tuple(dists))
