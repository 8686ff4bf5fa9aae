"""Finite-volume solver for the nonlocal two-species transport system.

Each species density is advected by the velocity induced by the
*not-yet-annihilated* parts [kappa]+- = (rho+ - rho-)_+- : annihilation is
never applied explicitly, it is encoded in taking positive/negative parts,
so the species masses are conserved exactly while the total variation of
kappa decays wherever the populations overlap.  The scheme is first-order
upwind in space with explicit Euler in time under a CFL condition that also
preserves positivity; the singular self-interaction uses the same zero
self-term convention as the particle system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelPair, eval_prime
from .measures import WeightedAtoms

__all__ = [
    "Grid",
    "GridDensityPair",
    "force_field",
    "step_fv",
    "run_continuum",
    "to_measure",
]


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid on [x_min, x_max]."""

    x_min: float
    x_max: float
    cells: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("need x_max > x_min")
        if self.cells < 2:
            raise ValueError("need at least 2 cells")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.cells) + 0.5) * self.dx


@dataclass
class GridDensityPair:
    """Cell-averaged nonnegative densities (rho+, rho-) at one time."""

    grid: Grid
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.rho_plus = np.asarray(self.rho_plus, dtype=float)
        self.rho_minus = np.asarray(self.rho_minus, dtype=float)
        if self.rho_plus.shape != (self.grid.cells,) or self.rho_minus.shape != (self.grid.cells,):
            raise ValueError("density arrays must have one value per cell")
        if np.any(self.rho_plus < 0) or np.any(self.rho_minus < 0):
            raise ValueError("densities must be nonnegative")

    @property
    def kappa(self) -> np.ndarray:
        return self.rho_plus - self.rho_minus

    @property
    def kappa_plus(self) -> np.ndarray:
        return np.maximum(self.kappa, 0.0)

    @property
    def kappa_minus(self) -> np.ndarray:
        return np.maximum(-self.kappa, 0.0)

    def mass(self, species: str) -> float:
        rho = self.rho_plus if species == "+" else self.rho_minus
        return float(np.sum(rho)) * self.grid.dx

    @property
    def kappa_mass(self) -> float:
        """Total variation of kappa: the not-yet-annihilated mass."""
        return float(np.sum(np.abs(self.kappa))) * self.grid.dx

    def copy(self) -> "GridDensityPair":
        return GridDensityPair(self.grid, self.rho_plus.copy(), self.rho_minus.copy(), self.t)


def _prime_matrices(grid: Grid, pair: KernelPair) -> tuple[np.ndarray, np.ndarray]:
    """V' and W' on all center differences, with the V'(0) = 0 self-term."""
    c = grid.centers
    D = c[:, None] - c[None, :]
    MV = eval_prime(pair.V, D)      # diagonal is exactly 0 by the convention
    MW = eval_prime(pair.W, D)
    return MV, MW

def _center_velocity(dens: GridDensityPair, MV: np.ndarray, MW: np.ndarray,
                     species: str) -> np.ndarray:
    kp, km = dens.kappa_plus, dens.kappa_minus
    own, other = (kp, km) if species == "+" else (km, kp)
    return -(MV @ own + MW @ other) * dens.grid.dx


def force_field(dens: GridDensityPair, pair: KernelPair, species: str) -> np.ndarray:
    """Transport velocity of one species at the cell centers.

    u(x_i) = -sum_j [kappa]_own(x_j) V'(x_i - x_j) dx
             -sum_j [kappa]_other(x_j) W'(x_i - x_j) dx,
    by direct O(N^2) summation; the j = i term of the singular kernel is
    dropped through V'(0) = 0, mirroring the particle convention.
    """
    if species not in ("+", "-"):
        raise ValueError("species must be '+' or '-'")
    MV, MW = _prime_matrices(dens.grid, pair)
    return _center_velocity(dens, MV, MW, species)


def _upwind_step(dens: GridDensityPair, MV, MW, dt: float, check_cfl: bool = True,
                 uu: tuple[np.ndarray, np.ndarray] | None = None):
    dx = dens.grid.dx
    if uu is None:
        uu = (_center_velocity(dens, MV, MW, "+"), _center_velocity(dens, MV, MW, "-"))
    up, um = uu
    umax = max(float(np.max(np.abs(up))), float(np.max(np.abs(um))), 0.0)
    if check_cfl and dt * umax > 0.5 * dx * (1 + 1e-12):
        raise ValueError(f"CFL violation: dt={dt} > 0.5 dx/|u| = {0.5 * dx / umax}")
    out = dens.copy()
    for rho, kap, u in ((out.rho_plus, dens.kappa_plus, up),
                        (out.rho_minus, dens.kappa_minus, um)):
        uf = 0.5 * (u[:-1] + u[1:])                      # interior face velocities
        upwind = np.where(uf > 0.0, kap[:-1], kap[1:])   # only [kappa] moves
        flux = uf * upwind                                # zero flux at the boundary
        rho[:-1] -= (dt / dx) * flux
        rho[1:] += (dt / dx) * flux
    np.maximum(out.rho_plus, 0.0, out=out.rho_plus)       # clip -0.0 / rounding dust
    np.maximum(out.rho_minus, 0.0, out=out.rho_minus)
    out.t = dens.t + dt
    return out


def step_fv(dens: GridDensityPair, pair: KernelPair, dt: float) -> GridDensityPair:
    """One conservative upwind step of both species.

    Fluxes carry the upwind value of [kappa]+- times the face velocity; the
    annihilated residue min(rho+, rho-) has zero flux and stays in place.
    Raises on CFL violation (dt must be at most 0.5 dx / max |u|).
    """
    MV, MW = _prime_matrices(dens.grid, pair)
    return _upwind_step(dens, MV, MW, dt)


def run_continuum(init: GridDensityPair, pair: KernelPair, T: float,
                  cfl: float = 0.4, snapshot_times=()) -> list[GridDensityPair]:
    """March to time T, returning snapshots at the requested times (plus the
    initial and final one).  The step size is chosen each step from the CFL
    number and clipped to land exactly on snapshot times."""
    if not 0 < cfl <= 0.5:
        raise ValueError("cfl must be in (0, 0.5]")
    MV, MW = _prime_matrices(init.grid, pair)
    targets = sorted({float(s) for s in snapshot_times if 0.0 < float(s) <= T} | {T})
    dens = init.copy()
    snaps = [dens.copy()]
    dx = init.grid.dx
    tiny = 1e-14 * max(1.0, T)
    while dens.t < T - tiny:
        up = _center_velocity(dens, MV, MW, "+")
        um = _center_velocity(dens, MV, MW, "-")
        umax = max(float(np.max(np.abs(up))), float(np.max(np.abs(um))))
        dt = cfl * dx / umax if umax > 0 else T - dens.t
        nxt = targets[int(np.searchsorted(targets, dens.t + tiny))]
        dt = min(dt, nxt - dens.t)
        dens = _upwind_step(dens, MV, MW, dt, check_cfl=False, uu=(up, um))
        if abs(dens.t - nxt) < tiny:
            dens.t = nxt
            snaps.append(dens.copy())
    if abs(snaps[-1].t - dens.t) > tiny:
        snaps.append(dens.copy())
    return snaps


def to_measure(dens: GridDensityPair, species: str) -> WeightedAtoms:
    """Cell centers as atoms weighted by rho * dx (empty cells dropped)."""
    rho = dens.rho_plus if species == "+" else dens.rho_minus
    return WeightedAtoms.of(dens.grid.centers, rho * dens.grid.dx)
